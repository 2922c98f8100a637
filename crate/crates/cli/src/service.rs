//! Interactive rating session over HTTP.
//!
//! Session directory layout:
//!
//! ```text
//! session.json              session state, rewritten before every acknowledgment
//! scenario.json chain.json  the simulated world
//! params/base.json          initial primitive
//! params/round-{k}.json     primitive after round k
//! round-{k}/<id>.csv|json   episodes of round k
//! ```
//!
//! A resumed session re-simulates the current batch from its seeds, so the
//! episode files are a convenience for offline tools and never read back.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use strokeprim::io::{chain_to_json, params_to_json};
use strokeprim::refine::{serialize_reward, REWARD_LABELS, REWARD_VALUES};
use strokeprim::session::{episode_id, RateOutcome, Session, SessionConfig, SessionError, SessionState};
use strokeprim::sim::{
    refine_round, round_batch, run_experiment, EpisodeOutcome, Metrics, RefinementConfig, RoundReport, SimContext,
};
use tokio::sync::Mutex;

use crate::cli::{RobotArgs, ServeArgs};
use crate::files::{self, RobotSetup};
use crate::replay::{payload, EpisodePayload};

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub dir: PathBuf,
    pub session_id: String,
    pub session: SessionConfig,
}

/// Shared service state. Every mutation happens under the one lock and is
/// persisted before the lock is released.
pub struct Service {
    inner: Mutex<Inner>,
}

struct Inner {
    dir: PathBuf,
    session: Session,
    cfg: RefinementConfig,
    current: SimContext,
    batch: Vec<EpisodeOutcome>,
    running: bool,
    last_error: Option<String>,
}

struct RefineJob {
    dir: PathBuf,
    current: SimContext,
    cfg: RefinementConfig,
    seed: u64,
    round: usize,
    last_round: bool,
    outcomes: Vec<EpisodeOutcome>,
    rewards: Vec<f64>,
}

struct RefineResult {
    report: RoundReport,
    next: SimContext,
    batch: Vec<EpisodeOutcome>,
}

fn session_path(dir: &Path) -> PathBuf {
    dir.join("session.json")
}

fn round_params_path(dir: &Path, round: usize) -> PathBuf {
    dir.join(format!("params/round-{round}.json"))
}

fn refinement_config(c: &SessionConfig) -> RefinementConfig {
    RefinementConfig {
        rounds: c.rounds,
        batch: c.batch,
        temperature: c.temperature,
        eval_balls: c.eval_balls,
        ..RefinementConfig::default()
    }
}

/// Simulates batch `round` and writes its episode files.
fn simulate_round(dir: &Path, ctx: &SimContext, cfg: &RefinementConfig, seed: u64, round: usize) -> Result<Vec<EpisodeOutcome>> {
    let outcomes = round_batch(ctx, cfg, seed, round)?.outcomes;
    let round_dir = dir.join(format!("round-{round}"));
    for (i, o) in outcomes.iter().enumerate() {
        files::write_episode(&round_dir, &episode_id(round, i), o)?;
    }
    Ok(outcomes)
}

impl RefineJob {
    fn run(self) -> Result<RefineResult> {
        let (report, next) = refine_round(&self.current, &self.cfg, self.seed, self.round, &self.outcomes, &self.rewards)?;
        files::write(&round_params_path(&self.dir, self.round), &params_to_json(&next.primitive))?;
        let batch = if self.last_round {
            Vec::new()
        } else {
            simulate_round(&self.dir, &next, &self.cfg, self.seed, self.round + 1)?
        };
        Ok(RefineResult { report, next, batch })
    }
}

impl Inner {
    /// The update of the closed current round, from its rated episodes.
    fn job(&self) -> RefineJob {
        let (indices, rewards) = self.session.rated();
        RefineJob {
            dir: self.dir.clone(),
            current: self.current.clone(),
            cfg: self.cfg.clone(),
            seed: self.session.config.seed,
            round: self.session.round,
            last_round: self.session.round >= self.session.config.rounds,
            outcomes: indices.iter().map(|&i| self.batch[i].clone()).collect(),
            rewards,
        }
    }

    /// Stops collecting, durably, and hands out the round's update.
    fn close_round(&mut self) -> Result<RefineJob, ApiError> {
        let mut next = self.session.clone();
        next.close_round()?;
        next.save(&session_path(&self.dir))?;
        self.session = next;
        self.running = true;
        Ok(self.job())
    }

    fn commit(&mut self, result: RefineResult) -> Result<RoundReport> {
        let mut next = self.session.clone();
        next.finish_round(result.report.clone())?;
        next.save(&session_path(&self.dir))?;
        self.session = next;
        self.current = result.next;
        self.batch = result.batch;
        Ok(result.report)
    }

    fn summary(&self) -> SessionSummary {
        let s = &self.session;
        SessionSummary {
            id: s.id.clone(),
            state: s.state,
            round: s.round,
            rounds: s.config.rounds,
            batch: s.config.batch,
            temperature: s.config.temperature,
            seed: s.config.seed,
            rated: s.ratings.len(),
            pending: s.pending().into_iter().map(str::to_owned).collect(),
            refining: self.running,
            last_error: self.last_error.clone(),
        }
    }
}

impl Service {
    /// Starts a session in `opts.dir` from `base`, or resumes the one stored
    /// there; a stored session ignores `base` and `opts.session`. A session
    /// that stopped mid-update finishes the update before returning.
    pub fn open(opts: ServiceOptions, base: SimContext) -> Result<Arc<Self>> {
        let dir = opts.dir;
        let path = session_path(&dir);
        let (session, base) = if path.exists() {
            let session = Session::load(&path)?;
            let robot = RobotSetup::load(&RobotArgs {
                scenario: Some(dir.join("scenario.json")),
                chain: Some(dir.join("chain.json")),
            })?;
            let base = robot.context(files::load_params(&dir.join("params/base.json"))?)?;
            tracing::info!(id = %session.id, round = session.round, state = ?session.state, "resuming session");
            (session, base)
        } else {
            let mut session = Session::new(opts.session_id, opts.session)?;
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            files::write(&dir.join("scenario.json"), &base.scenario.to_json())?;
            files::write(&dir.join("chain.json"), &chain_to_json(&base.chain, Some(&base.limits)))?;
            files::write(&dir.join("params/base.json"), &params_to_json(&base.primitive))?;
            session.base = Some(run_experiment(&base, session.config.eval_balls, session.config.seed)?.metrics);
            session.save(&path)?;
            tracing::info!(id = %session.id, "new session");
            (session, base)
        };
        let cfg = refinement_config(&session.config);
        let current = match session.history.len() {
            0 => base,
            k => base.with_primitive(files::load_params(&round_params_path(&dir, k))?)?,
        };
        let batch = match session.state {
            SessionState::Done => Vec::new(),
            _ => simulate_round(&dir, &current, &cfg, session.config.seed, session.round)?,
        };
        let mut inner = Inner {
            dir,
            session,
            cfg,
            current,
            batch,
            running: false,
            last_error: None,
        };
        if inner.session.state == SessionState::Refining {
            let result = inner.job().run()?;
            inner.commit(result)?;
        }
        Ok(Arc::new(Self {
            inner: Mutex::new(inner),
        }))
    }

    /// Runs an update off the async workers and records it.
    async fn finish(self: Arc<Self>, job: RefineJob) -> Result<RoundReport, ApiError> {
        let result = tokio::task::spawn_blocking(move || job.run()).await;
        let mut inner = self.inner.lock().await;
        inner.running = false;
        let committed = result
            .context("refinement task panicked")
            .and_then(|r| r)
            .and_then(|r| inner.commit(r));
        match committed {
            Ok(report) => {
                inner.last_error = None;
                tracing::info!(round = report.round, avg_reward = report.eval.avg_reward, "round refined");
                Ok(report)
            }
            Err(e) => {
                let message = format!("{e:#}");
                tracing::error!(%message, "refinement failed");
                inner.last_error = Some(message.clone());
                Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message))
            }
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::UnknownEpisode(_) => StatusCode::NOT_FOUND,
            SessionError::InvalidReward(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::AlreadyRated { .. }
            | SessionError::NotCollecting(_)
            | SessionError::NotRefining(_)
            | SessionError::NoRatings(_) => StatusCode::CONFLICT,
            SessionError::Invalid(_) | SessionError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Serialize)]
struct SessionSummary {
    id: String,
    state: SessionState,
    round: usize,
    rounds: usize,
    batch: usize,
    temperature: f64,
    seed: u64,
    rated: usize,
    pending: Vec<String>,
    refining: bool,
    last_error: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RatingBody {
    reward: f64,
}

#[derive(Debug, Serialize)]
struct RatingResponse {
    episode_id: String,
    #[serde(serialize_with = "serialize_reward")]
    reward: f64,
    replayed: bool,
    round: usize,
    pending: usize,
    round_complete: bool,
}

#[derive(Debug, Serialize)]
struct Criterion {
    #[serde(serialize_with = "serialize_reward")]
    reward: f64,
    label: &'static str,
}

#[derive(Debug, Serialize)]
struct MetricsView {
    base: Option<Metrics>,
    rounds: Vec<RoundReport>,
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/session/advance", post(advance))
        .route("/api/episodes/next", get(next_episode))
        .route("/api/episodes/{id}", get(get_episode))
        .route("/api/episodes/{id}/rating", post(rate))
        .route("/api/metrics", get(metrics))
        .route("/api/criteria", get(criteria))
        .with_state(service)
}

async fn get_session(State(svc): State<Arc<Service>>) -> Json<SessionSummary> {
    Json(svc.inner.lock().await.summary())
}

fn episode_payload(inner: &Inner, id: &str) -> Option<EpisodePayload> {
    let index = inner.session.episode_index(id)?;
    let outcome = inner.batch.get(index)?;
    Some(payload(id, inner.session.round, index, outcome, inner.current.scenario.tick()))
}

async fn next_episode(State(svc): State<Arc<Service>>) -> Response {
    let inner = svc.inner.lock().await;
    if inner.session.state != SessionState::Collecting {
        return StatusCode::NO_CONTENT.into_response();
    }
    match inner.session.next_unrated().and_then(|id| episode_payload(&inner, id)) {
        Some(p) => Json(p).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn get_episode(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>) -> Result<Json<EpisodePayload>, ApiError> {
    let inner = svc.inner.lock().await;
    episode_payload(&inner, &id)
        .map(Json)
        .ok_or_else(|| SessionError::UnknownEpisode(id).into())
}

async fn rate(
    State(svc): State<Arc<Service>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Result<Json<RatingBody>, JsonRejection>,
) -> Result<Json<RatingResponse>, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
    let key = match headers.get("idempotency-key") {
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "Idempotency-Key must be visible ASCII"))?,
        ),
        None => None,
    };
    let (response, job) = {
        let mut inner = svc.inner.lock().await;
        let mut next = inner.session.clone();
        let outcome = next.rate(&id, body.reward, key)?;
        if outcome == RateOutcome::Stored {
            next.save(&session_path(&inner.dir))?;
            inner.session = next;
        }
        let complete = inner.session.is_complete();
        let job = if outcome == RateOutcome::Stored && complete {
            Some(inner.close_round()?)
        } else {
            None
        };
        let response = RatingResponse {
            episode_id: id,
            reward: body.reward,
            replayed: outcome == RateOutcome::Replayed,
            round: inner.session.round,
            pending: inner.session.pending().len(),
            round_complete: complete,
        };
        (response, job)
    };
    if let Some(job) = job {
        tokio::spawn(svc.clone().finish(job));
    }
    Ok(Json(response))
}

/// Closes the current round with the ratings received so far and waits for
/// its update. Also retries an update that failed.
async fn advance(State(svc): State<Arc<Service>>) -> Result<Json<RoundReport>, ApiError> {
    let job = {
        let mut inner = svc.inner.lock().await;
        match inner.session.state {
            SessionState::Collecting => inner.close_round()?,
            SessionState::Refining if !inner.running => {
                inner.running = true;
                inner.job()
            }
            SessionState::Refining => {
                return Err(ApiError::new(StatusCode::CONFLICT, "the round is already being refined"));
            }
            SessionState::Done => return Err(SessionError::NotCollecting(SessionState::Done).into()),
        }
    };
    Ok(Json(svc.clone().finish(job).await?))
}

async fn metrics(State(svc): State<Arc<Service>>) -> Json<MetricsView> {
    let inner = svc.inner.lock().await;
    Json(MetricsView {
        base: inner.session.base,
        rounds: inner.session.history.clone(),
    })
}

async fn criteria() -> Json<Vec<Criterion>> {
    Json(
        REWARD_VALUES
            .iter()
            .zip(REWARD_LABELS)
            .map(|(&reward, label)| Criterion { reward, label })
            .collect(),
    )
}

/// `strokeprim serve`: opens the session, then serves until interrupted.
pub fn serve(args: ServeArgs) -> Result<()> {
    let robot = RobotSetup::load(&args.robot)?;
    let base = robot.context(files::load_params(&args.params)?)?;
    let service = Service::open(
        ServiceOptions {
            dir: args.out_dir.clone(),
            session_id: args.session_id.clone(),
            session: SessionConfig {
                seed: args.seed,
                batch: args.batch,
                rounds: args.rounds,
                temperature: args.temperature,
                eval_balls: args.eval_balls,
            },
        },
        base,
    )?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.host, args.port))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
