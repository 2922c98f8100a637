//! Batches of episodes and the outer refinement loop.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode, EpisodeOutcome, SimContext};
use super::SimError;
use crate::pipeline::refine_from_recordings;
use crate::promp::PrimitiveParams;
use crate::refine::EmOptions;
use crate::segment::SegmentOptions;

/// RNG stream reserved for the held-out evaluation balls.
pub const EVAL_STREAM: u64 = 0;

/// Seed of episode `index` in `stream`, derived from the experiment seed.
pub fn episode_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub hit_rate: f64,
    pub success_rate: f64,
    pub avg_reward: f64,
}

impl Metrics {
    /// Aggregates rewards: a hit is any reward of at least 0.5, a success
    /// (good hit) any reward of at least 1.
    pub fn from_rewards(rewards: &[f64]) -> Self {
        let n = rewards.len();
        if n == 0 {
            return Self {
                n,
                hit_rate: 0.0,
                success_rate: 0.0,
                avg_reward: 0.0,
            };
        }
        let frac = |pred: &dyn Fn(f64) -> bool| rewards.iter().filter(|&&r| pred(r)).count() as f64 / n as f64;
        Self {
            n,
            hit_rate: frac(&|r| r >= 0.5),
            success_rate: frac(&|r| r >= 1.0),
            avg_reward: rewards.iter().sum::<f64>() / n as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub metrics: Metrics,
    pub outcomes: Vec<EpisodeOutcome>,
}

/// `n_balls` episodes from `stream`; run in parallel, reported in order.
pub fn run_batch(ctx: &SimContext, n_balls: usize, seed: u64, stream: u64) -> Result<Experiment, SimError> {
    let outcomes = (0..n_balls as u64)
        .into_par_iter()
        .map(|i| run_episode(ctx, episode_seed(seed, stream, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let rewards: Vec<f64> = outcomes.iter().map(|o| o.reward).collect();
    Ok(Experiment {
        metrics: Metrics::from_rewards(&rewards),
        outcomes,
    })
}

/// Held-out evaluation run: `n_balls` launches from the evaluation stream.
pub fn run_experiment(ctx: &SimContext, n_balls: usize, seed: u64) -> Result<Experiment, SimError> {
    if n_balls == 0 {
        return Err(SimError::config("balls", "need at least one ball"));
    }
    run_batch(ctx, n_balls, seed, EVAL_STREAM)
}

/// Source of rewards for a batch of executed episodes.
pub trait FeedbackSource {
    fn rewards(&mut self, round: usize, episodes: &[EpisodeOutcome]) -> Result<Vec<f64>, SimError>;
}

/// Scores episodes with the built-in reward oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleFeedback;

impl FeedbackSource for OracleFeedback {
    fn rewards(&mut self, _round: usize, episodes: &[EpisodeOutcome]) -> Result<Vec<f64>, SimError> {
        Ok(episodes.iter().map(|e| e.reward).collect())
    }
}

#[derive(Debug, Clone)]
pub struct RefinementConfig {
    pub rounds: usize,
    pub batch: usize,
    pub temperature: f64,
    pub eval_balls: usize,
    pub segment: SegmentOptions,
    pub em: EmOptions,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            batch: 20,
            temperature: 1.0,
            eval_balls: 10,
            segment: SegmentOptions::default(),
            em: EmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    /// Metrics of the rated batch, from the rewards actually received.
    pub batch: Metrics,
    /// Episodes whose stroke could be segmented and entered the update.
    pub used: usize,
    pub em_iterations: usize,
    /// Held-out evaluation after the update.
    pub eval: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub batch: usize,
    pub temperature: f64,
    pub base: Metrics,
    pub rounds: Vec<RoundReport>,
}

/// Batch `round` (1-based) of a refinement run.
pub fn round_batch(ctx: &SimContext, cfg: &RefinementConfig, seed: u64, round: usize) -> Result<Experiment, SimError> {
    run_batch(ctx, cfg.batch, seed, round as u64)
}

/// One weighted-EM update of `current.primitive` from rated episodes,
/// followed by the held-out evaluation. `outcomes` and `rewards` pair up by
/// position; episodes whose stroke cannot be segmented are left out.
pub fn refine_round(
    current: &SimContext,
    cfg: &RefinementConfig,
    seed: u64,
    round: usize,
    outcomes: &[EpisodeOutcome],
    rewards: &[f64],
) -> Result<(RoundReport, SimContext), SimError> {
    if rewards.len() != outcomes.len() {
        return Err(SimError::Feedback(format!(
            "round {round}: {} rewards for {} episodes",
            rewards.len(),
            outcomes.len()
        )));
    }
    let recordings: Vec<_> = outcomes.iter().map(|o| o.executed.clone()).collect();
    let refined = refine_from_recordings(
        &current.primitive,
        &recordings,
        rewards,
        cfg.temperature,
        &cfg.segment,
        &cfg.em,
    )?;
    let next = current.with_primitive(refined.params)?;
    let eval = run_experiment(&next, cfg.eval_balls, seed)?.metrics;
    let report = RoundReport {
        round,
        batch: Metrics::from_rewards(rewards),
        used: refined.used.len(),
        em_iterations: refined.trace.len().saturating_sub(1),
        eval,
    };
    Ok((report, next))
}

/// Refines `ctx.primitive` for `cfg.rounds` rounds: execute a batch, collect
/// rewards, segment, run one weighted-EM round, evaluate on the held-out
/// balls. Returns the report and the final parameters.
pub fn refinement_experiment(
    ctx: &SimContext,
    cfg: &RefinementConfig,
    feedback: &mut dyn FeedbackSource,
    seed: u64,
) -> Result<(RefinementReport, PrimitiveParams), SimError> {
    let base = run_experiment(ctx, cfg.eval_balls, seed)?.metrics;
    let mut current = ctx.clone();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let batch = round_batch(&current, cfg, seed, round)?;
        let rewards = feedback.rewards(round, &batch.outcomes)?;
        let (report, next) = refine_round(&current, cfg, seed, round, &batch.outcomes, &rewards)?;
        rounds.push(report);
        current = next;
    }
    Ok((
        RefinementReport {
            batch: cfg.batch,
            temperature: cfg.temperature,
            base,
            rounds,
        },
        current.primitive,
    ))
}
