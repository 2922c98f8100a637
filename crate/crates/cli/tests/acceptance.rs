//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use strokeprim::io::params_to_json;
use strokeprim::kinematics::clipped_ik;
use strokeprim::pipeline::{train_from_recordings, TrainOptions};
use strokeprim::refine::{em_weighted, importance_weights, refinement_round, REWARD_LABELS, REWARD_VALUES};
use strokeprim::segment::{hit_phase, segment_stroke, SegmentOptions};
use strokeprim::session::{Session, SessionConfig};
use strokeprim::sim::{
    refine_round, refinement_experiment, round_batch, scripted_demos, DemoConfig, OracleFeedback, RefinementConfig,
    Scenario, SimContext,
};
use strokeprim::tracker::{predict_crossing, BallModel, BallTracker, TrackerConfig};
use strokeprim::{EmOptions, HitPlane, IkOptions, KinematicChain, Limits, Observation, WeightedDataset};
use strokeprim_cli::service::{router, Service, ServiceOptions};
use tower::ServiceExt;

use common::{
    dataset, fd_jacobian_error, min_eigenvalue, perturbed, plain_em, random_chain, random_primitive, random_vector,
    rest_stroke_rest, sweep_through_plane, unit,
};

type Outcome = Result<String, String>;

fn within(limit: Duration, started: Instant, detail: String) -> Outcome {
    let took = started.elapsed();
    if took <= limit {
        Ok(format!("{detail}; {:.2} s", took.as_secs_f64()))
    } else {
        Err(format!("{detail}; took {:.2} s, limit {} s", took.as_secs_f64(), limit.as_secs()))
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn conditioning_exactness() -> Outcome {
    let started = Instant::now();
    let p = random_primitive(8, 8, 42, 0.5, 0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let q_star = random_vector(&mut rng, 8);
    let c = p
        .condition(0.6, &q_star, &(DMatrix::identity(8, 8) * 1e-10))
        .map_err(|e| e.to_string())?;
    let err = (c.mean_at(0.6) - &q_star).amax();
    let min_eig = min_eigenvalue(&(&p.sigma_w - &c.sigma_w));
    let detail = format!("max error {err:.2e}, min eigenvalue of Σ_w − Σ_w⁺ {min_eig:.2e}");
    check(err <= 1e-6 && min_eig >= -1e-9, detail.clone())?;
    within(Duration::from_secs(1), started, detail)
}

fn em_monotonicity() -> Outcome {
    let started = Instant::now();
    let truth = random_primitive(3, 8, 5, 0.3, 0.02);
    let trajs = dataset(&truth, 20, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let rewards: Vec<f64> = (0..20).map(|_| REWARD_VALUES[rng.random_range(0..5)]).collect();
    let data = WeightedDataset::new(trajs, importance_weights(&rewards, 1.0).unwrap()).unwrap();
    let opts = EmOptions {
        max_iters: 50,
        rel_tol: 0.0,
        ..EmOptions::default()
    };
    let out = em_weighted(&perturbed(&truth, 6), &data, &opts).map_err(|e| e.to_string())?;
    let worst = out
        .trace
        .windows(2)
        .map(|w| (w[0] - w[1]) / w[0].abs().max(1e-300))
        .fold(f64::NEG_INFINITY, f64::max);
    let detail = format!("{} iterates, largest relative decrease {worst:.2e}", out.trace.len());
    check(out.trace.len() == 51 && worst <= 1e-8, detail.clone())?;
    within(Duration::from_secs(30), started, detail)
}

fn uniform_feedback_equivalence() -> Outcome {
    let truth = random_primitive(2, 5, 11, 0.3, 0.02);
    let trajs = dataset(&truth, 20, 1);
    let init = perturbed(&truth, 2);
    let opts = EmOptions {
        max_iters: 30,
        rel_tol: 0.0,
        ..EmOptions::default()
    };
    let oracle = plain_em(&init, &trajs, 30, &opts);
    let mut worst = 0.0f64;
    for reward in REWARD_VALUES {
        let p = refinement_round(&init, &trajs, &[reward; 20], 1.0, &opts)
            .map_err(|e| e.to_string())?
            .params;
        worst = worst
            .max((&p.mu_w - &oracle.mu_w).amax())
            .max((&p.sigma_w - &oracle.sigma_w).amax())
            .max((&p.sigma_y - &oracle.sigma_y).amax());
    }
    check(worst <= 1e-9, format!("largest deviation from unweighted EM {worst:.2e}"))
}

fn clipped_ik_safety() -> Outcome {
    let started = Instant::now();
    let chain = KinematicChain::wheelchair_arm();
    let limits = Limits::symmetric(-1.0, 1.0, 7, 0.6).unwrap();
    let inner = limits.scaled(0.8);
    let opts = IkOptions {
        tol: 1e-4,
        max_iter: 100,
        ..IkOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut inside, mut converged, mut panics) = (0, 0, 0);
    for _ in 0..1000 {
        let seed = DVector::from_fn(7, |_, _| rng.random_range(-1.5..1.5));
        let offsets = DVector::from_fn(8, |i, _| rng.random_range(inner.lower()[i]..=inner.upper()[i]));
        let target = chain.forward(offsets[0], &(&seed + offsets.rows(1, 7))).unwrap();
        match catch_unwind(AssertUnwindSafe(|| clipped_ik(&chain, &target, &seed, &limits, &opts))) {
            Ok(Ok(res)) => {
                inside += usize::from(limits.contains(&res.offsets()));
                converged += usize::from(res.converged && res.residual <= 1e-4);
            }
            Ok(Err(_)) => {}
            Err(_) => panics += 1,
        }
    }
    let (mut far_inside, mut far_panics) = (0, 0);
    for _ in 0..1000 {
        let seed = DVector::from_fn(7, |_, _| rng.random_range(-1.5..1.5));
        let target = unit(&mut rng) * rng.random_range(3.0..50.0);
        match catch_unwind(AssertUnwindSafe(|| clipped_ik(&chain, &target, &seed, &limits, &opts))) {
            Ok(Ok(res)) => far_inside += usize::from(limits.contains(&res.offsets())),
            Ok(Err(_)) => {}
            Err(_) => far_panics += 1,
        }
    }
    let detail = format!(
        "reachable: {inside}/1000 within limits, {converged}/1000 converged; unreachable: {far_inside}/1000 within limits; {} panics",
        panics + far_panics
    );
    check(inside == 1000 && converged >= 990 && far_inside == 1000 && panics + far_panics == 0, detail.clone())?;
    within(Duration::from_secs(30), started, detail)
}

fn jacobian_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(3..=8);
        let chain = random_chain(&mut rng, n);
        let r = rng.random_range(-1.0..1.0);
        let q = DVector::from_fn(n - 1, |_, _| rng.random_range(-3.0..3.0));
        worst = worst.max(fd_jacobian_error(&chain, r, &q));
    }
    check(worst <= 1e-5, format!("largest deviation from central differences {worst:.2e}"))
}

fn tracker_oracle() -> Outcome {
    let (p0, v0) = (Vector3::new(0.0, 0.0, 1.0), Vector3::new(10.0, 0.0, 2.0));
    let g = Vector3::new(0.0, 0.0, -9.81);
    let mut tracker = BallTracker::new(TrackerConfig::default());
    for i in 0..20 {
        let t = i as f64 / 60.0;
        tracker
            .observe(Observation {
                position: p0 + v0 * t + g * (0.5 * t * t),
                noise_std: 1e-4,
                source_id: 0,
                stamp: t,
            })
            .map_err(|e| e.to_string())?;
    }
    let plane = HitPlane::new(Vector3::new(5.0, 0.0, 0.0), Vector3::x()).unwrap();
    let est = tracker.estimate().ok_or("no estimate")?;
    let c = predict_crossing(est, &plane, &BallModel::default(), 2.0).ok_or("no crossing predicted")?;
    let dt = (c.time - 0.5).abs();
    let dp = (c.position - Vector3::new(5.0, 0.0, 0.77375)).norm();
    check(
        dt <= 5e-3 && dp <= 0.01,
        format!("crossing off by {:.2} mm and {:.3} ms", dp * 1e3, dt * 1e3),
    )
}

fn segmentation_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let opts = SegmentOptions::default();
    let mut good = 0;
    for _ in 0..50 {
        let s = rest_stroke_rest(&mut rng, 100.0, 1e-5);
        if let Ok(seg) = segment_stroke(&s.rec, &opts) {
            let ds = seg.start as i64 - s.start as i64;
            let de = seg.end as i64 - s.end as i64;
            good += usize::from(ds.abs() <= 3 && de.abs() <= 3);
        }
    }
    let (rec, seg, chain, plane) = sweep_through_plane(0.70);
    let z = hit_phase(&rec, seg, &chain, &plane).map_err(|e| e.to_string())?;
    check(
        good >= 48 && (z - 0.70).abs() <= 0.01,
        format!("{good}/50 boundaries within ±3 samples; hit phase {z:.4}"),
    )
}

fn trained_context() -> SimContext {
    let chain = KinematicChain::wheelchair_arm();
    let scenario = Scenario::default();
    let demos = scripted_demos(&chain, &scenario, &DemoConfig::default()).unwrap();
    let params = train_from_recordings(&demos, &TrainOptions::default()).unwrap().params;
    SimContext::new(params, chain, scenario).unwrap()
}

fn end_to_end(ctx: &SimContext) -> Outcome {
    let started = Instant::now();
    let s = &ctx.scenario;
    if s.launch.v0_jitter != [0.15; 3] || s.sensing.noise_std != 0.005 {
        return Err("default scenario no longer has σ_v = 0.15 m/s and 5 mm noise".into());
    }
    let mut lines = Vec::new();
    let mut base_hit = None;
    let mut improved = false;
    for batch in [20, 50] {
        let cfg = RefinementConfig {
            rounds: 3,
            batch,
            temperature: 0.5,
            eval_balls: 10,
            ..RefinementConfig::default()
        };
        let (report, _) = refinement_experiment(ctx, &cfg, &mut OracleFeedback, 42).map_err(|e| e.to_string())?;
        base_hit = Some(report.base.hit_rate);
        let after = report.rounds.last().map_or(report.base.avg_reward, |r| r.eval.avg_reward);
        improved |= after >= report.base.avg_reward - 0.05;
        let evals: Vec<String> = report.rounds.iter().map(|r| format!("{:.2}", r.eval.avg_reward)).collect();
        lines.push(format!(
            "batch {batch}: avg reward {:.2} -> [{}]",
            report.base.avg_reward,
            evals.join(", ")
        ));
    }
    let base_hit = base_hit.unwrap_or(0.0);
    let detail = format!("base hit rate {base_hit:.2}; {}", lines.join("; "));
    check(base_hit >= 0.5 && improved, detail.clone())?;
    within(Duration::from_secs(300), started, detail)
}

fn simulate_determinism(ctx: &SimContext, dir: &Path) -> Outcome {
    let params = dir.join("params.json");
    std::fs::write(&params, params_to_json(&ctx.primitive)).map_err(|e| e.to_string())?;
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_strokeprim"))
            .args(["simulate", "--balls", "10", "--seed", "42", "--params"])
            .arg(&params)
            .output()
            .map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    check(
        a.status.success() && b.status.success() && !a.stdout.is_empty() && a.stdout == b.stdout,
        format!("{} bytes of metrics, identical: {}", a.stdout.len(), a.stdout == b.stdout),
    )
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn feedback_round_trip(ctx: &SimContext, dir: &Path) -> Outcome {
    let config = SessionConfig {
        seed: 42,
        batch: 20,
        rounds: 3,
        temperature: 0.5,
        eval_balls: 10,
    };
    let opts = ServiceOptions {
        dir: dir.join("session"),
        session_id: "acceptance".into(),
        session: config.clone(),
    };
    let service = Service::open(opts, ctx.clone()).map_err(|e| format!("{e:#}"))?;
    let app = router(service);
    let cfg = RefinementConfig {
        rounds: 3,
        batch: 20,
        temperature: 0.5,
        eval_balls: 10,
        ..RefinementConfig::default()
    };
    let batch = round_batch(ctx, &cfg, 42, 1).map_err(|e| e.to_string())?;
    let rewards: Vec<f64> = batch.outcomes.iter().map(|o| o.reward).collect();
    let session_file = dir.join("session/session.json");

    let runtime = tokio::runtime::Runtime::new().unwrap();
    runtime.block_on(async {
        let (_, criteria) = call(&app, "GET", "/api/criteria", None).await;
        let buttons: Vec<(f64, String)> = criteria
            .as_array()
            .ok_or("criteria is not a list")?
            .iter()
            .map(|c| (c["reward"].as_f64().unwrap_or(f64::NAN), c["label"].as_str().unwrap_or("").to_owned()))
            .collect();
        let expected: Vec<(f64, String)> = REWARD_VALUES.iter().zip(REWARD_LABELS).map(|(&r, l)| (r, l.to_owned())).collect();
        check(buttons == expected, format!("rating criteria {buttons:?}"))?;

        let (status, _) = call(&app, "POST", "/api/episodes/r1-000/rating", Some(json!({ "reward": 0.3 }))).await;
        let stored = Session::load(&session_file).map_err(|e| e.to_string())?;
        check(
            status == StatusCode::UNPROCESSABLE_ENTITY && stored.ratings.is_empty(),
            format!("reward 0.3 answered {status}, {} stored ratings", stored.ratings.len()),
        )?;

        for (i, r) in rewards.iter().enumerate() {
            let (status, _) = call(&app, "POST", &format!("/api/episodes/r1-{i:03}/rating"), Some(json!({ "reward": r }))).await;
            check(status == StatusCode::OK, format!("rating r1-{i:03} answered {status}"))?;
        }
        for _ in 0..1200 {
            let (_, s) = call(&app, "GET", "/api/session", None).await;
            if s["round"] == 2 && s["refining"] == false {
                return Ok(());
            }
            if !s["last_error"].is_null() {
                return Err(format!("refinement failed: {}", s["last_error"]));
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        Err("round 1 was never refined".to_string())
    })?;

    let served = std::fs::read_to_string(dir.join("session/params/round-1.json")).map_err(|e| e.to_string())?;
    let (_, next) = refine_round(ctx, &cfg, 42, 1, &batch.outcomes, &rewards).map_err(|e| e.to_string())?;
    let stored = Session::load(&session_file).map_err(|e| e.to_string())?;
    check(
        served == params_to_json(&next.primitive) && stored.history.len() == 1,
        format!(
            "20 ratings; service primitive bit-identical to the oracle run: {}",
            served == params_to_json(&next.primitive)
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let ctx = trained_context();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("conditioning exactness", Box::new(conditioning_exactness)),
        ("weighted-EM monotonicity", Box::new(em_monotonicity)),
        ("uniform-feedback equivalence", Box::new(uniform_feedback_equivalence)),
        ("clipped-IK safety and convergence", Box::new(clipped_ik_safety)),
        ("Jacobian correctness", Box::new(jacobian_correctness)),
        ("tracker oracle", Box::new(tracker_oracle)),
        ("segmentation recovery", Box::new(segmentation_recovery)),
        ("end-to-end directional experiment", Box::new(|| end_to_end(&ctx))),
        ("simulate determinism", Box::new(|| simulate_determinism(&ctx, tmp.path()))),
        ("feedback round-trip (secondary)", Box::new(|| feedback_round_trip(&ctx, tmp.path()))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
