use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use strokeprim::io::{params_to_json, parse_feedback, write_feedback, write_recording};
use strokeprim::pipeline::{refine_from_recordings, train_from_recordings, TrainOptions};
use strokeprim::refine::{serialize_reward, EmOptions, FeedbackRecord};
use strokeprim::segment::{hit_phase, segment_stroke};
use strokeprim::session::episode_id;
use strokeprim::sim::{
    refine_round, round_batch, run_experiment, scripted_demos, DemoConfig, Metrics, RefinementConfig,
    RefinementReport, ReturnClass,
};

use crate::cli::{Command, GenDemosArgs, RefineArgs, SegmentArgs, SimulateArgs, TrainArgs};
use crate::files::{self, RobotSetup};

/// Runs one subcommand, writing its report to `out`.
pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenDemos(args) => gen_demos(&args, out),
        Command::Train(args) => train(&args, out),
        Command::Simulate(args) => simulate(&args, out),
        Command::Refine(args) if args.feedback.is_some() => refine_from_feedback(&args, out),
        Command::Refine(args) => refine_with_oracle(&args, out),
        Command::Segment(args) => segment(&args, out),
        Command::Serve(args) => crate::service::serve(args),
    }
}

fn gen_demos(args: &GenDemosArgs, out: &mut dyn Write) -> Result<()> {
    let robot = RobotSetup::load(&args.robot)?;
    let cfg = DemoConfig {
        n_demos: args.n,
        seed: args.seed,
        ..DemoConfig::default()
    };
    let demos = scripted_demos(&robot.chain, &robot.scenario, &cfg)?;
    for (i, rec) in demos.iter().enumerate() {
        files::write(&args.out_dir.join(format!("demo_{i:03}.csv")), &write_recording(rec, false))?;
    }
    writeln!(out, "wrote {} demonstrations to {}", demos.len(), args.out_dir.display())?;
    Ok(())
}

fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let paths = files::csv_files(&args.demos)?;
    if paths.len() < 2 {
        bail!(
            "need at least 2 demonstration recordings in {}, found {}",
            args.demos.display(),
            paths.len()
        );
    }
    let recordings = paths
        .iter()
        .map(|p| files::load_recording(p))
        .collect::<Result<Vec<_>>>()?;
    let opts = TrainOptions {
        n_basis: args.n_basis,
        bandwidth: args.bandwidth,
        segment: args.segment.options(),
        ..TrainOptions::default()
    };
    let report = train_from_recordings(&recordings, &opts).map_err(|e| match e {
        strokeprim::pipeline::PipelineError::Segment { index, source } => {
            anyhow::anyhow!("{}: {source}", paths[index].display())
        }
        other => other.into(),
    })?;
    for ((path, seg), rmse) in paths.iter().zip(&report.segments).zip(&report.rmse) {
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        writeln!(out, "{name}\tsamples {}..={}\trmse {rmse:.6}", seg.start, seg.end)?;
    }
    files::write(&args.out, &params_to_json(&report.params))?;
    writeln!(
        out,
        "wrote primitive ({} joints, {} basis functions, {:.3} s) to {}",
        report.params.n_dof(),
        report.params.basis.n_basis(),
        report.params.basis.phase_duration,
        args.out.display()
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EpisodeLine {
    id: String,
    seed: u64,
    #[serde(serialize_with = "serialize_reward")]
    reward: f64,
    hit: bool,
    swung: bool,
    min_distance: f64,
    return_class: Option<ReturnClass>,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    seed: u64,
    z_hit: f64,
    metrics: Metrics,
    episodes: Vec<EpisodeLine>,
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let robot = RobotSetup::load(&args.robot)?;
    let ctx = robot.context(files::load_params(&args.params)?)?;
    let exp = run_experiment(&ctx, args.balls, args.seed)?;
    let episodes = exp
        .outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| EpisodeLine {
            id: format!("e{i:03}"),
            seed: o.seed,
            reward: o.reward,
            hit: o.hit,
            swung: o.swung,
            min_distance: o.min_distance,
            return_class: o.return_class,
        })
        .collect::<Vec<_>>();
    if let Some(dir) = &args.out_dir {
        for (line, outcome) in episodes.iter().zip(&exp.outcomes) {
            files::write_episode(dir, &line.id, outcome)?;
        }
    }
    let report = SimulateReport {
        seed: args.seed,
        z_hit: ctx.z_hit(),
        metrics: exp.metrics,
        episodes,
    };
    let text = files::pretty_json(&report);
    if let Some(dir) = &args.out_dir {
        files::write(&dir.join("metrics.json"), &text)?;
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn refinement_config(args: &RefineArgs) -> RefinementConfig {
    RefinementConfig {
        rounds: args.rounds,
        batch: args.batch,
        temperature: args.temperature,
        eval_balls: args.eval_balls,
        segment: args.segment.options(),
        em: EmOptions::default(),
    }
}

/// Oracle mode: every batch is scored by the built-in reward oracle.
fn refine_with_oracle(args: &RefineArgs, out: &mut dyn Write) -> Result<()> {
    if args.rounds == 0 || args.batch == 0 {
        bail!("--rounds and --batch must be at least 1");
    }
    let robot = RobotSetup::load(&args.robot)?;
    let base = robot.context(files::load_params(&args.params)?)?;
    let cfg = refinement_config(args);
    let dir = args.out_dir.as_deref();
    if let Some(dir) = dir {
        files::write(&dir.join("params/base.json"), &params_to_json(&base.primitive))?;
    }
    let base_metrics = run_experiment(&base, cfg.eval_balls, args.seed)?.metrics;
    let mut current = base;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let batch = round_batch(&current, &cfg, args.seed, round)?;
        let rewards: Vec<f64> = batch.outcomes.iter().map(|o| o.reward).collect();
        let (report, next) = refine_round(&current, &cfg, args.seed, round, &batch.outcomes, &rewards)?;
        if let Some(dir) = dir {
            write_round(dir, round, &batch.outcomes, &rewards)?;
            files::write(&dir.join(format!("params/round-{round}.json")), &params_to_json(&next.primitive))?;
        }
        tracing::info!(round, avg_reward = report.eval.avg_reward, "refinement round done");
        rounds.push(report);
        current = next;
    }
    let report = RefinementReport {
        batch: cfg.batch,
        temperature: cfg.temperature,
        base: base_metrics,
        rounds,
    };
    let text = files::pretty_json(&report);
    if let Some(dir) = dir {
        files::write(&dir.join("report.json"), &text)?;
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Episodes of one oracle round plus the feedback file that rated them.
fn write_round(dir: &Path, round: usize, outcomes: &[strokeprim::sim::EpisodeOutcome], rewards: &[f64]) -> Result<()> {
    let round_dir = dir.join(format!("round-{round}"));
    let mut records = Vec::with_capacity(outcomes.len());
    for (i, (outcome, &reward)) in outcomes.iter().zip(rewards).enumerate() {
        let id = episode_id(round, i);
        files::write_episode(&round_dir, &id, outcome)?;
        records.push(FeedbackRecord::new(id, reward)?);
    }
    files::write(&round_dir.join("feedback.csv"), &write_feedback(&records))
}

#[derive(Debug, Serialize)]
struct FeedbackRefineReport {
    used: Vec<String>,
    skipped: Vec<String>,
    alphas: Vec<f64>,
    em_iterations: usize,
    log_likelihood: Option<f64>,
}

/// Feedback-file mode: one update from rated recordings on disk. Episodes
/// enter the update in sorted id order.
fn refine_from_feedback(args: &RefineArgs, out: &mut dyn Write) -> Result<()> {
    let (Some(feedback), Some(episodes), Some(out_path)) = (&args.feedback, &args.episodes, &args.out) else {
        bail!("feedback-file mode needs --feedback, --episodes and --out");
    };
    let params = files::load_params(&args.params)?;
    let mut records = parse_feedback(&files::read(feedback)?).map_err(|e| e.in_file(feedback))?;
    if records.is_empty() {
        bail!("{} rates no episodes", feedback.display());
    }
    records.sort_by(|a, b| a.trajectory_id.cmp(&b.trajectory_id));
    let mut recordings = Vec::with_capacity(records.len());
    for r in &records {
        let id = &r.trajectory_id;
        if id.contains(['/', '\\']) || id.starts_with('.') {
            bail!("`{id}` is not a usable episode id");
        }
        let path = episodes.join(format!("{id}.csv"));
        recordings.push(files::load_recording(&path).with_context(|| format!("episode `{id}`"))?);
    }
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    let refined = refine_from_recordings(
        &params,
        &recordings,
        &rewards,
        args.temperature,
        &args.segment.options(),
        &EmOptions::default(),
    )?;
    files::write(out_path, &params_to_json(&refined.params))?;
    let ids = |keep: bool| {
        records
            .iter()
            .enumerate()
            .filter(|(i, _)| refined.used.contains(i) == keep)
            .map(|(_, r)| r.trajectory_id.clone())
            .collect::<Vec<_>>()
    };
    let report = FeedbackRefineReport {
        used: ids(true),
        skipped: ids(false),
        alphas: refined.alphas.clone(),
        em_iterations: refined.trace.len().saturating_sub(1),
        log_likelihood: refined.trace.last().copied(),
    };
    out.write_all(files::pretty_json(&report).as_bytes())?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SegmentReport {
    start: usize,
    end: usize,
    t_start: f64,
    t_end: f64,
    duration: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    hit_phase: Option<f64>,
}

fn segment(args: &SegmentArgs, out: &mut dyn Write) -> Result<()> {
    let rec = files::load_recording(&args.recording)?;
    let seg = segment_stroke(&rec, &args.segment.options())?;
    let hit = if args.hit_phase {
        let robot = RobotSetup::load(&args.robot)?;
        let plane = robot.scenario.hit_plane.plane()?;
        Some(hit_phase(&rec, seg, &robot.chain, &plane)?)
    } else {
        None
    };
    let ts = rec.timestamps();
    let report = SegmentReport {
        start: seg.start,
        end: seg.end,
        t_start: ts[seg.start],
        t_end: ts[seg.end],
        duration: ts[seg.end] - ts[seg.start],
        hit_phase: hit,
    };
    out.write_all(files::pretty_json(&report).as_bytes())?;
    Ok(())
}
