use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use strokeprim::segment::SegmentOptions;

#[derive(Debug, Parser)]
#[command(name = "strokeprim", version, about = "Train, simulate and refine striking movement primitives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write scripted demonstration recordings for the simulated robot.
    GenDemos(GenDemosArgs),
    /// Fit a primitive to a directory of demonstration recordings.
    Train(TrainArgs),
    /// Run held-out episodes with a primitive and print their metrics.
    Simulate(SimulateArgs),
    /// Refine a primitive, either against the reward oracle or from a
    /// feedback file of rated episodes.
    Refine(RefineArgs),
    /// Detect the stroke in a recording.
    Segment(SegmentArgs),
    /// Serve an interactive rating session over HTTP.
    Serve(ServeArgs),
}

/// Robot and world description; built-in defaults when omitted.
#[derive(Debug, Clone, Default, Args)]
pub struct RobotArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Kinematic chain JSON, optionally with IK limits.
    #[arg(long)]
    pub chain: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SegmentFlags {
    /// Moving-average window of the velocity envelope, samples (odd).
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Envelope level that starts a stroke, rad/s.
    #[arg(long, default_value_t = 0.5)]
    pub v_on: f64,
    /// Envelope level that ends a stroke, rad/s.
    #[arg(long, default_value_t = 0.1)]
    pub v_off: f64,
    /// Samples the envelope must stay above `v_on`.
    #[arg(long, default_value_t = 3)]
    pub min_hold: usize,
}

impl SegmentFlags {
    pub fn options(&self) -> SegmentOptions {
        SegmentOptions {
            window: self.window,
            v_on: self.v_on,
            v_off: self.v_off,
            min_hold: self.min_hold,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDemosArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub robot: RobotArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of `.csv` recordings, one demonstration each.
    #[arg(long)]
    pub demos: PathBuf,
    /// Output primitive JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub n_basis: usize,
    /// RBF bandwidth; derived from the basis spacing when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[command(flatten)]
    pub segment: SegmentFlags,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[command(flatten)]
    pub robot: RobotArgs,
    #[arg(long, default_value_t = 10)]
    pub balls: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Also write every episode as `<id>.csv` plus `<id>.json`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Directory holding the rated episodes' `<id>.csv` recordings.
    #[arg(long, requires = "feedback")]
    pub episodes: Option<PathBuf>,
    /// `trajectory_id,reward` file; switches to feedback-file mode.
    #[arg(long, requires_all = ["episodes", "out"])]
    pub feedback: Option<PathBuf>,
    /// Refined primitive JSON (feedback-file mode).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub robot: RobotArgs,
    #[arg(long, default_value_t = 20)]
    pub batch: usize,
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub eval_balls: usize,
    /// Report, per-round primitives and executed episodes (oracle mode).
    #[arg(long, conflicts_with = "feedback")]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub segment: SegmentFlags,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub recording: PathBuf,
    #[command(flatten)]
    pub segment: SegmentFlags,
    /// Also report the phase at which the racket crosses the hit plane.
    #[arg(long)]
    pub hit_phase: bool,
    #[command(flatten)]
    pub robot: RobotArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Initial primitive; ignored when resuming a session from `out_dir`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[command(flatten)]
    pub robot: RobotArgs,
    #[arg(long, default_value_t = 20)]
    pub batch: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub eval_balls: usize,
    #[arg(long, default_value = "session")]
    pub session_id: String,
}
