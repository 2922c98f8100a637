//! Deterministic striking simulator: ball flight, sensing, the stroke
//! controller, contact, reward oracle and experiment runners.

mod controller;
mod demos;
mod episode;
mod experiment;
mod reward;
mod scenario;

use thiserror::Error;

pub use controller::{primitive_hit_phase, Command, ControllerPhase, StrokeController, StrokeTiming};
pub use demos::{hit_configuration, scripted_demos, scripted_stroke, DemoConfig};
pub use episode::{reflect, run_episode, EpisodeOutcome, Sidecar, SimContext, TimedPoint};
pub use experiment::{
    episode_seed, refine_round, refinement_experiment, round_batch, run_batch, run_experiment, Experiment, FeedbackSource, Metrics,
    OracleFeedback, RefinementConfig, RefinementReport, RoundReport, EVAL_STREAM,
};
pub use reward::{classify_return, reward_oracle, OutcomeGeometry, ReturnClass, CLOSE_MISS};
pub use scenario::{
    ControllerConfig, Court, Execution, LaunchSpec, PlaneSpec, Robot, Scenario, Sensing, TrackerSettings, GRAVITY,
};

use crate::kinematics::KinematicsError;
use crate::pipeline::PipelineError;
use crate::promp::PrimitiveError;
use crate::segment::SegmentError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("the primitive's mean stroke never crosses the hit plane")]
    NoHitPhase,
    #[error("demo generation: {0}")]
    Demo(String),
    #[error("feedback: {0}")]
    Feedback(String),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl SimError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
