//! Recording-level workflows shared by the command line, the feedback
//! service and the simulated experiments: train a primitive from raw
//! demonstrations, and refine one from rated executions.

use thiserror::Error;

use crate::promp::{BasisConfig, FitOptions, PrimitiveError, PrimitiveParams, Trajectory};
use crate::refine::{e_step, refinement_round, EmOptions, RefineError};
use crate::segment::{segment_stroke, Recording, Segment, SegmentError, SegmentOptions};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("recording {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: SegmentError,
    },
    #[error("recording {index} has {found} joints, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error(transparent)]
    Refine(#[from] RefineError),
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub n_basis: usize,
    /// Override of the phase duration; the mean stroke duration otherwise.
    pub phase_duration: Option<f64>,
    pub bandwidth: Option<f64>,
    pub segment: SegmentOptions,
    pub fit: FitOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            n_basis: crate::promp::DEFAULT_N_BASIS,
            phase_duration: None,
            bandwidth: None,
            segment: SegmentOptions::default(),
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: PrimitiveParams,
    pub segments: Vec<Segment>,
    /// Per-demo RMSE of the reconstruction from its own posterior weights.
    pub rmse: Vec<f64>,
}

/// Segments every recording, fits a primitive to the strokes and scores how
/// well the fitted model reconstructs each demo.
pub fn train_from_recordings(recordings: &[Recording], opts: &TrainOptions) -> Result<TrainReport, PipelineError> {
    let Some(first) = recordings.first() else {
        return Err(PrimitiveError::TooFewDemos(0).into());
    };
    let d = first.n_dof();
    let mut segments = Vec::with_capacity(recordings.len());
    let mut strokes = Vec::with_capacity(recordings.len());
    for (index, rec) in recordings.iter().enumerate() {
        if rec.n_dof() != d {
            return Err(PipelineError::DimensionMismatch {
                index,
                expected: d,
                found: rec.n_dof(),
            });
        }
        let wrap = |source| PipelineError::Segment { index, source };
        let seg = segment_stroke(rec, &opts.segment).map_err(wrap)?;
        strokes.push(rec.extract(seg).map_err(wrap)?.rebased());
        segments.push(seg);
    }
    let duration = opts
        .phase_duration
        .unwrap_or_else(|| strokes.iter().map(Trajectory::duration).sum::<f64>() / strokes.len() as f64);
    let mut basis = BasisConfig::uniform(opts.n_basis, d, duration)?;
    if let Some(h) = opts.bandwidth {
        basis = basis.with_bandwidth(h)?;
    }
    let params = PrimitiveParams::fit(&strokes, &basis, &opts.fit)?;
    let rmse = strokes
        .iter()
        .map(|tau| reconstruction_rmse(&params, tau))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrainReport { params, segments, rmse })
}

/// RMSE between `tau` and `Φ m`, with `m` the posterior weight mean of `tau`.
pub fn reconstruction_rmse(params: &PrimitiveParams, tau: &Trajectory) -> Result<f64, PipelineError> {
    let post = e_step(params, tau)?;
    let phases = tau.phases();
    let mut sq = 0.0;
    for (i, &z) in phases.iter().enumerate() {
        sq += (params.basis.project(z, &post.mean) - tau.position(i)).norm_squared();
    }
    Ok((sq / (phases.len() * tau.n_dof()) as f64).sqrt())
}

#[derive(Debug, Clone)]
pub struct RefineReport {
    pub params: PrimitiveParams,
    /// Indices of the recordings that yielded a stroke.
    pub used: Vec<usize>,
    pub alphas: Vec<f64>,
    /// Weighted log-likelihood per EM iterate (empty when nothing was used).
    pub trace: Vec<f64>,
}

/// One refinement round from executed recordings and their rewards.
/// Recordings without a detectable stroke are skipped; if none remain, the
/// parameters come back unchanged.
pub fn refine_from_recordings(
    params: &PrimitiveParams,
    recordings: &[Recording],
    rewards: &[f64],
    temperature: f64,
    segment: &SegmentOptions,
    em: &EmOptions,
) -> Result<RefineReport, PipelineError> {
    if recordings.len() != rewards.len() {
        return Err(RefineError::LengthMismatch {
            what: "recordings vs rewards",
            left: recordings.len(),
            right: rewards.len(),
        }
        .into());
    }
    let mut used = Vec::new();
    let mut strokes = Vec::new();
    let mut used_rewards = Vec::new();
    for (i, rec) in recordings.iter().enumerate() {
        if rec.n_dof() != params.n_dof() {
            return Err(PipelineError::DimensionMismatch {
                index: i,
                expected: params.n_dof(),
                found: rec.n_dof(),
            });
        }
        let Ok(seg) = segment_stroke(rec, segment) else {
            continue;
        };
        let Ok(stroke) = rec.extract(seg) else {
            continue;
        };
        used.push(i);
        strokes.push(stroke.rebased());
        used_rewards.push(rewards[i]);
    }
    if strokes.is_empty() {
        return Ok(RefineReport {
            params: params.clone(),
            used,
            alphas: Vec::new(),
            trace: Vec::new(),
        });
    }
    let out = refinement_round(params, &strokes, &used_rewards, temperature, em)?;
    Ok(RefineReport {
        params: out.params,
        used,
        alphas: out.alphas,
        trace: out.trace,
    })
}
