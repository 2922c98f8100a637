//! Stroke extraction from joint-state recordings.
//!
//! A stroke is found on the envelope `v_t = max_j |q̇_tj|` (smoothed with a
//! centered moving average): it starts where the envelope stays above `v_on`
//! for `min_hold` samples, walked back to the preceding local minimum, and
//! ends where it stays below `v_off`, walked forward to the next minimum.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::kinematics::{KinematicChain, KinematicsError};
use crate::promp::{PrimitiveError, Trajectory};
use crate::tracker::HitPlane;

pub const MIN_RECORDING_LEN: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("smoothing window must be odd and >= 1, got {0}")]
    BadWindow(usize),
    #[error("thresholds must satisfy v_on >= v_off > 0 (got v_on={v_on}, v_off={v_off})")]
    BadThresholds { v_on: f64, v_off: f64 },
    #[error("no stroke: velocity envelope never stays above {0}")]
    NoStroke(f64),
    #[error("end effector does not cross the hit plane inside the segment")]
    NoCrossing,
    #[error("segment {start}..{end} is not inside the recording")]
    BadSegment { start: usize, end: usize },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
}

/// Joint-state recording with named joints; velocities are always present
/// (finite-differenced on construction when not recorded).
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    joint_names: Vec<String>,
    trajectory: Trajectory,
}

impl Recording {
    pub fn new(
        joint_names: Vec<String>,
        timestamps: Vec<f64>,
        positions: DMatrix<f64>,
        velocities: Option<DMatrix<f64>>,
    ) -> Result<Self, SegmentError> {
        if timestamps.len() < MIN_RECORDING_LEN {
            return Err(SegmentError::InvalidRecording(format!(
                "need at least {MIN_RECORDING_LEN} samples, got {}",
                timestamps.len()
            )));
        }
        if joint_names.len() != positions.ncols() {
            return Err(SegmentError::InvalidRecording(format!(
                "{} joint names for {} columns",
                joint_names.len(),
                positions.ncols()
            )));
        }
        let velocities = match velocities {
            Some(v) => v,
            None => finite_difference(&timestamps, &positions),
        };
        let trajectory = Trajectory::new(timestamps, positions, Some(velocities))?;
        if !trajectory.velocities().is_some_and(|v| v.iter().all(|x| x.is_finite())) {
            return Err(SegmentError::InvalidRecording("non-finite velocity".into()));
        }
        Ok(Self {
            joint_names,
            trajectory,
        })
    }

    /// Recording from a trajectory, with generated joint names `q1..qD`.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self, SegmentError> {
        let names = (1..=traj.n_dof()).map(|i| format!("q{i}")).collect();
        Self::new(
            names,
            traj.timestamps().to_vec(),
            traj.positions().clone(),
            traj.velocities().cloned(),
        )
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn timestamps(&self) -> &[f64] {
        self.trajectory.timestamps()
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        self.trajectory.positions()
    }

    pub fn velocities(&self) -> &DMatrix<f64> {
        self.trajectory.velocities().expect("recordings always carry velocities")
    }

    pub fn len(&self) -> usize {
        self.trajectory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }

    pub fn n_dof(&self) -> usize {
        self.trajectory.n_dof()
    }

    /// The samples `seg.start..=seg.end` as a trajectory.
    pub fn extract(&self, seg: Segment) -> Result<Trajectory, SegmentError> {
        if seg.end >= self.len() || seg.start >= seg.end {
            return Err(SegmentError::BadSegment {
                start: seg.start,
                end: seg.end,
            });
        }
        Ok(self.trajectory.slice(seg.start, seg.end)?)
    }
}

/// Central differences inside, one-sided at the ends.
pub fn finite_difference(timestamps: &[f64], positions: &DMatrix<f64>) -> DMatrix<f64> {
    let n = timestamps.len();
    let mut v = DMatrix::zeros(positions.nrows(), positions.ncols());
    if n < 2 || positions.nrows() != n {
        return v;
    }
    for i in 0..n {
        let (a, b) = match i {
            0 => (0, 1),
            _ if i == n - 1 => (n - 2, n - 1),
            _ => (i - 1, i + 1),
        };
        let dt = timestamps[b] - timestamps[a];
        let row = (positions.row(b) - positions.row(a)) / dt;
        v.set_row(i, &row);
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOptions {
    pub window: usize,
    pub v_on: f64,
    pub v_off: f64,
    pub min_hold: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            window: 5,
            v_on: 0.5,
            v_off: 0.1,
            min_hold: 3,
        }
    }
}

impl SegmentOptions {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(SegmentError::BadWindow(self.window));
        }
        if !(self.v_off > 0.0 && self.v_on >= self.v_off && self.v_on.is_finite()) {
            return Err(SegmentError::BadThresholds {
                v_on: self.v_on,
                v_off: self.v_off,
            });
        }
        Ok(())
    }
}

/// Inclusive sample range of one stroke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

/// Max absolute joint velocity per sample, smoothed by a centered moving
/// average of `window` samples that shrinks at the edges.
pub fn velocity_envelope(rec: &Recording, window: usize) -> Result<Vec<f64>, SegmentError> {
    if window == 0 || window % 2 == 0 {
        return Err(SegmentError::BadWindow(window));
    }
    let vel = rec.velocities();
    let raw: Vec<f64> = (0..rec.len())
        .map(|i| vel.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    Ok(moving_average(&raw, window))
}

fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// First stroke in the recording.
///
/// The centered smoothing spreads motion half a window beyond where it
/// really starts and stops, so the located minima are moved back inward by
/// `window / 2` samples (never past the trigger sample).
pub fn segment_stroke(rec: &Recording, opts: &SegmentOptions) -> Result<Segment, SegmentError> {
    opts.validate()?;
    let env = velocity_envelope(rec, opts.window)?;
    segment_envelope(&env, opts)
}

/// Envelope level, as a fraction of `v_off`, below which the arm counts as at
/// rest when walking out to the segment boundaries.
const REST_FRACTION: f64 = 0.1;

pub(crate) fn segment_envelope(env: &[f64], opts: &SegmentOptions) -> Result<Segment, SegmentError> {
    let n = env.len();
    let hold = opts.min_hold.max(1);
    let half = opts.window / 2;
    let sustained = |i: usize, pred: &dyn Fn(f64) -> bool| i + hold <= n && env[i..i + hold].iter().all(|&v| pred(v));

    let trigger = (0..n)
        .find(|&i| sustained(i, &|v| v >= opts.v_on))
        .ok_or(SegmentError::NoStroke(opts.v_on))?;

    // A lagged or filtered stroke decays exponentially, so "still decreasing"
    // alone would walk through the whole tail.
    let rest = REST_FRACTION * opts.v_off;
    let mut lo = trigger;
    while lo > 0 && env[lo - 1] < env[lo] && env[lo] > rest {
        lo -= 1;
    }
    let start = (lo + half).min(trigger);

    let fall = (trigger + 1..n).find(|&i| sustained(i, &|v| v < opts.v_off));
    let end = match fall {
        Some(mut hi) => {
            while hi + 1 < n && env[hi + 1] < env[hi] && env[hi] > rest {
                hi += 1;
            }
            hi.saturating_sub(half).max(trigger)
        }
        None => n - 1,
    };
    let end = if end <= start { (start + 1).min(n - 1) } else { end };
    if end <= start {
        return Err(SegmentError::NoStroke(opts.v_on));
    }
    Ok(Segment { start, end })
}

/// Phase in `(0, 1)` at which the end effector first crosses `plane` within
/// the segment, from linear interpolation of the signed plane distance.
///
/// The recording holds either the arm joints only (rail at 0) or the rail
/// followed by the arm joints.
pub fn hit_phase(
    rec: &Recording,
    seg: Segment,
    chain: &KinematicChain,
    plane: &HitPlane,
) -> Result<f64, SegmentError> {
    if seg.end >= rec.len() || seg.start >= seg.end {
        return Err(SegmentError::BadSegment {
            start: seg.start,
            end: seg.end,
        });
    }
    let with_rail = match rec.n_dof() {
        d if d == chain.arm_dof() => false,
        d if d == chain.dof() => true,
        d => {
            return Err(KinematicsError::DimensionMismatch {
                what: "recording columns",
                expected: chain.arm_dof(),
                found: d,
            }
            .into())
        }
    };
    let ts = rec.timestamps();
    let distance = |i: usize| -> Result<f64, SegmentError> {
        let row: DVector<f64> = rec.positions().row(i).transpose();
        let (r, q) = if with_rail {
            (row[0], row.rows(1, row.len() - 1).into_owned())
        } else {
            (0.0, row)
        };
        Ok(plane.signed_distance(&chain.forward(r, &q)?))
    };
    let mut prev = distance(seg.start)?;
    for i in seg.start + 1..=seg.end {
        let cur = distance(i)?;
        if prev != 0.0 && (cur == 0.0 || cur.signum() != prev.signum()) {
            let a = prev / (prev - cur);
            let t_cross = ts[i - 1] + a * (ts[i] - ts[i - 1]);
            let phase = (t_cross - ts[seg.start]) / (ts[seg.end] - ts[seg.start]);
            if phase > 0.0 && phase < 1.0 {
                return Ok(phase);
            }
            return Err(SegmentError::NoCrossing);
        }
        prev = cur;
    }
    Err(SegmentError::NoCrossing)
}
