//! Ball state estimation: EKF over position and velocity, forward propagation
//! under gravity and quadratic drag, and hit-plane crossing prediction.

use std::collections::VecDeque;

use nalgebra::{Matrix3, Matrix3x6, Matrix6, SMatrix, Unit, Vector3, Vector6};
use thiserror::Error;

pub type State = Vector6<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("observation at {stamp} is older than the estimate at {estimate}")]
    Stale { stamp: f64, estimate: f64 },
    #[error("observation at {stamp} arrived more than {window} s late; rejected")]
    TooLate { stamp: f64, window: f64 },
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("invalid plane: {0}")]
    InvalidPlane(String),
}

/// Gaussian estimate over `[position (m); velocity (m/s)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallEstimate {
    pub mean: State,
    pub covariance: Matrix6<f64>,
    pub stamp: f64,
}

impl BallEstimate {
    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(3).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub position: Vector3<f64>,
    pub noise_std: f64,
    pub source_id: u32,
    pub stamp: f64,
}

impl Observation {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(TrackerError::InvalidObservation(format!(
                "noise_std must be positive, got {}",
                self.noise_std
            )));
        }
        if !self.stamp.is_finite() || !self.position.iter().all(|v| v.is_finite()) {
            return Err(TrackerError::InvalidObservation("non-finite value".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitPlane {
    pub point: Vector3<f64>,
    normal: Unit<Vector3<f64>>,
}

impl HitPlane {
    pub fn new(point: Vector3<f64>, normal: Vector3<f64>) -> Result<Self, TrackerError> {
        if !point.iter().chain(normal.iter()).all(|v| v.is_finite()) {
            return Err(TrackerError::InvalidPlane("non-finite value".into()));
        }
        let normal = Unit::try_new(normal, 1e-12)
            .ok_or_else(|| TrackerError::InvalidPlane("normal must be non-zero".into()))?;
        Ok(Self { point, normal })
    }

    pub fn normal(&self) -> &Vector3<f64> {
        self.normal.as_ref()
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        (p - self.point).dot(&self.normal)
    }
}

/// Point-mass flight model: `v̇ = g − k_d ‖v‖ v`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallModel {
    pub gravity: Vector3<f64>,
    pub drag: f64,
}

impl Default for BallModel {
    fn default() -> Self {
        Self {
            gravity: Vector3::new(0.0, 0.0, -9.81),
            drag: 0.0,
        }
    }
}

impl BallModel {
    fn derivative(&self, x: &State) -> State {
        let v = x.fixed_rows::<3>(3);
        let a = self.gravity - v * (self.drag * v.norm());
        let mut dx = State::zeros();
        dx.fixed_rows_mut::<3>(0).copy_from(&v);
        dx.fixed_rows_mut::<3>(3).copy_from(&a);
        dx
    }

    fn derivative_jacobian(&self, x: &State) -> Matrix6<f64> {
        let mut a = Matrix6::zeros();
        a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        let v: Vector3<f64> = x.fixed_rows::<3>(3).into_owned();
        let speed = v.norm();
        if self.drag != 0.0 && speed > 0.0 {
            let dv = -(Matrix3::identity() * speed + v * v.transpose() / speed) * self.drag;
            a.fixed_view_mut::<3, 3>(3, 3).copy_from(&dv);
        }
        a
    }

    /// One classical RK4 step together with the exact Jacobian of that step.
    fn rk4_step(&self, x: &State, h: f64) -> (State, Matrix6<f64>) {
        let eye = Matrix6::identity();
        let k1 = self.derivative(x);
        let d1 = self.derivative_jacobian(x);
        let x2 = x + k1 * (h / 2.0);
        let k2 = self.derivative(&x2);
        let d2 = self.derivative_jacobian(&x2) * (eye + d1 * (h / 2.0));
        let x3 = x + k2 * (h / 2.0);
        let k3 = self.derivative(&x3);
        let d3 = self.derivative_jacobian(&x3) * (eye + d2 * (h / 2.0));
        let x4 = x + k3 * h;
        let k4 = self.derivative(&x4);
        let d4 = self.derivative_jacobian(&x4) * (eye + d3 * h);
        let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let jac = eye + (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (h / 6.0);
        (next, jac)
    }

    /// Integrates `dt` seconds in RK4 substeps of at most `max_substep`;
    /// returns the final state and the Jacobian of the whole map.
    pub fn propagate_with_jacobian(&self, x: &State, dt: f64, max_substep: f64) -> (State, Matrix6<f64>) {
        let mut state = *x;
        let mut jac = Matrix6::identity();
        if dt <= 0.0 {
            return (state, jac);
        }
        let steps = (dt / max_substep).ceil().max(1.0) as usize;
        let h = dt / steps as f64;
        for _ in 0..steps {
            let (next, step_jac) = self.rk4_step(&state, h);
            state = next;
            jac = step_jac * jac;
        }
        (state, jac)
    }

    pub fn propagate(&self, x: &State, dt: f64, max_substep: f64) -> State {
        if dt <= 0.0 {
            return *x;
        }
        let steps = (dt / max_substep).ceil().max(1.0) as usize;
        let h = dt / steps as f64;
        let mut state = *x;
        for _ in 0..steps {
            state = self.rk4_step_state(&state, h);
        }
        state
    }

    fn rk4_step_state(&self, x: &State, h: f64) -> State {
        let k1 = self.derivative(x);
        let k2 = self.derivative(&(x + k1 * (h / 2.0)));
        let k3 = self.derivative(&(x + k2 * (h / 2.0)));
        let k4 = self.derivative(&(x + k3 * h));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    /// `½‖v‖² − g·p`, conserved without drag.
    pub fn specific_energy(&self, x: &State) -> f64 {
        let p: Vector3<f64> = x.fixed_rows::<3>(0).into_owned();
        let v: Vector3<f64> = x.fixed_rows::<3>(3).into_owned();
        0.5 * v.norm_squared() - self.gravity.dot(&p)
    }
}

/// Continuous white-noise intensities added as `Q · dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessNoise {
    /// m² per second, per axis.
    pub position: f64,
    /// (m/s)² per second, per axis.
    pub velocity: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            position: 1e-4,
            velocity: 1e-2,
        }
    }
}

impl ProcessNoise {
    pub fn matrix(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::new(
            self.position,
            self.position,
            self.position,
            self.velocity,
            self.velocity,
            self.velocity,
        ))
    }
}

pub const DEFAULT_MAX_SUBSTEP: f64 = 1e-3;

/// Time update: mean by RK4 integration, covariance `F P Fᵀ + Q dt` with `F`
/// the Jacobian of the discrete flow map.
pub fn ekf_predict(est: &BallEstimate, dt: f64, model: &BallModel, noise: &ProcessNoise) -> BallEstimate {
    let dt = dt.max(0.0);
    let (mean, f) = model.propagate_with_jacobian(&est.mean, dt, DEFAULT_MAX_SUBSTEP);
    let cov = f * est.covariance * f.transpose() + noise.matrix() * dt;
    BallEstimate {
        mean,
        covariance: (cov + cov.transpose()) * 0.5,
        stamp: est.stamp + dt,
    }
}

/// Position measurement update with `R = σ² I₃` and the Joseph-form covariance.
pub fn ekf_update(est: &BallEstimate, obs: &Observation) -> Result<BallEstimate, TrackerError> {
    obs.validate()?;
    if obs.stamp < est.stamp {
        return Err(TrackerError::Stale {
            stamp: obs.stamp,
            estimate: est.stamp,
        });
    }
    let mut h = Matrix3x6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    let r = Matrix3::identity() * (obs.noise_std * obs.noise_std);
    let p = &est.covariance;
    let s = h * p * h.transpose() + r;
    let s_inv = s.cholesky().ok_or(TrackerError::SingularInnovation)?.inverse();
    let gain: SMatrix<f64, 6, 3> = p * h.transpose() * s_inv;
    let innovation = obs.position - h * est.mean;
    let mean = est.mean + gain * innovation;
    let i_kh = Matrix6::identity() - gain * h;
    let cov = i_kh * p * i_kh.transpose() + gain * r * gain.transpose();
    Ok(BallEstimate {
        mean,
        covariance: (cov + cov.transpose()) * 0.5,
        stamp: est.stamp,
    })
}

/// Where and when the predicted flight meets a plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    /// Absolute time of the crossing.
    pub time: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

pub const CROSSING_TIME_TOL: f64 = 1e-6;

/// First crossing of `plane` within `horizon` seconds after `est.stamp`.
///
/// Without drag the signed distance is a quadratic in time and the smallest
/// positive root is taken; a start exactly on the plane never counts. With
/// drag the path is integrated and the sign change bisected to 1 µs.
pub fn predict_crossing(
    est: &BallEstimate,
    plane: &HitPlane,
    model: &BallModel,
    horizon: f64,
) -> Option<Crossing> {
    if !(horizon > 0.0) {
        return None;
    }
    let p = est.position();
    let v = est.velocity();
    let n = plane.normal();
    let dt = if model.drag == 0.0 {
        let c = plane.signed_distance(&p);
        let b = n.dot(&v);
        let a = 0.5 * n.dot(&model.gravity);
        smallest_positive_root(a, b, c)?
    } else {
        bisect_crossing(&est.mean, plane, model, horizon)?
    };
    if dt > horizon {
        return None;
    }
    let state = if model.drag == 0.0 {
        let mut s = State::zeros();
        s.fixed_rows_mut::<3>(0)
            .copy_from(&(p + v * dt + model.gravity * (0.5 * dt * dt)));
        s.fixed_rows_mut::<3>(3).copy_from(&(v + model.gravity * dt));
        s
    } else {
        model.propagate(&est.mean, dt, DEFAULT_MAX_SUBSTEP)
    };
    Some(Crossing {
        time: est.stamp + dt,
        position: state.fixed_rows::<3>(0).into_owned(),
        velocity: state.fixed_rows::<3>(3).into_owned(),
    })
}

/// Smallest `t > 0` where `a t² + b t + c` changes sign.
fn smallest_positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if c == 0.0 {
        // Starting on the plane: only a later return counts.
        if a == 0.0 || b == 0.0 {
            return None;
        }
        let t = -b / a;
        return (t > 0.0).then_some(t);
    }
    if a == 0.0 {
        if b == 0.0 {
            return None;
        }
        let t = -c / b;
        return (t > 0.0).then_some(t);
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let q = if q == 0.0 { -0.5 * disc.sqrt() } else { q };
    let (r1, r2) = (q / a, c / q);
    [r1.min(r2), r1.max(r2)].into_iter().find(|&t| t > 0.0)
}

fn bisect_crossing(x0: &State, plane: &HitPlane, model: &BallModel, horizon: f64) -> Option<f64> {
    let dist = |s: &State| plane.signed_distance(&s.fixed_rows::<3>(0).into_owned());
    let h = DEFAULT_MAX_SUBSTEP;
    let mut t = 0.0;
    let mut state = *x0;
    let mut d_prev = dist(&state);
    while t < horizon {
        let step = h.min(horizon - t);
        let next = model.rk4_step_state(&state, step);
        let d_next = dist(&next);
        if d_prev != 0.0 && (d_next == 0.0 || d_next.signum() != d_prev.signum()) {
            let (mut lo, mut hi) = (0.0, step);
            while hi - lo > CROSSING_TIME_TOL {
                let mid = 0.5 * (lo + hi);
                let d_mid = dist(&model.rk4_step_state(&state, mid));
                if d_mid == 0.0 || d_mid.signum() != d_prev.signum() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(t + 0.5 * (lo + hi));
        }
        t += step;
        state = next;
        d_prev = d_next;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub model: BallModel,
    pub process_noise: ProcessNoise,
    /// Prior standard deviation of the velocity at initialization, m/s.
    pub init_velocity_std: f64,
    /// Out-of-order observations up to this many seconds late are re-sorted.
    pub reorder_window: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            model: BallModel::default(),
            process_noise: ProcessNoise::default(),
            init_velocity_std: 10.0,
            reorder_window: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
struct Applied {
    obs: Observation,
    /// Estimate before this observation was fused (`None` for the first one).
    prior: Option<BallEstimate>,
}

/// Single-owner filter fed by an observation stream.
///
/// Late observations inside the reorder window roll the filter back to the
/// last estimate before them and replay the buffered observations in order.
#[derive(Debug, Clone)]
pub struct BallTracker {
    cfg: TrackerConfig,
    estimate: Option<BallEstimate>,
    history: VecDeque<Applied>,
    rejected: usize,
}

impl BallTracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            cfg,
            estimate: None,
            history: VecDeque::new(),
            rejected: 0,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn estimate(&self) -> Option<&BallEstimate> {
        self.estimate.as_ref()
    }

    /// Number of observations dropped for arriving too late.
    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn reset(&mut self) {
        self.estimate = None;
        self.history.clear();
    }

    /// Estimate predicted forward to `t` (no earlier than the last fusion).
    pub fn estimate_at(&self, t: f64) -> Option<BallEstimate> {
        self.estimate
            .as_ref()
            .map(|e| ekf_predict(e, t - e.stamp, &self.cfg.model, &self.cfg.process_noise))
    }

    fn apply(&self, prior: Option<&BallEstimate>, obs: &Observation) -> Result<BallEstimate, TrackerError> {
        match prior {
            None => {
                let pv = obs.noise_std * obs.noise_std;
                let vv = self.cfg.init_velocity_std * self.cfg.init_velocity_std;
                let mut mean = State::zeros();
                mean.fixed_rows_mut::<3>(0).copy_from(&obs.position);
                Ok(BallEstimate {
                    mean,
                    covariance: Matrix6::from_diagonal(&Vector6::new(pv, pv, pv, vv, vv, vv)),
                    stamp: obs.stamp,
                })
            }
            Some(est) => {
                let predicted = ekf_predict(est, obs.stamp - est.stamp, &self.cfg.model, &self.cfg.process_noise);
                ekf_update(&predicted, obs)
            }
        }
    }

    pub fn observe(&mut self, obs: Observation) -> Result<(), TrackerError> {
        obs.validate()?;
        let latest = match &self.estimate {
            None => {
                let est = self.apply(None, &obs)?;
                self.history.push_back(Applied { obs, prior: None });
                self.estimate = Some(est);
                return Ok(());
            }
            Some(e) => e.stamp,
        };
        if obs.stamp >= latest {
            let est = self.apply(self.estimate.as_ref(), &obs)?;
            let prior = self.estimate.replace(est);
            self.history.push_back(Applied { obs, prior });
        } else if latest - obs.stamp <= self.cfg.reorder_window {
            let idx = self
                .history
                .iter()
                .position(|a| a.obs.stamp > obs.stamp)
                .unwrap_or(self.history.len());
            let mut replay: Vec<Observation> = vec![obs];
            let mut state = self.history.get(idx).and_then(|a| a.prior.clone());
            replay.extend(self.history.drain(idx..).map(|a| a.obs));
            for o in replay {
                let next = self.apply(state.as_ref(), &o)?;
                self.history.push_back(Applied {
                    obs: o,
                    prior: state.take(),
                });
                state = Some(next);
            }
            self.estimate = state;
        } else {
            self.rejected += 1;
            return Err(TrackerError::TooLate {
                stamp: obs.stamp,
                window: self.cfg.reorder_window,
            });
        }
        let newest = self.estimate.as_ref().map_or(latest, |e| e.stamp);
        while self.history.len() > 1
            && self.history.front().is_some_and(|a| a.obs.stamp < newest - self.cfg.reorder_window)
        {
            self.history.pop_front();
        }
        Ok(())
    }
}
