//! Stroke controller state machine.
//!
//! ```text
//! IDLE ──first estimate──▶ TRACKING ──crossing ahead──▶ CONDITIONING
//!   ▲                          │                             │ now ≥ t_hit − z_hit·T
//!   │◀──── crossing lost ──────┴─────────────────────────────┤
//!   │                                                        ▼
//!   └──── after recovery_time ──── RECOVERING ◀── end ── EXECUTING
//! ```
//!
//! While conditioning, every tick re-predicts the crossing, solves clipped IK
//! in the current base frame, commands the rail, and re-conditions the
//! primitive on the IK solution at the hit phase. Execution then plays the
//! conditioned mean open-loop, timed so the hit phase lands on the predicted
//! crossing. One stroke per episode.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::SimError;
use crate::kinematics::{clipped_ik, IkOptions, IkResult, KinematicChain, Limits};
use crate::promp::PrimitiveParams;
use crate::tracker::{predict_crossing, BallEstimate, BallModel, HitPlane};

/// Phase samples used to locate the mean's plane crossing.
const HIT_PHASE_SAMPLES: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControllerPhase {
    Idle,
    Tracking,
    Conditioning,
    Executing,
    Recovering,
}

impl ControllerPhase {
    /// Edges of the documented state graph (self-loops included).
    pub fn can_transition(self, to: Self) -> bool {
        use ControllerPhase::*;
        self == to
            || matches!(
                (self, to),
                (Idle, Tracking)
                    | (Tracking, Conditioning)
                    | (Tracking, Idle)
                    | (Conditioning, Executing)
                    | (Conditioning, Idle)
                    | (Executing, Recovering)
                    | (Recovering, Idle)
            )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    /// Absolute rail position target, m.
    pub rail: f64,
    /// Arm joint position targets.
    pub arm: DVector<f64>,
}

/// Timing fixed when the stroke starts executing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeTiming {
    pub t_start: f64,
    pub t_hit: f64,
    pub z_hit: f64,
    pub duration: f64,
}

#[derive(Debug, Clone)]
struct Plan {
    t_hit: f64,
    t_start: f64,
    rail_target: f64,
    mean_w: DVector<f64>,
}

/// Phase in `(0, 1)` where the mean end-effector path of `p` (rail at 0)
/// first crosses `plane`.
pub fn primitive_hit_phase(p: &PrimitiveParams, chain: &KinematicChain, plane: &HitPlane) -> Result<f64, SimError> {
    let dist = |z: f64| -> Result<f64, SimError> { Ok(plane.signed_distance(&chain.forward(0.0, &p.mean_at(z))?)) };
    let mut prev = dist(0.0)?;
    for i in 1..=HIT_PHASE_SAMPLES {
        let z = i as f64 / HIT_PHASE_SAMPLES as f64;
        let cur = dist(z)?;
        if prev != 0.0 && (cur == 0.0 || cur.signum() != prev.signum()) {
            let z0 = (i - 1) as f64 / HIT_PHASE_SAMPLES as f64;
            let (mut lo, mut hi, d_lo) = (z0, z, prev);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                let d = dist(mid)?;
                if d == 0.0 || d.signum() != d_lo.signum() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let z_hit = 0.5 * (lo + hi);
            if z_hit > 0.0 && z_hit < 1.0 {
                return Ok(z_hit);
            }
            break;
        }
        prev = cur;
    }
    Err(SimError::NoHitPhase)
}

#[derive(Debug, Clone)]
pub struct StrokeController {
    primitive: PrimitiveParams,
    chain: KinematicChain,
    limits: Limits,
    scenario: Scenario,
    plane: HitPlane,
    model: BallModel,
    z_hit: f64,
    q_seed: DVector<f64>,
    phase: ControllerPhase,
    plan: Option<Plan>,
    timing: Option<StrokeTiming>,
    arm_cmd: DVector<f64>,
    rail_cmd: f64,
    recover_until: f64,
    finished: bool,
    transitions: Vec<(f64, ControllerPhase)>,
    safety_violations: usize,
    last_ik: Option<IkResult>,
}

impl StrokeController {
    pub fn new(
        primitive: PrimitiveParams,
        chain: KinematicChain,
        limits: Limits,
        scenario: Scenario,
    ) -> Result<Self, SimError> {
        if primitive.n_dof() != chain.arm_dof() {
            return Err(SimError::config(
                "primitive",
                format!("{} DoF primitive for a {}-joint arm", primitive.n_dof(), chain.arm_dof()),
            ));
        }
        if limits.len() != chain.dof() {
            return Err(SimError::config("robot", "limits do not match the chain"));
        }
        let plane = scenario.hit_plane.plane()?;
        let z_hit = primitive_hit_phase(&primitive, &chain, &plane)?;
        let q_seed = primitive.mean_at(z_hit);
        let arm_cmd = primitive.mean_at(0.0);
        let model = scenario.ball_model();
        Ok(Self {
            primitive,
            chain,
            limits,
            scenario,
            plane,
            model,
            z_hit,
            q_seed,
            phase: ControllerPhase::Idle,
            plan: None,
            timing: None,
            arm_cmd,
            rail_cmd: 0.0,
            recover_until: 0.0,
            finished: false,
            transitions: Vec::new(),
            safety_violations: 0,
            last_ik: None,
        })
    }

    pub fn phase(&self) -> ControllerPhase {
        self.phase
    }

    pub fn z_hit(&self) -> f64 {
        self.z_hit
    }

    /// Arm configuration held before the stroke.
    pub fn rest(&self) -> DVector<f64> {
        self.primitive.mean_at(0.0)
    }

    pub fn timing(&self) -> Option<StrokeTiming> {
        self.timing
    }

    /// `(time, new phase)` for every transition taken.
    pub fn transitions(&self) -> &[(f64, ControllerPhase)] {
        &self.transitions
    }

    /// Ticks on which an IK solution left its limits (always zero unless the
    /// IK itself is broken).
    pub fn safety_violations(&self) -> usize {
        self.safety_violations
    }

    pub fn last_ik(&self) -> Option<&IkResult> {
        self.last_ik.as_ref()
    }

    fn duration(&self) -> f64 {
        self.primitive.basis.phase_duration
    }

    fn go(&mut self, now: f64, to: ControllerPhase) {
        debug_assert!(self.phase.can_transition(to), "{:?} -> {to:?}", self.phase);
        self.phase = to;
        self.transitions.push((now, to));
    }

    fn crossing(&self, est: Option<&BallEstimate>, now: f64) -> Option<(f64, Vector3<f64>)> {
        let est = est?;
        let horizon = self.scenario.controller.horizon + (now - est.stamp).max(0.0);
        predict_crossing(est, &self.plane, &self.model, horizon)
            .filter(|c| c.time > now)
            .map(|c| (c.time, c.position))
    }

    fn replan(&mut self, now: f64, rail_now: f64, t_hit: f64, x_hit: Vector3<f64>) -> Result<(), SimError> {
        let robot = &self.scenario.robot;
        let x_local = x_hit - self.chain.rail_axis() * rail_now;
        let reach = robot.rail_speed * (t_hit - now).max(0.0);
        let lo = (robot.rail_range[0] - rail_now).max(-reach);
        let hi = (robot.rail_range[1] - rail_now).min(reach);
        let limits = self.limits.with_rail_window(lo, hi);
        let opts = IkOptions {
            max_iter: self.scenario.controller.ik_max_iter,
            tol: self.scenario.controller.ik_tol,
            ..IkOptions::default()
        };
        let ik = clipped_ik(&self.chain, &x_local, &self.q_seed, &limits, &opts)?;
        if !limits.contains(&ik.offsets()) {
            self.safety_violations += 1;
        }
        let q_star = ik.arm_configuration(&self.q_seed);
        let d = q_star.len();
        let noise = DMatrix::identity(d, d) * self.scenario.controller.condition_noise;
        // Pinning the start to the held pose keeps the command continuous when
        // the stroke begins.
        let conditioned = self
            .primitive
            .condition(0.0, &self.arm_cmd, &noise)?
            .condition(self.z_hit, &q_star, &noise)?;
        self.plan = Some(Plan {
            t_hit,
            t_start: t_hit - self.z_hit * self.duration(),
            rail_target: rail_now + ik.net_dr,
            mean_w: conditioned.mu_w,
        });
        self.last_ik = Some(ik);
        Ok(())
    }

    fn stroke_position(&self, plan: &Plan, s: f64) -> DVector<f64> {
        self.primitive.basis.project(s.clamp(0.0, 1.0), &plan.mean_w)
    }

    /// Advances one tick. `estimate` is the tracker's latest estimate,
    /// `fused` the number of observations behind it, `rail_now` the measured
    /// rail position.
    pub fn step(
        &mut self,
        now: f64,
        estimate: Option<&BallEstimate>,
        fused: usize,
        rail_now: f64,
    ) -> Result<Command, SimError> {
        // Several transitions may fire on one tick; each arm runs at most once.
        for _ in 0..5 {
            let before = self.phase;
            match self.phase {
                ControllerPhase::Idle => {
                    if !self.finished && estimate.is_some() {
                        self.go(now, ControllerPhase::Tracking);
                    }
                }
                ControllerPhase::Tracking => {
                    if fused >= self.scenario.controller.min_observations {
                        if let Some((t_hit, x_hit)) = self.crossing(estimate, now) {
                            if t_hit - now > self.scenario.controller.min_lead {
                                self.replan(now, rail_now, t_hit, x_hit)?;
                                self.go(now, ControllerPhase::Conditioning);
                            }
                        }
                    }
                }
                ControllerPhase::Conditioning => match self.crossing(estimate, now) {
                    None => {
                        self.plan = None;
                        self.finished = true;
                        self.go(now, ControllerPhase::Idle);
                    }
                    Some((t_hit, x_hit)) => {
                        if self.transitions.last().map(|t| t.0) != Some(now) {
                            self.replan(now, rail_now, t_hit, x_hit)?;
                        }
                        let plan = self.plan.as_ref().expect("conditioning always has a plan");
                        if now >= plan.t_start {
                            self.timing = Some(StrokeTiming {
                                t_start: plan.t_start,
                                t_hit: plan.t_hit,
                                z_hit: self.z_hit,
                                duration: self.duration(),
                            });
                            self.go(now, ControllerPhase::Executing);
                        }
                    }
                },
                ControllerPhase::Executing => {
                    let timing = self.timing.expect("executing always has timing");
                    if (now - timing.t_start) / timing.duration >= 1.0 {
                        self.recover_until = now + self.scenario.controller.recovery_time;
                        self.go(now, ControllerPhase::Recovering);
                    }
                }
                ControllerPhase::Recovering => {
                    if now >= self.recover_until {
                        self.finished = true;
                        self.go(now, ControllerPhase::Idle);
                    }
                }
            }
            if self.phase == before {
                break;
            }
        }

        match self.phase {
            ControllerPhase::Conditioning => {
                let plan = self.plan.as_ref().expect("conditioning always has a plan");
                self.rail_cmd = plan.rail_target;
            }
            ControllerPhase::Executing => {
                let plan = self.plan.as_ref().expect("executing always has a plan");
                let timing = self.timing.expect("executing always has timing");
                self.arm_cmd = self.stroke_position(plan, (now - timing.t_start) / timing.duration);
            }
            ControllerPhase::Recovering => {
                if let Some(plan) = self.plan.as_ref() {
                    self.arm_cmd = self.stroke_position(plan, 1.0);
                }
            }
            ControllerPhase::Idle | ControllerPhase::Tracking => {}
        }
        Ok(Command {
            rail: self.rail_cmd,
            arm: self.arm_cmd.clone(),
        })
    }
}
