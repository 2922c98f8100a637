//! One launched ball: flight, sensing, tracking, control, execution, contact
//! and scoring, advanced on a fixed tick.

use std::collections::VecDeque;

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::controller::{primitive_hit_phase, ControllerPhase, StrokeController, StrokeTiming};
use super::reward::{classify_return, reward_oracle, OutcomeGeometry, ReturnClass};
use super::scenario::Scenario;
use super::SimError;
use crate::kinematics::{KinematicChain, Limits};
use crate::promp::PrimitiveParams;
use crate::segment::Recording;
use crate::tracker::{BallEstimate, BallTracker, Observation, State, DEFAULT_MAX_SUBSTEP};

/// Return flights are followed for at most this long.
const RETURN_HORIZON: f64 = 3.0;

/// Reported noise level for noiseless sensing (the filter needs `σ > 0`).
const MIN_REPORTED_NOISE: f64 = 1e-4;

/// Everything an episode needs besides its seed.
#[derive(Debug, Clone)]
pub struct SimContext {
    pub primitive: PrimitiveParams,
    pub chain: KinematicChain,
    pub limits: Limits,
    pub scenario: Scenario,
    z_hit: f64,
}

impl SimContext {
    /// Validates the scenario and derives IK limits from it.
    pub fn new(primitive: PrimitiveParams, chain: KinematicChain, scenario: Scenario) -> Result<Self, SimError> {
        let limits = scenario.robot.limits(&chain)?;
        Self::with_limits(primitive, chain, limits, scenario)
    }

    pub fn with_limits(
        primitive: PrimitiveParams,
        chain: KinematicChain,
        limits: Limits,
        scenario: Scenario,
    ) -> Result<Self, SimError> {
        scenario.validate()?;
        let plane = scenario.hit_plane.plane()?;
        let z_hit = primitive_hit_phase(&primitive, &chain, &plane)?;
        Ok(Self {
            primitive,
            chain,
            limits,
            scenario,
            z_hit,
        })
    }

    pub fn z_hit(&self) -> f64 {
        self.z_hit
    }

    /// Same robot and scenario, different primitive.
    pub fn with_primitive(&self, primitive: PrimitiveParams) -> Result<Self, SimError> {
        Self::with_limits(primitive, self.chain.clone(), self.limits.clone(), self.scenario.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPoint {
    pub t: f64,
    pub p: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub hit: bool,
    /// Smallest ball to racket-center distance over the episode, m.
    pub min_distance: f64,
    pub racket_radius: f64,
    pub return_class: Option<ReturnClass>,
    pub reward: f64,
    pub swung: bool,
    pub timing: Option<StrokeTiming>,
    /// Executed arm joints, one row per tick.
    pub executed: Recording,
    /// Commanded rail position per tick.
    pub rail: Vec<f64>,
    pub ball_path: Vec<TimedPoint>,
    pub ee_path: Vec<TimedPoint>,
    /// Index into the paths of the closest approach.
    pub closest_index: usize,
    pub transitions: Vec<(f64, ControllerPhase)>,
    pub safety_violations: usize,
    pub rejected_observations: usize,
    /// Largest relative change of the ball's specific energy during free
    /// flight (drag-free launches only, else 0).
    pub energy_drift: f64,
}

impl EpisodeOutcome {
    pub fn geometry(&self) -> OutcomeGeometry {
        OutcomeGeometry {
            hit: self.hit,
            min_distance: self.min_distance,
            racket_radius: self.racket_radius,
            return_class: self.return_class,
        }
    }

    /// Outcome summary written next to the episode's recording.
    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            seed: self.seed,
            geometry: self.geometry(),
            reward: self.reward,
            swung: self.swung,
            timing: self.timing,
            safety_violations: self.safety_violations,
            rejected_observations: self.rejected_observations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub seed: u64,
    pub geometry: OutcomeGeometry,
    #[serde(serialize_with = "crate::refine::serialize_reward")]
    pub reward: f64,
    pub swung: bool,
    pub timing: Option<StrokeTiming>,
    pub safety_violations: usize,
    pub rejected_observations: usize,
}

struct Pending {
    deliver_at: f64,
    obs: Observation,
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std > 0.0 {
        std * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    }
}

fn ball_state(p: Vector3<f64>, v: Vector3<f64>) -> State {
    State::new(p.x, p.y, p.z, v.x, v.y, v.z)
}

/// Parameter `s ∈ [0, 1]` minimizing `|a + s (b − a)|` and that distance.
fn closest_on_segment(a: &Vector3<f64>, b: &Vector3<f64>) -> (f64, f64) {
    let d = b - a;
    let dd = d.norm_squared();
    let s = if dd > 0.0 { (-a.dot(&d) / dd).clamp(0.0, 1.0) } else { 0.0 };
    (s, (a + d * s).norm())
}

/// Reflects the ball off a racket moving with `v_racket`; the racket normal
/// is the direction of its velocity.
pub fn reflect(v_ball: &Vector3<f64>, v_racket: &Vector3<f64>, restitution: f64) -> Vector3<f64> {
    let rel = v_ball - v_racket;
    let n = if v_racket.norm() > 1e-9 {
        v_racket.normalize()
    } else if rel.norm() > 0.0 {
        -rel.normalize()
    } else {
        return *v_ball;
    };
    let vn = rel.dot(&n);
    if vn >= 0.0 {
        return *v_ball;
    }
    v_racket + rel - n * ((1.0 + restitution) * vn)
}

/// Simulates one launch. Deterministic in `seed`.
pub fn run_episode(ctx: &SimContext, seed: u64) -> Result<EpisodeOutcome, SimError> {
    let sc = &ctx.scenario;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = sc.ball_model();
    let dt = sc.tick();
    let n_ticks = (sc.launch.interval / dt).round() as usize;
    let l = &sc.launch;
    let p0 = Vector3::from_fn(|i, _| l.p0[i] + gaussian(&mut rng, l.p0_jitter[i]));
    let v0 = Vector3::from_fn(|i, _| l.v0[i] + gaussian(&mut rng, l.v0_jitter[i]));
    let mut ball = ball_state(p0, v0);
    let energy0 = model.specific_energy(&ball);
    let mut energy_drift: f64 = 0.0;

    let mut controller = StrokeController::new(ctx.primitive.clone(), ctx.chain.clone(), ctx.limits.clone(), sc.clone())?;
    let mut tracker = BallTracker::new(sc.tracker_config());
    let mut fused = 0usize;
    let mut pending: VecDeque<Pending> = VecDeque::new();
    let obs_period = 1.0 / sc.sensing.rate;
    let mut next_obs = 0usize;
    let reported_noise = sc.sensing.noise_std.max(MIN_REPORTED_NOISE);

    let lag_gain = if sc.execution.lag > 0.0 { 1.0 - (-dt / sc.execution.lag).exp() } else { 1.0 };
    let mut rail = 0.0f64;
    let mut arm = controller.rest();
    let dof = arm.len();

    let mut hit = false;
    let mut return_class = None;
    let mut min_distance = f64::INFINITY;
    let mut closest_index = 0usize;
    let mut times = Vec::with_capacity(n_ticks + 1);
    let mut arm_log: Vec<f64> = Vec::with_capacity((n_ticks + 1) * dof);
    let mut rail_log = Vec::with_capacity(n_ticks + 1);
    let mut ball_path = Vec::with_capacity(n_ticks + 1);
    let mut ee_path = Vec::with_capacity(n_ticks + 1);
    let mut ee = ctx.chain.forward(rail, &arm)?;

    for k in 0..=n_ticks {
        let now = k as f64 * dt;
        times.push(now);
        arm_log.extend(arm.iter());
        rail_log.push(rail);
        ball_path.push(TimedPoint {
            t: now,
            p: [ball[0], ball[1], ball[2]],
        });
        ee_path.push(TimedPoint { t: now, p: ee.into() });
        if k == n_ticks {
            break;
        }

        // Cameras sample the flight inside [now, now + dt).
        while (next_obs as f64) * obs_period < now + dt - 1e-12 {
            let stamp = next_obs as f64 * obs_period;
            let at = model.propagate(&ball, stamp - now, DEFAULT_MAX_SUBSTEP);
            let position = Vector3::from_fn(|i, _| at[i] + gaussian(&mut rng, sc.sensing.noise_std));
            let delay = if sc.sensing.latency_jitter > 0.0 {
                rng.random::<f64>() * sc.sensing.latency_jitter
            } else {
                0.0
            };
            let obs = Observation {
                position,
                noise_std: reported_noise,
                source_id: next_obs as u32 % sc.sensing.n_sources,
                stamp,
            };
            let idx = pending.partition_point(|p| p.deliver_at <= stamp + delay);
            pending.insert(
                idx,
                Pending {
                    deliver_at: stamp + delay,
                    obs,
                },
            );
            next_obs += 1;
        }
        while pending.front().is_some_and(|p| p.deliver_at <= now + 1e-12) {
            let p = pending.pop_front().expect("checked non-empty");
            if tracker.observe(p.obs).is_ok() {
                fused += 1;
            }
        }

        let cmd = controller.step(now, tracker.estimate(), fused, rail)?;

        let max_rail = sc.robot.rail_speed * dt;
        rail += (cmd.rail - rail).clamp(-max_rail, max_rail);
        arm += (&cmd.arm - &arm) * lag_gain;
        if sc.execution.joint_noise > 0.0 {
            for j in 0..dof {
                arm[j] += gaussian(&mut rng, sc.execution.joint_noise);
            }
        }
        let ee_next = ctx.chain.forward(rail, &arm)?;

        let mut ball_next = model.propagate(&ball, dt, DEFAULT_MAX_SUBSTEP);
        if !hit {
            let a = ball.fixed_rows::<3>(0) - ee;
            let b = ball_next.fixed_rows::<3>(0) - ee_next;
            let (s, d) = closest_on_segment(&a.into_owned(), &b.into_owned());
            if d < min_distance {
                min_distance = d;
                closest_index = if s < 0.5 { k } else { k + 1 };
            }
            if sc.launch.drag == 0.0 {
                let e = model.specific_energy(&ball_next);
                energy_drift = energy_drift.max((e - energy0).abs() / energy0.abs().max(1e-12));
            }
            if d <= sc.robot.racket_radius && sc.robot.racket_radius > 0.0 {
                hit = true;
                let at = model.propagate(&ball, s * dt, DEFAULT_MAX_SUBSTEP);
                let v_racket = (ee_next - ee) / dt;
                let v_ball: Vector3<f64> = at.fixed_rows::<3>(3).into_owned();
                let v_out = reflect(&v_ball, &v_racket, sc.robot.restitution);
                let contact = ball_state(at.fixed_rows::<3>(0).into_owned(), v_out);
                let est = BallEstimate {
                    mean: contact,
                    covariance: nalgebra::Matrix6::zeros(),
                    stamp: 0.0,
                };
                return_class = Some(classify_return(&est, &model, &sc.court, RETURN_HORIZON));
                ball_next = model.propagate(&contact, (1.0 - s) * dt, DEFAULT_MAX_SUBSTEP);
            }
        }
        ball = ball_next;
        ee = ee_next;
    }

    let geometry = OutcomeGeometry {
        hit,
        min_distance,
        racket_radius: sc.robot.racket_radius,
        return_class,
    };
    let names = (1..=dof).map(|i| format!("q{i}")).collect();
    let executed = Recording::new(names, times, DMatrix::from_row_slice(n_ticks + 1, dof, &arm_log), None)?;
    Ok(EpisodeOutcome {
        seed,
        hit,
        min_distance,
        racket_radius: sc.robot.racket_radius,
        return_class,
        reward: reward_oracle(&geometry),
        swung: controller.timing().is_some(),
        timing: controller.timing(),
        executed,
        rail: rail_log,
        ball_path,
        ee_path,
        closest_index,
        transitions: controller.transitions().to_vec(),
        safety_violations: controller.safety_violations(),
        rejected_observations: tracker.rejected(),
        energy_drift,
    })
}
