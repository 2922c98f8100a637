//! Scripted demonstrations standing in for kinesthetic teaching.
//!
//! Each demo strikes a hit point scattered around the scenario's nominal
//! point with the rail locked. The arm configuration at the hit comes from
//! IK, the joint velocity there from the pseudo-inverse of the desired
//! racket velocity, and the stroke is a straight joint-space line through
//! the hit configuration timed by a minimum-jerk profile:
//! `q(s) = q_hit + A (g(s) − g(s_hit))` with `A = q̇_hit T / g'(s_hit)`.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::Scenario;
use super::SimError;
use crate::kinematics::{clipped_ik, IkOptions, KinematicChain, Limits};
use crate::segment::Recording;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub n_demos: usize,
    /// Stroke duration, s.
    pub duration: f64,
    /// Rest before and after the stroke, s.
    pub rest: f64,
    pub rate: f64,
    /// Stroke phase at which the racket passes the hit point.
    pub hit_phase: f64,
    /// Uniform scatter of the hit point along y and z, m.
    pub spread: [f64; 2],
    /// Racket velocity at the hit, m/s.
    pub racket_velocity: [f64; 3],
    /// Arm configuration the hit-point IK starts from.
    pub arm_guess: Vec<f64>,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n_demos: 20,
            duration: 0.7,
            rest: 0.3,
            rate: 100.0,
            hit_phase: 0.6,
            spread: [0.1, 0.1],
            racket_velocity: [4.5, 0.0, 1.6],
            arm_guess: vec![-1.57, 1.2, 0.0, 1.0, 0.0, 0.0, 0.0],
            seed: 7,
        }
    }
}

fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

fn min_jerk_rate(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    30.0 * s * s * (1.0 - s) * (1.0 - s)
}

/// Arm configuration placing the tool at `target` (rail at 0).
pub fn hit_configuration(chain: &KinematicChain, target: &Vector3<f64>, guess: &DVector<f64>) -> Result<DVector<f64>, SimError> {
    let n = chain.arm_dof();
    let mut lower = DVector::from_element(n + 1, -std::f64::consts::PI);
    let mut upper = DVector::from_element(n + 1, std::f64::consts::PI);
    lower[0] = 0.0;
    upper[0] = 0.0;
    let limits = Limits::new(lower, upper)?;
    let opts = IkOptions {
        max_iter: 1000,
        tol: 1e-9,
        ..IkOptions::default()
    };
    let ik = clipped_ik(chain, target, guess, &limits, &opts)?;
    if !ik.converged {
        return Err(SimError::Demo(format!(
            "hit point {target:?} unreachable (residual {:.3e} m)",
            ik.residual
        )));
    }
    Ok(ik.arm_configuration(guess))
}

/// One stroke through `target` with racket velocity `velocity`, padded with
/// rest on both sides.
pub fn scripted_stroke(
    chain: &KinematicChain,
    target: &Vector3<f64>,
    velocity: &Vector3<f64>,
    cfg: &DemoConfig,
) -> Result<Recording, SimError> {
    let guess = DVector::from_vec(cfg.arm_guess.clone());
    if guess.len() != chain.arm_dof() {
        return Err(SimError::Demo(format!(
            "arm guess has {} joints, chain has {}",
            guess.len(),
            chain.arm_dof()
        )));
    }
    let q_hit = hit_configuration(chain, target, &guess)?;
    let jac = chain.jacobian(0.0, &q_hit)?;
    let arm_jac = jac.columns(1, chain.arm_dof()).into_owned();
    let pinv = arm_jac
        .clone()
        .pseudo_inverse(1e-9)
        .map_err(|e| SimError::Demo(e.to_string()))?;
    let qd_hit = pinv * velocity;
    let amplitude = qd_hit * (cfg.duration / min_jerk_rate(cfg.hit_phase));
    let g_hit = min_jerk(cfg.hit_phase);

    let dt = 1.0 / cfg.rate;
    let n = ((2.0 * cfg.rest + cfg.duration) / dt).round() as usize + 1;
    let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let d = chain.arm_dof();
    let mut pos = DMatrix::zeros(n, d);
    for (i, &ti) in t.iter().enumerate() {
        let s = (ti - cfg.rest) / cfg.duration;
        let q = &q_hit + &amplitude * (min_jerk(s) - g_hit);
        pos.set_row(i, &q.transpose());
    }
    let names = (1..=d).map(|i| format!("q{i}")).collect();
    Ok(Recording::new(names, t, pos, None)?)
}

/// `cfg.n_demos` strokes scattered around the scenario's nominal hit point.
pub fn scripted_demos(chain: &KinematicChain, scenario: &Scenario, cfg: &DemoConfig) -> Result<Vec<Recording>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nominal = Vector3::from(scenario.hit_plane.point);
    let velocity = Vector3::from(cfg.racket_velocity);
    (0..cfg.n_demos)
        .map(|_| {
            let dy = cfg.spread[0] * (2.0 * rng.random::<f64>() - 1.0);
            let dz = cfg.spread[1] * (2.0 * rng.random::<f64>() - 1.0);
            scripted_stroke(chain, &(nominal + Vector3::new(0.0, dy, dz)), &velocity, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::hit_phase;
    use crate::segment::{segment_stroke, SegmentOptions};

    #[test]
    fn min_jerk_profile() {
        assert_eq!(min_jerk(0.0), 0.0);
        assert_eq!(min_jerk(1.0), 1.0);
        assert!((min_jerk(0.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        assert!(((min_jerk(0.6 + h) - min_jerk(0.6 - h)) / (2.0 * h) - min_jerk_rate(0.6)).abs() < 1e-8);
    }

    #[test]
    fn nominal_stroke_passes_the_hit_point_at_the_design_phase() {
        let chain = KinematicChain::wheelchair_arm();
        let scenario = Scenario::default();
        let cfg = DemoConfig::default();
        let target = Vector3::from(scenario.hit_plane.point);
        let rec = scripted_stroke(&chain, &target, &Vector3::from(cfg.racket_velocity), &cfg).unwrap();
        let i_hit = ((cfg.rest + cfg.hit_phase * cfg.duration) * cfg.rate).round() as usize;
        let q = rec.positions().row(i_hit).transpose();
        assert!((chain.forward(0.0, &q).unwrap() - target).norm() < 1e-6);

        let seg = segment_stroke(&rec, &SegmentOptions::default()).unwrap();
        let plane = scenario.hit_plane.plane().unwrap();
        let z = hit_phase(&rec, seg, &chain, &plane).unwrap();
        let t_cross = rec.timestamps()[seg.start] + z * (rec.timestamps()[seg.end] - rec.timestamps()[seg.start]);
        assert!((t_cross - (cfg.rest + cfg.hit_phase * cfg.duration)).abs() < 0.02, "{t_cross}");
    }
}
