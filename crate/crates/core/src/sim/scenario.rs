//! Scenario configuration: court, hit plane, launcher, sensing, controller,
//! execution model and robot limits. Every field has a default, so a partial
//! JSON document only overrides what it names.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::kinematics::{KinematicChain, Limits};
use crate::tracker::{BallModel, HitPlane, ProcessNoise, TrackerConfig};

pub const GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub court: Court,
    pub hit_plane: PlaneSpec,
    pub launch: LaunchSpec,
    pub sensing: Sensing,
    pub controller: ControllerConfig,
    pub execution: Execution,
    pub robot: Robot,
    pub tracker: TrackerSettings,
}

impl Default for Scenario {
    fn default() -> Self {
        let hit_plane = PlaneSpec::default();
        let launch = LaunchSpec::aimed(
            [7.0, hit_plane.point[1], 1.0],
            hit_plane.point,
            0.9,
            [0.0, 0.0, 0.0],
            [0.15, 0.15, 0.15],
        );
        Self {
            court: Court::default(),
            hit_plane,
            launch,
            sensing: Sensing::default(),
            controller: ControllerConfig::default(),
            execution: Execution::default(),
            robot: Robot::default(),
            tracker: TrackerSettings::default(),
        }
    }
}

/// Net and pillars on the far side; the robot plays toward +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Court {
    /// x coordinate of the net plane, m.
    pub net_x: f64,
    pub net_height: f64,
    /// Net spans `|y| <= net_half_width`.
    pub net_half_width: f64,
    /// Pillar zone: `net_half_width < |y| <= net_half_width + pillar_band`.
    pub pillar_band: f64,
    pub pillar_height: f64,
}

impl Default for Court {
    fn default() -> Self {
        Self {
            net_x: 4.0,
            net_height: 1.07,
            net_half_width: 2.0,
            pillar_band: 0.5,
            pillar_height: 2.0,
        }
    }
}

/// Hit plane in base coordinates; `point` doubles as the nominal hit point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneSpec {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

impl Default for PlaneSpec {
    fn default() -> Self {
        Self {
            point: [0.6, -0.9, 1.1],
            normal: [1.0, 0.0, 0.0],
        }
    }
}

impl PlaneSpec {
    pub fn plane(&self) -> Result<HitPlane, SimError> {
        HitPlane::new(self.point.into(), self.normal.into()).map_err(|e| SimError::config("hit_plane.normal", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaunchSpec {
    pub p0: [f64; 3],
    pub v0: [f64; 3],
    /// Per-component Gaussian standard deviations.
    pub p0_jitter: [f64; 3],
    pub v0_jitter: [f64; 3],
    /// Quadratic drag coefficient `k_d`, 1/m.
    pub drag: f64,
    /// Seconds between launches; each episode lasts one interval.
    pub interval: f64,
}

impl Default for LaunchSpec {
    fn default() -> Self {
        Scenario::default().launch
    }
}

impl LaunchSpec {
    /// Drag-free launch from `p0` that passes `target` after `flight_time`.
    pub fn aimed(p0: [f64; 3], target: [f64; 3], flight_time: f64, p0_jitter: [f64; 3], v0_jitter: [f64; 3]) -> Self {
        let p = Vector3::from(p0);
        let g = Vector3::from(GRAVITY);
        let v = (Vector3::from(target) - p - g * (0.5 * flight_time * flight_time)) / flight_time;
        Self {
            p0,
            v0: v.into(),
            p0_jitter,
            v0_jitter,
            drag: 0.0,
            interval: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sensing {
    /// Observation rate, Hz (sources take turns).
    pub rate: f64,
    pub noise_std: f64,
    pub n_sources: u32,
    /// Each observation is delivered up to this many seconds after its stamp.
    pub latency_jitter: f64,
}

impl Default for Sensing {
    fn default() -> Self {
        Self {
            rate: 100.0,
            noise_std: 0.005,
            n_sources: 3,
            latency_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub tick_rate: f64,
    /// A crossing closer than this in time does not start conditioning.
    pub min_lead: f64,
    /// Observations fused before the first crossing prediction is trusted.
    pub min_observations: usize,
    /// Crossing search horizon, s.
    pub horizon: f64,
    pub recovery_time: f64,
    /// Observation variance used when conditioning the primitive on the IK target.
    pub condition_noise: f64,
    pub ik_max_iter: usize,
    pub ik_tol: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            tick_rate: 200.0,
            min_lead: 0.1,
            min_observations: 5,
            horizon: 2.0,
            recovery_time: 0.3,
            condition_noise: 1e-6,
            ik_max_iter: 100,
            ik_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Execution {
    /// First-order tracking lag of the arm joints, s (0 = perfect tracking).
    pub lag: f64,
    /// Per-joint Gaussian noise added to executed positions each tick, rad.
    pub joint_noise: f64,
}

impl Default for Execution {
    fn default() -> Self {
        Self {
            lag: 0.03,
            joint_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Robot {
    /// Absolute rail travel `[min, max]`, m.
    pub rail_range: [f64; 2],
    pub rail_speed: f64,
    /// Largest rail offset one stroke may request, m.
    pub rail_offset: f64,
    /// Largest arm joint offset from the primitive mean at the hit phase, rad.
    pub arm_offset: f64,
    pub racket_radius: f64,
    pub restitution: f64,
}

impl Default for Robot {
    fn default() -> Self {
        Self {
            rail_range: [-1.0, 1.0],
            rail_speed: 1.0,
            rail_offset: 0.5,
            arm_offset: 0.5,
            racket_radius: 0.12,
            restitution: 0.8,
        }
    }
}

impl Robot {
    pub fn limits(&self, chain: &KinematicChain) -> Result<Limits, SimError> {
        let mut lower = DVector::from_element(chain.dof(), -self.arm_offset);
        let mut upper = DVector::from_element(chain.dof(), self.arm_offset);
        lower[0] = -self.rail_offset;
        upper[0] = self.rail_offset;
        Limits::new(lower, upper).map_err(|e| SimError::config("robot.arm_offset", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSettings {
    pub process_noise_position: f64,
    pub process_noise_velocity: f64,
    pub init_velocity_std: f64,
    pub reorder_window: f64,
}

impl Default for TrackerSettings {
    fn default() -> Self {
        let base = TrackerConfig::default();
        Self {
            process_noise_position: base.process_noise.position,
            process_noise_velocity: base.process_noise.velocity,
            init_velocity_std: base.init_velocity_std,
            reorder_window: base.reorder_window,
        }
    }
}

impl Scenario {
    pub fn ball_model(&self) -> BallModel {
        BallModel {
            gravity: GRAVITY.into(),
            drag: self.launch.drag,
        }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            model: self.ball_model(),
            process_noise: ProcessNoise {
                position: self.tracker.process_noise_position,
                velocity: self.tracker.process_noise_velocity,
            },
            init_velocity_std: self.tracker.init_velocity_std,
            reorder_window: self.tracker.reorder_window,
        }
    }

    pub fn tick(&self) -> f64 {
        1.0 / self.controller.tick_rate
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Self = crate::io::from_json(text).map_err(|e| match e {
            crate::io::IoError::Json { path, message } => SimError::Config { path, message },
            other => SimError::config("", other.to_string()),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("plain data serializes");
        out.push('\n');
        out
    }

    /// Semantic checks; errors carry the offending field path.
    pub fn validate(&self) -> Result<(), SimError> {
        fn positive(path: &str, v: f64) -> Result<(), SimError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::config(path, format!("must be positive and finite, got {v}")))
            }
        }
        fn non_negative(path: &str, v: f64) -> Result<(), SimError> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::config(path, format!("must be non-negative and finite, got {v}")))
            }
        }
        fn finite(path: &str, v: &[f64]) -> Result<(), SimError> {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(SimError::config(path, "must be finite"))
            }
        }
        let c = &self.court;
        finite("court.net_x", &[c.net_x])?;
        positive("court.net_height", c.net_height)?;
        positive("court.net_half_width", c.net_half_width)?;
        non_negative("court.pillar_band", c.pillar_band)?;
        non_negative("court.pillar_height", c.pillar_height)?;
        finite("hit_plane.point", &self.hit_plane.point)?;
        self.hit_plane.plane()?;
        let l = &self.launch;
        finite("launch.p0", &l.p0)?;
        finite("launch.v0", &l.v0)?;
        for (i, v) in l.p0_jitter.iter().enumerate() {
            non_negative(&format!("launch.p0_jitter[{i}]"), *v)?;
        }
        for (i, v) in l.v0_jitter.iter().enumerate() {
            non_negative(&format!("launch.v0_jitter[{i}]"), *v)?;
        }
        non_negative("launch.drag", l.drag)?;
        positive("launch.interval", l.interval)?;
        positive("sensing.rate", self.sensing.rate)?;
        non_negative("sensing.noise_std", self.sensing.noise_std)?;
        if self.sensing.n_sources == 0 {
            return Err(SimError::config("sensing.n_sources", "need at least one source"));
        }
        non_negative("sensing.latency_jitter", self.sensing.latency_jitter)?;
        let k = &self.controller;
        positive("controller.tick_rate", k.tick_rate)?;
        non_negative("controller.min_lead", k.min_lead)?;
        positive("controller.horizon", k.horizon)?;
        non_negative("controller.recovery_time", k.recovery_time)?;
        positive("controller.condition_noise", k.condition_noise)?;
        positive("controller.ik_tol", k.ik_tol)?;
        non_negative("execution.lag", self.execution.lag)?;
        non_negative("execution.joint_noise", self.execution.joint_noise)?;
        let r = &self.robot;
        finite("robot.rail_range", &r.rail_range)?;
        if !(r.rail_range[0] <= 0.0 && 0.0 <= r.rail_range[1]) {
            return Err(SimError::config("robot.rail_range", "must contain the home position 0"));
        }
        positive("robot.rail_speed", r.rail_speed)?;
        non_negative("robot.rail_offset", r.rail_offset)?;
        non_negative("robot.arm_offset", r.arm_offset)?;
        non_negative("robot.racket_radius", r.racket_radius)?;
        if !(0.0..=1.0).contains(&r.restitution) {
            return Err(SimError::config("robot.restitution", "must lie in [0, 1]"));
        }
        let t = &self.tracker;
        non_negative("tracker.process_noise_position", t.process_noise_position)?;
        non_negative("tracker.process_noise_velocity", t.process_noise_velocity)?;
        positive("tracker.init_velocity_std", t.init_velocity_std)?;
        non_negative("tracker.reorder_window", t.reorder_window)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_launch_passes_the_nominal_hit_point() {
        let s = Scenario::default();
        let p = Vector3::from(s.launch.p0);
        let v = Vector3::from(s.launch.v0);
        let g = Vector3::from(GRAVITY);
        let at = p + v * 0.9 + g * (0.5 * 0.81);
        assert!((at - Vector3::from(s.hit_plane.point)).amax() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_partial_documents() {
        let s = Scenario::default();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        let partial = Scenario::from_json(r#"{"sensing": {"noise_std": 0.0}}"#).unwrap();
        assert_eq!(partial.sensing.noise_std, 0.0);
        assert_eq!(partial.court, s.court);
    }

    #[test]
    fn errors_carry_field_paths() {
        let err = Scenario::from_json(r#"{"controller": {"tick_rate": -1}}"#).unwrap_err();
        assert!(matches!(&err, SimError::Config { path, .. } if path == "controller.tick_rate"), "{err}");
        let err = Scenario::from_json(r#"{"launch": {"v0_jitter": [0, -1, 0]}}"#).unwrap_err();
        assert!(matches!(&err, SimError::Config { path, .. } if path == "launch.v0_jitter[1]"), "{err}");
        let err = Scenario::from_json(r#"{"robot": {"racket": 1}}"#).unwrap_err();
        assert!(matches!(&err, SimError::Config { path, .. } if path == "robot.racket"), "{err}");
        let err = Scenario::from_json(r#"{"hit_plane": {"normal": [0, 0, 0]}}"#).unwrap_err();
        assert!(matches!(&err, SimError::Config { path, .. } if path == "hit_plane.normal"), "{err}");
    }
}
