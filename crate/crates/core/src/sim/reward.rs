//! Outcome classification and the five-level reward.

use serde::{Deserialize, Serialize};

use super::scenario::Court;
use crate::tracker::{predict_crossing, BallEstimate, BallModel, HitPlane};

/// A miss counts as close when the ball passes within this distance of the
/// racket edge.
pub const CLOSE_MISS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnClass {
    AboveNet,
    Pillar,
    Neither,
}

/// The geometric facts the reward depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeGeometry {
    pub hit: bool,
    /// Smallest ball to racket-center distance, m.
    pub min_distance: f64,
    pub racket_radius: f64,
    /// Present only for hits.
    pub return_class: Option<ReturnClass>,
}

impl OutcomeGeometry {
    /// Gap between the ball and the racket edge at closest approach.
    pub fn miss_distance(&self) -> f64 {
        (self.min_distance - self.racket_radius).max(0.0)
    }
}

/// Miss by more than 5 cm → 0, close miss → 0.25, hit with a return that
/// neither clears the net nor reaches a pillar → 0.5, pillar → 1, above the
/// net → 2.
pub fn reward_oracle(g: &OutcomeGeometry) -> f64 {
    if !g.hit {
        return if g.miss_distance() <= CLOSE_MISS { 0.25 } else { 0.0 };
    }
    match g.return_class.unwrap_or(ReturnClass::Neither) {
        ReturnClass::Neither => 0.5,
        ReturnClass::Pillar => 1.0,
        ReturnClass::AboveNet => 2.0,
    }
}

/// Follows the returned ball to the net plane. A ball that lands first, never
/// gets there within `horizon`, or passes outside both the net and the
/// pillar bands is `Neither`.
pub fn classify_return(ball: &BallEstimate, model: &BallModel, court: &Court, horizon: f64) -> ReturnClass {
    let net = HitPlane::new([court.net_x, 0.0, 0.0].into(), [1.0, 0.0, 0.0].into()).expect("unit normal");
    let ground = HitPlane::new([0.0, 0.0, 0.0].into(), [0.0, 0.0, 1.0].into()).expect("unit normal");
    let Some(at_net) = predict_crossing(ball, &net, model, horizon) else {
        return ReturnClass::Neither;
    };
    if at_net.velocity.x <= 0.0 {
        return ReturnClass::Neither;
    }
    if let Some(landing) = predict_crossing(ball, &ground, model, horizon) {
        if landing.time < at_net.time {
            return ReturnClass::Neither;
        }
    }
    let (y, z) = (at_net.position.y.abs(), at_net.position.z);
    if y <= court.net_half_width && z > court.net_height {
        ReturnClass::AboveNet
    } else if y > court.net_half_width && y <= court.net_half_width + court.pillar_band && z <= court.pillar_height {
        ReturnClass::Pillar
    } else {
        ReturnClass::Neither
    }
}
