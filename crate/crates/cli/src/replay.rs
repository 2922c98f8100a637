//! Episode payloads for the rating UI: the ball and racket paths resampled
//! to a fixed display rate, plus top and side projections.

use serde::Serialize;
use strokeprim::sim::{EpisodeOutcome, ReturnClass, TimedPoint};

/// Display rate of replayed paths, Hz.
pub const REPLAY_RATE: f64 = 50.0;

#[derive(Debug, Clone, Serialize)]
pub struct EpisodePayload {
    pub episode_id: String,
    pub round: usize,
    pub index: usize,
    pub rate_hz: f64,
    pub ball_path: Vec<TimedPoint>,
    pub ee_path: Vec<TimedPoint>,
    pub projections: Projections,
    pub outcome_geometry: GeometryView,
    /// Sample of the resampled paths closest to the racket.
    pub closest_sample: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Projections {
    pub top: PlaneView,
    pub side: PlaneView,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaneView {
    pub axes: [&'static str; 2],
    pub ball: Vec<[f64; 2]>,
    pub ee: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryView {
    pub hit: bool,
    pub min_distance: f64,
    pub racket_radius: f64,
    /// Gap between ball and racket edge at closest approach.
    pub miss_distance: f64,
    pub return_class: Option<ReturnClass>,
    pub closest_time: f64,
}

fn project(path: &[TimedPoint], a: usize, b: usize) -> Vec<[f64; 2]> {
    path.iter().map(|p| [p.p[a], p.p[b]]).collect()
}

pub fn payload(episode_id: &str, round: usize, index: usize, outcome: &EpisodeOutcome, tick: f64) -> EpisodePayload {
    let stride = ((1.0 / (tick * REPLAY_RATE)).round() as usize).max(1);
    let n = outcome.ball_path.len().min(outcome.ee_path.len());
    let ball: Vec<TimedPoint> = outcome.ball_path[..n].iter().step_by(stride).copied().collect();
    let ee: Vec<TimedPoint> = outcome.ee_path[..n].iter().step_by(stride).copied().collect();
    let dist = |b: &TimedPoint, e: &TimedPoint| {
        let d: f64 = (0..3).map(|k| (b.p[k] - e.p[k]).powi(2)).sum();
        d.sqrt()
    };
    let closest_sample = ball
        .iter()
        .zip(&ee)
        .enumerate()
        .min_by(|(_, x), (_, y)| dist(x.0, x.1).total_cmp(&dist(y.0, y.1)))
        .map_or(0, |(i, _)| i);
    let g = outcome.geometry();
    EpisodePayload {
        episode_id: episode_id.to_owned(),
        round,
        index,
        rate_hz: 1.0 / (tick * stride as f64),
        projections: Projections {
            top: PlaneView {
                axes: ["x", "y"],
                ball: project(&ball, 0, 1),
                ee: project(&ee, 0, 1),
            },
            side: PlaneView {
                axes: ["x", "z"],
                ball: project(&ball, 0, 2),
                ee: project(&ee, 0, 2),
            },
        },
        outcome_geometry: GeometryView {
            hit: g.hit,
            min_distance: g.min_distance,
            racket_radius: g.racket_radius,
            miss_distance: g.miss_distance(),
            return_class: g.return_class,
            closest_time: outcome.ball_path.get(outcome.closest_index).map_or(0.0, |p| p.t),
        },
        closest_sample,
        ball_path: ball,
        ee_path: ee,
    }
}
