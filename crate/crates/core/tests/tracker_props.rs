use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use strokeprim::tracker::{
    ekf_predict, ekf_update, predict_crossing, BallModel, BallTracker, ProcessNoise, TrackerConfig,
};
use strokeprim::{BallEstimate, HitPlane, Observation};

fn ballistic(p0: Vector3<f64>, v0: Vector3<f64>, t: f64) -> Vector3<f64> {
    p0 + v0 * t + Vector3::new(0.0, 0.0, -9.81) * (0.5 * t * t)
}

fn obs(position: Vector3<f64>, stamp: f64, noise_std: f64) -> Observation {
    Observation {
        position,
        noise_std,
        source_id: 0,
        stamp,
    }
}

#[test]
fn noiseless_60hz_flight_predicts_the_analytic_crossing() {
    let (p0, v0) = (Vector3::new(0.0, 0.0, 1.0), Vector3::new(10.0, 0.0, 2.0));
    let mut tracker = BallTracker::new(TrackerConfig::default());
    for i in 0..20 {
        let t = i as f64 / 60.0;
        tracker.observe(obs(ballistic(p0, v0, t), t, 1e-4)).unwrap();
    }
    let plane = HitPlane::new(Vector3::new(5.0, 0.0, 0.0), Vector3::x()).unwrap();
    let est = tracker.estimate().unwrap();
    let c = predict_crossing(est, &plane, &BallModel::default(), 2.0).unwrap();
    assert!((c.time - 0.5).abs() <= 5e-3, "time {}", c.time);
    assert!((c.position - Vector3::new(5.0, 0.0, 0.77375)).norm() <= 0.01, "{}", c.position);
}

/// Mean normalized innovation squared over many noisy flights, skipping the
/// first `warmup` updates of each.
fn mean_nis(noise: &ProcessNoise, flights: usize, warmup: usize) -> (f64, usize) {
    let model = BallModel::default();
    let sigma = 0.005;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut total = 0.0;
    let mut count = 0;
    for _ in 0..flights {
        let p0 = Vector3::new(7.0, rng.random_range(-1.0..1.0), rng.random_range(0.8..1.2));
        let v0 = Vector3::new(rng.random_range(-8.0..-6.0), rng.random_range(-0.5..0.5), rng.random_range(2.0..4.0));
        let noisy = |t: f64, rng: &mut ChaCha8Rng| {
            let n = Vector3::from_fn(|_, _| sigma * rng.sample::<f64, _>(StandardNormal));
            obs(ballistic(p0, v0, t) + n, t, sigma)
        };
        let first = noisy(0.0, &mut rng);
        let mut est = BallEstimate {
            mean: nalgebra::Vector6::new(first.position.x, first.position.y, first.position.z, 0.0, 0.0, 0.0),
            covariance: nalgebra::Matrix6::from_diagonal(&nalgebra::Vector6::new(
                sigma * sigma,
                sigma * sigma,
                sigma * sigma,
                100.0,
                100.0,
                100.0,
            )),
            stamp: 0.0,
        };
        for i in 1..60 {
            let t = i as f64 * 0.01;
            let o = noisy(t, &mut rng);
            let pred = ekf_predict(&est, t - est.stamp, &model, noise);
            let s = pred.covariance.fixed_view::<3, 3>(0, 0) + Matrix3::identity() * (sigma * sigma);
            let r = o.position - pred.position();
            if i > warmup {
                total += r.dot(&(s.try_inverse().unwrap() * r));
                count += 1;
            }
            est = ekf_update(&pred, &o).unwrap();
        }
    }
    (total / count as f64, count)
}

#[test]
fn innovations_are_chi_square_consistent() {
    // With a vanishing process noise the filter model is exact, so the NIS
    // averages to the measurement dimension. 3·sqrt(2·3/n) bounds are a
    // generous normal approximation to the χ² interval; samples within one
    // flight are correlated, hence the factor 3.
    let exact = ProcessNoise {
        position: 1e-14,
        velocity: 1e-14,
    };
    let (nis, n) = mean_nis(&exact, 200, 5);
    let band = 3.0 * 3.0 * (6.0 / n as f64).sqrt();
    assert!((nis - 3.0).abs() <= band, "mean NIS {nis} over {n} (band {band})");

    // The default process noise only makes the filter more cautious.
    let (nis, n) = mean_nis(&ProcessNoise::default(), 200, 5);
    assert!(nis <= 3.0 + 3.0 * (6.0 / n as f64).sqrt(), "mean NIS {nis}");
    assert!(nis > 1.0, "mean NIS {nis} is implausibly small");
}

#[derive(Debug, Clone)]
struct Step {
    dt: f64,
    late: f64,
    pos: [f64; 3],
    noise: f64,
}

fn step() -> impl Strategy<Value = Step> {
    (0.0f64..0.1, prop_oneof![3 => Just(0.0), 1 => 0.0f64..0.08], prop::array::uniform3(-20.0f64..20.0), 1e-4f64..1.0)
        .prop_map(|(dt, late, pos, noise)| Step { dt, late, pos, noise })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn covariance_stays_symmetric_psd(steps in prop::collection::vec(step(), 1..30), drag in prop_oneof![Just(0.0), 0.0f64..0.5]) {
        let cfg = TrackerConfig {
            model: BallModel { drag, ..BallModel::default() },
            ..TrackerConfig::default()
        };
        let mut tracker = BallTracker::new(cfg);
        let mut clock = 0.0;
        for s in steps {
            clock += s.dt;
            let o = obs(Vector3::from(s.pos), clock - s.late, s.noise);
            // Observations older than the reorder window are refused, never fused.
            let _ = tracker.observe(o);
            if let Some(e) = tracker.estimate() {
                let p = &e.covariance;
                prop_assert!((p - p.transpose()).amax() == 0.0);
                let min = p.symmetric_eigen().eigenvalues.min();
                prop_assert!(min >= -1e-9 * p.amax().max(1.0), "min eigenvalue {}", min);
                prop_assert!(e.mean.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn reordered_stream_matches_sorted_stream(seed in any::<u64>(), n in 3usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stream: Vec<Observation> = (0..n)
            .map(|i| {
                let t = i as f64 * 0.01;
                let p = ballistic(Vector3::new(6.0, 0.0, 1.0), Vector3::new(-7.0, 0.2, 3.0), t)
                    + Vector3::from_fn(|_, _| 0.005 * rng.sample::<f64, _>(StandardNormal));
                obs(p, t, 0.005)
            })
            .collect();
        let mut shuffled = stream.clone();
        // Swap neighbours only, so every observation stays inside the window.
        for i in (1..n).step_by(2) {
            if rng.random_bool(0.5) {
                shuffled.swap(i - 1, i);
            }
        }
        let mut a = BallTracker::new(TrackerConfig::default());
        let mut b = BallTracker::new(TrackerConfig::default());
        for o in stream {
            a.observe(o).unwrap();
        }
        for o in shuffled {
            b.observe(o).unwrap();
        }
        prop_assert_eq!(a.estimate(), b.estimate());
    }
}
