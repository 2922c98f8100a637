#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use strokeprim::kinematics::{Joint, JointKind};
use strokeprim::segment::{Recording, Segment};
use strokeprim::{BasisConfig, EmOptions, HitPlane, KinematicChain, PrimitiveParams, Trajectory};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// Primitive with `μ_w ~ N(0, 1)`, a full-rank random `Σ_w` of scale
/// `weight_std²` and diagonal `Σ_y`.
pub fn random_primitive(n_dof: usize, n_basis: usize, seed: u64, weight_std: f64, noise_std: f64) -> PrimitiveParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = BasisConfig::uniform(n_basis, n_dof, 1.0).unwrap();
    let n = basis.n_weights();
    let mu = random_vector(&mut rng, n);
    let a = random_matrix(&mut rng, n, n);
    let sigma_w = (&a * a.transpose()) * (weight_std * weight_std / n as f64)
        + DMatrix::identity(n, n) * (1e-3 * weight_std * weight_std);
    let sigma_y = DMatrix::from_diagonal_element(n_dof, n_dof, noise_std * noise_std);
    PrimitiveParams::new(basis, mu, sigma_w, sigma_y).unwrap()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

pub fn trained_context(scenario: strokeprim::sim::Scenario) -> strokeprim::sim::SimContext {
    use strokeprim::pipeline::{train_from_recordings, TrainOptions};
    use strokeprim::sim::{scripted_demos, DemoConfig, SimContext};
    let chain = strokeprim::KinematicChain::wheelchair_arm();
    let demos = scripted_demos(&chain, &scenario, &DemoConfig::default()).unwrap();
    let report = train_from_recordings(&demos, &TrainOptions::default()).unwrap();
    SimContext::new(report.params, chain, scenario).unwrap()
}

pub fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(normal(rng), normal(rng), normal(rng));
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

/// Chain with `n` joints (rail included), random axes, offsets and frame
/// rotations; roughly one in four arm joints is prismatic.
pub fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> KinematicChain {
    let mut joints = vec![Joint::new(JointKind::Prismatic, unit(rng), Isometry3::identity())];
    for _ in 1..n {
        let kind = if rng.random_bool(0.25) {
            JointKind::Prismatic
        } else {
            JointKind::Revolute
        };
        let translation = Translation3::new(
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.4..0.4),
        );
        let rotation = UnitQuaternion::from_scaled_axis(unit(rng) * rng.random_range(0.0..3.0));
        joints.push(Joint::new(kind, unit(rng), Isometry3::from_parts(translation, rotation)));
    }
    let tool = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.3);
    KinematicChain::new(joints, tool).unwrap()
}

pub fn fd_jacobian_error(chain: &KinematicChain, r: f64, q: &DVector<f64>) -> f64 {
    let h = 1e-6;
    let jac = chain.jacobian(r, q).unwrap();
    let mut worst = 0.0f64;
    for j in 0..chain.dof() {
        let (plus, minus) = if j == 0 {
            (chain.forward(r + h, q).unwrap(), chain.forward(r - h, q).unwrap())
        } else {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j - 1] += h;
            qm[j - 1] -= h;
            (chain.forward(r, &qp).unwrap(), chain.forward(r, &qm).unwrap())
        };
        let fd = (plus - minus) / (2.0 * h);
        for i in 0..3 {
            worst = worst.max((fd[i] - jac[(i, j)]).abs());
        }
    }
    worst
}

pub fn dataset(truth: &PrimitiveParams, n: usize, seed: u64) -> Vec<Trajectory> {
    (0..n).map(|i| truth.sample_trajectory(seed * 1000 + i as u64, 100).unwrap()).collect()
}

pub fn floor(m: &DMatrix<f64>, f: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let l = eig.eigenvalues.map(|v| v.max(f));
    &eig.eigenvectors * DMatrix::from_diagonal(&l) * eig.eigenvectors.transpose()
}

/// Textbook unweighted EM for the linear-Gaussian trajectory model with
/// dense information-form E-steps.
pub fn plain_em(init: &PrimitiveParams, trajs: &[Trajectory], iters: usize, opts: &EmOptions) -> PrimitiveParams {
    let d = init.n_dof();
    let n_w = init.basis.n_weights();
    let mut p = init.clone();
    for _ in 0..iters {
        let r_inv = p.sigma_y.clone().try_inverse().unwrap();
        let sw_inv = p.sigma_w.clone().try_inverse().unwrap();
        let posts: Vec<(DVector<f64>, DMatrix<f64>)> = trajs
            .iter()
            .map(|tau| {
                let mut info = sw_inv.clone();
                let mut h = &sw_inv * &p.mu_w;
                for (t, z) in tau.phases().into_iter().enumerate() {
                    let phi = p.basis.phi(z);
                    info += phi.transpose() * &r_inv * &phi;
                    h += phi.transpose() * &r_inv * tau.position(t);
                }
                let s = info.try_inverse().unwrap();
                (&s * h, s)
            })
            .collect();
        let n = trajs.len() as f64;
        let mu = posts.iter().fold(DVector::zeros(n_w), |acc, (m, _)| acc + m) / n;
        let mut sigma_w = DMatrix::zeros(n_w, n_w);
        let mut sigma_y = DMatrix::zeros(d, d);
        let mut samples = 0.0;
        for ((m, s), tau) in posts.iter().zip(trajs) {
            let c = m - &mu;
            sigma_w += s + &c * c.transpose();
            for (t, z) in tau.phases().into_iter().enumerate() {
                let phi = p.basis.phi(z);
                let r = tau.position(t) - &phi * m;
                sigma_y += &r * r.transpose() + &phi * s * phi.transpose();
            }
            samples += tau.len() as f64;
        }
        p = PrimitiveParams {
            basis: p.basis.clone(),
            mu_w: mu,
            sigma_w: floor(&(sigma_w / n), opts.cov_floor),
            sigma_y: floor(&(sigma_y / samples), opts.noise_floor),
        };
    }
    p
}

pub fn perturbed(p: &PrimitiveParams, seed: u64) -> PrimitiveParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = p.clone();
    q.mu_w += DVector::from_fn(q.mu_w.len(), |_, _| rng.random_range(-0.2..0.2));
    q.sigma_w *= 2.0;
    q.sigma_y *= 4.0;
    q
}

pub fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

pub struct Synthetic {
    pub rec: Recording,
    pub start: usize,
    pub end: usize,
}

/// Rest, one min-jerk stroke of every joint, rest; sampled at `rate` with
/// additive position noise. `start`/`end` are the samples nearest the true
/// stroke boundaries.
pub fn rest_stroke_rest(rng: &mut ChaCha8Rng, rate: f64, noise: f64) -> Synthetic {
    let d = 7;
    let rest_before = rng.random_range(0.2..1.0);
    let duration = rng.random_range(0.4..0.9);
    let rest_after = rng.random_range(0.2..1.0);
    let amplitude: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let q0: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    // A random clock offset exercises the time-shift invariance as well.
    let t0 = rng.random_range(-100.0..100.0);
    let n = ((rest_before + duration + rest_after) * rate).round() as usize;
    let stamps: Vec<f64> = (0..n).map(|i| t0 + i as f64 / rate).collect();
    let pos = DMatrix::from_fn(n, d, |i, j| {
        let s = (i as f64 / rate - rest_before) / duration;
        q0[j] + amplitude[j] * min_jerk(s) + noise * rng.sample::<f64, _>(StandardNormal)
    });
    let names = (1..=d).map(|j| format!("q{j}")).collect();
    Synthetic {
        rec: Recording::new(names, stamps, pos, None).unwrap(),
        start: (rest_before * rate).round() as usize,
        end: ((rest_before + duration) * rate).round() as usize,
    }
}

/// Arm-only recording of a shoulder-yaw sweep with a plane placed where the
/// tool is at phase `target` of the stroke.
pub fn sweep_through_plane(target: f64) -> (Recording, Segment, KinematicChain, HitPlane) {
    let chain = KinematicChain::wheelchair_arm();
    let rate = 100.0;
    let (rest, duration) = (0.3, 0.7);
    let q_at = |t: f64| {
        let mut q = DVector::from_vec(vec![-0.8, 1.0, 0.0, 1.2, 0.0, 0.3, 0.0]);
        q[0] += 1.6 * min_jerk((t - rest) / duration);
        q
    };
    let n = ((2.0 * rest + duration) * rate).round() as usize + 1;
    let stamps: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
    let pos = DMatrix::from_fn(n, 7, |i, j| q_at(stamps[i])[j]);
    let names = (1..=7).map(|j| format!("q{j}")).collect();
    let rec = Recording::new(names, stamps, pos, None).unwrap();
    let crossing = chain.forward(0.0, &q_at(rest + target * duration)).unwrap();
    let plane = HitPlane::new(crossing, Vector3::y()).unwrap();
    let seg = Segment {
        start: (rest * rate).round() as usize,
        end: ((rest + duration) * rate).round() as usize,
    };
    (rec, seg, chain, plane)
}
