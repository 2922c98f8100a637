//! Feedback-weighted EM refinement of primitive parameters.
//!
//! Each executed trajectory gets an importance weight from a softmax over the
//! scalar rewards a rater assigned; EM then maximizes the weighted sum of
//! per-trajectory marginal log-likelihoods. The M-step is the weighted average
//! of the E-step sufficient statistics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg;
use crate::promp::{PrimitiveError, PrimitiveParams, Trajectory, DEFAULT_GRID_LEN};

/// The five admissible rewards, from a clear miss to a return above the net.
pub const REWARD_VALUES: [f64; 5] = [0.0, 0.25, 0.5, 1.0, 2.0];

/// Rating criterion for each entry of [`REWARD_VALUES`].
pub const REWARD_LABELS: [&str; 5] = [
    "miss",
    "close miss (within 5 cm)",
    "hit, weak return",
    "hit, return into a side pillar zone",
    "hit, return above the net",
];

pub fn is_valid_reward(r: f64) -> bool {
    REWARD_VALUES.contains(&r)
}

/// Serializes a reward as the shortest number literal, so whole rewards come
/// out as `0`, `1`, `2` rather than `1.0`.
pub fn serialize_reward<S: serde::Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
    if r.fract() == 0.0 && r.abs() < 1e15 {
        s.serialize_i64(*r as i64)
    } else {
        s.serialize_f64(*r)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("no trajectories")]
    Empty,
    #[error("reward {0} is not one of 0, 0.25, 0.5, 1, 2")]
    InvalidReward(f64),
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("importance weights must be positive and sum to 1")]
    BadWeights,
    #[error("EM iteration {iteration}: {source}")]
    Numerical {
        iteration: usize,
        #[source]
        source: PrimitiveError,
    },
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRecord {
    pub trajectory_id: String,
    pub reward: f64,
}

impl FeedbackRecord {
    pub fn new(trajectory_id: impl Into<String>, reward: f64) -> Result<Self, RefineError> {
        if !is_valid_reward(reward) {
            return Err(RefineError::InvalidReward(reward));
        }
        Ok(Self {
            trajectory_id: trajectory_id.into(),
            reward,
        })
    }
}

/// Trajectories paired with importance weights that are positive and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDataset {
    trajectories: Vec<Trajectory>,
    alphas: Vec<f64>,
}

impl WeightedDataset {
    pub fn new(trajectories: Vec<Trajectory>, alphas: Vec<f64>) -> Result<Self, RefineError> {
        if trajectories.is_empty() {
            return Err(RefineError::Empty);
        }
        if trajectories.len() != alphas.len() {
            return Err(RefineError::LengthMismatch {
                what: "trajectories vs weights",
                left: trajectories.len(),
                right: alphas.len(),
            });
        }
        check_weights(&alphas, 1e-12)?;
        Ok(Self {
            trajectories,
            alphas,
        })
    }

    /// Equal weights `1/N`.
    pub fn uniform(trajectories: Vec<Trajectory>) -> Result<Self, RefineError> {
        let n = trajectories.len();
        Self::new(trajectories, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

fn check_weights(alphas: &[f64], tol: f64) -> Result<(), RefineError> {
    let sum: f64 = alphas.iter().sum();
    if alphas.iter().any(|a| !(*a > 0.0) || !a.is_finite()) || (sum - 1.0).abs() > tol {
        return Err(RefineError::BadWeights);
    }
    Ok(())
}

/// Softmax of `rewards / temperature` with max-subtraction.
pub fn importance_weights(rewards: &[f64], temperature: f64) -> Result<Vec<f64>, RefineError> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(RefineError::BadTemperature(temperature));
    }
    if rewards.is_empty() {
        return Err(RefineError::Empty);
    }
    let max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = rewards.iter().map(|r| ((r - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Gaussian posterior over the weights of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Posterior `N(m_n, S_n)` of the weights given one trajectory under `p`.
pub fn e_step(p: &PrimitiveParams, tau: &Trajectory) -> Result<Posterior, RefineError> {
    let post = p.weight_posterior(tau)?;
    Ok(Posterior {
        mean: post.mean,
        cov: post.cov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// Re-estimate `Σ_y` in every M-step.
    #[default]
    Reestimate,
    /// Keep the incoming `Σ_y`; only `μ_w`, `Σ_w` are updated.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop when the relative change of the weighted log-likelihood drops below this.
    pub rel_tol: f64,
    pub cov_floor: f64,
    pub noise_floor: f64,
    pub noise_mode: NoiseMode,
    /// Phase grid length that executed trajectories are resampled onto.
    pub grid_len: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            rel_tol: 1e-8,
            cov_floor: 1e-6,
            noise_floor: 1e-8,
            noise_mode: NoiseMode::Reestimate,
            grid_len: DEFAULT_GRID_LEN,
        }
    }
}

/// Weighted M-step.
///
/// `μ_w = Σ α_n m_n`, `Σ_w = Σ α_n [S_n + (m_n − μ_w)(m_n − μ_w)ᵀ]` and
/// `Σ_y = Σ_n α_n Σ_t E[r r ᵀ] / Σ_n α_n T_n`, which reduces to the per-length
/// average when all trajectories share a grid. Covariance eigenvalues are
/// floored at `opts.cov_floor` / `opts.noise_floor`.
pub fn m_step_weighted(
    posteriors: &[Posterior],
    alphas: &[f64],
    trajectories: &[Trajectory],
    current: &PrimitiveParams,
    opts: &EmOptions,
) -> Result<PrimitiveParams, RefineError> {
    if posteriors.len() != alphas.len() {
        return Err(RefineError::LengthMismatch {
            what: "posteriors vs weights",
            left: posteriors.len(),
            right: alphas.len(),
        });
    }
    if trajectories.len() != alphas.len() {
        return Err(RefineError::LengthMismatch {
            what: "trajectories vs weights",
            left: trajectories.len(),
            right: alphas.len(),
        });
    }
    if posteriors.is_empty() {
        return Err(RefineError::Empty);
    }
    check_weights(alphas, 1e-9)?;
    let basis = &current.basis;
    let n_w = basis.n_weights();
    let k = basis.n_basis();
    let d = basis.n_dof;

    let mut mu = DVector::zeros(n_w);
    for (post, a) in posteriors.iter().zip(alphas) {
        mu.axpy(*a, &post.mean, 1.0);
    }
    let mut sigma_w = DMatrix::zeros(n_w, n_w);
    for (post, a) in posteriors.iter().zip(alphas) {
        let c = &post.mean - &mu;
        sigma_w += (&post.cov + &c * c.transpose()) * *a;
    }
    let sigma_w = linalg::floor_eigenvalues(&sigma_w, opts.cov_floor);

    let sigma_y = match opts.noise_mode {
        NoiseMode::Frozen => current.sigma_y.clone(),
        NoiseMode::Reestimate => {
            let mut acc = DMatrix::zeros(d, d);
            let mut samples = 0.0;
            for ((post, a), tau) in posteriors.iter().zip(alphas).zip(trajectories) {
                let mut gram = DMatrix::zeros(k, k);
                let mut scatter = DMatrix::zeros(d, d);
                for (t, z) in tau.phases().into_iter().enumerate() {
                    let b = basis.basis_row(z);
                    gram += &b * b.transpose();
                    let r = tau.position(t) - basis.project(z, &post.mean);
                    scatter += &r * r.transpose();
                }
                // Σ_t Φ_t S Φ_tᵀ has entries tr(S_ac G) for the K×K blocks S_ac.
                for i in 0..d {
                    for j in 0..d {
                        let block = post.cov.view((i * k, j * k), (k, k));
                        scatter[(i, j)] += block.component_mul(&gram).sum();
                    }
                }
                acc += scatter * *a;
                samples += *a * tau.len() as f64;
            }
            linalg::floor_eigenvalues(&(acc / samples), opts.noise_floor)
        }
    };
    Ok(PrimitiveParams {
        basis: basis.clone(),
        mu_w: mu,
        sigma_w,
        sigma_y,
    })
}

/// `Σ_n α_n log p(τ_n | θ)`.
pub fn weighted_log_likelihood(p: &PrimitiveParams, dataset: &WeightedDataset) -> Result<f64, RefineError> {
    let lls = dataset
        .trajectories
        .par_iter()
        .map(|tau| p.log_likelihood(tau))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(lls.iter().zip(&dataset.alphas).map(|(ll, a)| a * ll).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOutcome {
    pub params: PrimitiveParams,
    /// Weighted log-likelihood of the initial and of every subsequent iterate.
    pub trace: Vec<f64>,
}

/// Weighted-likelihood EM started from `p_init`.
///
/// E-steps run in parallel; the M-step reduction runs in dataset order, so the
/// result does not depend on scheduling.
pub fn em_weighted(
    p_init: &PrimitiveParams,
    dataset: &WeightedDataset,
    opts: &EmOptions,
) -> Result<EmOutcome, RefineError> {
    let mut params = p_init.clone();
    let mut trace: Vec<f64> = Vec::with_capacity(opts.max_iters + 1);
    let mut converged = false;
    for iteration in 0..=opts.max_iters {
        let posts = dataset
            .trajectories
            .par_iter()
            .map(|tau| params.weight_posterior(tau))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| RefineError::Numerical { iteration, source })?;
        let wll: f64 = posts
            .iter()
            .zip(&dataset.alphas)
            .map(|(post, a)| a * post.log_likelihood)
            .sum();
        if let Some(prev) = trace.last().copied() {
            let rel = (wll - prev).abs() / f64::max(prev.abs(), f64::MIN_POSITIVE);
            converged = rel < opts.rel_tol;
        }
        trace.push(wll);
        if converged || iteration == opts.max_iters {
            break;
        }
        let posteriors: Vec<Posterior> = posts
            .into_iter()
            .map(|p| Posterior {
                mean: p.mean,
                cov: p.cov,
            })
            .collect();
        params = m_step_weighted(&posteriors, &dataset.alphas, &dataset.trajectories, &params, opts)?;
    }
    Ok(EmOutcome { params, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub params: PrimitiveParams,
    pub alphas: Vec<f64>,
    pub trace: Vec<f64>,
}

/// One pass of the outer refinement loop: softmax weights from `rewards`,
/// resampling of the executed trajectories onto the phase grid, then
/// weighted EM started from `p`.
pub fn refinement_round(
    p: &PrimitiveParams,
    executed: &[Trajectory],
    rewards: &[f64],
    temperature: f64,
    opts: &EmOptions,
) -> Result<RoundOutcome, RefineError> {
    if executed.len() != rewards.len() {
        return Err(RefineError::LengthMismatch {
            what: "executed trajectories vs rewards",
            left: executed.len(),
            right: rewards.len(),
        });
    }
    let alphas = importance_weights(rewards, temperature)?;
    let trajectories = executed
        .iter()
        .map(|t| t.resample(opts.grid_len))
        .collect::<Result<Vec<_>, _>>()?;
    let dataset = WeightedDataset::new(trajectories, alphas.clone())?;
    let out = em_weighted(p, &dataset, opts)?;
    Ok(RoundOutcome {
        params: out.params,
        alphas,
        trace: out.trace,
    })
}
