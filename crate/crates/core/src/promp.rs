//! Probabilistic movement primitives over joint trajectories.
//!
//! A primitive is a Gaussian over basis weights `w ~ N(μ_w, Σ_w)`; the joint
//! state at phase `z` is `q_z = Φ_z w + ε`, `ε ~ N(0, Σ_y)`. `Φ_z` is
//! block-diagonal with one normalized radial-basis row per degree of freedom,
//! so weights are laid out DoF-major: index `d * K + k`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{self, PSD_TOLERANCE};

/// Margin beyond [0, 1] covered by the default basis centers.
pub const CENTER_MARGIN: f64 = 0.05;
pub const DEFAULT_N_BASIS: usize = 8;
pub const DEFAULT_GRID_LEN: usize = 100;
pub const DEFAULT_CONDITION_NOISE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrimitiveError {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid primitive parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {what} expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("need at least 2 demonstrations, got {0}")]
    TooFewDemos(usize),
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("{0} is not positive semidefinite")]
    NotPsd(&'static str),
}

/// Radial basis layout over the normalized phase.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisConfig {
    pub centers: Vec<f64>,
    /// Squared width `h` of each radial basis, in phase² units.
    pub bandwidth: f64,
    pub n_dof: usize,
    /// Seconds mapped onto phase 1.0.
    pub phase_duration: f64,
}

impl BasisConfig {
    pub fn new(
        centers: Vec<f64>,
        bandwidth: f64,
        n_dof: usize,
        phase_duration: f64,
    ) -> Result<Self, PrimitiveError> {
        let cfg = Self {
            centers,
            bandwidth,
            n_dof,
            phase_duration,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `n_basis` centers evenly spread over `[-0.05, 1.05]` with
    /// `h = 0.5 / (K - 1)²`.
    pub fn uniform(n_basis: usize, n_dof: usize, phase_duration: f64) -> Result<Self, PrimitiveError> {
        if n_basis == 0 {
            return Err(PrimitiveError::InvalidBasis("n_basis must be >= 1".into()));
        }
        let (centers, bandwidth) = if n_basis == 1 {
            (vec![0.5], 0.5)
        } else {
            let span = 1.0 + 2.0 * CENTER_MARGIN;
            let step = span / (n_basis - 1) as f64;
            let centers = (0..n_basis)
                .map(|k| -CENTER_MARGIN + step * k as f64)
                .collect();
            let spacing = 1.0 / (n_basis - 1) as f64;
            (centers, 0.5 * spacing * spacing)
        };
        Self::new(centers, bandwidth, n_dof, phase_duration)
    }

    pub fn with_bandwidth(mut self, bandwidth: f64) -> Result<Self, PrimitiveError> {
        self.bandwidth = bandwidth;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), PrimitiveError> {
        let bad = |m: &str| Err(PrimitiveError::InvalidBasis(m.to_string()));
        if self.centers.is_empty() {
            return bad("at least one basis center is required");
        }
        if self.centers.iter().any(|c| !c.is_finite() || !(-0.1..=1.1).contains(c)) {
            return bad("centers must lie in [-0.1, 1.1]");
        }
        if self.centers.windows(2).any(|w| w[1] <= w[0]) {
            return bad("centers must be strictly increasing");
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad("bandwidth must be positive");
        }
        if self.n_dof == 0 {
            return bad("n_dof must be >= 1");
        }
        if !(self.phase_duration > 0.0 && self.phase_duration.is_finite()) {
            return bad("phase_duration must be positive");
        }
        Ok(())
    }

    pub fn n_basis(&self) -> usize {
        self.centers.len()
    }

    pub fn n_weights(&self) -> usize {
        self.n_basis() * self.n_dof
    }

    /// Normalized radial activations at phase `z`; sums to one for any finite `z`.
    pub fn basis_row(&self, z: f64) -> DVector<f64> {
        let h2 = 2.0 * self.bandwidth;
        let logits: Vec<f64> = self.centers.iter().map(|c| -(z - c) * (z - c) / h2).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut row = DVector::from_iterator(logits.len(), logits.iter().map(|a| (a - max).exp()));
        let total = row.sum();
        row /= total;
        row
    }

    /// Block-diagonal `D × DK` observation matrix at phase `z`.
    pub fn phi(&self, z: f64) -> DMatrix<f64> {
        let row = self.basis_row(z);
        let k = self.n_basis();
        let mut phi = DMatrix::zeros(self.n_dof, self.n_weights());
        for d in 0..self.n_dof {
            phi.view_mut((d, d * k), (1, k)).copy_from(&row.transpose());
        }
        phi
    }

    /// `Φ_z w` without materializing `Φ_z`.
    pub fn project(&self, z: f64, w: &DVector<f64>) -> DVector<f64> {
        let row = self.basis_row(z);
        let k = self.n_basis();
        DVector::from_iterator(
            self.n_dof,
            (0..self.n_dof).map(|d| row.dot(&w.rows(d * k, k))),
        )
    }
}

/// Uniform phase grid `0, 1/(n-1), …, 1`.
pub fn phase_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Time-stamped joint-state sequence (rows are samples).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    timestamps: Vec<f64>,
    positions: DMatrix<f64>,
    velocities: Option<DMatrix<f64>>,
}

impl Trajectory {
    pub fn new(
        timestamps: Vec<f64>,
        positions: DMatrix<f64>,
        velocities: Option<DMatrix<f64>>,
    ) -> Result<Self, PrimitiveError> {
        let bad = |m: String| Err(PrimitiveError::InvalidTrajectory(m));
        if timestamps.len() < 2 {
            return bad(format!("need at least 2 samples, got {}", timestamps.len()));
        }
        if positions.nrows() != timestamps.len() {
            return bad(format!(
                "{} position rows for {} timestamps",
                positions.nrows(),
                timestamps.len()
            ));
        }
        if positions.ncols() == 0 {
            return bad("no degrees of freedom".into());
        }
        if !timestamps.iter().all(|t| t.is_finite()) || timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return bad("timestamps must be finite and strictly increasing".into());
        }
        if !positions.iter().all(|v| v.is_finite()) {
            return bad("non-finite position".into());
        }
        if let Some(v) = &velocities {
            if v.shape() != positions.shape() {
                return bad("velocity shape differs from positions".into());
            }
        }
        Ok(Self {
            timestamps,
            positions,
            velocities,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn velocities(&self) -> Option<&DMatrix<f64>> {
        self.velocities.as_ref()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_dof(&self) -> usize {
        self.positions.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.timestamps[self.len() - 1] - self.timestamps[0]
    }

    /// Normalized phase of every sample: `(t - t0) / (t_end - t0)`.
    pub fn phases(&self) -> Vec<f64> {
        let t0 = self.timestamps[0];
        let span = self.duration();
        self.timestamps.iter().map(|t| (t - t0) / span).collect()
    }

    pub fn position(&self, i: usize) -> DVector<f64> {
        self.positions.row(i).transpose()
    }

    /// Linear interpolation of the positions at time `t` (clamped to the ends).
    pub fn position_at(&self, t: f64) -> DVector<f64> {
        let ts = &self.timestamps;
        if t <= ts[0] {
            return self.position(0);
        }
        if t >= ts[ts.len() - 1] {
            return self.position(ts.len() - 1);
        }
        let hi = ts.partition_point(|&s| s <= t);
        let lo = hi - 1;
        let a = (t - ts[lo]) / (ts[hi] - ts[lo]);
        self.position(lo) * (1.0 - a) + self.position(hi) * a
    }

    /// Resamples onto `n` uniformly spaced times spanning the same interval.
    pub fn resample(&self, n: usize) -> Result<Self, PrimitiveError> {
        if n < 2 {
            return Err(PrimitiveError::InvalidTrajectory(
                "resampling needs at least 2 samples".into(),
            ));
        }
        let t0 = self.timestamps[0];
        let span = self.duration();
        let times: Vec<f64> = phase_grid(n).iter().map(|z| t0 + z * span).collect();
        let mut positions = DMatrix::zeros(n, self.n_dof());
        for (i, &t) in times.iter().enumerate() {
            positions.set_row(i, &self.position_at(t).transpose());
        }
        Self::new(times, positions, None)
    }

    /// Copy with timestamps shifted so the first sample is at zero.
    pub fn rebased(&self) -> Self {
        let t0 = self.timestamps[0];
        Self {
            timestamps: self.timestamps.iter().map(|t| t - t0).collect(),
            positions: self.positions.clone(),
            velocities: self.velocities.clone(),
        }
    }

    /// Rows `start..=end` as a new trajectory.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self, PrimitiveError> {
        if end >= self.len() || end <= start {
            return Err(PrimitiveError::InvalidTrajectory(format!(
                "bad slice {start}..={end} of {} samples",
                self.len()
            )));
        }
        let n = end - start + 1;
        Self::new(
            self.timestamps[start..=end].to_vec(),
            self.positions.rows(start, n).into_owned(),
            self.velocities.as_ref().map(|v| v.rows(start, n).into_owned()),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveParams {
    pub basis: BasisConfig,
    pub mu_w: DVector<f64>,
    pub sigma_w: DMatrix<f64>,
    pub sigma_y: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub ridge: f64,
    pub cov_floor: f64,
    pub noise_floor: f64,
    pub grid_len: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            cov_floor: 1e-6,
            noise_floor: 1e-8,
            grid_len: DEFAULT_GRID_LEN,
        }
    }
}

/// Sufficient statistics of the weight posterior for one trajectory.
///
/// With `Σ_w = L Lᵀ`, `J = Σ_t Φ_tᵀ Σ_y⁻¹ Φ_t` and `h = Σ_t Φ_tᵀ Σ_y⁻¹ q_t`:
/// `S = L (I + Lᵀ J L)⁻¹ Lᵀ`, `m = μ_w + S (h − J μ_w)`. The square-root form
/// keeps a rank-deficient `Σ_w` usable.
pub(crate) struct WeightPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_likelihood: f64,
}

impl PrimitiveParams {
    pub fn new(
        basis: BasisConfig,
        mu_w: DVector<f64>,
        sigma_w: DMatrix<f64>,
        sigma_y: DMatrix<f64>,
    ) -> Result<Self, PrimitiveError> {
        let p = Self {
            basis,
            mu_w,
            sigma_w,
            sigma_y,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_dof(&self) -> usize {
        self.basis.n_dof
    }

    pub fn check_dimensions(&self) -> Result<(), PrimitiveError> {
        self.basis.validate()?;
        let n = self.basis.n_weights();
        let d = self.basis.n_dof;
        let mismatch = |what, expected, found| {
            Err(PrimitiveError::DimensionMismatch {
                what,
                expected,
                found,
            })
        };
        if self.mu_w.len() != n {
            return mismatch("mu_w length", n, self.mu_w.len());
        }
        if self.sigma_w.shape() != (n, n) {
            return mismatch("sigma_w rows/cols", n, self.sigma_w.nrows().max(self.sigma_w.ncols()));
        }
        if self.sigma_y.shape() != (d, d) {
            return mismatch("sigma_y rows/cols", d, self.sigma_y.nrows().max(self.sigma_y.ncols()));
        }
        let finite = self.mu_w.iter().chain(self.sigma_w.iter()).chain(self.sigma_y.iter());
        if !finite.into_iter().all(|v| v.is_finite()) {
            return Err(PrimitiveError::InvalidParams("non-finite entry".into()));
        }
        Ok(())
    }

    /// Full invariant check: dimensions, `Σ_w` symmetric PSD, `Σ_y` symmetric PD.
    pub fn validate(&self) -> Result<(), PrimitiveError> {
        self.check_dimensions()?;
        if !linalg::is_symmetric(&self.sigma_w, 1e-9) {
            return Err(PrimitiveError::InvalidParams("sigma_w is not symmetric".into()));
        }
        if !linalg::is_symmetric(&self.sigma_y, 1e-9) {
            return Err(PrimitiveError::InvalidParams("sigma_y is not symmetric".into()));
        }
        if linalg::psd_sqrt(&self.sigma_w).is_none() {
            return Err(PrimitiveError::NotPsd("sigma_w"));
        }
        if linalg::symmetrize(&self.sigma_y).cholesky().is_none() {
            return Err(PrimitiveError::NotPositiveDefinite("sigma_y"));
        }
        Ok(())
    }

    /// Fits a primitive from demonstrations by per-demo ridge regression.
    ///
    /// Demos are resampled onto a uniform phase grid; `μ_w` and `Σ_w` are the
    /// maximum-likelihood mean and covariance of the per-demo weights, `Σ_y`
    /// the pooled residual covariance. Both covariances get their eigenvalues
    /// floored.
    pub fn fit(
        demos: &[Trajectory],
        basis: &BasisConfig,
        opts: &FitOptions,
    ) -> Result<Self, PrimitiveError> {
        basis.validate()?;
        if demos.len() < 2 {
            return Err(PrimitiveError::TooFewDemos(demos.len()));
        }
        if let Some(bad) = demos.iter().find(|d| d.n_dof() != basis.n_dof) {
            return Err(PrimitiveError::DimensionMismatch {
                what: "demo degrees of freedom",
                expected: basis.n_dof,
                found: bad.n_dof(),
            });
        }
        let grid = phase_grid(opts.grid_len.max(2));
        let k = basis.n_basis();
        let d = basis.n_dof;
        let mut design = DMatrix::zeros(grid.len(), k);
        for (i, &z) in grid.iter().enumerate() {
            design.set_row(i, &basis.basis_row(z).transpose());
        }
        let gram = design.transpose() * &design + DMatrix::identity(k, k) * opts.ridge;
        let chol = gram
            .cholesky()
            .ok_or(PrimitiveError::NotPositiveDefinite("ridge-regularized basis Gram matrix"))?;

        let n = demos.len();
        let mut weights = Vec::with_capacity(n);
        let mut resid_cov = DMatrix::zeros(d, d);
        for demo in demos {
            let y = demo.resample(grid.len())?.positions;
            let w_block = chol.solve(&(design.transpose() * &y)); // K × D
            let resid = &y - &design * &w_block;
            resid_cov += resid.transpose() * &resid;
            let mut w = DVector::zeros(k * d);
            for dof in 0..d {
                w.rows_mut(dof * k, k).copy_from(&w_block.column(dof));
            }
            weights.push(w);
        }
        let mu_w = weights.iter().fold(DVector::zeros(k * d), |acc, w| acc + w) / n as f64;
        let mut cov = DMatrix::zeros(k * d, k * d);
        for w in &weights {
            let c = w - &mu_w;
            cov += &c * c.transpose();
        }
        cov /= n as f64;
        resid_cov /= (n * grid.len()) as f64;
        Ok(Self {
            basis: basis.clone(),
            mu_w,
            sigma_w: linalg::floor_eigenvalues(&cov, opts.cov_floor),
            sigma_y: linalg::floor_eigenvalues(&resid_cov, opts.noise_floor),
        })
    }

    /// Mean joint state at phase `z`.
    pub fn mean_at(&self, z: f64) -> DVector<f64> {
        self.basis.project(z, &self.mu_w)
    }

    /// Gaussian conditioning of the weights on `q(z_star) = q_star` observed
    /// with covariance `obs_noise`.
    pub fn condition(
        &self,
        z_star: f64,
        q_star: &DVector<f64>,
        obs_noise: &DMatrix<f64>,
    ) -> Result<Self, PrimitiveError> {
        self.check_dimensions()?;
        let d = self.n_dof();
        if q_star.len() != d {
            return Err(PrimitiveError::DimensionMismatch {
                what: "conditioning target",
                expected: d,
                found: q_star.len(),
            });
        }
        if obs_noise.shape() != (d, d) {
            return Err(PrimitiveError::DimensionMismatch {
                what: "conditioning noise rows/cols",
                expected: d,
                found: obs_noise.nrows(),
            });
        }
        let phi = self.basis.phi(z_star);
        let sigma_phi_t = &self.sigma_w * phi.transpose(); // DK × D
        let innovation = linalg::symmetrize(&(obs_noise + &phi * &sigma_phi_t));
        let chol = innovation
            .cholesky()
            .ok_or(PrimitiveError::NotPositiveDefinite("conditioning innovation covariance"))?;
        // gain = Σ Φᵀ S⁻¹, computed as (S⁻¹ Φ Σ)ᵀ
        let gain = chol.solve(&sigma_phi_t.transpose()).transpose();
        let residual = q_star - &phi * &self.mu_w;
        let mu_w = &self.mu_w + &gain * residual;
        let sigma_w = linalg::symmetrize(&(&self.sigma_w - &gain * sigma_phi_t.transpose()));
        Ok(Self {
            basis: self.basis.clone(),
            mu_w,
            sigma_w,
            sigma_y: self.sigma_y.clone(),
        })
    }

    /// Mean trajectory on a uniform phase grid of `n_samples` points.
    pub fn mean_trajectory(&self, n_samples: usize) -> Result<Trajectory, PrimitiveError> {
        if n_samples < 2 {
            return Err(PrimitiveError::InvalidTrajectory("need at least 2 samples".into()));
        }
        self.check_dimensions()?;
        let grid = phase_grid(n_samples);
        let mut positions = DMatrix::zeros(n_samples, self.n_dof());
        for (i, &z) in grid.iter().enumerate() {
            positions.set_row(i, &self.mean_at(z).transpose());
        }
        let times = grid.iter().map(|z| z * self.basis.phase_duration).collect();
        Trajectory::new(times, positions, None)
    }

    /// Draws `w ~ N(μ_w, Σ_w)` and emits `Φ_z w + ε` on a uniform grid.
    /// Output depends only on `seed`.
    pub fn sample_trajectory(&self, seed: u64, n_samples: usize) -> Result<Trajectory, PrimitiveError> {
        if n_samples < 2 {
            return Err(PrimitiveError::InvalidTrajectory("need at least 2 samples".into()));
        }
        self.check_dimensions()?;
        let l_w = linalg::psd_sqrt(&self.sigma_w).ok_or(PrimitiveError::NotPsd("sigma_w"))?;
        let l_y = linalg::psd_sqrt(&self.sigma_y).ok_or(PrimitiveError::NotPsd("sigma_y"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normals = |n: usize| {
            DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)))
        };
        let w = &self.mu_w + &l_w * normals(self.basis.n_weights());
        let grid = phase_grid(n_samples);
        let mut positions = DMatrix::zeros(n_samples, self.n_dof());
        for (i, &z) in grid.iter().enumerate() {
            let q = self.basis.project(z, &w) + &l_y * normals(self.n_dof());
            positions.set_row(i, &q.transpose());
        }
        let times = grid.iter().map(|z| z * self.basis.phase_duration).collect();
        Trajectory::new(times, positions, None)
    }

    /// Marginal log density of all samples of `tau` (phases taken from its
    /// own timestamps) with the weights integrated out.
    pub fn log_likelihood(&self, tau: &Trajectory) -> Result<f64, PrimitiveError> {
        Ok(self.weight_posterior(tau)?.log_likelihood)
    }

    pub(crate) fn weight_posterior(&self, tau: &Trajectory) -> Result<WeightPosterior, PrimitiveError> {
        self.check_dimensions()?;
        let d = self.n_dof();
        let k = self.basis.n_basis();
        if tau.n_dof() != d {
            return Err(PrimitiveError::DimensionMismatch {
                what: "trajectory degrees of freedom",
                expected: d,
                found: tau.n_dof(),
            });
        }
        let chol_y = linalg::symmetrize(&self.sigma_y)
            .cholesky()
            .ok_or(PrimitiveError::NotPositiveDefinite("sigma_y"))?;
        let prec_y = chol_y.inverse();
        let log_det_y = 2.0 * chol_y.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let l_w = linalg::psd_sqrt(&self.sigma_w).ok_or(PrimitiveError::NotPsd("sigma_w"))?;

        let n_t = tau.len();
        let mut gram = DMatrix::zeros(k, k);
        let mut info_vec = DVector::zeros(d * k);
        let mut resid_quad = 0.0;
        for (t, z) in tau.phases().into_iter().enumerate() {
            let b = self.basis.basis_row(z);
            gram += &b * b.transpose();
            let q = tau.position(t);
            let pq = &prec_y * &q;
            for dof in 0..d {
                let mut block = info_vec.rows_mut(dof * k, k);
                block.axpy(pq[dof], &b, 1.0);
            }
            let r = q - self.basis.project(z, &self.mu_w);
            resid_quad += r.dot(&(&prec_y * &r));
        }
        // J = Σ_y⁻¹ ⊗ G
        let mut info = DMatrix::zeros(d * k, d * k);
        for a in 0..d {
            for c in 0..d {
                info.view_mut((a * k, c * k), (k, k))
                    .copy_from(&(&gram * prec_y[(a, c)]));
            }
        }
        let n = d * k;
        let inner = DMatrix::identity(n, n) + l_w.transpose() * &info * &l_w;
        let chol_inner = linalg::symmetrize(&inner)
            .cholesky()
            .ok_or(PrimitiveError::NotPositiveDefinite("total trajectory covariance"))?;
        let log_det_inner = 2.0 * chol_inner.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();

        let score = &info_vec - &info * &self.mu_w; // Ψᵀ A⁻¹ (y − Ψ μ)
        let u = l_w.transpose() * &score;
        let inner_u = chol_inner.solve(&u);
        let quad = resid_quad - u.dot(&inner_u);
        let log_det = n_t as f64 * log_det_y + log_det_inner;
        let log_likelihood =
            -0.5 * (quad + log_det + (n_t * d) as f64 * (2.0 * std::f64::consts::PI).ln());

        let inner_inv = chol_inner.inverse();
        let cov = linalg::symmetrize(&(&l_w * inner_inv * l_w.transpose()));
        let mean = &self.mu_w + &cov * score;
        if !log_likelihood.is_finite() || !mean.iter().all(|v| v.is_finite()) {
            return Err(PrimitiveError::NotPositiveDefinite("total trajectory covariance"));
        }
        Ok(WeightPosterior {
            mean,
            cov,
            log_likelihood,
        })
    }

    /// Smallest eigenvalue of `Σ_w − other.Σ_w`; non-negative (up to
    /// round-off) when `other` was obtained by conditioning `self`.
    pub fn variance_reduction_min_eig(&self, other: &Self) -> f64 {
        linalg::min_eigenvalue(&(&self.sigma_w - &other.sigma_w))
    }
}

/// True when `sigma_w` is PSD within the shared tolerance.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    linalg::min_eigenvalue(m) >= -PSD_TOLERANCE * m.amax().max(1.0)
}
