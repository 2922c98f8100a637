//! Serial chain on a lateral rail: forward kinematics, positional Jacobian and
//! clipped iterative IK.
//!
//! The first joint of every chain is prismatic and models the base moving
//! along its rail; the remaining joints form the arm. A configuration is the
//! pair `(r, q)` with `r` the rail offset and `q` the arm joint vector, and all
//! positions are expressed in the base frame at `r = 0`.

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Point3, Translation3, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("dimension mismatch: {what} expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Prismatic,
    Revolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub kind: JointKind,
    /// Unit motion axis in the joint frame.
    pub axis: Vector3<f64>,
    /// Transform from the previous joint frame to this joint's frame.
    pub origin: Isometry3<f64>,
}

impl Joint {
    pub fn new(kind: JointKind, axis: Vector3<f64>, origin: Isometry3<f64>) -> Self {
        Self { kind, axis, origin }
    }

    fn motion(&self, value: f64) -> Isometry3<f64> {
        match self.kind {
            JointKind::Prismatic => Isometry3::from_parts(
                Translation3::from(self.axis * value),
                UnitQuaternion::identity(),
            ),
            JointKind::Revolute => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_scaled_axis(self.axis * value),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    joints: Vec<Joint>,
    /// End-effector point in the last joint frame.
    tool: Vector3<f64>,
}

/// World-frame pose of one joint at a configuration.
struct JointFrame {
    position: Vector3<f64>,
    axis: Vector3<f64>,
}

impl KinematicChain {
    pub fn new(joints: Vec<Joint>, tool: Vector3<f64>) -> Result<Self, KinematicsError> {
        let bad = |m: String| Err(KinematicsError::InvalidChain(m));
        if joints.len() < 2 {
            return bad(format!("need at least 2 joints, got {}", joints.len()));
        }
        if joints[0].kind != JointKind::Prismatic {
            return bad("first joint must be prismatic (base rail)".into());
        }
        for (i, j) in joints.iter().enumerate() {
            if !j.axis.iter().all(|v| v.is_finite()) || (j.axis.norm() - 1.0).abs() > 1e-9 {
                return bad(format!("joint {i}: axis must be unit length"));
            }
            let r = j.origin.rotation.to_rotation_matrix();
            let ortho = r.matrix().transpose() * r.matrix() - Matrix3::identity();
            if !j.origin.translation.vector.iter().all(|v| v.is_finite()) || ortho.amax() > 1e-9 {
                return bad(format!("joint {i}: origin must be a finite rigid transform"));
            }
        }
        if !tool.iter().all(|v| v.is_finite()) {
            return bad("tool offset must be finite".into());
        }
        Ok(Self { joints, tool })
    }

    /// Synthetic wheelchair-mounted 7-DoF arm: a lateral rail along +y, then
    /// shoulder yaw/pitch/roll, elbow, forearm roll, wrist pitch/roll. The
    /// tool point is the racket center 0.45 m beyond the last wrist joint.
    ///
    /// Link lengths roughly follow a WAM arm mounted 0.85 m above the chair
    /// frame and 0.5 m forward of the rail origin.
    pub fn wheelchair_arm() -> Self {
        let z = Vector3::z();
        let y = Vector3::y();
        let at = |x: f64, yy: f64, zz: f64| Isometry3::translation(x, yy, zz);
        let joints = vec![
            Joint::new(JointKind::Prismatic, y, Isometry3::identity()),
            Joint::new(JointKind::Revolute, z, at(0.5, 0.0, 0.85)),
            Joint::new(JointKind::Revolute, y, at(0.0, 0.0, 0.15)),
            Joint::new(JointKind::Revolute, z, at(0.0, 0.0, 0.0)),
            Joint::new(JointKind::Revolute, y, at(0.045, 0.0, 0.55)),
            Joint::new(JointKind::Revolute, z, at(-0.045, 0.0, 0.3)),
            Joint::new(JointKind::Revolute, y, at(0.0, 0.0, 0.0)),
            Joint::new(JointKind::Revolute, z, at(0.0, 0.0, 0.06)),
        ];
        Self::new(joints, Vector3::new(0.0, 0.0, 0.45)).expect("built-in chain is valid")
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn tool(&self) -> &Vector3<f64> {
        &self.tool
    }

    /// Total degrees of freedom including the rail.
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Arm degrees of freedom (rail excluded).
    pub fn arm_dof(&self) -> usize {
        self.joints.len() - 1
    }

    /// Unit axis of the rail in the base frame.
    pub fn rail_axis(&self) -> Vector3<f64> {
        self.joints[0].origin.rotation * self.joints[0].axis
    }

    fn check_arm(&self, q: &DVector<f64>) -> Result<(), KinematicsError> {
        if q.len() != self.arm_dof() {
            return Err(KinematicsError::DimensionMismatch {
                what: "arm joint vector",
                expected: self.arm_dof(),
                found: q.len(),
            });
        }
        Ok(())
    }

    fn walk(&self, r: f64, q: &DVector<f64>) -> (Vec<JointFrame>, Vector3<f64>) {
        let mut pose = Isometry3::identity();
        let mut frames = Vec::with_capacity(self.joints.len());
        for (i, joint) in self.joints.iter().enumerate() {
            pose *= joint.origin;
            frames.push(JointFrame {
                position: pose.translation.vector,
                axis: pose.rotation * joint.axis,
            });
            let value = if i == 0 { r } else { q[i - 1] };
            pose *= joint.motion(value);
        }
        (frames, pose.transform_point(&Point3::from(self.tool)).coords)
    }

    /// End-effector position for rail offset `r` and arm joints `q`.
    pub fn forward(&self, r: f64, q: &DVector<f64>) -> Result<Vector3<f64>, KinematicsError> {
        self.check_arm(q)?;
        Ok(self.walk(r, q).1)
    }

    /// `3 × (1 + n)` positional Jacobian; column 0 is the rail.
    pub fn jacobian(&self, r: f64, q: &DVector<f64>) -> Result<DMatrix<f64>, KinematicsError> {
        self.check_arm(q)?;
        let (frames, ee) = self.walk(r, q);
        let mut jac = DMatrix::zeros(3, self.dof());
        for (j, (joint, frame)) in self.joints.iter().zip(&frames).enumerate() {
            let col = match joint.kind {
                JointKind::Prismatic => frame.axis,
                JointKind::Revolute => frame.axis.cross(&(ee - frame.position)),
            };
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
        }
        Ok(jac)
    }
}

/// Per-DoF bounds on the cumulative offset from the IK seed; index 0 is the rail.
#[derive(Debug, Clone, PartialEq)]
pub struct Limits {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl Limits {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, KinematicsError> {
        if lower.len() != upper.len() {
            return Err(KinematicsError::DimensionMismatch {
                what: "upper limit vector",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for i in 0..lower.len() {
            let (lo, hi) = (lower[i], upper[i]);
            if lo.is_nan() || hi.is_nan() || lo > 0.0 || hi < 0.0 {
                return Err(KinematicsError::InvalidLimits(format!(
                    "entry {i}: need LL <= 0 <= UL, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Same `±bound` on every arm joint, `[rail_lower, rail_upper]` on the rail.
    pub fn symmetric(rail_lower: f64, rail_upper: f64, arm_dof: usize, arm_bound: f64) -> Result<Self, KinematicsError> {
        let mut lower = DVector::from_element(arm_dof + 1, -arm_bound);
        let mut upper = DVector::from_element(arm_dof + 1, arm_bound);
        lower[0] = rail_lower;
        upper[0] = rail_upper;
        Self::new(lower, upper)
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        v.len() == self.len()
            && v.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Copy scaled by `factor` in `[0, 1]`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lower: &self.lower * factor,
            upper: &self.upper * factor,
        }
    }

    /// Copy with the rail interval intersected with `[lo, hi]` (which must contain 0).
    pub fn with_rail_window(&self, lo: f64, hi: f64) -> Self {
        let mut out = self.clone();
        out.lower[0] = out.lower[0].max(lo.min(0.0));
        out.upper[0] = out.upper[0].min(hi.max(0.0));
        out
    }
}

/// Componentwise `clamp(net + delta, lower, upper)`.
pub fn clipped_increment(
    net: &DVector<f64>,
    delta: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_iterator(
        net.len(),
        (0..net.len()).map(|i| (net[i] + delta[i]).max(lower[i]).min(upper[i])),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkOptions {
    pub max_iter: usize,
    /// Euclidean position tolerance in meters.
    pub tol: f64,
    /// Damping `λ` of the pseudo-inverse `Jᵀ (J Jᵀ + λ² I)⁻¹`.
    pub damping: f64,
    /// Per-component cap on a single raw step before clipping; `None` disables it.
    pub step_cap: Option<f64>,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-3,
            damping: 1e-3,
            step_cap: Some(0.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkResult {
    /// Rail movement relative to the current base position.
    pub net_dr: f64,
    /// Arm offsets from the seed configuration.
    pub net_dq: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Distance between the reached and the desired point, meters.
    pub residual: f64,
}

impl IkResult {
    /// `(net_dr, net_dq)` stacked like [`Limits`].
    pub fn offsets(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.net_dq.len() + 1);
        v[0] = self.net_dr;
        v.rows_mut(1, self.net_dq.len()).copy_from(&self.net_dq);
        v
    }

    pub fn arm_configuration(&self, q_seed: &DVector<f64>) -> DVector<f64> {
        q_seed + &self.net_dq
    }
}

fn damped_step(jac: &DMatrix<f64>, err: &Vector3<f64>, damping: f64) -> DVector<f64> {
    let jjt = jac * jac.transpose() + DMatrix::identity(3, 3) * (damping * damping);
    let e = DVector::from_column_slice(err.as_slice());
    match jjt.clone().cholesky() {
        Some(chol) => jac.transpose() * chol.solve(&e),
        // λ = 0 at an exact singularity: fall back to the SVD pseudo-inverse.
        None => jac
            .clone()
            .pseudo_inverse(1e-12)
            .map(|pinv| pinv * e)
            .unwrap_or_else(|_| DVector::zeros(jac.ncols())),
    }
}

/// Iterative damped Gauss–Newton IK whose cumulative offsets from
/// `(0, q_seed)` are clamped to `limits` after every step.
///
/// Non-convergence is reported through [`IkResult::converged`]; the returned
/// offsets are the best iterate seen and always lie inside `limits`.
pub fn clipped_ik(
    chain: &KinematicChain,
    target: &Vector3<f64>,
    q_seed: &DVector<f64>,
    limits: &Limits,
    opts: &IkOptions,
) -> Result<IkResult, KinematicsError> {
    chain.check_arm(q_seed)?;
    if limits.len() != chain.dof() {
        return Err(KinematicsError::DimensionMismatch {
            what: "limits",
            expected: chain.dof(),
            found: limits.len(),
        });
    }
    let n = chain.dof();
    let mut net = DVector::zeros(n);
    let mut x = chain.forward(0.0, q_seed)?;
    let mut residual = (target - x).norm();
    let mut best = (net.clone(), residual);
    let mut converged = residual.is_finite() && residual <= opts.tol;
    let mut iterations = 0;
    let target_ok = target.iter().all(|v| v.is_finite());

    while target_ok && iterations < opts.max_iter {
        iterations += 1;
        let q = q_seed + net.rows(1, n - 1);
        let jac = chain.jacobian(net[0], &q)?;
        let mut step = damped_step(&jac, &(target - x), opts.damping);
        if let Some(cap) = opts.step_cap {
            step.apply(|s| *s = s.clamp(-cap, cap));
        }
        if !step.iter().all(|s| s.is_finite()) {
            break;
        }
        net = clipped_increment(&net, &step, limits.lower(), limits.upper());
        let q = q_seed + net.rows(1, n - 1);
        x = chain.forward(net[0], &q)?;
        residual = (target - x).norm();
        if residual < best.1 {
            best = (net.clone(), residual);
        }
        converged = residual <= opts.tol;
        if converged {
            break;
        }
    }
    let (net, residual) = if converged { (net, residual) } else { best };
    Ok(IkResult {
        net_dr: net[0],
        net_dq: net.rows(1, n - 1).into_owned(),
        converged,
        iterations,
        residual,
    })
}
