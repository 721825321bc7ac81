//! Serial-chain description and the recursions built on it: forward velocity
//! and acceleration propagation, backward force propagation, Jacobians,
//! pseudo/damped inverses, joint-space dynamics and pose errors.
//!
//! Link `i` carries a fixed transform from the previous cutting frame
//! `T_{i−1}` to its body frame `B_i` (at zero joint displacement), the joint
//! screw `σ_i` expressed in `B_i`, and a fixed transform from `B_i` to its own
//! cutting frame `T_i`. `T_0` is the chain base and `T_n` the tip.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use crate::real::{abs, Real};
use crate::rigid_body::{net_spatial_force, GravityVector, InertialParams};
use crate::spatial::{
    transform_force, transform_motion, ForceVector, Frame, FrameTransform, MotionVector,
    RotationMatrix, SpatialError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("joint state has {found} entries, chain has {expected} joints")]
    Dimension { expected: usize, found: usize },
    #[error("link {link}: {reason}")]
    InvalidLink { link: usize, reason: String },
    #[error("Jacobian is rank deficient (σ_min/σ_max = {ratio:e}); use the damped least-squares inverse")]
    RankDeficient { ratio: f64 },
    #[error("damping must be non-negative, got {0}")]
    NegativeDamping(f64),
    #[error("JᵀJ + λI is singular; use λ > 0")]
    Singular,
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link<T: Real> {
    pub name: String,
    pub kind: JointKind,
    /// Unit joint axis in `B_i`.
    pub axis: Vector3<T>,
    /// `^{T_{i−1}} T_{B_i}` at zero joint displacement.
    pub parent_to_body: FrameTransform<T>,
    /// `^{B_i} T_{T_i}`.
    pub body_to_tip: FrameTransform<T>,
    /// Inertial parameters in `B_i`.
    pub inertia: InertialParams<T>,
    pub lower: T,
    pub upper: T,
    /// Rotor/gear inertia reflected to the joint (kg·m² or kg).
    pub armature: T,
    /// Viscous joint damping.
    pub damping: T,
}

impl<T: Real> Link<T> {
    /// Screw `σ_i = [linear; angular]` in `B_i`.
    pub fn screw(&self) -> Vector6<T> {
        let mut s = Vector6::zeros();
        match self.kind {
            JointKind::Revolute => s.fixed_rows_mut::<3>(3).copy_from(&self.axis),
            JointKind::Prismatic => s.fixed_rows_mut::<3>(0).copy_from(&self.axis),
        }
        s
    }

    fn screw_motion(&self, i: usize) -> MotionVector<T> {
        MotionVector::from_vector(&self.screw(), body(i))
    }

    /// `^{T_{i−1}} T_{B_i}(q)`.
    pub fn joint_transform(&self, q: T) -> FrameTransform<T> {
        let offset = &self.parent_to_body;
        let motion = match self.kind {
            JointKind::Revolute => FrameTransform::new(
                offset.child,
                offset.child,
                RotationMatrix::from_axis_angle(&self.axis, q),
                Vector3::zeros(),
            ),
            JointKind::Prismatic => {
                FrameTransform::translation(offset.child, offset.child, self.axis * q)
            }
        };
        FrameTransform {
            parent: offset.parent,
            child: offset.child,
            rotation: offset.rotation.compose(&motion.rotation),
            translation: offset.translation + offset.rotation.matrix() * motion.translation,
        }
    }
}

/// Frame label of body `i` (1-based).
pub fn body(i: usize) -> Frame {
    Frame::Body((i + 1) as u8)
}

/// Frame label of the cutting frame after link `i` (0-based); `cut_before(0)` is the base.
pub fn cut_after(i: usize) -> Frame {
    Frame::Cut((i + 1) as u8)
}

pub fn cut_before(i: usize) -> Frame {
    Frame::Cut(i as u8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel<T: Real> {
    pub name: String,
    pub links: Vec<Link<T>>,
}

/// Joint positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState<T: Real> {
    pub q: DVector<T>,
    pub qd: DVector<T>,
}

impl<T: Real> JointState<T> {
    pub fn new(q: DVector<T>, qd: DVector<T>) -> Self {
        Self { q, qd }
    }

    pub fn at_rest(q: DVector<T>) -> Self {
        let n = q.len();
        Self::new(q, DVector::zeros(n))
    }
}

/// Tip pose in the chain base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub position: Vector3<T>,
    pub orientation: UnitQuaternion<T>,
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }
}

/// Joint-dependent transforms evaluated at one configuration.
#[derive(Debug, Clone)]
pub struct ChainKinematics<T: Real> {
    /// `^{T_{i−1}} T_{B_i}(q_i)`.
    pub parent_to_body: Vec<FrameTransform<T>>,
    /// `^{T_0} T_{B_i}`.
    pub base_to_body: Vec<FrameTransform<T>>,
    /// `^{T_0} T_{T_n}`.
    pub base_to_tip: FrameTransform<T>,
}

impl<T: Real> ChainKinematics<T> {
    /// Gravity expressed in each body frame.
    pub fn gravity_in_bodies(&self, g: &GravityVector<T>) -> Vec<Vector3<T>> {
        self.base_to_body
            .iter()
            .map(|t| g.in_body(t.rotation.matrix()))
            .collect()
    }

    pub fn tip_pose(&self) -> Pose<T> {
        Pose {
            position: self.base_to_tip.translation,
            orientation: self.base_to_tip.rotation.to_quaternion(),
        }
    }

    pub fn tip_rotation(&self) -> Matrix3<T> {
        *self.base_to_tip.rotation.matrix()
    }
}

/// Per-link spatial velocities (or accelerations).
#[derive(Debug, Clone)]
pub struct ChainMotion<T: Real> {
    /// `^{B_i} V`.
    pub body: Vec<MotionVector<T>>,
    /// `^{T_i} V`.
    pub cut: Vec<MotionVector<T>>,
}

impl<T: Real> ChainMotion<T> {
    pub fn tip(&self) -> &MotionVector<T> {
        self.cut.last().expect("non-empty chain")
    }
}

/// Per-link spatial forces and the joint torques they induce.
#[derive(Debug, Clone)]
pub struct ChainForces<T: Real> {
    /// `^{B_j} F`.
    pub body: Vec<ForceVector<T>>,
    /// `^{T_{j−1}} F`.
    pub cut: Vec<ForceVector<T>>,
    /// `σ_jᵀ ^{B_j} F`.
    pub torques: DVector<T>,
}

impl<T: Real> ChainModel<T> {
    pub fn new(name: impl Into<String>, links: Vec<Link<T>>) -> Result<Self, ChainError> {
        let chain = Self {
            name: name.into(),
            links,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        let tol = T::lit(1.0e-9);
        for (i, l) in self.links.iter().enumerate() {
            let bad = |reason: &str| ChainError::InvalidLink {
                link: i + 1,
                reason: reason.to_string(),
            };
            if abs(l.axis.norm() - T::one()) > tol {
                return Err(bad("joint axis is not unit-norm"));
            }
            if l.parent_to_body.parent != cut_before(i) || l.parent_to_body.child != body(i) {
                return Err(bad("parent-to-body transform has wrong frame labels"));
            }
            if l.body_to_tip.parent != body(i) || l.body_to_tip.child != cut_after(i) {
                return Err(bad("body-to-tip transform has wrong frame labels"));
            }
            if l.inertia.mass < T::zero() || l.armature < T::zero() || l.damping < T::zero() {
                return Err(bad("negative mass, armature or damping"));
            }
            if l.lower > l.upper {
                return Err(bad("joint limits are inverted"));
            }
        }
        Ok(())
    }

    fn check_len(&self, v: &DVector<T>) -> Result<(), ChainError> {
        if v.len() != self.dof() {
            return Err(ChainError::Dimension {
                expected: self.dof(),
                found: v.len(),
            });
        }
        Ok(())
    }

    pub fn kinematics(&self, q: &DVector<T>) -> Result<ChainKinematics<T>, ChainError> {
        self.check_len(q)?;
        let mut parent_to_body = Vec::with_capacity(self.dof());
        let mut base_to_body = Vec::with_capacity(self.dof());
        let mut base_to_cut = FrameTransform::identity(cut_before(0), cut_before(0));
        for (i, l) in self.links.iter().enumerate() {
            let pb = l.joint_transform(q[i]);
            let b = base_to_cut.compose(&pb)?;
            base_to_cut = b.compose(&l.body_to_tip)?;
            parent_to_body.push(pb);
            base_to_body.push(b);
        }
        Ok(ChainKinematics {
            parent_to_body,
            base_to_body,
            base_to_tip: base_to_cut,
        })
    }

    pub fn forward_kinematics(&self, q: &DVector<T>) -> Result<Pose<T>, ChainError> {
        Ok(self.kinematics(q)?.tip_pose())
    }

    /// Forward velocity recursion with a fixed base.
    pub fn forward_velocities(&self, js: &JointState<T>) -> Result<ChainMotion<T>, ChainError> {
        self.check_len(&js.qd)?;
        let kin = self.kinematics(&js.q)?;
        self.propagate_velocities(&kin, &js.qd)
    }

    /// `^{B_i}V = Uᵀ ^{T_{i−1}}V + σ_i q̇_i`, `^{T_i}V = Uᵀ ^{B_i}V`.
    pub fn propagate_velocities(
        &self,
        kin: &ChainKinematics<T>,
        qd: &DVector<T>,
    ) -> Result<ChainMotion<T>, ChainError> {
        self.check_len(qd)?;
        let n = self.dof();
        let mut body_v = Vec::with_capacity(n);
        let mut cut_v = Vec::with_capacity(n);
        let mut prev = MotionVector::zero(cut_before(0));
        for (i, l) in self.links.iter().enumerate() {
            let b = transform_motion(&kin.parent_to_body[i], &prev)? + l.screw_motion(i) * qd[i];
            let t = transform_motion(&l.body_to_tip, &b)?;
            body_v.push(b);
            cut_v.push(t);
            prev = t;
        }
        Ok(ChainMotion {
            body: body_v,
            cut: cut_v,
        })
    }

    /// Same recursion driven by required joint velocities.
    pub fn required_velocities(
        &self,
        kin: &ChainKinematics<T>,
        qd_r: &DVector<T>,
    ) -> Result<ChainMotion<T>, ChainError> {
        self.propagate_velocities(kin, qd_r)
    }

    /// Acceleration recursion in body coordinates:
    /// `a_i = Uᵀ a_{i−1} + σ_i q̈_i + v_i ×ₘ (σ_i q̇_i)`, where `v` are the
    /// velocities produced by the same `q̇`.
    pub fn propagate_accelerations(
        &self,
        kin: &ChainKinematics<T>,
        vel: &ChainMotion<T>,
        qd: &DVector<T>,
        qdd: &DVector<T>,
        base_acc: &MotionVector<T>,
    ) -> Result<ChainMotion<T>, ChainError> {
        self.check_len(qdd)?;
        let n = self.dof();
        let mut body_a = Vec::with_capacity(n);
        let mut cut_a = Vec::with_capacity(n);
        let mut prev = *base_acc;
        for (i, l) in self.links.iter().enumerate() {
            let s = l.screw_motion(i);
            let b = transform_motion(&kin.parent_to_body[i], &prev)?
                + s * qdd[i]
                + vel.body[i].cross_motion(&(s * qd[i]))?;
            let t = transform_motion(&l.body_to_tip, &b)?;
            body_a.push(b);
            cut_a.push(t);
            prev = t;
        }
        Ok(ChainMotion {
            body: body_a,
            cut: cut_a,
        })
    }

    /// Backward force recursion `^{B_j}F = U ^{T_j}F + ^{B_j}F*`,
    /// `^{T_{j−1}}F = U ^{B_j}F`, with torques `σ_jᵀ ^{B_j}F`.
    ///
    /// `tip` is `^{T_n}F`, the wrench the chain exerts on whatever is
    /// attached at its tip.
    pub fn backward_forces(
        &self,
        kin: &ChainKinematics<T>,
        net: &[ForceVector<T>],
        tip: &ForceVector<T>,
    ) -> Result<ChainForces<T>, ChainError> {
        let n = self.dof();
        if net.len() != n {
            return Err(ChainError::Dimension {
                expected: n,
                found: net.len(),
            });
        }
        let mut body_f = vec![ForceVector::zero(Frame::World); n];
        let mut cut_f = vec![ForceVector::zero(Frame::World); n];
        let mut torques = DVector::zeros(n);
        let mut next = *tip;
        for j in (0..n).rev() {
            let l = &self.links[j];
            let b = transform_force(&l.body_to_tip, &next)?.try_add(&net[j])?;
            torques[j] = l.screw().dot(&b.to_vector());
            let c = transform_force(&kin.parent_to_body[j], &b)?;
            body_f[j] = b;
            cut_f[j] = c;
            next = c;
        }
        Ok(ChainForces {
            body: body_f,
            cut: cut_f,
            torques,
        })
    }

    /// Same recursion driven by required net forces.
    pub fn required_forces(
        &self,
        kin: &ChainKinematics<T>,
        net_r: &[ForceVector<T>],
        tip_r: &ForceVector<T>,
    ) -> Result<ChainForces<T>, ChainError> {
        self.backward_forces(kin, net_r, tip_r)
    }

    /// Tip Jacobian in the tip frame `T_n`: `^{T_n}V = J q̇`.
    pub fn jacobian(&self, q: &DVector<T>) -> Result<DMatrix<T>, ChainError> {
        let kin = self.kinematics(q)?;
        self.jacobian_from(&kin)
    }

    pub fn jacobian_from(&self, kin: &ChainKinematics<T>) -> Result<DMatrix<T>, ChainError> {
        let n = self.dof();
        let mut j = DMatrix::zeros(6, n);
        for (i, l) in self.links.iter().enumerate() {
            let body_to_tip = kin.base_to_body[i]
                .inverse()
                .relabel(body(i), cut_before(0))
                .compose(&kin.base_to_tip)?;
            let col = transform_motion(&body_to_tip, &l.screw_motion(i))?;
            j.column_mut(i).copy_from(&col.to_vector());
        }
        Ok(j)
    }

    /// Tip Jacobian with both blocks rotated into base-aligned axes.
    pub fn jacobian_base_aligned(&self, kin: &ChainKinematics<T>) -> Result<DMatrix<T>, ChainError> {
        let j = self.jacobian_from(kin)?;
        Ok(rotate_rows(&kin.tip_rotation(), &j))
    }

    /// Inverse dynamics: joint torques producing `q̈` at `(q, q̇)` while the
    /// tip exerts `tip` (in `T_n`), including armature and joint damping.
    pub fn inverse_dynamics(
        &self,
        kin: &ChainKinematics<T>,
        qd: &DVector<T>,
        qdd: &DVector<T>,
        gravity: &GravityVector<T>,
        tip: &ForceVector<T>,
    ) -> Result<DVector<T>, ChainError> {
        let vel = self.propagate_velocities(kin, qd)?;
        let acc = self.propagate_accelerations(kin, &vel, qd, qdd, &MotionVector::zero(cut_before(0)))?;
        let g = kin.gravity_in_bodies(gravity);
        let net = self
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| net_spatial_force(&l.inertia, &vel.body[i], &acc.body[i], &g[i]))
            .collect::<Result<Vec<_>, _>>()?;
        let mut tau = self.backward_forces(kin, &net, tip)?.torques;
        for (i, l) in self.links.iter().enumerate() {
            tau[i] += l.armature * qdd[i] + l.damping * qd[i];
        }
        Ok(tau)
    }

    /// Joint-space mass matrix (including armature), assembled column by
    /// column from unit-acceleration inverse-dynamics calls.
    pub fn mass_matrix(&self, kin: &ChainKinematics<T>) -> Result<DMatrix<T>, ChainError> {
        let n = self.dof();
        let zero = DVector::zeros(n);
        let no_g = GravityVector(Vector3::zeros());
        let no_tip = ForceVector::zero(cut_after(n - 1));
        let mut h = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = T::one();
            let col = self.inverse_dynamics(kin, &zero, &e, &no_g, &no_tip)?;
            h.column_mut(k).copy_from(&col);
        }
        Ok((&h + h.transpose()) * T::lit(0.5))
    }

    /// Coriolis, centrifugal, gravity and damping torques.
    pub fn bias_torques(
        &self,
        kin: &ChainKinematics<T>,
        qd: &DVector<T>,
        gravity: &GravityVector<T>,
    ) -> Result<DVector<T>, ChainError> {
        let n = self.dof();
        self.inverse_dynamics(kin, qd, &DVector::zeros(n), gravity, &ForceVector::zero(cut_after(n - 1)))
    }

    /// Joint accelerations under torques `tau` while the tip exerts `tip`
    /// (in `T_n`). Returns `(q̈, H, bias)` so callers can reuse the model terms.
    pub fn forward_dynamics(
        &self,
        kin: &ChainKinematics<T>,
        qd: &DVector<T>,
        tau: &DVector<T>,
        gravity: &GravityVector<T>,
        tip: &ForceVector<T>,
    ) -> Result<Dynamics<T>, ChainError> {
        self.check_len(tau)?;
        let n = self.dof();
        let h = self.mass_matrix(kin)?;
        let bias = self.inverse_dynamics(kin, qd, &DVector::zeros(n), gravity, tip)?;
        let chol = h.clone().cholesky().ok_or(ChainError::Singular)?;
        let qdd = chol.solve(&(tau - &bias));
        Ok((qdd, h, bias))
    }

    /// Gravitational potential energy of the links.
    pub fn potential_energy(
        &self,
        q: &DVector<T>,
        gravity: &GravityVector<T>,
    ) -> Result<T, ChainError> {
        let kin = self.kinematics(q)?;
        let mut e = T::zero();
        for (i, l) in self.links.iter().enumerate() {
            if l.inertia.mass <= T::zero() {
                continue;
            }
            let com_local = l.inertia.first_moment / l.inertia.mass;
            let com = kin.base_to_body[i].transform_point(&com_local);
            e -= l.inertia.mass * gravity.0.dot(&com);
        }
        Ok(e)
    }

    /// Kinetic energy `½ q̇ᵀ H q̇`.
    pub fn kinetic_energy(&self, js: &JointState<T>) -> Result<T, ChainError> {
        let kin = self.kinematics(&js.q)?;
        let h = self.mass_matrix(&kin)?;
        Ok((js.qd.transpose() * h * &js.qd)[(0, 0)] * T::lit(0.5))
    }
}

/// `blockdiag(R, R) · M` for a 6-row matrix.
pub fn rotate_rows<T: Real>(r: &Matrix3<T>, m: &DMatrix<T>) -> DMatrix<T> {
    let mut out = m.clone();
    let top = r * m.rows(0, 3);
    let bottom = r * m.rows(3, 3);
    out.rows_mut(0, 3).copy_from(&top);
    out.rows_mut(3, 3).copy_from(&bottom);
    out
}

/// `[Rv; Rω]` for a 6-vector.
pub fn rotate6<T: Real>(r: &Matrix3<T>, v: &Vector6<T>) -> Vector6<T> {
    let mut out = Vector6::zeros();
    out.fixed_rows_mut::<3>(0)
        .copy_from(&(r * v.fixed_rows::<3>(0)));
    out.fixed_rows_mut::<3>(3)
        .copy_from(&(r * v.fixed_rows::<3>(3)));
    out
}

/// Relative tolerance on `σ_min/σ_max` below which a Jacobian is treated as
/// rank deficient.
pub const RANK_TOL: f64 = 1.0e-9;

/// Moore–Penrose inverse of a full-row-rank Jacobian.
pub fn pseudo_inverse<T: Real>(j: &DMatrix<T>) -> Result<DMatrix<T>, ChainError> {
    let svd = j.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let smin = s.iter().copied().fold(smax, |a, b| a.min(b));
    let rank_needed = j.nrows().min(j.ncols());
    if s.len() < rank_needed || smax <= T::zero() || smin / smax < T::lit(RANK_TOL) {
        let ratio = if smax > T::zero() { (smin / smax).as_f64() } else { 0.0 };
        return Err(ChainError::RankDeficient { ratio });
    }
    svd.pseudo_inverse(T::zero()).map_err(|_| ChainError::Singular)
}

/// Damped least-squares inverse `(JᵀJ + λI)⁻¹Jᵀ`.
pub fn dls_inverse<T: Real>(j: &DMatrix<T>, lambda: T) -> Result<DMatrix<T>, ChainError> {
    if lambda < T::zero() {
        return Err(ChainError::NegativeDamping(lambda.as_f64()));
    }
    let n = j.ncols();
    let jt = j.transpose();
    let a = &jt * j + DMatrix::identity(n, n) * lambda;
    let chol = a.cholesky().ok_or(ChainError::Singular)?;
    Ok(chol.solve(&jt))
}

/// Vector part of `q_s* · q_m`, sign-normalized so the scalar part is ≥ 0.
/// This is the master's orientation relative to the surrogate's, in the
/// surrogate's tip frame.
pub fn orientation_error<T: Real>(q_m: &UnitQuaternion<T>, q_s: &UnitQuaternion<T>) -> Vector3<T> {
    let d = q_s.conjugate() * q_m;
    let v = d.imag();
    if d.scalar() < T::zero() {
        -v
    } else {
        v
    }
}

/// Orientation error expressed in base-aligned axes: `R_s · vec(q_s* q_m)`,
/// equal to the sign-normalized vector part of `q_m · q_s*`.
pub fn orientation_error_base<T: Real>(
    q_m: &UnitQuaternion<T>,
    q_s: &UnitQuaternion<T>,
) -> Vector3<T> {
    q_s.transform_vector(&orientation_error(q_m, q_s))
}

/// `[κ_p·p_m − p_s; vec(q_s* q_m)]`; scaling applies to translation only.
pub fn pose_error<T: Real>(master: &Pose<T>, surrogate: &Pose<T>, kappa_p: T) -> Vector6<T> {
    let mut e = Vector6::zeros();
    e.fixed_rows_mut::<3>(0)
        .copy_from(&(master.position * kappa_p - surrogate.position));
    e.fixed_rows_mut::<3>(3)
        .copy_from(&orientation_error(&master.orientation, &surrogate.orientation));
    e
}

/// Pose error between the tips of two chains.
pub fn pose_and_quaternion_error<T: Real>(
    master: &ChainModel<T>,
    surrogate: &ChainModel<T>,
    q_master: &DVector<T>,
    q_surrogate: &DVector<T>,
    kappa_p: T,
) -> Result<Vector6<T>, ChainError> {
    let pm = master.forward_kinematics(q_master)?;
    let ps = surrogate.forward_kinematics(q_surrogate)?;
    Ok(pose_error(&pm, &ps, kappa_p))
}

/// Finite-difference tip twist in tip coordinates, used by tests as an
/// independent oracle for the Jacobian.
pub fn finite_difference_twist<T: Real>(
    chain: &ChainModel<T>,
    q: &DVector<T>,
    dq: &DVector<T>,
    h: T,
) -> Result<Vector6<T>, ChainError> {
    let plus = chain.kinematics(&(q + dq * h))?.base_to_tip;
    let minus = chain.kinematics(&(q - dq * h))?.base_to_tip;
    let mid = chain.kinematics(q)?.base_to_tip;
    let two_h = h + h;
    let rt = mid.rotation.matrix().transpose();
    let lin = rt * (plus.translation - minus.translation) / two_h;
    let dr: Matrix3<T> = (plus.rotation.matrix() - minus.rotation.matrix()) / two_h;
    let w_hat = rt * dr;
    let ang = Vector3::new(
        (w_hat[(2, 1)] - w_hat[(1, 2)]) * T::lit(0.5),
        (w_hat[(0, 2)] - w_hat[(2, 0)]) * T::lit(0.5),
        (w_hat[(1, 0)] - w_hat[(0, 1)]) * T::lit(0.5),
    );
    let mut out = Vector6::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&lin);
    out.fixed_rows_mut::<3>(3).copy_from(&ang);
    Ok(out)
}

/// `(q̈, H, bias)` returned by [`ChainModel::forward_dynamics`].
pub type Dynamics<T> = (DVector<T>, DMatrix<T>, DVector<T>);

/// Builder for links described by an offset, axis and mass properties.
#[derive(Debug, Clone)]
pub struct LinkSpec<T: Real> {
    pub name: String,
    pub kind: JointKind,
    pub axis: Vector3<T>,
    pub offset: Vector3<T>,
    pub offset_rpy: Vector3<T>,
    pub length: Vector3<T>,
    pub mass: T,
    pub com: Vector3<T>,
    pub inertia_com: Vector3<T>,
    pub lower: T,
    pub upper: T,
    pub armature: T,
    pub damping: T,
}

impl<T: Real> LinkSpec<T> {
    pub fn build(&self, index: usize) -> Result<Link<T>, ChainError> {
        let n = self.axis.norm();
        if n <= T::zero() {
            return Err(ChainError::InvalidLink {
                link: index + 1,
                reason: "zero joint axis".into(),
            });
        }
        let rot = RotationMatrix::from_rpy(self.offset_rpy.x, self.offset_rpy.y, self.offset_rpy.z);
        Ok(Link {
            name: self.name.clone(),
            kind: self.kind,
            axis: self.axis / n,
            parent_to_body: FrameTransform::new(cut_before(index), body(index), rot, self.offset),
            body_to_tip: FrameTransform::translation(body(index), cut_after(index), self.length),
            inertia: InertialParams::from_com(
                self.mass,
                self.com,
                Matrix3::from_diagonal(&self.inertia_com),
            ),
            lower: self.lower,
            upper: self.upper,
            armature: self.armature,
            damping: self.damping,
        })
    }
}

pub fn chain_from_specs<T: Real>(
    name: &str,
    specs: &[LinkSpec<T>],
) -> Result<ChainModel<T>, ChainError> {
    let links = specs
        .iter()
        .enumerate()
        .map(|(i, s)| s.build(i))
        .collect::<Result<Vec<_>, _>>()?;
    ChainModel::new(name, links)
}

fn rod_inertia<T: Real>(mass: T, length: T, axis: usize) -> Vector3<T> {
    let along = mass * T::lit(0.02) * T::lit(0.02) * T::lit(0.5);
    let across = mass * length * length / T::lit(12.0) + along;
    let mut v = Vector3::repeat(across);
    v[axis] = along.max(T::lit(1e-4) * mass);
    v
}

#[allow(clippy::too_many_arguments)]
fn spec<T: Real>(
    name: &str,
    axis: [f64; 3],
    length: f64,
    mass: f64,
    limit: f64,
    armature: f64,
    damping: f64,
) -> LinkSpec<T> {
    let len = Vector3::new(T::lit(length), T::zero(), T::zero());
    LinkSpec {
        name: name.into(),
        kind: JointKind::Revolute,
        axis: Vector3::new(T::lit(axis[0]), T::lit(axis[1]), T::lit(axis[2])),
        offset: Vector3::zeros(),
        offset_rpy: Vector3::zeros(),
        length: len,
        mass: T::lit(mass),
        com: len * T::lit(0.5),
        inertia_com: rod_inertia(T::lit(mass), T::lit(length.max(0.1)), 0),
        lower: T::lit(-limit),
        upper: T::lit(limit),
        armature: T::lit(armature),
        damping: T::lit(damping),
    }
}

/// Stand-in 7-DoF anthropomorphic arm: 3-axis shoulder, elbow, forearm roll,
/// 2-axis wrist; 0.3 m upper arm and forearm, 2 kg per link. The arm points
/// along +x at zero displacement.
pub fn default_master_specs<T: Real>() -> Vec<LinkSpec<T>> {
    let (a, d) = (0.02, 0.05);
    vec![
        spec("shoulder_yaw", [0.0, 0.0, 1.0], 0.0, 2.0, 2.5, a, d),
        spec("shoulder_pitch", [0.0, 1.0, 0.0], 0.0, 2.0, 2.5, a, d),
        spec("upper_arm_roll", [1.0, 0.0, 0.0], 0.3, 2.0, 2.5, a, d),
        spec("elbow", [0.0, 1.0, 0.0], 0.0, 2.0, 2.5, a, d),
        spec("forearm_roll", [1.0, 0.0, 0.0], 0.3, 2.0, 2.5, a, d),
        spec("wrist_pitch", [0.0, 1.0, 0.0], 0.0, 2.0, 2.5, a, d),
        spec("wrist_yaw", [0.0, 0.0, 1.0], 0.1, 2.0, 2.5, a, d),
    ]
}

/// Stand-in heavy 6-DoF manipulator: slewing column, boom, jib with 2 m
/// links, and a three-axis wrist carrying the tool.
pub fn default_surrogate_specs<T: Real>() -> Vec<LinkSpec<T>> {
    let mut column = spec("slew", [0.0, 0.0, 1.0], 0.0, 500.0, 3.0, 50.0, 200.0);
    column.length = Vector3::new(T::zero(), T::zero(), T::lit(1.0));
    column.com = Vector3::new(T::zero(), T::zero(), T::lit(0.5));
    column.inertia_com = rod_inertia(T::lit(500.0), T::lit(1.0), 2);
    vec![
        column,
        spec("boom", [0.0, 1.0, 0.0], 2.0, 400.0, 2.0, 40.0, 150.0),
        spec("jib", [0.0, 1.0, 0.0], 2.0, 300.0, 2.5, 30.0, 100.0),
        spec("wrist_roll", [1.0, 0.0, 0.0], 0.0, 150.0, 3.0, 5.0, 20.0),
        spec("wrist_pitch", [0.0, 1.0, 0.0], 0.0, 100.0, 3.0, 5.0, 20.0),
        spec("tool_roll", [1.0, 0.0, 0.0], 0.4, 100.0, 3.0, 5.0, 20.0),
    ]
}

pub fn default_master<T: Real>() -> ChainModel<T> {
    chain_from_specs("master", &default_master_specs()).expect("valid default master")
}

pub fn default_surrogate<T: Real>() -> ChainModel<T> {
    chain_from_specs("surrogate", &default_surrogate_specs()).expect("valid default surrogate")
}

/// 6×6 block used for task-space selection and scaling.
pub type Matrix6x6<T> = SMatrix<T, 6, 6>;
