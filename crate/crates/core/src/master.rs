//! Virtual-decomposition control of a serial chain: per-body required net
//! forces with inertial (NAL) and RBF adaptation, barrier-constrained joint
//! control, and torque recomposition. The master side adds the admittance
//! law for its required tip velocity and the augmented human-arm model; the
//! surrogate reuses [`ChainController`] unchanged for its links.

use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};
use thiserror::Error;

use crate::chain::{pseudo_inverse, ChainError, ChainForces, ChainKinematics, ChainModel, ChainMotion, JointState};
use crate::estimation::{EstimationError, EstimatorGains, RbfNetwork};
use crate::real::{abs, Real};
use crate::rigid_body::{
    nal_step, regressor_mixed, s_matrix, GravityVector, InertialParams, NalState, Regressor,
};
use crate::spatial::{ForceVector, MotionVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("joint {joint}: tracking error {error:.6} rad reached barrier bound {bound:.6} rad")]
    Barrier { joint: usize, error: f64, bound: f64 },
    #[error("invalid gains: {0}")]
    Gains(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

impl From<crate::spatial::SpatialError> for ControlError {
    fn from(e: crate::spatial::SpatialError) -> Self {
        ControlError::Chain(e.into())
    }
}

/// Local VDC gains for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct VdcGains<T: Real> {
    /// `K_Di`, one SPD matrix per body.
    pub body_feedback: Vec<Matrix6<T>>,
    /// `k_di`.
    pub joint_feedback: DVector<T>,
    /// `k_bi`.
    pub barrier_bound: DVector<T>,
    /// `c₁`.
    pub barrier_gain: T,
    /// Regularizer `δ` of the scalar inverse `ė† = ė/(ė² + δ²)`.
    pub barrier_rate_floor: T,
    /// NAL gain `γ` and leakage `γ₀` per body.
    pub nal_gamma: Vec<T>,
    pub nal_gamma0: Vec<T>,
    /// Scalar NAL gain per joint for `[armature, viscous]`.
    pub joint_gamma: Vec<T>,
    pub joint_gamma0: T,
    pub body_rbf: Vec<EstimatorGains<T>>,
    pub joint_rbf: Vec<EstimatorGains<T>>,
    /// Angular-rate half range (rad/s) spanned by the body RBF grid.
    pub body_rbf_range: T,
    /// Joint position and rate half ranges spanned by the joint RBF grid.
    pub joint_rbf_range: (T, T),
    pub adapt: bool,
}

/// Scalar description of [`VdcGains`]; per-body quantities scale with the
/// nominal link inertia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdcGainSpec<T: Real> {
    pub bandwidth: T,
    pub barrier_bound: T,
    pub barrier_gain: T,
    pub barrier_rate_floor: T,
    pub nal_gamma: T,
    pub nal_gamma0: T,
    pub joint_gamma: T,
    pub joint_gamma0: T,
    pub rbf: EstimatorGains<T>,
    pub adapt: bool,
}

impl<T: Real> VdcGainSpec<T> {
    pub fn default_master() -> Self {
        Self {
            bandwidth: T::lit(120.0),
            barrier_bound: T::lit(0.2),
            barrier_gain: T::one(),
            barrier_rate_floor: T::lit(0.05),
            nal_gamma: T::lit(50.0),
            nal_gamma0: T::lit(1e-4),
            joint_gamma: T::lit(50.0),
            joint_gamma0: T::lit(1e-4),
            rbf: EstimatorGains {
                weight_rate: T::lit(0.5),
                weight_leak: T::lit(1e-3),
                bias_rate: T::lit(0.5),
                bias_leak: T::lit(1e-3),
            },
            adapt: true,
        }
    }

    pub fn default_surrogate() -> Self {
        Self {
            bandwidth: T::lit(40.0),
            ..Self::default_master()
        }
    }

    pub fn build(&self, chain: &ChainModel<T>) -> Result<VdcGains<T>, ControlError> {
        let positive = [
            (self.bandwidth, "bandwidth"),
            (self.barrier_bound, "barrier bound"),
            (self.barrier_gain, "barrier gain"),
            (self.barrier_rate_floor, "barrier rate floor"),
            (self.nal_gamma, "NAL gain"),
            (self.nal_gamma0, "NAL leakage"),
            (self.joint_gamma, "joint NAL gain"),
            (self.joint_gamma0, "joint NAL leakage"),
        ];
        for (v, name) in positive {
            if v <= T::zero() {
                return Err(ControlError::Gains(format!("{name} must be positive")));
            }
        }
        self.rbf.validate()?;
        let n = chain.dof();
        let floor = T::lit(1e-3);
        let body_feedback = chain
            .links
            .iter()
            .map(|l| (l.inertia.spatial_inertia() + Matrix6::identity() * floor) * self.bandwidth)
            .collect();
        let joint_feedback = DVector::from_iterator(
            n,
            chain.links.iter().map(|l| (l.armature + floor) * self.bandwidth),
        );
        let mass = |l: &crate::chain::Link<T>| l.inertia.mass.max(floor);
        let arm = |l: &crate::chain::Link<T>| l.armature.max(floor);
        Ok(VdcGains {
            body_feedback,
            joint_feedback,
            barrier_bound: DVector::from_element(n, self.barrier_bound),
            barrier_gain: self.barrier_gain,
            barrier_rate_floor: self.barrier_rate_floor,
            nal_gamma: chain.links.iter().map(|l| self.nal_gamma * mass(l)).collect(),
            nal_gamma0: chain.links.iter().map(|l| self.nal_gamma0 / mass(l)).collect(),
            joint_gamma: chain.links.iter().map(|l| self.joint_gamma * arm(l)).collect(),
            joint_gamma0: self.joint_gamma0,
            body_rbf: chain.links.iter().map(|l| self.rbf.scaled(mass(l))).collect(),
            joint_rbf: chain.links.iter().map(|l| self.rbf.scaled(arm(l))).collect(),
            body_rbf_range: T::one(),
            joint_rbf_range: (T::pi(), T::one()),
            adapt: self.adapt,
        })
    }
}

/// Robot link parameters plus the share of the operator's arm carried by
/// each link.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBodyParams<T: Real> {
    pub robot: Vec<InertialParams<T>>,
    pub human: Vec<InertialParams<T>>,
}

impl<T: Real> AugmentedBodyParams<T> {
    /// Adds `mass` (at the link's center of mass) and isotropic `inertia`
    /// to every link listed in `links` (0-based).
    pub fn with_human_share(chain: &ChainModel<T>, links: &[usize], mass: T, inertia: T) -> Self {
        let robot: Vec<_> = chain.links.iter().map(|l| l.inertia).collect();
        let human = (0..chain.dof())
            .map(|i| {
                if !links.contains(&i) {
                    return InertialParams::zero();
                }
                let r = &robot[i];
                let com = if r.mass > T::zero() {
                    r.first_moment / r.mass
                } else {
                    Vector3::zeros()
                };
                InertialParams::from_com(mass, com, nalgebra::Matrix3::identity() * inertia)
            })
            .collect();
        Self { robot, human }
    }

    /// `𝓜_B = M_r + M_h` per link.
    pub fn combined(&self) -> Vec<InertialParams<T>> {
        self.robot
            .iter()
            .zip(&self.human)
            .map(|(r, h)| r.combined(h))
            .collect()
    }

    /// A copy of `chain` whose links carry the combined parameters, with
    /// `extra_damping` added to every joint.
    pub fn augmented_chain(&self, chain: &ChainModel<T>, extra_damping: T) -> ChainModel<T> {
        let mut out = chain.clone();
        for (l, p) in out.links.iter_mut().zip(self.combined()) {
            l.inertia = p;
            l.damping += extra_damping;
        }
        out
    }
}

/// `V_mr = V_md − A·𝐅_m`.
pub fn required_master_velocity<T: Real>(v_md: &Vector6<T>, f_m: &Vector6<T>, a: &Matrix6<T>) -> Vector6<T> {
    v_md - a * f_m
}

/// `q̇_r = J†·V_mr`; rank-deficient Jacobians are reported so the caller
/// can fall back to a damped inverse.
pub fn required_joint_velocity_master<T: Real>(
    j: &DMatrix<T>,
    v_mr: &Vector6<T>,
) -> Result<DVector<T>, ChainError> {
    let pinv = pseudo_inverse(j)?;
    Ok(pinv * DVector::from_column_slice(v_mr.as_slice()))
}

/// `F*_r = K_D(V_r − V) + Ŵᵀψ + ε̂ + Y·φ̂`.
pub fn body_control_force<T: Real>(
    v_r: &MotionVector<T>,
    v: &MotionVector<T>,
    y: &Regressor<T>,
    phi_hat: &InertialParams<T>,
    rbf: &Vector6<T>,
    k_d: &Matrix6<T>,
) -> Result<ForceVector<T>, ControlError> {
    let err = v_r.try_sub(v)?;
    let f = k_d * err.to_vector() + rbf + y * phi_hat.to_vector();
    Ok(ForceVector::from_vector(&f, v.frame))
}

/// Barrier term `(e + c₁ė†e²)/(k_b² − e²)` with `ė† = ė/(ė² + δ²)`.
pub fn barrier_term<T: Real>(e: T, e_dot: T, k_b: T, c1: T, delta: T) -> Result<T, ControlError> {
    let margin = k_b * k_b - e * e;
    if abs(e) >= k_b || margin <= T::zero() {
        return Err(ControlError::Barrier {
            joint: 0,
            error: e.as_f64(),
            bound: k_b.as_f64(),
        });
    }
    let e_dot_inv = e_dot / (e_dot * e_dot + delta * delta);
    Ok((e + c1 * e_dot_inv * e * e) / margin)
}

/// Inputs of the joint law other than the tracking errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLaw<T: Real> {
    pub k_d: T,
    pub k_b: T,
    pub c1: T,
    pub rate_floor: T,
}

/// `τ*_r = k_d(q̇_r − q̇) + adaptive + barrier(e_a, ė)`, where `adaptive`
/// already sums the joint regressor feedforward and RBF output.
pub fn joint_control_torque<T: Real>(
    e_a: T,
    e_dot: T,
    law: &JointLaw<T>,
    adaptive: T,
) -> Result<T, ControlError> {
    let b = barrier_term(e_a, e_dot, law.k_b, law.c1, law.rate_floor)?;
    Ok(law.k_d * e_dot + adaptive + b)
}

/// `τ_r = τ*_r + σᵀ·F_r`.
pub fn recompose_torque<T: Real>(tau_star: T, sigma: &Vector6<T>, f_r: &ForceVector<T>) -> T {
    tau_star + sigma.dot(&f_r.to_vector())
}

/// Everything the controller produced in one step.
#[derive(Debug, Clone)]
pub struct ControlStep<T: Real> {
    pub tau: DVector<T>,
    pub tau_star: DVector<T>,
    pub required: ChainMotion<T>,
    pub actual: ChainMotion<T>,
    pub required_forces: ChainForces<T>,
    pub joint_error: DVector<T>,
    pub joint_rate_error: DVector<T>,
    /// `min_i (k_bi − |e_ai|)/k_bi`.
    pub barrier_margin: T,
}

/// Shared VDC controller for one serial chain.
#[derive(Debug, Clone)]
pub struct ChainController<T: Real> {
    pub model: ChainModel<T>,
    pub gains: VdcGains<T>,
    pub nal: Vec<NalState<T>>,
    /// Estimates of `[armature, viscous]` per joint.
    pub joint_params: Vec<[T; 2]>,
    pub body_rbf: Vec<RbfNetwork<T>>,
    pub joint_rbf: Vec<RbfNetwork<T>>,
    pub q_r: DVector<T>,
    qd_r_prev: Option<DVector<T>>,
}

const PARAM_FLOOR: f64 = 1e-8;

impl<T: Real> ChainController<T> {
    /// `model` supplies kinematics and the initial inertial estimates.
    pub fn new(model: ChainModel<T>, gains: VdcGains<T>, q0: DVector<T>) -> Result<Self, ControlError> {
        let n = model.dof();
        if gains.body_feedback.len() != n
            || gains.joint_feedback.len() != n
            || gains.barrier_bound.len() != n
            || gains.nal_gamma.len() != n
            || gains.nal_gamma0.len() != n
            || gains.joint_gamma.len() != n
            || gains.body_rbf.len() != n
            || gains.joint_rbf.len() != n
        {
            return Err(ControlError::Gains(format!("gain vectors must have {n} entries")));
        }
        if q0.len() != n {
            return Err(ChainError::Dimension { expected: n, found: q0.len() }.into());
        }
        let nal = model
            .links
            .iter()
            .zip(gains.nal_gamma.iter().zip(&gains.nal_gamma0))
            .map(|(l, (&g, &g0))| NalState::new(&l.inertia, g, g0))
            .collect();
        let joint_params = model
            .links
            .iter()
            .map(|l| [l.armature.max(T::lit(PARAM_FLOOR)), l.damping.max(T::lit(PARAM_FLOOR))])
            .collect();
        let w = gains.body_rbf_range;
        let body_rbf = (0..n)
            .map(|_| RbfNetwork::grid(&[-w, -w, -w], &[w, w, w], 3, 6))
            .collect::<Result<Vec<_>, _>>()?;
        let (qr, vr) = gains.joint_rbf_range;
        let joint_rbf = (0..n)
            .map(|_| RbfNetwork::grid(&[-qr, -vr], &[qr, vr], 3, 1))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            model,
            gains,
            nal,
            joint_params,
            body_rbf,
            joint_rbf,
            q_r: q0,
            qd_r_prev: None,
        })
    }

    pub fn dof(&self) -> usize {
        self.model.dof()
    }

    /// Current inertial estimates per body.
    pub fn body_estimates(&self) -> Vec<InertialParams<T>> {
        self.nal.iter().map(|s| s.params()).collect()
    }

    /// Re-anchors the integrated joint reference, e.g. after a clutch.
    pub fn reset_reference(&mut self, q: &DVector<T>) {
        self.q_r = q.clone();
        self.qd_r_prev = None;
    }

    /// One control cycle: computes joint torques for the required joint
    /// velocity `qd_r` and required tip force `tip_required` (in `T_n`),
    /// then advances every adaptation law by `dt`.
    pub fn step(
        &mut self,
        kin: &ChainKinematics<T>,
        js: &JointState<T>,
        qd_r: &DVector<T>,
        tip_required: &ForceVector<T>,
        gravity: &GravityVector<T>,
        dt: T,
    ) -> Result<ControlStep<T>, ControlError> {
        let n = self.dof();
        let qdd_r = match &self.qd_r_prev {
            Some(prev) => (qd_r - prev) / dt,
            None => DVector::zeros(n),
        };
        let actual = self.model.propagate_velocities(kin, &js.qd)?;
        let required = self.model.required_velocities(kin, qd_r)?;
        let base_acc = MotionVector::zero(crate::chain::cut_before(0));
        let acc_r = self
            .model
            .propagate_accelerations(kin, &required, &js.qd, &qdd_r, &base_acc)?;
        let g_body = kin.gravity_in_bodies(gravity);

        let mut net_r = Vec::with_capacity(n);
        let mut regressors = Vec::with_capacity(n);
        let mut body_chi = Vec::with_capacity(n);
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            let v = &actual.body[i];
            let y = regressor_mixed(&v.angular, &required.body[i], &acc_r.body[i], &g_body[i])?;
            let chi = DVector::from_column_slice(v.angular.as_slice());
            let rbf = self.body_rbf[i].eval(&chi)?;
            let rbf6 = Vector6::from_column_slice(rbf.as_slice());
            let phi_hat = self.nal[i].params();
            net_r.push(body_control_force(
                &required.body[i],
                v,
                &y,
                &phi_hat,
                &rbf6,
                &self.gains.body_feedback[i],
            )?);
            regressors.push(y);
            body_chi.push(chi);
        }
        let forces = self.model.required_forces(kin, &net_r, tip_required)?;

        let e = &self.q_r - &js.q;
        let e_dot = qd_r - &js.qd;
        let mut tau_star = DVector::zeros(n);
        let mut tau = DVector::zeros(n);
        let mut joint_chi = Vec::with_capacity(n);
        let mut margin = T::one();
        for i in 0..n {
            let law = JointLaw {
                k_d: self.gains.joint_feedback[i],
                k_b: self.gains.barrier_bound[i],
                c1: self.gains.barrier_gain,
                rate_floor: self.gains.barrier_rate_floor,
            };
            let chi = DVector::from_vec(vec![js.q[i], js.qd[i]]);
            let [arm, visc] = self.joint_params[i];
            let adaptive = arm * qdd_r[i] + visc * qd_r[i] + self.joint_rbf[i].eval(&chi)?[0];
            tau_star[i] = joint_control_torque(e[i], e_dot[i], &law, adaptive).map_err(|err| match err {
                ControlError::Barrier { error, bound, .. } => ControlError::Barrier { joint: i + 1, error, bound },
                other => other,
            })?;
            tau[i] = recompose_torque(tau_star[i], &self.model.links[i].screw(), &forces.body[i]);
            margin = margin.min((law.k_b - abs(e[i])) / law.k_b);
            joint_chi.push(chi);
        }

        if self.gains.adapt {
            for i in 0..n {
                let dv = required.body[i].try_sub(&actual.body[i])?.to_vector();
                let y = regressors[i].transpose() * dv;
                self.nal[i] = nal_step(&self.nal[i], &s_matrix(&y), dt);
                let dv_d = DVector::from_column_slice(dv.as_slice());
                self.body_rbf[i].adapt(&body_chi[i], &dv_d, &self.gains.body_rbf[i], dt)?;

                let ya = [qdd_r[i], qd_r[i]];
                let g = self.gains.joint_gamma[i];
                for (p, yk) in self.joint_params[i].iter_mut().zip(ya) {
                    let rate = *p * *p * (yk * e_dot[i] - self.gains.joint_gamma0 * *p) / g;
                    *p = (*p + rate * dt).max(T::lit(PARAM_FLOOR));
                }
                self.joint_rbf[i].adapt(
                    &joint_chi[i],
                    &DVector::from_element(1, e_dot[i]),
                    &self.gains.joint_rbf[i],
                    dt,
                )?;
            }
        }
        self.q_r += qd_r * dt;
        self.qd_r_prev = Some(qd_r.clone());

        Ok(ControlStep {
            tau,
            tau_star,
            required,
            actual,
            required_forces: forces,
            joint_error: e,
            joint_rate_error: e_dot,
            barrier_margin: margin,
        })
    }
}
