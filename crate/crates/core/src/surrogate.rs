//! Surrogate-side control: damped least-squares kinematics, the contact
//! environment, tool force composition and the piston force output.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use thiserror::Error;

use crate::chain::{dls_inverse, ChainError};
use crate::real::Real;
use crate::spatial::{transform_force, ForceVector, FrameTransform, SpatialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error("gear ratio must be positive, got {0}")]
    GearRatio(f64),
    #[error("environment {0} must be non-negative")]
    Environment(&'static str),
    #[error("contact normal must be nonzero")]
    Normal,
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// Kelvin-Voigt contact with a plane, acting along its normal.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentModel<T: Real> {
    pub mass: T,
    pub damping: T,
    pub stiffness: T,
    /// A point on the surface, in the surrogate base frame.
    pub point: Vector3<T>,
    /// Unit normal pointing into the material, in the surrogate base frame.
    pub normal: Vector3<T>,
}

impl<T: Real> EnvironmentModel<T> {
    pub fn new(
        mass: T,
        damping: T,
        stiffness: T,
        point: Vector3<T>,
        normal: Vector3<T>,
    ) -> Result<Self, SurrogateError> {
        for (v, name) in [(mass, "mass"), (damping, "damping"), (stiffness, "stiffness")] {
            if v < T::zero() {
                return Err(SurrogateError::Environment(name));
            }
        }
        let len = normal.norm();
        if len <= T::zero() {
            return Err(SurrogateError::Normal);
        }
        Ok(Self {
            mass,
            damping,
            stiffness,
            point,
            normal: normal / len,
        })
    }

    /// Penetration depth `x_e = max(0, (p − p₀)·n)`.
    pub fn penetration(&self, tool_position: &Vector3<T>) -> T {
        (tool_position - self.point).dot(&self.normal).max(T::zero())
    }

    /// `N_c`: maps the scalar normal force to a tool-frame wrench, where
    /// `tool_rotation` is `^{base}R_T`.
    pub fn selection(&self, tool_rotation: &Matrix3<T>) -> Vector6<T> {
        let n = tool_rotation.transpose() * self.normal;
        Vector6::new(n.x, n.y, n.z, T::zero(), T::zero(), T::zero())
    }
}

/// Normal-direction contact state tracked by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactState<T: Real> {
    /// `x_e`.
    pub penetration: T,
    /// Normal velocity into the material.
    pub normal_velocity: T,
    /// Normal acceleration into the material.
    pub normal_acceleration: T,
}

impl<T: Real> ContactState<T> {
    pub fn free() -> Self {
        Self {
            penetration: T::zero(),
            normal_velocity: T::zero(),
            normal_acceleration: T::zero(),
        }
    }

    pub fn in_contact(&self) -> bool {
        self.penetration > T::zero()
    }
}

/// `f_e = M_e V̇ + D_e V + K_e x_e` along the normal, zero out of contact.
pub fn environment_force<T: Real>(env: &EnvironmentModel<T>, state: &ContactState<T>) -> T {
    if !state.in_contact() {
        return T::zero();
    }
    env.mass * state.normal_acceleration + env.damping * state.normal_velocity + env.stiffness * state.penetration
}

/// `f_ed`: the environment force with the required normal velocity and
/// acceleration substituted for the measured ones.
pub fn desired_environment_force<T: Real>(
    env: &EnvironmentModel<T>,
    state: &ContactState<T>,
    required_velocity: T,
    required_acceleration: T,
) -> T {
    environment_force(
        env,
        &ContactState {
            penetration: state.penetration,
            normal_velocity: required_velocity,
            normal_acceleration: required_acceleration,
        },
    )
}

/// `V_sr = V_sd − A·𝐅_s`.
pub fn required_surrogate_velocity<T: Real>(v_sd: &Vector6<T>, f_s: &Vector6<T>, a: &Matrix6<T>) -> Vector6<T> {
    v_sd - a * f_s
}

/// `q̇_r = (JᵀJ + λI)⁻¹Jᵀ V_sr`.
pub fn required_joint_velocity_surrogate<T: Real>(
    j: &DMatrix<T>,
    v_sr: &Vector6<T>,
    lambda: T,
) -> Result<DVector<T>, ChainError> {
    Ok(dls_inverse(j, lambda)? * DVector::from_column_slice(v_sr.as_slice()))
}

/// `^{G3}F_r = ^{G3}F*_r + ^{G3}U_T ^T F_r`.
pub fn tool_required_force<T: Real>(
    net_required: &ForceVector<T>,
    tool_to_tip: &FrameTransform<T>,
    tip_required: &ForceVector<T>,
) -> Result<ForceVector<T>, SurrogateError> {
    Ok(net_required.try_add(&transform_force(tool_to_tip, tip_required)?)?)
}

/// `f_cr = σᵀ ^{G3}F_r / r_w + f*_p`, where `f*_p` is the piston's own net
/// required force along its stroke.
pub fn required_piston_force<T: Real>(
    tool_force: &ForceVector<T>,
    piston_force: T,
    sigma: &Vector6<T>,
    gear_ratio: T,
) -> Result<T, SurrogateError> {
    if gear_ratio <= T::zero() {
        return Err(SurrogateError::GearRatio(gear_ratio.as_f64()));
    }
    Ok(sigma.dot(&tool_force.to_vector()) / gear_ratio + piston_force)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{body, cut_after, default_surrogate, pseudo_inverse};
    use crate::spatial::Frame;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn wall() -> EnvironmentModel<f64> {
        EnvironmentModel::new(0.0, 0.0, 1e5, Vector3::new(3.0, 0.0, 0.0), Vector3::x()).unwrap()
    }

    #[test]
    fn required_velocity_softening() {
        let a = Matrix6::identity() * 80e-5;
        let v = Vector6::new(0.1, 0.2, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(required_surrogate_velocity(&v, &Vector6::zeros(), &a), v);
        let f = Vector6::new(1000.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let r = required_surrogate_velocity(&Vector6::zeros(), &f, &a);
        assert_relative_eq!(r[0], -0.8, epsilon = 1e-12);
    }

    #[test]
    fn dls_examples() {
        let c = default_surrogate::<f64>();
        let q = DVector::from_vec(vec![0.1, -0.4, 1.0, 0.2, 0.7, -0.3]);
        let j = c.jacobian(&q).unwrap();
        assert_eq!(
            required_joint_velocity_surrogate(&j, &Vector6::zeros(), 1e-3).unwrap(),
            DVector::zeros(6)
        );
        let v = Vector6::new(0.1, -0.2, 0.05, 0.1, 0.0, 0.2);
        let exact = pseudo_inverse(&j).unwrap() * DVector::from_column_slice(v.as_slice());
        let dls = required_joint_velocity_surrogate(&j, &v, 1e-10).unwrap();
        assert!((dls - exact).norm() < 1e-6);
    }

    #[test]
    fn dls_bounded_at_wrist_singularity() {
        let c = default_surrogate::<f64>();
        let q = DVector::from_vec(vec![0.3, -0.4, 1.0, 0.5, 0.0, -0.5]);
        let j = c.jacobian(&q).unwrap();
        let s = j.clone().svd(false, false).singular_values;
        assert!(s.min() / s.max() < 1e-9);
        let lambda = 1e-2;
        let v = Vector6::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0);
        let out = required_joint_velocity_surrogate(&j, &v, lambda).unwrap();
        assert!(out.norm() <= v.norm() / (2.0 * lambda.sqrt()) + 1e-12);
    }

    #[test]
    fn environment_force_examples() {
        let env = wall();
        assert_eq!(env.penetration(&Vector3::new(2.9, 1.0, 0.0)), 0.0);
        assert_eq!(environment_force(&env, &ContactState::free()), 0.0);
        let x = env.penetration(&Vector3::new(3.01, -2.0, 5.0));
        assert_relative_eq!(x, 0.01, epsilon = 1e-12);
        let state = ContactState { penetration: x, normal_velocity: 0.0, normal_acceleration: 0.0 };
        assert_relative_eq!(environment_force(&env, &state), 1000.0, epsilon = 1e-8);
        let env = EnvironmentModel::new(2.0, 50.0, 2e4, Vector3::zeros(), Vector3::z() * 3.0).unwrap();
        let state = ContactState { penetration: 0.02, normal_velocity: 0.1, normal_acceleration: -0.5 };
        assert_relative_eq!(environment_force(&env, &state), -1.0 + 5.0 + 400.0);
        assert_eq!(desired_environment_force(&env, &state, 0.1, -0.5), environment_force(&env, &state));
        assert!(EnvironmentModel::new(-1.0, 0.0, 0.0, Vector3::zeros(), Vector3::x()).is_err());
        assert!(EnvironmentModel::new(0.0, 0.0, 0.0, Vector3::zeros(), Vector3::zeros()).is_err());
    }

    #[test]
    fn contact_force_is_continuous_at_onset() {
        let env = EnvironmentModel::new(0.0, 100.0, 2e4, Vector3::zeros(), Vector3::x()).unwrap();
        let mut last = 0.0;
        for k in -50..50 {
            let p = Vector3::new(k as f64 * 1e-6, 0.0, 0.0);
            let x = env.penetration(&p);
            let f = environment_force(&env, &ContactState { penetration: x, normal_velocity: 0.0, normal_acceleration: 0.0 });
            assert!((f - last).abs() <= 2e4 * 1e-6 + 1e-12);
            last = f;
        }
    }

    #[test]
    fn selection_rotates_normal_into_tool_frame() {
        let env = wall();
        let r = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 0.5).into_inner();
        let n = env.selection(&r);
        assert_relative_eq!(r * Vector3::new(n[0], n[1], n[2]), Vector3::x(), epsilon = 1e-12);
        assert_eq!(&n.fixed_rows::<3>(3).into_owned(), &Vector3::zeros());
    }

    #[test]
    fn tool_force_composition() {
        let t = FrameTransform::identity(Frame::Body(6), Frame::Cut(6));
        let zero_b = ForceVector::zero(Frame::Body(6));
        let zero_t = ForceVector::zero(Frame::Cut(6));
        assert_eq!(tool_required_force(&zero_b, &t, &zero_t).unwrap().to_vector(), Vector6::zeros());
        let nc = Vector6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        let tip = ForceVector::from_vector(&(nc * 300.0), Frame::Cut(6));
        assert_eq!(tool_required_force(&zero_b, &t, &tip).unwrap().to_vector(), nc * 300.0);
    }

    #[test]
    fn tool_force_matches_backward_recursion() {
        let c = default_surrogate::<f64>();
        let q = DVector::from_vec(vec![0.2, -0.3, 0.9, 0.1, 0.8, -0.4]);
        let kin = c.kinematics(&q).unwrap();
        let net: Vec<_> = (0..6)
            .map(|i| ForceVector::new(Vector3::new(1.0, -2.0, i as f64), Vector3::new(0.3, 0.1, -0.1), body(i)))
            .collect();
        let tip = ForceVector::new(Vector3::new(0.0, 20.0, -500.0), Vector3::zeros(), cut_after(5));
        let f = c.backward_forces(&kin, &net, &tip).unwrap();
        let composed = tool_required_force(&net[5], &c.links[5].body_to_tip, &tip).unwrap();
        assert_relative_eq!(composed.to_vector(), f.body[5].to_vector(), epsilon = 1e-9);
    }

    #[test]
    fn piston_force_examples() {
        let sigma = Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let zero = ForceVector::zero(Frame::Body(6));
        assert_eq!(required_piston_force(&zero, 0.0, &sigma, 2.0).unwrap(), 0.0);
        let f = ForceVector::from_vector(&(sigma * 10.0), Frame::Body(6));
        assert_eq!(required_piston_force(&f, 0.0, &sigma, 2.0).unwrap(), 5.0);
        assert!(matches!(
            required_piston_force(&f, 0.0, &sigma, 0.0),
            Err(SurrogateError::GearRatio(_))
        ));
    }

    #[test]
    fn piston_force_balances_static_tool_load() {
        // Statics: the tool joint torque needed to hold a tip load equals
        // r_w times the piston force computed from the tool-body force.
        let c = default_surrogate::<f64>();
        let q = DVector::from_vec(vec![0.0, -0.5, 1.2, 0.0, 0.6, 0.0]);
        let kin = c.kinematics(&q).unwrap();
        let tip = ForceVector::new(Vector3::new(0.0, 0.0, 800.0), Vector3::new(0.0, 5.0, 0.0), cut_after(5));
        let net: Vec<_> = (0..6).map(|i| ForceVector::zero(body(i))).collect();
        let torques = c.backward_forces(&kin, &net, &tip).unwrap().torques;
        let g3 = tool_required_force(&net[5], &c.links[5].body_to_tip, &tip).unwrap();
        let r_w = 4.0;
        let f = required_piston_force(&g3, 0.0, &c.links[5].screw(), r_w).unwrap();
        assert_relative_eq!(f * r_w, torques[5], epsilon = 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn env_force_linear_in_stiffness(k in 0.0f64..1e6, x in 0.0f64..0.05) {
            let env = EnvironmentModel::new(0.0, 0.0, k, Vector3::zeros(), Vector3::x()).unwrap();
            let s = ContactState { penetration: x, normal_velocity: 0.0, normal_acceleration: 0.0 };
            prop_assert!((environment_force(&env, &s) - k * x).abs() <= 1e-9 * (1.0 + k * x));
        }
    }
}
