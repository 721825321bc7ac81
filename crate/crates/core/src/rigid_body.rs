//! Rigid-body spatial dynamics, the linear-in-parameter regressor, the
//! 10-parameter ↔ 4×4 inertial map and the natural adaptation law.
//!
//! All quantities are expressed in a body-fixed frame whose origin need not
//! coincide with the centre of mass. The parameter vector is ordered
//! `φ = [m, hx, hy, hz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz]` with `h = m·c` and `I`
//! the rotational inertia about the frame origin.

use nalgebra::{Matrix3, Matrix4, Matrix6, SMatrix, SVector, SymmetricEigen, Vector3};
use thiserror::Error;

use crate::real::Real;
use crate::spatial::{skew, ForceVector, MotionVector, SpatialError};

pub type ParamVector<T> = SVector<T, 10>;
pub type Regressor<T> = SMatrix<T, 6, 10>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RigidBodyError {
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// Mass, first moment of mass and rotational inertia about the frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialParams<T: Real> {
    pub mass: T,
    pub first_moment: Vector3<T>,
    pub inertia: Matrix3<T>,
}

impl<T: Real> InertialParams<T> {
    pub fn new(mass: T, first_moment: Vector3<T>, inertia: Matrix3<T>) -> Self {
        Self {
            mass,
            first_moment,
            inertia,
        }
    }

    /// Parameters from a centre of mass and an inertia about that centre,
    /// shifted to the frame origin with the parallel-axis theorem.
    pub fn from_com(mass: T, com: Vector3<T>, inertia_com: Matrix3<T>) -> Self {
        let c = skew(&com);
        Self::new(mass, com * mass, inertia_com - c * c * mass)
    }

    /// Point mass located at `com`.
    pub fn point_mass(mass: T, com: Vector3<T>) -> Self {
        Self::from_com(mass, com, Matrix3::zeros())
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), Vector3::zeros(), Matrix3::zeros())
    }

    pub fn to_vector(&self) -> ParamVector<T> {
        let i = &self.inertia;
        ParamVector::from_column_slice(&[
            self.mass,
            self.first_moment.x,
            self.first_moment.y,
            self.first_moment.z,
            i[(0, 0)],
            i[(0, 1)],
            i[(0, 2)],
            i[(1, 1)],
            i[(1, 2)],
            i[(2, 2)],
        ])
    }

    pub fn from_vector(phi: &ParamVector<T>) -> Self {
        let inertia = Matrix3::new(
            phi[4], phi[5], phi[6], //
            phi[5], phi[7], phi[8], //
            phi[6], phi[8], phi[9],
        );
        Self::new(phi[0], Vector3::new(phi[1], phi[2], phi[3]), inertia)
    }

    /// The 6×6 spatial inertia `[[m·1, −[h×]], [[h×], I]]`.
    pub fn spatial_inertia(&self) -> Matrix6<T> {
        let h = skew(&self.first_moment);
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(Matrix3::identity() * self.mass));
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-h));
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&h);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.inertia);
        m
    }

    /// Combined parameters of two bodies rigidly attached to the same frame.
    pub fn combined(&self, other: &Self) -> Self {
        Self::new(
            self.mass + other.mass,
            self.first_moment + other.first_moment,
            self.inertia + other.inertia,
        )
    }

    /// Uniformly scaled copy (a body with all densities scaled by `s`).
    pub fn scaled(&self, s: T) -> Self {
        Self::new(self.mass * s, self.first_moment * s, self.inertia * s)
    }

    pub fn is_physically_consistent(&self) -> bool {
        phi_to_l(self).is_positive_definite()
    }
}

/// Constant gravity acceleration expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityVector<T: Real>(pub Vector3<T>);

impl<T: Real> Default for GravityVector<T> {
    fn default() -> Self {
        Self(Vector3::new(T::zero(), T::zero(), T::lit(-9.81)))
    }
}

impl<T: Real> GravityVector<T> {
    /// Gravity expressed in a frame whose world orientation is `r_world_body`.
    pub fn in_body(&self, r_world_body: &Matrix3<T>) -> Vector3<T> {
        r_world_body.transpose() * self.0
    }
}

/// `I·w = inertia_map(w)·[Ixx, Ixy, Ixz, Iyy, Iyz, Izz]`.
fn inertia_map<T: Real>(w: &Vector3<T>) -> SMatrix<T, 3, 6> {
    let z = T::zero();
    SMatrix::<T, 3, 6>::from_row_slice(&[
        w.x, w.y, w.z, z, z, z, //
        z, w.x, z, w.y, w.z, z, //
        z, z, w.x, z, w.y, w.z,
    ])
}

fn check_same_frame<T: Real>(v: &MotionVector<T>, a: &MotionVector<T>) -> Result<(), SpatialError> {
    if v.frame != a.frame {
        return Err(SpatialError::FrameMismatch {
            expected: v.frame,
            found: a.frame,
        });
    }
    Ok(())
}

/// `M·a + C(ω)·v + G` where `ω` is the body's own angular velocity.
///
/// `a` is the time derivative of the body-frame velocity coordinates and
/// `g` is gravity expressed in the body frame.
pub fn net_spatial_force<T: Real>(
    p: &InertialParams<T>,
    v: &MotionVector<T>,
    a: &MotionVector<T>,
    g: &Vector3<T>,
) -> Result<ForceVector<T>, SpatialError> {
    net_spatial_force_mixed(p, &v.angular, v, a, g)
}

/// `M·a + C(ω)·v + G` with the Coriolis matrix evaluated at a separate angular
/// velocity `omega`. Controllers use this with the measured `ω` and required
/// `v`, `a`; with `omega = v.angular` it reduces to [`net_spatial_force`].
pub fn net_spatial_force_mixed<T: Real>(
    p: &InertialParams<T>,
    omega: &Vector3<T>,
    v: &MotionVector<T>,
    a: &MotionVector<T>,
    g: &Vector3<T>,
) -> Result<ForceVector<T>, SpatialError> {
    check_same_frame(v, a)?;
    let m = p.mass;
    let h = &p.first_moment;
    let i = &p.inertia;
    let lin_acc = a.linear + omega.cross(&v.linear) - g;
    let force = lin_acc * m + a.angular.cross(h) + omega.cross(&v.angular.cross(h));
    let moment = h.cross(&lin_acc) + i * a.angular + omega.cross(&(i * v.angular))
        - i * omega.cross(&v.angular);
    Ok(ForceVector::new(force, moment, v.frame))
}

/// Regressor `Y` with `Y·φ = net_spatial_force(φ, v, a, g)`.
pub fn regressor<T: Real>(
    v: &MotionVector<T>,
    a: &MotionVector<T>,
    g: &Vector3<T>,
) -> Result<Regressor<T>, SpatialError> {
    regressor_mixed(&v.angular, v, a, g)
}

/// Regressor of [`net_spatial_force_mixed`].
pub fn regressor_mixed<T: Real>(
    omega: &Vector3<T>,
    v: &MotionVector<T>,
    a: &MotionVector<T>,
    g: &Vector3<T>,
) -> Result<Regressor<T>, SpatialError> {
    check_same_frame(v, a)?;
    let lin_acc = a.linear + omega.cross(&v.linear) - g;
    let w = skew(omega);
    let mut y = Regressor::zeros();
    y.fixed_view_mut::<3, 1>(0, 0).copy_from(&lin_acc);
    y.fixed_view_mut::<3, 3>(0, 1)
        .copy_from(&(skew(&a.angular) + w * skew(&v.angular)));
    y.fixed_view_mut::<3, 3>(3, 1).copy_from(&(-skew(&lin_acc)));
    let inertial = inertia_map(&a.angular) + w * inertia_map(&v.angular)
        - inertia_map(&omega.cross(&v.angular));
    y.fixed_view_mut::<3, 6>(3, 4).copy_from(&inertial);
    Ok(y)
}

/// Symmetric 4×4 image of the inertial parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LMatrix<T: Real>(Matrix4<T>);

impl<T: Real> LMatrix<T> {
    pub fn new(m: Matrix4<T>) -> Result<Self, RigidBodyError> {
        let asym = (m - m.transpose()).amax();
        let scale = m.amax().max(T::one());
        if asym > T::structural_tol() * scale {
            return Err(RigidBodyError::NotSymmetric(asym.as_f64()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix4<T> {
        &self.0
    }

    pub fn min_eigenvalue(&self) -> T {
        let e = SymmetricEigen::new(self.0).eigenvalues;
        e.iter().copied().fold(e[0], |a, b| a.min(b))
    }

    pub fn is_positive_definite(&self) -> bool {
        self.0.cholesky().is_some()
    }
}

/// Definition of the map `N(φ) = [[½tr(I)·1 − I, h], [hᵀ, m]]`.
pub fn phi_to_l<T: Real>(p: &InertialParams<T>) -> LMatrix<T> {
    let half_tr = p.inertia.trace() * T::lit(0.5);
    let sigma = Matrix3::identity() * half_tr - p.inertia;
    let mut l = Matrix4::zeros();
    l.fixed_view_mut::<3, 3>(0, 0).copy_from(&sigma);
    l.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.first_moment);
    l.fixed_view_mut::<1, 3>(3, 0)
        .copy_from(&p.first_moment.transpose());
    l[(3, 3)] = p.mass;
    LMatrix(l)
}

/// Inverse map: `Σ` is the upper-left block and `I = tr(Σ)·1 − Σ`.
pub fn l_to_phi<T: Real>(l: &LMatrix<T>) -> InertialParams<T> {
    let m = &l.0;
    let sigma: Matrix3<T> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let h = Vector3::new(
        (m[(0, 3)] + m[(3, 0)]) * T::lit(0.5),
        (m[(1, 3)] + m[(3, 1)]) * T::lit(0.5),
        (m[(2, 3)] + m[(3, 2)]) * T::lit(0.5),
    );
    let inertia = Matrix3::identity() * sigma.trace() - sigma;
    InertialParams::new(m[(3, 3)], h, (inertia + inertia.transpose()) * T::lit(0.5))
}

/// Checked variant of [`l_to_phi`] for raw matrices.
pub fn l_to_phi_checked<T: Real>(m: &Matrix4<T>) -> Result<InertialParams<T>, RigidBodyError> {
    Ok(l_to_phi(&LMatrix::new(*m)?))
}

/// Adjoint of `N` under the Frobenius inner product: the unique symmetric `S`
/// with `⟨S, N(φ)⟩ = yᵀφ` for every `φ`.
pub fn s_matrix<T: Real>(y: &ParamVector<T>) -> Matrix4<T> {
    let half = T::lit(0.5);
    let yi = Matrix3::new(
        y[4],
        y[5] * half,
        y[6] * half,
        y[5] * half,
        y[7],
        y[8] * half,
        y[6] * half,
        y[8] * half,
        y[9],
    );
    let s11 = Matrix3::identity() * yi.trace() - yi;
    let yh = Vector3::new(y[1], y[2], y[3]) * half;
    let mut s = Matrix4::zeros();
    s.fixed_view_mut::<3, 3>(0, 0).copy_from(&s11);
    s.fixed_view_mut::<3, 1>(0, 3).copy_from(&yh);
    s.fixed_view_mut::<1, 3>(3, 0).copy_from(&yh.transpose());
    s[(3, 3)] = y[0];
    s
}

/// State of the natural adaptation law `L̂̇ = (1/γ)·L̂·(S − γ₀·L̂)·L̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NalState<T: Real> {
    pub l_hat: LMatrix<T>,
    pub gamma: T,
    pub gamma0: T,
}

/// Smallest eigenvalue the estimate is allowed to reach.
pub const NAL_EIGEN_FLOOR: f64 = 1.0e-8;

impl<T: Real> NalState<T> {
    pub fn new(initial: &InertialParams<T>, gamma: T, gamma0: T) -> Self {
        Self {
            l_hat: phi_to_l(initial),
            gamma,
            gamma0,
        }
    }

    pub fn params(&self) -> InertialParams<T> {
        l_to_phi(&self.l_hat)
    }
}

/// One explicit-Euler step of the natural adaptation law, followed by
/// symmetrization and an eigenvalue floor that keeps `L̂` positive definite.
pub fn nal_step<T: Real>(state: &NalState<T>, s: &Matrix4<T>, dt: T) -> NalState<T> {
    let l = state.l_hat.0;
    let rate = l * (s - l * state.gamma0) * l / state.gamma;
    let next = l + rate * dt;
    let next = (next + next.transpose()) * T::lit(0.5);
    let floor = T::lit(NAL_EIGEN_FLOOR);
    let eig = SymmetricEigen::new(next);
    let clamped = if eig.eigenvalues.iter().any(|&e| e < floor) {
        let d = eig.eigenvalues.map(|e| e.max(floor));
        let q = eig.eigenvectors;
        let m = q * Matrix4::from_diagonal(&d) * q.transpose();
        (m + m.transpose()) * T::lit(0.5)
    } else {
        next
    };
    NalState {
        l_hat: LMatrix(clamped),
        ..*state
    }
}

/// Bregman divergence of `−log det` between physical and estimated `L`.
pub fn log_det_divergence<T: Real>(l: &LMatrix<T>, l_hat: &LMatrix<T>) -> Option<T> {
    let inv = l_hat.0.try_inverse()?;
    let ratio = l_hat.0.determinant() / l.0.determinant();
    if ratio <= T::zero() {
        return None;
    }
    Some(ratio.ln() + (inv * l.0).trace() - T::lit(4.0))
}

/// Quadratic form of the affine-invariant metric at `l_hat` applied to the
/// perturbation `delta`: `tr(L̂⁻¹ Δ L̂⁻¹ Δ)`.
pub fn log_det_metric<T: Real>(l_hat: &LMatrix<T>, delta: &Matrix4<T>) -> Option<T> {
    let inv = l_hat.0.try_inverse()?;
    let a = inv * delta;
    Some((a * a).trace())
}

/// Frobenius inner product of two 4×4 matrices.
pub fn frobenius<T: Real>(a: &Matrix4<T>, b: &Matrix4<T>) -> T {
    a.component_mul(b).sum()
}
