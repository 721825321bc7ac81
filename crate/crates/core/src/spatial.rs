//! Plücker-coordinate motion and force vectors and frame transforms.
//!
//! Motion vectors are ordered `[v; ω]` (linear velocity of the frame origin,
//! then angular velocity) and force vectors `[f; τ]`. A [`FrameTransform`]
//! `^A T_B` stores the orientation and origin of frame `B` expressed in `A`,
//! and its 6×6 matrix is `U = [[R, 0], [skew(r)·R, R]]`, so that
//! `^B V = Uᵀ ^A V` and `^A F = U ^B F`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix6, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use crate::real::{abs, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("matrix is not a rotation (orthonormality residual {residual:e}, det {det})")]
    NotRotation { residual: f64, det: f64 },
}

/// Label of a coordinate frame.
///
/// `Body(i)` is the frame `B_i` attached to link `i` at its driving joint and
/// `Cut(i)` the cutting frame `T_i` at the distal end of link `i` (`Cut(0)` is
/// the chain base).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    World,
    Body(u8),
    Cut(u8),
    Named(&'static str),
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frame::World => write!(f, "world"),
            Frame::Body(i) => write!(f, "B{i}"),
            Frame::Cut(i) => write!(f, "T{i}"),
            Frame::Named(s) => write!(f, "{s}"),
        }
    }
}

fn check_frame(expected: Frame, found: Frame) -> Result<(), SpatialError> {
    if expected == found {
        Ok(())
    } else {
        Err(SpatialError::FrameMismatch { expected, found })
    }
}

/// Skew-symmetric matrix with `skew(r)·v = r × v`.
pub fn skew<T: Real>(r: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -r.z, r.y, r.z, z, -r.x, -r.y, r.x, z)
}

/// Orthonormal 3×3 matrix with unit determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix<T: Real>(Matrix3<T>);

impl<T: Real> RotationMatrix<T> {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `m` as a rotation; a matrix that is close but drifted by more
    /// than the structural tolerance is rejected.
    pub fn new(m: Matrix3<T>) -> Result<Self, SpatialError> {
        let r = Self(m);
        let residual = r.orthonormality_residual();
        let det = m.determinant();
        let tol = T::structural_tol();
        if residual > tol || abs(det - T::one()) > tol {
            return Err(SpatialError::NotRotation {
                residual: residual.as_f64(),
                det: det.as_f64(),
            });
        }
        Ok(r)
    }

    /// Builds a rotation of `angle` radians about the unit vector `axis`.
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Self {
        let k = skew(axis);
        let (s, c) = angle.sin_cos();
        Self(Matrix3::identity() + k * s + k * k * (T::one() - c))
    }

    /// Roll-pitch-yaw (intrinsic z-y-x, i.e. `Rz(yaw)·Ry(pitch)·Rx(roll)`).
    pub fn from_rpy(roll: T, pitch: T, yaw: T) -> Self {
        let rx = Self::from_axis_angle(&Vector3::x(), roll);
        let ry = Self::from_axis_angle(&Vector3::y(), pitch);
        let rz = Self::from_axis_angle(&Vector3::z(), yaw);
        Self(rz.0 * ry.0 * rx.0)
    }

    pub fn from_quaternion(q: &UnitQuaternion<T>) -> Self {
        Self(q.to_rotation_matrix().into_inner())
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<T> {
        UnitQuaternion::from_matrix(&self.0)
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_residual(&self) -> T {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }

    /// Polar projection onto the closest rotation (`U·Vᵀ` from the SVD).
    pub fn reorthonormalized(&self) -> Self {
        let svd = self.0.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut r = u * v_t;
        if r.determinant() < T::zero() {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self(r)
    }

    /// Product `self · other`, repaired when drift exceeds `1e-9`.
    pub fn compose(&self, other: &Self) -> Self {
        let r = Self(self.0 * other.0);
        if r.orthonormality_residual() > T::lit(1.0e-9) {
            r.reorthonormalized()
        } else {
            r
        }
    }
}

/// Rigid transform `^A T_B` between a parent frame `A` and a child frame `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform<T: Real> {
    pub parent: Frame,
    pub child: Frame,
    /// Orientation of `B` expressed in `A`.
    pub rotation: RotationMatrix<T>,
    /// Origin of `B` expressed in `A` (m).
    pub translation: Vector3<T>,
}

impl<T: Real> FrameTransform<T> {
    pub fn new(
        parent: Frame,
        child: Frame,
        rotation: RotationMatrix<T>,
        translation: Vector3<T>,
    ) -> Self {
        Self {
            parent,
            child,
            rotation,
            translation,
        }
    }

    pub fn identity(parent: Frame, child: Frame) -> Self {
        Self::new(parent, child, RotationMatrix::identity(), Vector3::zeros())
    }

    pub fn translation(parent: Frame, child: Frame, r: Vector3<T>) -> Self {
        Self::new(parent, child, RotationMatrix::identity(), r)
    }

    /// `^A T_B ∘ ^B T_C = ^A T_C`.
    pub fn compose(&self, other: &Self) -> Result<Self, SpatialError> {
        check_frame(self.child, other.parent)?;
        Ok(Self {
            parent: self.parent,
            child: other.child,
            rotation: self.rotation.compose(&other.rotation),
            translation: self.translation + self.rotation.matrix() * other.translation,
        })
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            parent: self.child,
            child: self.parent,
            translation: -(rt.matrix() * self.translation),
            rotation: rt,
        }
    }

    pub fn relabel(mut self, parent: Frame, child: Frame) -> Self {
        self.parent = parent;
        self.child = child;
        self
    }

    /// Maps a point given in child coordinates into parent coordinates.
    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.translation + self.rotation.matrix() * p
    }
}

/// The 6×6 matrix `U = [[R, 0], [skew(r)·R, R]]` of a transform.
pub fn build_transform_matrix<T: Real>(t: &FrameTransform<T>) -> Matrix6<T> {
    let r = t.rotation.matrix();
    let mut u = Matrix6::zeros();
    u.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    u.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&t.translation) * r));
    u.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    u
}

/// Spatial motion vector `[v; ω]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionVector<T: Real> {
    pub linear: Vector3<T>,
    pub angular: Vector3<T>,
    pub frame: Frame,
}

/// Spatial force vector `[f; τ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceVector<T: Real> {
    pub force: Vector3<T>,
    pub moment: Vector3<T>,
    pub frame: Frame,
}

macro_rules! spatial_vector_common {
    ($ty:ident, $a:ident, $b:ident) => {
        impl<T: Real> $ty<T> {
            pub fn new($a: Vector3<T>, $b: Vector3<T>, frame: Frame) -> Self {
                Self { $a, $b, frame }
            }

            pub fn zero(frame: Frame) -> Self {
                Self::new(Vector3::zeros(), Vector3::zeros(), frame)
            }

            pub fn from_vector(v: &Vector6<T>, frame: Frame) -> Self {
                Self::new(
                    v.fixed_rows::<3>(0).into_owned(),
                    v.fixed_rows::<3>(3).into_owned(),
                    frame,
                )
            }

            pub fn to_vector(&self) -> Vector6<T> {
                let mut v = Vector6::zeros();
                v.fixed_rows_mut::<3>(0).copy_from(&self.$a);
                v.fixed_rows_mut::<3>(3).copy_from(&self.$b);
                v
            }

            pub fn norm(&self) -> T {
                (self.$a.norm_squared() + self.$b.norm_squared()).sqrt()
            }

            pub fn is_finite(&self) -> bool {
                self.$a.iter().chain(self.$b.iter()).all(|x| x.as_f64().is_finite())
            }

            pub fn try_add(&self, other: &Self) -> Result<Self, SpatialError> {
                check_frame(self.frame, other.frame)?;
                Ok(Self::new(self.$a + other.$a, self.$b + other.$b, self.frame))
            }

            pub fn try_sub(&self, other: &Self) -> Result<Self, SpatialError> {
                check_frame(self.frame, other.frame)?;
                Ok(Self::new(self.$a - other.$a, self.$b - other.$b, self.frame))
            }

            pub fn scale(&self, s: T) -> Self {
                Self::new(self.$a * s, self.$b * s, self.frame)
            }

            /// Same components under a different frame label.
            pub fn relabel(mut self, frame: Frame) -> Self {
                self.frame = frame;
                self
            }
        }

        impl<T: Real> Add for $ty<T> {
            type Output = Self;
            /// Panics on frame mismatch; use `try_add` to recover instead.
            fn add(self, rhs: Self) -> Self {
                self.try_add(&rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }

        impl<T: Real> Sub for $ty<T> {
            type Output = Self;
            fn sub(self, rhs: Self) -> Self {
                self.try_sub(&rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }

        impl<T: Real> Neg for $ty<T> {
            type Output = Self;
            fn neg(self) -> Self {
                Self::new(-self.$a, -self.$b, self.frame)
            }
        }

        impl<T: Real> Mul<T> for $ty<T> {
            type Output = Self;
            fn mul(self, s: T) -> Self {
                self.scale(s)
            }
        }
    };
}

spatial_vector_common!(MotionVector, linear, angular);
spatial_vector_common!(ForceVector, force, moment);

impl<T: Real> MotionVector<T> {
    /// Power delivered by `f` along this motion.
    pub fn power(&self, f: &ForceVector<T>) -> Result<T, SpatialError> {
        check_frame(self.frame, f.frame)?;
        Ok(self.linear.dot(&f.force) + self.angular.dot(&f.moment))
    }

    /// Motion cross product `self ×ₘ m`.
    pub fn cross_motion(&self, m: &Self) -> Result<Self, SpatialError> {
        check_frame(self.frame, m.frame)?;
        Ok(Self::new(
            self.angular.cross(&m.linear) + self.linear.cross(&m.angular),
            self.angular.cross(&m.angular),
            self.frame,
        ))
    }

    /// Force cross product `self ×* f`.
    pub fn cross_force(&self, f: &ForceVector<T>) -> Result<ForceVector<T>, SpatialError> {
        check_frame(self.frame, f.frame)?;
        Ok(ForceVector::new(
            self.angular.cross(&f.force),
            self.angular.cross(&f.moment) + self.linear.cross(&f.force),
            self.frame,
        ))
    }
}

/// `^B V = Uᵀ ^A V` for `t = ^A T_B`; `v` must be labelled `A`.
pub fn transform_motion<T: Real>(
    t: &FrameTransform<T>,
    v: &MotionVector<T>,
) -> Result<MotionVector<T>, SpatialError> {
    check_frame(t.parent, v.frame)?;
    let rt = t.rotation.matrix().transpose();
    let v_at_b = v.linear + v.angular.cross(&t.translation);
    Ok(MotionVector::new(rt * v_at_b, rt * v.angular, t.child))
}

/// `^A F = U ^B F` for `t = ^A T_B`; `f` must be labelled `B`.
pub fn transform_force<T: Real>(
    t: &FrameTransform<T>,
    f: &ForceVector<T>,
) -> Result<ForceVector<T>, SpatialError> {
    check_frame(t.child, f.frame)?;
    let r = t.rotation.matrix();
    let force = r * f.force;
    let moment = t.translation.cross(&force) + r * f.moment;
    Ok(ForceVector::new(force, moment, t.parent))
}

/// Virtual power flow `(v_r − v)ᵀ(f_r − f)`; all four must share a frame.
pub fn vpf<T: Real>(
    v_r: &MotionVector<T>,
    v: &MotionVector<T>,
    f_r: &ForceVector<T>,
    f: &ForceVector<T>,
) -> Result<T, SpatialError> {
    let dv = v_r.try_sub(v)?;
    let df = f_r.try_sub(f)?;
    dv.power(&df)
}
