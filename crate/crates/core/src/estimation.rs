//! Online function approximation with Gaussian RBF networks and a
//! generalized-momentum observer for sensorless tip-wrench estimation.

use nalgebra::{DMatrix, DVector, Vector6};
use thiserror::Error;

use crate::chain::{pseudo_inverse, rotate6, ChainError, ChainKinematics, ChainModel, JointState};
use crate::real::Real;
use crate::rigid_body::GravityVector;
use crate::spatial::{ForceVector, Frame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("input has dimension {found}, network expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("lower bound exceeds upper bound on input {0}")]
    Bounds(usize),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Adaptation gains `Π, τ₀, π, π₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorGains<T: Real> {
    pub weight_rate: T,
    pub weight_leak: T,
    pub bias_rate: T,
    pub bias_leak: T,
}

impl<T: Real> EstimatorGains<T> {
    pub fn new(weight_rate: T, weight_leak: T, bias_rate: T, bias_leak: T) -> Result<Self, EstimationError> {
        let g = Self {
            weight_rate,
            weight_leak,
            bias_rate,
            bias_leak,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        let checks = [
            (self.weight_rate, "weight adaptation rate"),
            (self.weight_leak, "weight leakage"),
            (self.bias_rate, "bias adaptation rate"),
            (self.bias_leak, "bias leakage"),
        ];
        for (v, name) in checks {
            if v <= T::zero() {
                return Err(EstimationError::NonPositive(name));
            }
        }
        Ok(())
    }

    /// Rates multiplied by `s`, leakages unchanged.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            weight_rate: self.weight_rate * s,
            bias_rate: self.bias_rate * s,
            ..*self
        }
    }
}

/// Gaussian RBF network `f̂(χ) = Ŵᵀψ(χ) + ε̂`.
///
/// Inputs are normalized by `offset`/`scale` before the basis is evaluated,
/// so centers and widths live in the normalized space.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfNetwork<T: Real> {
    /// One center per row.
    pub centers: DMatrix<T>,
    pub widths: DVector<T>,
    /// `centers × outputs`.
    pub weights: DMatrix<T>,
    pub bias: DVector<T>,
    pub offset: DVector<T>,
    pub scale: DVector<T>,
}

impl<T: Real> RbfNetwork<T> {
    pub fn new(centers: DMatrix<T>, widths: DVector<T>, outputs: usize) -> Result<Self, EstimationError> {
        if widths.len() != centers.nrows() {
            return Err(EstimationError::Dimension {
                expected: centers.nrows(),
                found: widths.len(),
            });
        }
        if widths.iter().any(|&w| w <= T::zero()) {
            return Err(EstimationError::NonPositive("RBF width"));
        }
        let dim = centers.ncols();
        Ok(Self {
            weights: DMatrix::zeros(centers.nrows(), outputs),
            bias: DVector::zeros(outputs),
            offset: DVector::zeros(dim),
            scale: DVector::from_element(dim, T::one()),
            centers,
            widths,
        })
    }

    /// Uniform grid of `per_dim` centers along each input over `[lower, upper]`,
    /// width equal to the (normalized) grid spacing.
    pub fn grid(lower: &[T], upper: &[T], per_dim: usize, outputs: usize) -> Result<Self, EstimationError> {
        if lower.len() != upper.len() {
            return Err(EstimationError::Dimension {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if per_dim < 2 {
            return Err(EstimationError::NonPositive("grid points per input beyond one"));
        }
        for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
            if l >= u {
                return Err(EstimationError::Bounds(i));
            }
        }
        let dim = lower.len();
        let count = per_dim.pow(dim as u32);
        let spacing = T::one() / T::lit((per_dim - 1) as f64);
        let mut centers = DMatrix::zeros(count, dim);
        for k in 0..count {
            let mut idx = k;
            for d in 0..dim {
                centers[(k, d)] = T::lit((idx % per_dim) as f64) * spacing;
                idx /= per_dim;
            }
        }
        let mut net = Self::new(centers, DVector::from_element(count, spacing), outputs)?;
        net.offset = DVector::from_column_slice(lower);
        net.scale = DVector::from_iterator(dim, lower.iter().zip(upper).map(|(&l, &u)| u - l));
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.bias.len()
    }

    fn normalize(&self, chi: &DVector<T>) -> Result<DVector<T>, EstimationError> {
        if chi.len() != self.input_dim() {
            return Err(EstimationError::Dimension {
                expected: self.input_dim(),
                found: chi.len(),
            });
        }
        Ok((chi - &self.offset).component_div(&self.scale))
    }

    /// `ψ(χ)`, one Gaussian `exp(−‖χ−c‖²/(2w²))` per center.
    pub fn basis(&self, chi: &DVector<T>) -> Result<DVector<T>, EstimationError> {
        let x = self.normalize(chi)?;
        Ok(DVector::from_fn(self.centers.nrows(), |k, _| {
            let d2 = (0..x.len())
                .map(|d| {
                    let e = x[d] - self.centers[(k, d)];
                    e * e
                })
                .fold(T::zero(), |a, b| a + b);
            let w = self.widths[k];
            (-d2 / (T::lit(2.0) * w * w)).exp()
        }))
    }

    pub fn eval(&self, chi: &DVector<T>) -> Result<DVector<T>, EstimationError> {
        Ok(self.weights.tr_mul(&self.basis(chi)?) + &self.bias)
    }

    /// `∂f̂/∂χ`, outputs × inputs.
    pub fn gradient(&self, chi: &DVector<T>) -> Result<DMatrix<T>, EstimationError> {
        let x = self.normalize(chi)?;
        let psi = self.basis(chi)?;
        let mut g = DMatrix::zeros(self.output_dim(), self.input_dim());
        for k in 0..self.centers.nrows() {
            let w2 = self.widths[k] * self.widths[k];
            for d in 0..self.input_dim() {
                let dpsi = -psi[k] * (x[d] - self.centers[(k, d)]) / (w2 * self.scale[d]);
                for o in 0..self.output_dim() {
                    g[(o, d)] += self.weights[(k, o)] * dpsi;
                }
            }
        }
        Ok(g)
    }

    /// Explicit-Euler step of `Ŵ̇ = Π(ψeᵀ − τ₀Ŵ)`, `ε̂̇ = π(e − π₀ε̂)`.
    pub fn adapt(
        &mut self,
        chi: &DVector<T>,
        error: &DVector<T>,
        gains: &EstimatorGains<T>,
        dt: T,
    ) -> Result<(), EstimationError> {
        if error.len() != self.output_dim() {
            return Err(EstimationError::Dimension {
                expected: self.output_dim(),
                found: error.len(),
            });
        }
        let psi = self.basis(chi)?;
        let w_rate = (&psi * error.transpose() - &self.weights * gains.weight_leak) * gains.weight_rate;
        let b_rate = (error - &self.bias * gains.bias_leak) * gains.bias_rate;
        self.weights += w_rate * dt;
        self.bias += b_rate * dt;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|x| x.as_f64().is_finite())
    }
}

/// Generalized-momentum residual observer.
///
/// With `p = H q̇`, the residual `r = K_O (p − p₀ − ∫(τ − n + Ḣq̇ + r) dt)`
/// obeys `ṙ = K_O (τ_ext − r)`, where `τ_ext` is the joint torque produced
/// by external wrenches acting on the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceObserver<T: Real> {
    pub gain: T,
    pub residual: DVector<T>,
    integral: DVector<T>,
    p0: Option<DVector<T>>,
    h_prev: Option<DMatrix<T>>,
    /// Latest estimate of the wrench the chain exerts at its tip, base-aligned axes.
    pub estimate: Vector6<T>,
}

impl<T: Real> ForceObserver<T> {
    pub fn new(gain: T, dof: usize) -> Result<Self, EstimationError> {
        if gain <= T::zero() {
            return Err(EstimationError::NonPositive("observer gain"));
        }
        Ok(Self {
            gain,
            residual: DVector::zeros(dof),
            integral: DVector::zeros(dof),
            p0: None,
            h_prev: None,
            estimate: Vector6::zeros(),
        })
    }

    /// Advances the residual with model terms already evaluated at the
    /// current state: mass matrix `h` and bias torques `bias`
    /// (Coriolis, gravity and joint damping) for zero tip load.
    pub fn update(
        &mut self,
        h: &DMatrix<T>,
        bias: &DVector<T>,
        qd: &DVector<T>,
        tau: &DVector<T>,
        dt: T,
    ) -> &DVector<T> {
        let p = h * qd;
        let Some(p0) = self.p0.clone() else {
            self.p0 = Some(p);
            self.h_prev = Some(h.clone());
            return &self.residual;
        };
        let h_dot_qd = match &self.h_prev {
            Some(prev) => (h - prev) * qd / dt,
            None => DVector::zeros(qd.len()),
        };
        self.h_prev = Some(h.clone());
        self.integral += (tau - bias + h_dot_qd + &self.residual) * dt;
        self.residual = (p - p0 - &self.integral) * self.gain;
        &self.residual
    }

    /// Maps the residual to a tip wrench. The residual estimates torques of
    /// external loads on the chain; the returned wrench is the one the chain
    /// exerts on its surroundings, rotated into base-aligned axes.
    pub fn tip_wrench(
        &mut self,
        chain: &ChainModel<T>,
        kin: &ChainKinematics<T>,
    ) -> Result<Vector6<T>, EstimationError> {
        let j = chain.jacobian_from(kin)?;
        let jt_pinv = pseudo_inverse(&j.transpose())
            .or_else(|_| crate::chain::dls_inverse(&j.transpose(), T::lit(1e-6)))?;
        let f_ext = &jt_pinv * &self.residual;
        let tip = -Vector6::from_column_slice(f_ext.as_slice());
        self.estimate = rotate6(&kin.tip_rotation(), &tip);
        Ok(self.estimate)
    }

    /// One full observer step that evaluates the model itself.
    pub fn observe_interaction_force(
        &mut self,
        chain: &ChainModel<T>,
        js: &JointState<T>,
        tau: &DVector<T>,
        gravity: &GravityVector<T>,
        dt: T,
    ) -> Result<ForceVector<T>, EstimationError> {
        let kin = chain.kinematics(&js.q)?;
        let h = chain.mass_matrix(&kin)?;
        let bias = chain.bias_torques(&kin, &js.qd, gravity)?;
        self.update(&h, &bias, &js.qd, tau, dt);
        let w = self.tip_wrench(chain, &kin)?;
        Ok(ForceVector::from_vector(&w, Frame::World))
    }
}
