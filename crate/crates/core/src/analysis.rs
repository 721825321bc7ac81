//! Frequency-domain stability condition, transparency matrix and the
//! virtual-power-flow integral monitors.

use std::io::Write;

use nalgebra::{Complex, Matrix6, Vector6};
use thiserror::Error;

use crate::coupling::ScalingConfig;
use crate::real::Real;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("H_1{side} is singular at omega = {omega} rad/s")]
    Singular { side: char, omega: f64 },
    #[error("invalid frequency grid: {0}")]
    Grid(String),
    #[error("impedance coefficients must be non-negative")]
    Impedance,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type C<T> = Complex<T>;
pub type CMatrix6<T> = Matrix6<Complex<T>>;

/// Diagonal mass-damper-spring impedance `Z(s) = M s + D + K/s` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpedanceModel<T: Real> {
    pub mass: Vector6<T>,
    pub damping: Vector6<T>,
    pub stiffness: Vector6<T>,
}

impl<T: Real> ImpedanceModel<T> {
    pub fn new(mass: Vector6<T>, damping: Vector6<T>, stiffness: Vector6<T>) -> Result<Self, AnalysisError> {
        if mass.iter().chain(damping.iter()).chain(stiffness.iter()).any(|&v| v < T::zero()) {
            return Err(AnalysisError::Impedance);
        }
        Ok(Self { mass, damping, stiffness })
    }

    pub fn zero() -> Self {
        Self {
            mass: Vector6::zeros(),
            damping: Vector6::zeros(),
            stiffness: Vector6::zeros(),
        }
    }

    /// Stiff spring-damper on translational axis `axis` only.
    pub fn nominal_environment(axis: usize) -> Self {
        let mut z = Self::zero();
        z.damping[axis] = T::lit(1e3);
        z.stiffness[axis] = T::lit(1e5);
        z
    }

    /// Compliant mass-damper on every axis.
    pub fn nominal_human() -> Self {
        Self {
            mass: Vector6::repeat(T::lit(2.0)),
            damping: Vector6::repeat(T::lit(20.0)),
            stiffness: Vector6::zeros(),
        }
    }

    /// `Z(jω)`, `ω > 0`.
    pub fn eval(&self, omega: T) -> CMatrix6<T> {
        let mut z = CMatrix6::zeros();
        for i in 0..6 {
            z[(i, i)] = C::new(self.damping[i], self.mass[i] * omega - self.stiffness[i] / omega);
        }
        z
    }
}

/// Logarithmically spaced angular frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid<T: Real> {
    pub omega: Vec<T>,
}

impl<T: Real> FrequencyGrid<T> {
    pub fn log_spaced(lo: T, hi: T, points: usize) -> Result<Self, AnalysisError> {
        if !(lo > T::zero() && hi > lo) || points < 2 {
            return Err(AnalysisError::Grid(format!(
                "need 0 < lo < hi and at least 2 points, got [{}, {}] with {points}",
                lo.as_f64(),
                hi.as_f64()
            )));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let n = T::lit((points - 1) as f64);
        let omega = (0..points)
            .map(|k| {
                if k == 0 {
                    lo
                } else if k == points - 1 {
                    hi
                } else {
                    (a + (b - a) * T::lit(k as f64) / n).exp()
                }
            })
            .collect();
        Ok(Self { omega })
    }

    /// `1e-2 … 1e3` rad/s, 400 points.
    pub fn standard() -> Self {
        Self::log_spaced(T::lit(1e-2), T::lit(1e3), 400).expect("valid default grid")
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn bounds(&self) -> (T, T) {
        (self.omega[0], self.omega[self.omega.len() - 1])
    }

    /// Same span with `factor` times the interval count.
    pub fn refined(&self, factor: usize) -> Self {
        let (lo, hi) = self.bounds();
        Self::log_spaced(lo, hi, (self.len() - 1) * factor + 1).expect("refining a valid grid")
    }
}

fn to_complex<T: Real>(m: &Matrix6<T>) -> CMatrix6<T> {
    m.map(|x| C::new(x, T::zero()))
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &CMatrix6<T>) -> T {
    m.singular_values().max()
}

/// `(H_1s, H_2s, H_1m, H_2m)` at `s = jω`.
pub fn loop_matrices<T: Real>(
    cfg: &ScalingConfig<T>,
    z_e: &ImpedanceModel<T>,
    z_h: &ImpedanceModel<T>,
    omega: T,
) -> [CMatrix6<T>; 4] {
    let s = C::new(T::zero(), omega);
    let eye = CMatrix6::<T>::identity();
    let lambda = to_complex(&cfg.lambda);
    let a = to_complex(&cfg.a);
    let kf_kp = to_complex(&(cfg.kappa_f_matrix() * cfg.kappa_p_inverse()));
    let sl = eye * s + lambda;
    let filt = eye * (s / C::new(cfg.filter, T::zero())) + eye;
    let ze = z_e.eval(omega);
    let zh = z_h.eval(omega);
    let h1s = sl * filt + a * ze * s;
    let h2s = sl - a * kf_kp * zh * s;
    let h1m = sl * filt + a * kf_kp * zh * s;
    let h2m = sl - a * ze * s;
    [h1s, h2s, h1m, h2m]
}

/// `‖H_1s⁻¹H_2s H_1m⁻¹H_2m‖` and `‖H_1m⁻¹H_2m H_1s⁻¹H_2s‖` at one frequency.
pub fn loop_gains<T: Real>(
    cfg: &ScalingConfig<T>,
    z_e: &ImpedanceModel<T>,
    z_h: &ImpedanceModel<T>,
    omega: T,
) -> Result<(T, T), AnalysisError> {
    let [h1s, h2s, h1m, h2m] = loop_matrices(cfg, z_e, z_h, omega);
    let inv = |m: CMatrix6<T>, side| {
        m.try_inverse().ok_or(AnalysisError::Singular { side, omega: omega.as_f64() })
    };
    let s_part = inv(h1s, 's')? * h2s;
    let m_part = inv(h1m, 'm')? * h2m;
    Ok((spectral_norm(&(s_part * m_part)), spectral_norm(&(m_part * s_part))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport<T: Real> {
    pub satisfied: bool,
    /// `1 − max(sup₁, sup₂)`.
    pub margin: T,
    pub worst_omega: T,
    pub sup: (T, T),
    /// Final grid with the two loop gains at every point.
    pub samples: Vec<(T, T, T)>,
}

fn sweep<T: Real>(
    cfg: &ScalingConfig<T>,
    z_e: &ImpedanceModel<T>,
    z_h: &ImpedanceModel<T>,
    grid: &FrequencyGrid<T>,
) -> Result<Vec<(T, T, T)>, AnalysisError> {
    grid.omega
        .iter()
        .map(|&w| loop_gains(cfg, z_e, z_h, w).map(|(a, b)| (w, a, b)))
        .collect()
}

fn summarize<T: Real>(samples: Vec<(T, T, T)>) -> StabilityReport<T> {
    let mut sup = (T::zero(), T::zero());
    let mut worst = (T::zero(), samples[0].0);
    for &(w, a, b) in &samples {
        sup.0 = sup.0.max(a);
        sup.1 = sup.1.max(b);
        let m = a.max(b);
        if m > worst.0 {
            worst = (m, w);
        }
    }
    StabilityReport {
        satisfied: worst.0 < T::one(),
        margin: T::one() - worst.0,
        worst_omega: worst.1,
        sup,
        samples,
    }
}

/// Largest refinement applied by [`stability_condition`].
pub const MAX_REFINEMENTS: usize = 8;

/// Evaluates both loop-gain products on `grid`, doubling the density until
/// the sup changes by less than 0.1%.
pub fn stability_condition<T: Real>(
    cfg: &ScalingConfig<T>,
    z_e: &ImpedanceModel<T>,
    z_h: &ImpedanceModel<T>,
    grid: &FrequencyGrid<T>,
) -> Result<StabilityReport<T>, AnalysisError> {
    if grid.len() < 2 {
        return Err(AnalysisError::Grid("need at least 2 points".into()));
    }
    let mut report = summarize(sweep(cfg, z_e, z_h, grid)?);
    let mut current = grid.clone();
    for _ in 0..MAX_REFINEMENTS {
        current = current.refined(2);
        let next = summarize(sweep(cfg, z_e, z_h, &current)?);
        let prev = T::one() - report.margin;
        let now = T::one() - next.margin;
        let converged = (now - prev).abs() <= T::lit(1e-3) * prev.abs();
        report = next;
        if converged {
            break;
        }
    }
    Ok(report)
}

/// Dense single-pass sweep, used to cross-check the adaptive evaluation.
pub fn brute_force_sup<T: Real>(
    cfg: &ScalingConfig<T>,
    z_e: &ImpedanceModel<T>,
    z_h: &ImpedanceModel<T>,
    grid: &FrequencyGrid<T>,
) -> Result<T, AnalysisError> {
    let r = summarize(sweep(cfg, z_e, z_h, grid)?);
    Ok(T::one() - r.margin)
}

/// The four 6×6 blocks of the transparency matrix at `s = jω`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransparencyBlocks<T: Real> {
    pub g11: CMatrix6<T>,
    pub g12: CMatrix6<T>,
    pub g21: CMatrix6<T>,
    pub g22: CMatrix6<T>,
}

/// `g11 = κ_f⁻¹κ_p A⁻¹C⁻¹(sI + Λ)`, `g12 = κ_f⁻¹`, `g21 = −κ_p`,
/// `g22 = s(sI + Λ)⁻¹A`.
pub fn transparency_matrix<T: Real>(cfg: &ScalingConfig<T>, omega: T) -> TransparencyBlocks<T> {
    let s = C::new(T::zero(), omega);
    let eye = CMatrix6::<T>::identity();
    let sl = eye * s + to_complex(&cfg.lambda);
    let a = to_complex(&cfg.a);
    let a_inv = to_complex(&cfg.a.try_inverse().expect("A is positive definite"));
    let kf_inv = to_complex(&(Matrix6::identity() / cfg.kappa_f));
    let kp = to_complex(&cfg.kappa_p_matrix());
    let g11 = kf_inv * kp * a_inv * sl / C::new(cfg.filter, T::zero());
    let g22 = sl.try_inverse().expect("sI + Λ is invertible") * a * s;
    TransparencyBlocks { g11, g12: kf_inv, g21: -kp, g22 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransparencyReport<T: Real> {
    /// `(ω, ‖g11‖, ‖g22‖)`.
    pub samples: Vec<(T, T, T)>,
    pub g12: CMatrix6<T>,
    pub g21: CMatrix6<T>,
}

pub fn transparency_report<T: Real>(cfg: &ScalingConfig<T>, grid: &FrequencyGrid<T>) -> TransparencyReport<T> {
    let samples = grid
        .omega
        .iter()
        .map(|&w| {
            let g = transparency_matrix(cfg, w);
            (w, spectral_norm(&g.g11), spectral_norm(&g.g22))
        })
        .collect();
    let g = transparency_matrix(cfg, grid.omega[0]);
    TransparencyReport { samples, g12: g.g12, g21: g.g21 }
}

/// Distance from the ideal transparency matrix, whose diagonal blocks vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealGap<T: Real> {
    pub g11_sup: T,
    pub g22_sup: T,
}

pub fn ideal_gap<T: Real>(report: &TransparencyReport<T>) -> IdealGap<T> {
    report.samples.iter().fold(
        IdealGap { g11_sup: T::zero(), g22_sup: T::zero() },
        |acc, &(_, a, b)| IdealGap { g11_sup: acc.g11_sup.max(a), g22_sup: acc.g22_sup.max(b) },
    )
}

/// CSV rows `omega,product1,product2,g11,g22`.
pub fn write_analysis_csv<T: Real, W: Write>(
    out: &mut W,
    stability: &StabilityReport<T>,
    cfg: &ScalingConfig<T>,
) -> Result<(), AnalysisError> {
    writeln!(out, "omega,product1,product2,g11,g22")?;
    for &(w, a, b) in &stability.samples {
        let g = transparency_matrix(cfg, w);
        writeln!(
            out,
            "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            w.as_f64(),
            a.as_f64(),
            b.as_f64(),
            spectral_norm(&g.g11).as_f64(),
            spectral_norm(&g.g22).as_f64()
        )?;
    }
    Ok(())
}

/// Running trapezoidal integral of a sampled power signal and whether it
/// ever dropped below `−bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct VpfIntegral {
    pub running: Vec<f64>,
    pub minimum: f64,
    pub bound: f64,
    pub violated: bool,
}

impl VpfIntegral {
    pub fn final_value(&self) -> f64 {
        self.running.last().copied().unwrap_or(0.0)
    }
}

/// Integrates `power` sampled at `time`, starting from `offset`.
pub fn running_integral(time: &[f64], power: &[f64], offset: f64, bound: f64) -> VpfIntegral {
    let mut running = Vec::with_capacity(power.len());
    let mut acc = offset;
    let mut minimum = offset;
    for k in 0..power.len() {
        if k > 0 {
            acc += 0.5 * (power[k] + power[k - 1]) * (time[k] - time[k - 1]);
        }
        minimum = minimum.min(acc);
        running.push(acc);
    }
    VpfIntegral { running, minimum, bound, violated: minimum < -bound }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VpfMonitorReport {
    /// Master handle boundary.
    pub master: VpfIntegral,
    /// Surrogate contact boundary.
    pub contact: VpfIntegral,
}

/// Running integrals of the two boundary power flows, each checked against
/// its initial-condition constant.
pub fn vpf_integral_monitor(
    time: &[f64],
    p_master: &[f64],
    p_contact: &[f64],
    master_bound: f64,
    contact_bound: f64,
) -> VpfMonitorReport {
    VpfMonitorReport {
        master: running_integral(time, p_master, 0.0, master_bound),
        contact: running_integral(time, p_contact, 0.0, contact_bound),
    }
}

/// `½ Δvᵀ M_e Δv` for the initial normal velocity mismatch `Δv`; the contact
/// power flow is the derivative of this quantity, so its integral cannot
/// fall below the negated initial value.
pub fn contact_initial_constant(env_mass: f64, initial_velocity_error: f64) -> f64 {
    0.5 * env_mass * initial_velocity_error * initial_velocity_error
}
