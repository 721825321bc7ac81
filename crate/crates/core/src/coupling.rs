//! Desired-velocity synthesis for both sides, first-order signal filters and
//! the simulated communication channel.

use std::collections::VecDeque;

use nalgebra::{DVector, Matrix6, Quaternion, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chain::{orientation_error_base, Pose};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CouplingError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("{0} must be symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("delay {delay} s exceeds the channel bound {bound} s")]
    DelayBound { delay: f64, bound: f64 },
}

/// Motion and force scaling plus the coupling gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingConfig<T: Real> {
    /// Motion scaling on the translational block; rotations are unscaled.
    pub kappa_p: T,
    /// Force scaling on the full wrench.
    pub kappa_f: T,
    pub lambda: Matrix6<T>,
    pub a: Matrix6<T>,
    /// Filter constant `C` (1/s).
    pub filter: T,
}

impl<T: Real> ScalingConfig<T> {
    pub fn new(kappa_p: T, kappa_f: T, lambda: T, a: T, filter: T) -> Result<Self, CouplingError> {
        let cfg = Self {
            kappa_p,
            kappa_f,
            lambda: Matrix6::identity() * lambda,
            a: Matrix6::identity() * a,
            filter,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CouplingError> {
        if self.kappa_p <= T::zero() {
            return Err(CouplingError::NonPositive("motion scaling"));
        }
        if self.kappa_f <= T::zero() {
            return Err(CouplingError::NonPositive("force scaling"));
        }
        if self.filter <= T::zero() {
            return Err(CouplingError::NonPositive("filter constant"));
        }
        for (m, name) in [(&self.lambda, "Lambda"), (&self.a, "A")] {
            let sym = (m - m.transpose()).amax() <= T::structural_tol() * (T::one() + m.amax());
            if !sym || m.cholesky().is_none() {
                return Err(CouplingError::NotPositiveDefinite(name));
            }
        }
        Ok(())
    }

    /// `κ_p` as a 6×6 matrix.
    pub fn kappa_p_matrix(&self) -> Matrix6<T> {
        let k = self.kappa_p;
        let o = T::one();
        Matrix6::from_diagonal(&Vector6::new(k, k, k, o, o, o))
    }

    pub fn kappa_p_inverse(&self) -> Matrix6<T> {
        let k = T::one() / self.kappa_p;
        let o = T::one();
        Matrix6::from_diagonal(&Vector6::new(k, k, k, o, o, o))
    }

    /// `κ_f` as a 6×6 matrix.
    pub fn kappa_f_matrix(&self) -> Matrix6<T> {
        Matrix6::identity() * self.kappa_f
    }
}

/// Exactly discretized first-order filter `ṅ + C n = C u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState<T: Real> {
    pub value: DVector<T>,
    pub constant: T,
}

impl<T: Real> FilterState<T> {
    pub fn new(initial: DVector<T>, constant: T) -> Self {
        Self { value: initial, constant }
    }

    /// `n ← u + (n − u)·e^{−C·dt}`.
    pub fn step(&mut self, input: &DVector<T>, dt: T) -> &DVector<T> {
        let decay = (-self.constant * dt).exp();
        self.value = input + (&self.value - input) * decay;
        &self.value
    }
}

/// Functional form of [`FilterState::step`].
pub fn filter_step<T: Real>(fs: &FilterState<T>, input: &DVector<T>, dt: T) -> FilterState<T> {
    let mut out = fs.clone();
    out.step(input, dt);
    out
}

/// Filter for a pose: the position is filtered directly, the orientation
/// componentwise on the quaternion (hemisphere-aligned) and renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFilter<T: Real> {
    position: FilterState<T>,
    orientation: FilterState<T>,
}

impl<T: Real> PoseFilter<T> {
    pub fn new(initial: &Pose<T>, constant: T) -> Self {
        Self {
            position: FilterState::new(DVector::from_column_slice(initial.position.as_slice()), constant),
            orientation: FilterState::new(DVector::from_column_slice(initial.orientation.coords.as_slice()), constant),
        }
    }

    pub fn step(&mut self, input: &Pose<T>, dt: T) -> Pose<T> {
        self.position
            .step(&DVector::from_column_slice(input.position.as_slice()), dt);
        let mut q = DVector::from_column_slice(input.orientation.coords.as_slice());
        if q.dot(&self.orientation.value) < T::zero() {
            q = -q;
        }
        self.orientation.step(&q, dt);
        self.value()
    }

    pub fn value(&self) -> Pose<T> {
        let p = &self.position.value;
        let q = &self.orientation.value;
        Pose {
            position: Vector3::new(p[0], p[1], p[2]),
            orientation: UnitQuaternion::from_quaternion(Quaternion::new(q[3], q[0], q[1], q[2])),
        }
    }
}

/// Filtered quantities one side sends to the other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideSignal<T: Real> {
    pub velocity: Vector6<T>,
    pub pose: Pose<T>,
    pub force: Vector6<T>,
}

impl<T: Real> SideSignal<T> {
    pub fn at_rest(pose: Pose<T>) -> Self {
        Self {
            velocity: Vector6::zeros(),
            pose,
            force: Vector6::zeros(),
        }
    }
}

/// Filters for the three signals of one side.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFilter<T: Real> {
    velocity: FilterState<T>,
    pose: PoseFilter<T>,
    force: FilterState<T>,
}

impl<T: Real> SignalFilter<T> {
    pub fn new(initial: &SideSignal<T>, constant: T) -> Self {
        let v6 = |v: &Vector6<T>| DVector::from_column_slice(v.as_slice());
        Self {
            velocity: FilterState::new(v6(&initial.velocity), constant),
            pose: PoseFilter::new(&initial.pose, constant),
            force: FilterState::new(v6(&initial.force), constant),
        }
    }

    pub fn step(&mut self, input: &SideSignal<T>, dt: T) -> SideSignal<T> {
        let v6 = |v: &Vector6<T>| DVector::from_column_slice(v.as_slice());
        let velocity = Vector6::from_column_slice(self.velocity.step(&v6(&input.velocity), dt).as_slice());
        let force = Vector6::from_column_slice(self.force.step(&v6(&input.force), dt).as_slice());
        let pose = self.pose.step(&input.pose, dt);
        SideSignal { velocity, pose, force }
    }
}

/// `[k_a·p_a − k_b·p_b; vec(q_a q_b*)]` in base-aligned axes.
pub fn pose_difference<T: Real>(a: &Pose<T>, k_a: T, b: &Pose<T>, k_b: T) -> Vector6<T> {
    let mut d = Vector6::zeros();
    d.fixed_rows_mut::<3>(0)
        .copy_from(&(a.position * k_a - b.position * k_b));
    d.fixed_rows_mut::<3>(3)
        .copy_from(&orientation_error_base(&a.orientation, &b.orientation));
    d
}

/// `V_md = κ_p⁻¹(𝐕_s + Λ[𝐗_s − κ_p X_m] − A[𝐅_s + (κ_f − κ_p)𝐅_m])`.
/// `surrogate` carries the (possibly delayed) filtered surrogate signals.
pub fn desired_master_velocity<T: Real>(
    surrogate: &SideSignal<T>,
    master_pose: &Pose<T>,
    master_force: &Vector6<T>,
    cfg: &ScalingConfig<T>,
) -> Vector6<T> {
    let diff = pose_difference(&surrogate.pose, T::one(), master_pose, cfg.kappa_p);
    let force = surrogate.force + (cfg.kappa_f_matrix() - cfg.kappa_p_matrix()) * master_force;
    cfg.kappa_p_inverse() * (surrogate.velocity + cfg.lambda * diff - cfg.a * force)
}

/// `V_sd = κ_p(𝐕_m + Λ𝐗_m) − ΛX_s − Aκ_f𝐅_m`, with the position terms
/// combined as `Λ[κ_p𝐗_m − X_s]`. `master` carries the (possibly delayed)
/// filtered master signals.
pub fn desired_surrogate_velocity<T: Real>(
    master: &SideSignal<T>,
    surrogate_pose: &Pose<T>,
    cfg: &ScalingConfig<T>,
) -> Vector6<T> {
    let diff = pose_difference(&master.pose, cfg.kappa_p, surrogate_pose, T::one());
    cfg.kappa_p_matrix() * master.velocity + cfg.lambda * diff - cfg.a * cfg.kappa_f_matrix() * master.force
}

/// Delay applied by a [`DelayLine`].
#[derive(Debug, Clone, PartialEq)]
pub enum DelayMode<T: Real> {
    None,
    Fixed(T),
    /// Per-sample delay drawn uniformly in `[0, max]`.
    Varying { max: T, seed: u64 },
}

impl<T: Real> DelayMode<T> {
    pub fn bound(&self) -> T {
        match self {
            DelayMode::None => T::zero(),
            DelayMode::Fixed(d) => *d,
            DelayMode::Varying { max, .. } => *max,
        }
    }
}

/// One direction of the channel, sampled once per control period. Samples
/// are addressed by step index, so a delay `T` maps to `round(T/dt)` steps
/// (fixed) or `ceil(T_v/dt)` steps (varying) with zero-order hold.
#[derive(Debug, Clone)]
pub struct DelayLine<S: Clone, T: Real> {
    mode: DelayMode<T>,
    dt: T,
    buffer: VecDeque<S>,
    capacity: usize,
    rng: Option<ChaCha8Rng>,
    last_lag: usize,
}

impl<S: Clone, T: Real> DelayLine<S, T> {
    pub fn new(mode: DelayMode<T>, dt: T) -> Result<Self, CouplingError> {
        if dt <= T::zero() {
            return Err(CouplingError::NonPositive("time step"));
        }
        let bound = mode.bound();
        if bound < T::zero() {
            return Err(CouplingError::NonPositive("delay"));
        }
        let capacity = (bound / dt).ceil().as_f64() as usize + 2;
        let rng = match &mode {
            DelayMode::Varying { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        Ok(Self {
            mode,
            dt,
            buffer: VecDeque::with_capacity(capacity),
            capacity,
            rng,
            last_lag: 0,
        })
    }

    pub fn mode(&self) -> &DelayMode<T> {
        &self.mode
    }

    /// Lag in steps used by the most recent [`sample`](Self::sample).
    pub fn last_lag(&self) -> usize {
        self.last_lag
    }

    /// Delay in seconds used by the most recent sample.
    pub fn last_delay(&self) -> T {
        T::lit(self.last_lag as f64) * self.dt
    }

    /// Appends the sample of the current step.
    pub fn push(&mut self, sample: S) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample);
    }

    /// The sample visible at the receiver for the current step, holding the
    /// oldest value while the requested time precedes the buffer start.
    /// Returns `None` only before the first push.
    pub fn sample(&mut self) -> Option<S> {
        let lag = match &self.mode {
            DelayMode::None => 0,
            DelayMode::Fixed(d) => (*d / self.dt).round().as_f64() as usize,
            DelayMode::Varying { max, .. } => {
                let u: f64 = self.rng.as_mut().expect("varying mode owns a generator").random();
                let d = max.as_f64() * u / self.dt.as_f64();
                (d - 1e-9).ceil().max(0.0) as usize
            }
        };
        self.last_lag = lag;
        let newest = self.buffer.len().checked_sub(1)?;
        let idx = newest.saturating_sub(lag);
        self.buffer.get(idx).cloned()
    }
}

/// Channel stage: pushes `sample` and returns the delayed one.
pub fn channel_push_sample<S: Clone, T: Real>(dl: &mut DelayLine<S, T>, sample: S) -> S {
    dl.push(sample);
    dl.sample().expect("sample just pushed")
}
