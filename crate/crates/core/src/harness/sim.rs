//! Closed-loop stepping of both robots, the operator, the channel and the
//! environment.

use nalgebra::{DVector, Matrix3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::{ConfigError, DelayKind, ScenarioConfig, Side};
use super::metrics::{compute_metrics, MetricsReport};
use super::operator::Operator;
use super::trace::{TraceError, TraceLog};
use crate::analysis::{contact_initial_constant, vpf_integral_monitor, VpfMonitorReport};
use crate::chain::{
    cut_after, default_master, default_surrogate, dls_inverse, rotate6, ChainError, ChainKinematics, ChainModel,
    JointState, Pose,
};
use crate::coupling::{
    channel_push_sample, desired_master_velocity, desired_surrogate_velocity, pose_difference, CouplingError,
    DelayLine, DelayMode, ScalingConfig, SideSignal, SignalFilter,
};
use crate::estimation::{EstimationError, ForceObserver};
use crate::master::{
    required_joint_velocity_master, required_master_velocity, AugmentedBodyParams, ChainController, ControlError,
    ControlStep, VdcGainSpec,
};
use crate::rigid_body::{log_det_divergence, phi_to_l, GravityVector};
use crate::spatial::ForceVector;
use crate::surrogate::{
    desired_environment_force, environment_force, required_joint_velocity_surrogate, required_surrogate_velocity,
    ContactState, EnvironmentModel, SurrogateError,
};

/// Joint speed (rad/s) treated as divergence.
pub const DIVERGENCE_SPEED: f64 = 100.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical divergence at step {step} (t = {time:.3} s): {detail}")]
    Divergence { step: usize, time: f64, detail: String },
    #[error("barrier reached on {side} joint {joint} at step {step} (t = {time:.3} s): e = {error:.3e}, bound {bound:.3e}")]
    Barrier {
        step: usize,
        time: f64,
        side: &'static str,
        joint: usize,
        error: f64,
        bound: f64,
    },
    #[error("{side} controller: {source}")]
    Control { side: &'static str, source: ControlError },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl SimError {
    /// Step index at which the run aborted, if it aborted while stepping.
    pub fn step(&self) -> Option<usize> {
        match self {
            SimError::Divergence { step, .. } | SimError::Barrier { step, .. } => Some(*step),
            _ => None,
        }
    }
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Master => "master",
        Side::Surrogate => "surrogate",
    }
}

/// Pose of `p` relative to `origin`: `(p − p₀, q·q₀⁻¹)`.
fn relative(p: &Pose<f64>, origin: &Pose<f64>) -> Pose<f64> {
    Pose {
        position: p.position - origin.position,
        orientation: p.orientation * origin.orientation.inverse(),
    }
}

fn lin(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(0).into_owned()
}

fn to_tip(r: &Matrix3<f64>, v: &Vector6<f64>) -> Vector6<f64> {
    rotate6(&r.transpose(), v)
}

/// Copy of `chain` with each link's inertial parameters scaled by
/// `1 + u·error`, `u` uniform in `[−1, 1]`.
pub fn perturbed_chain(chain: &ChainModel<f64>, error: f64, rng: &mut ChaCha8Rng) -> ChainModel<f64> {
    let mut out = chain.clone();
    for l in &mut out.links {
        let u: f64 = rng.random_range(-1.0..=1.0);
        l.inertia = l.inertia.scaled(1.0 + u * error);
    }
    out
}

/// Everything one step produced that the trace and monitors need.
struct StepRecord {
    x_m: Pose<f64>,
    x_s: Pose<f64>,
    v_m: Vector6<f64>,
    v_s: Vector6<f64>,
    v_mr: Vector6<f64>,
    v_sr: Vector6<f64>,
    f_m: Vector6<f64>,
    f_s: Vector6<f64>,
    f_h: Vector6<f64>,
    f_e: f64,
    penetration: f64,
    p_t7: f64,
    p_t: f64,
    margin_m: f64,
    margin_s: f64,
    clutch: bool,
}

/// One semi-implicit Euler step: velocities first, then positions with the
/// updated velocities. `kin` must hold the kinematics of `js.q`.
pub fn semi_implicit_euler(
    chain: &ChainModel<f64>,
    kin: &ChainKinematics<f64>,
    js: &mut JointState<f64>,
    tau: &DVector<f64>,
    gravity: &GravityVector<f64>,
    tip: &ForceVector<f64>,
    dt: f64,
) -> Result<(), ChainError> {
    let (qdd, _, _) = chain.forward_dynamics(kin, &js.qd, tau, gravity, tip)?;
    js.qd += qdd * dt;
    js.q += &js.qd * dt;
    Ok(())
}

/// Complete simulated world.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cfg: ScenarioConfig,
    pub gravity: GravityVector<f64>,
    pub master_plant: ChainModel<f64>,
    pub surrogate_plant: ChainModel<f64>,
    pub master_ctrl: ChainController<f64>,
    pub surrogate_ctrl: ChainController<f64>,
    pub master: JointState<f64>,
    pub surrogate: JointState<f64>,
    pub scaling: ScalingConfig<f64>,
    pub operator: Operator,
    pub environment: Option<EnvironmentModel<f64>>,
    master_obs: ForceObserver<f64>,
    surrogate_obs: ForceObserver<f64>,
    master_filter: SignalFilter<f64>,
    surrogate_filter: SignalFilter<f64>,
    to_surrogate: DelayLine<SideSignal<f64>, f64>,
    to_master: DelayLine<SideSignal<f64>, f64>,
    master_origin: Pose<f64>,
    surrogate_origin: Pose<f64>,
    hold: Option<Pose<f64>>,
    tau_m: DVector<f64>,
    tau_s: DVector<f64>,
    prev_required_normal: Option<f64>,
    prev_normal_velocity: Option<f64>,
    int_p_t7: f64,
    int_p_t: f64,
    prev_power: Option<(f64, f64)>,
    step: usize,
    /// Smallest barrier margin seen on each side.
    pub min_margin: (f64, f64),
    /// Steps where the master pseudo-inverse fell back to a damped inverse.
    pub dls_fallbacks: usize,
    pub trace: TraceLog,
    /// Full-rate time base and boundary powers for the monitors.
    pub power_time: Vec<f64>,
    pub power_master: Vec<f64>,
    pub power_contact: Vec<f64>,
    /// Initial-condition constants the monitors compare against.
    pub master_bound: f64,
    pub contact_bound: f64,
}

fn delay_mode(cfg: &ScenarioConfig, seed: u64) -> DelayMode<f64> {
    match cfg.delay.mode {
        DelayKind::None => DelayMode::None,
        DelayKind::Fixed => DelayMode::Fixed(cfg.delay.max),
        DelayKind::Varying => DelayMode::Varying { max: cfg.delay.max, seed },
    }
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let ctrl_err = |side| move |source| SimError::Control { side, source };
        let gravity = GravityVector::default();

        let robot = default_master::<f64>();
        let links: Vec<usize> = cfg.master.human_links.iter().map(|l| l - 1).collect();
        let human = AugmentedBodyParams::with_human_share(&robot, &links, cfg.master.human_mass, cfg.master.human_inertia);
        let master_plant = human.augmented_chain(&robot, cfg.master.human_damping);
        let surrogate_plant = default_surrogate::<f64>();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
        let err = cfg.uncertainty.inertia_error;
        let master_model = perturbed_chain(&master_plant, err, &mut rng);
        let surrogate_model = perturbed_chain(&surrogate_plant, err, &mut rng);

        let mut mspec = VdcGainSpec::default_master();
        mspec.bandwidth = cfg.master.bandwidth;
        mspec.barrier_bound = cfg.master.barrier_bound;
        mspec.adapt = cfg.master.adapt;
        let mut sspec = VdcGainSpec::default_surrogate();
        sspec.bandwidth = cfg.surrogate.bandwidth;
        sspec.barrier_bound = cfg.surrogate.barrier_bound;
        sspec.adapt = cfg.surrogate.adapt;
        let mgains = mspec.build(&master_model).map_err(ctrl_err("master"))?;
        let sgains = sspec.build(&surrogate_model).map_err(ctrl_err("surrogate"))?;

        // Initial Bregman distance of the operator-carrying links' estimates.
        let mut master_bound = 0.0;
        for &i in &links {
            let est = phi_to_l(&master_model.links[i].inertia);
            let truth = phi_to_l(&master_plant.links[i].inertia);
            master_bound += mgains.nal_gamma[i] * log_det_divergence(&truth, &est).unwrap_or(f64::INFINITY);
        }

        let q_m = DVector::from_column_slice(&cfg.master.q0);
        let q_s = DVector::from_column_slice(&cfg.surrogate.q0);
        let master_ctrl = ChainController::new(master_model, mgains, q_m.clone()).map_err(ctrl_err("master"))?;
        let surrogate_ctrl =
            ChainController::new(surrogate_model, sgains, q_s.clone()).map_err(ctrl_err("surrogate"))?;

        let master_origin = master_plant.forward_kinematics(&q_m)?;
        let surrogate_origin = surrogate_plant.forward_kinematics(&q_s)?;
        let operator = Operator::new(&cfg.operator, master_origin.position, master_origin.orientation);

        let environment = match &cfg.environment {
            Some(e) => Some(EnvironmentModel::new(
                e.mass,
                e.damping,
                e.stiffness,
                surrogate_origin.position + Vector3::from(e.offset),
                Vector3::from(e.normal),
            )?),
            None => None,
        };
        let contact_bound = environment.as_ref().map_or(0.0, |e| contact_initial_constant(e.mass, 0.0));

        let s = &cfg.scaling;
        let scaling = ScalingConfig::new(s.kappa_p, s.kappa_f, s.lambda, s.a, s.filter)?;
        let rest = SideSignal::at_rest(Pose::identity());
        Ok(Self {
            gravity,
            master_obs: ForceObserver::new(cfg.master.observer_gain, 7)?,
            surrogate_obs: ForceObserver::new(cfg.surrogate.observer_gain, 6)?,
            master_filter: SignalFilter::new(&rest, s.filter),
            surrogate_filter: SignalFilter::new(&rest, s.filter),
            to_surrogate: DelayLine::new(delay_mode(cfg, cfg.seed), cfg.dt)?,
            to_master: DelayLine::new(delay_mode(cfg, cfg.seed.wrapping_add(1)), cfg.dt)?,
            tau_m: DVector::zeros(7),
            tau_s: DVector::zeros(6),
            master: JointState::at_rest(q_m),
            surrogate: JointState::at_rest(q_s),
            master_plant,
            surrogate_plant,
            master_ctrl,
            surrogate_ctrl,
            scaling,
            operator,
            environment,
            master_origin,
            surrogate_origin,
            hold: None,
            prev_required_normal: None,
            prev_normal_velocity: None,
            int_p_t7: 0.0,
            int_p_t: 0.0,
            prev_power: None,
            step: 0,
            min_margin: (1.0, 1.0),
            dls_fallbacks: 0,
            trace: TraceLog::new(),
            power_time: Vec::new(),
            power_master: Vec::new(),
            power_contact: Vec::new(),
            master_bound,
            contact_bound,
            cfg: cfg.clone(),
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    fn disturbance(&self, side: Side, n: usize, t: f64) -> DVector<f64> {
        let mut d = DVector::zeros(n);
        for dist in self.cfg.uncertainty.disturbance.iter().filter(|d| d.side == side) {
            d[dist.joint - 1] += dist.amplitude * (std::f64::consts::TAU * dist.frequency * t).sin();
        }
        d
    }

    fn barrier_error(&self, side: &'static str, err: ControlError) -> SimError {
        match err {
            ControlError::Barrier { joint, error, bound } => SimError::Barrier {
                step: self.step,
                time: self.time(),
                side,
                joint,
                error,
                bound,
            },
            source => SimError::Control { side, source },
        }
    }

    fn control(
        &mut self,
        side: Side,
        kin: &ChainKinematics<f64>,
        qd_r: &DVector<f64>,
        tip: &ForceVector<f64>,
    ) -> Result<ControlStep<f64>, SimError> {
        let dt = self.cfg.dt;
        let res = match side {
            Side::Master => self.master_ctrl.step(kin, &self.master, qd_r, tip, &self.gravity, dt),
            Side::Surrogate => self.surrogate_ctrl.step(kin, &self.surrogate, qd_r, tip, &self.gravity, dt),
        };
        res.map_err(|e| self.barrier_error(side_name(side), e))
    }

    /// One control period: sense, estimate, exchange, control, integrate.
    pub fn step_closed_loop(&mut self) -> Result<(), SimError> {
        let dt = self.cfg.dt;
        let t = self.time();
        let kp = self.scaling.kappa_p;

        let kin_m = self.master_plant.kinematics(&self.master.q)?;
        let kin_s = self.surrogate_plant.kinematics(&self.surrogate.q)?;
        let pose_m = kin_m.tip_pose();
        let pose_s = kin_s.tip_pose();
        let r_m = kin_m.tip_rotation();
        let r_s = kin_s.tip_rotation();
        let j_m = self.master_plant.jacobian_base_aligned(&kin_m)?;
        let j_s = self.surrogate_plant.jacobian_base_aligned(&kin_s)?;
        let v_m = Vector6::from_column_slice((&j_m * &self.master.qd).as_slice());
        let v_s = Vector6::from_column_slice((&j_s * &self.surrogate.qd).as_slice());
        let f_h = self.operator.wrench(t, &pose_m.position, &pose_m.orientation, &v_m);

        let x_s = relative(&pose_s, &self.surrogate_origin);
        let open = self.operator.clutch_open(t);
        let mut reanchored = false;
        match (self.hold.is_some(), open) {
            (false, true) => self.hold = Some(x_s),
            (true, false) => {
                self.hold = None;
                reanchored = true;
                self.master_origin = Pose {
                    position: pose_m.position - x_s.position / kp,
                    orientation: x_s.orientation.inverse() * pose_m.orientation,
                };
            }
            _ => {}
        }
        let x_m = relative(&pose_m, &self.master_origin);

        let h_m = self.master_plant.mass_matrix(&kin_m)?;
        let b_m = self.master_plant.bias_torques(&kin_m, &self.master.qd, &self.gravity)?;
        self.master_obs.update(&h_m, &b_m, &self.master.qd, &self.tau_m, dt);
        let f_m = self.master_obs.tip_wrench(&self.master_plant, &kin_m)?;
        let h_s = self.surrogate_plant.mass_matrix(&kin_s)?;
        let b_s = self.surrogate_plant.bias_torques(&kin_s, &self.surrogate.qd, &self.gravity)?;
        self.surrogate_obs.update(&h_s, &b_s, &self.surrogate.qd, &self.tau_s, dt);
        let f_s = self.surrogate_obs.tip_wrench(&self.surrogate_plant, &kin_s)?;

        let sig_m = SideSignal { velocity: v_m, pose: x_m, force: f_m };
        let sig_s = SideSignal { velocity: v_s, pose: x_s, force: f_s };
        if reanchored {
            self.master_filter = SignalFilter::new(&sig_m, self.scaling.filter);
        }
        let filt_m = self.master_filter.step(&sig_m, dt);
        let filt_s = self.surrogate_filter.step(&sig_s, dt);
        let at_surrogate = channel_push_sample(&mut self.to_surrogate, filt_m);
        let at_master = channel_push_sample(&mut self.to_master, filt_s);

        let (v_md, v_sd) = match &self.hold {
            // Indexing: the master keeps only its own force-reflection term, so
            // it follows the hand freely; the surrogate regulates the held pose.
            Some(hold) => {
                let cfg = &self.scaling;
                let own = cfg.a * (cfg.kappa_f_matrix() - cfg.kappa_p_matrix()) * f_m;
                (-(cfg.kappa_p_inverse() * own), cfg.lambda * pose_difference(hold, 1.0, &x_s, 1.0))
            }
            None => (
                desired_master_velocity(&at_master, &x_m, &f_m, &self.scaling),
                desired_surrogate_velocity(&at_surrogate, &x_s, &self.scaling),
            ),
        };
        let v_mr = required_master_velocity(&v_md, &f_m, &self.scaling.a);
        let v_sr = required_surrogate_velocity(&v_sd, &f_s, &self.scaling.a);

        let qd_r_m = match required_joint_velocity_master(&j_m, &v_mr) {
            Ok(v) => v,
            Err(ChainError::RankDeficient { .. }) => {
                self.dls_fallbacks += 1;
                dls_inverse(&j_m, self.cfg.surrogate.dls_lambda)? * DVector::from_column_slice(v_mr.as_slice())
            }
            Err(e) => return Err(e.into()),
        };
        let qd_r_s = required_joint_velocity_surrogate(&j_s, &v_sr, self.cfg.surrogate.dls_lambda)?;

        let (f_ed, f_e, selection, penetration) = match &self.environment {
            Some(env) => {
                let n = env.normal;
                let v_req = Vector6::from_column_slice((&j_s * &qd_r_s).as_slice());
                let vr_n = n.dot(&lin(&v_req));
                let ar_n = self.prev_required_normal.map_or(0.0, |p| (vr_n - p) / dt);
                self.prev_required_normal = Some(vr_n);
                let vn = n.dot(&lin(&v_s));
                let an = self.prev_normal_velocity.map_or(0.0, |p| (vn - p) / dt);
                self.prev_normal_velocity = Some(vn);
                let state = ContactState {
                    penetration: env.penetration(&pose_s.position),
                    normal_velocity: vn,
                    normal_acceleration: an,
                };
                (
                    desired_environment_force(env, &state, vr_n, ar_n),
                    environment_force(env, &state),
                    env.selection(&r_s),
                    state.penetration,
                )
            }
            None => (0.0, 0.0, Vector6::zeros(), 0.0),
        };

        let tip_m = ForceVector::from_vector(&to_tip(&r_m, &f_m), cut_after(6));
        let step_m = self.control(Side::Master, &kin_m, &qd_r_m, &tip_m)?;
        let tip_s = ForceVector::from_vector(&(selection * f_ed), cut_after(5));
        let step_s = self.control(Side::Surrogate, &kin_s, &qd_r_s, &tip_s)?;

        self.tau_m = step_m.tau.clone();
        let lag = self.cfg.surrogate.actuator_lag;
        // The lag state starts at the first command, as if the actuators had
        // been holding the initial posture.
        if lag > 0.0 && self.step > 0 {
            let alpha = 1.0 - (-dt / lag).exp();
            self.tau_s += (&step_s.tau - &self.tau_s) * alpha;
        } else {
            self.tau_s = step_s.tau.clone();
        }

        let dv_m = step_m.required.tip().to_vector() - step_m.actual.tip().to_vector();
        let dv_s = step_s.required.tip().to_vector() - step_s.actual.tip().to_vector();
        let p_t7 = dv_m.dot(&to_tip(&r_m, &(f_m + f_h)));
        let p_t = dv_s.dot(&(selection * (f_ed - f_e)));

        let record = StepRecord {
            x_m,
            x_s,
            v_m,
            v_s,
            v_mr,
            v_sr,
            f_m,
            f_s,
            f_h,
            f_e,
            penetration,
            p_t7,
            p_t,
            margin_m: step_m.barrier_margin,
            margin_s: step_s.barrier_margin,
            clutch: open,
        };
        self.record(t, &record);

        let tau_m = &self.tau_m + self.disturbance(Side::Master, 7, t);
        let tau_s = &self.tau_s + self.disturbance(Side::Surrogate, 6, t);
        let plant_tip_m = ForceVector::from_vector(&to_tip(&r_m, &-f_h), cut_after(6));
        let plant_tip_s = ForceVector::from_vector(&(selection * f_e), cut_after(5));
        semi_implicit_euler(&self.master_plant, &kin_m, &mut self.master, &tau_m, &self.gravity, &plant_tip_m, dt)?;
        semi_implicit_euler(
            &self.surrogate_plant,
            &kin_s,
            &mut self.surrogate,
            &tau_s,
            &self.gravity,
            &plant_tip_s,
            dt,
        )?;
        self.step += 1;

        for (name, js) in [("master", &self.master), ("surrogate", &self.surrogate)] {
            let finite = js.q.iter().chain(js.qd.iter()).all(|v| v.is_finite());
            let fastest = js.qd.amax();
            if !finite || fastest > DIVERGENCE_SPEED {
                return Err(SimError::Divergence {
                    step: self.step,
                    time: self.time(),
                    detail: format!("{name} joint speed {fastest:.3e} rad/s"),
                });
            }
        }
        Ok(())
    }

    fn record(&mut self, t: f64, r: &StepRecord) {
        let dt = self.cfg.dt;
        if let Some((pm, pc)) = self.prev_power {
            self.int_p_t7 += 0.5 * (pm + r.p_t7) * dt;
            self.int_p_t += 0.5 * (pc + r.p_t) * dt;
        }
        self.prev_power = Some((r.p_t7, r.p_t));
        self.power_time.push(t);
        self.power_master.push(r.p_t7);
        self.power_contact.push(r.p_t);
        self.min_margin = (self.min_margin.0.min(r.margin_m), self.min_margin.1.min(r.margin_s));
        if !self.step.is_multiple_of(self.cfg.log_every) {
            return;
        }
        let kp = self.scaling.kappa_p;
        let kp6 = self.scaling.kappa_p_matrix();
        let normal = self.environment.as_ref().map_or(Vector3::zeros(), |e| e.normal);
        let fh_n = normal.dot(&lin(&r.f_h));
        let mut row = Vec::with_capacity(self.trace.columns.len());
        row.push(t);
        row.extend(self.master.q.iter());
        row.extend(self.master.qd.iter());
        row.extend(self.surrogate.q.iter());
        row.extend(self.surrogate.qd.iter());
        row.extend((r.x_m.position * kp).iter());
        row.extend(r.x_s.position.iter());
        row.extend(r.x_m.orientation.scaled_axis().iter());
        row.extend(r.x_s.orientation.scaled_axis().iter());
        row.extend((kp6 * r.v_m).iter());
        row.extend(r.v_s.iter());
        row.extend(r.f_m.iter());
        row.extend(r.f_s.iter());
        row.extend(r.f_h.iter());
        row.push(r.f_e);
        row.push(fh_n);
        row.push(self.scaling.kappa_f * fh_n);
        row.push(normal.dot(&lin(&r.f_s)));
        row.extend((r.v_mr - r.v_m).iter());
        row.extend((r.v_sr - r.v_s).iter());
        row.extend((kp6 * r.v_m - r.v_s).iter());
        row.extend(pose_difference(&r.x_m, kp, &r.x_s, 1.0).iter());
        row.push(r.p_t7);
        row.push(r.p_t);
        row.push(self.int_p_t7);
        row.push(self.int_p_t);
        row.push(r.margin_m);
        row.push(r.margin_s);
        row.push(self.to_surrogate.last_delay() * 1e3);
        row.push(self.to_master.last_delay() * 1e3);
        row.push(if r.clutch { 1.0 } else { 0.0 });
        row.push(r.penetration);
        self.trace.push(row);
    }

    /// Running boundary-power integrals checked against their constants.
    pub fn vpf_report(&self) -> VpfMonitorReport {
        vpf_integral_monitor(
            &self.power_time,
            &self.power_master,
            &self.power_contact,
            self.master_bound,
            self.contact_bound,
        )
    }
}

/// Result of a completed scenario.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: TraceLog,
    pub metrics: MetricsReport,
    pub vpf: VpfMonitorReport,
    pub trace_hash: String,
    /// Smallest barrier margin seen on each side over the whole run.
    pub min_margin: (f64, f64),
    pub dls_fallbacks: usize,
}

/// Runs `cfg` to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(cfg)?;
    for _ in 0..cfg.steps() {
        sim.step_closed_loop()?;
    }
    let metrics = compute_metrics(&sim.trace)?;
    let vpf = sim.vpf_report();
    Ok(RunOutput {
        trace_hash: sim.trace.hash(),
        metrics,
        vpf,
        min_margin: sim.min_margin,
        dls_fallbacks: sim.dls_fallbacks,
        trace: sim.trace,
    })
}
