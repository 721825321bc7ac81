//! Closed-loop harness properties: rest equilibrium, determinism, passive
//! energy, indexing and metric robustness.

use std::path::PathBuf;

use nalgebra::{DVector, Vector3};
use vdc_teleop::chain::{chain_from_specs, cut_after, JointKind, JointState, LinkSpec};
use vdc_teleop::harness::config::ScenarioConfig;
use vdc_teleop::harness::metrics::compute_metrics;
use vdc_teleop::harness::sim::{run_scenario, semi_implicit_euler, Simulation};
use vdc_teleop::rigid_body::GravityVector;
use vdc_teleop::spatial::ForceVector;

fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    ScenarioConfig::load(&path).unwrap()
}

fn still(duration: f64, inertia_error: f64) -> ScenarioConfig {
    ScenarioConfig::from_toml(&format!(
        r#"
name = "still"
duration = {duration}
seed = 4
[scaling]
kappa_p = 3.0
kappa_f = 500.0
lambda = 12.0
a = 8e-4
[operator]
waypoints = [[0.0, 0.0, 0.0, 0.0]]
[uncertainty]
inertia_error = {inertia_error}
"#
    ))
    .unwrap()
}

fn short_motion(seed: u64) -> ScenarioConfig {
    let mut cfg = scenario("free_motion_kp7");
    cfg.duration = 1.5;
    cfg.seed = seed;
    cfg
}

#[test]
fn rest_is_an_equilibrium_with_exact_model() {
    let cfg = still(1.0, 0.0);
    let mut sim = Simulation::new(&cfg).unwrap();
    let (qm0, qs0) = (sim.master.q.clone(), sim.surrogate.q.clone());
    while sim.time() < cfg.duration {
        sim.step_closed_loop().unwrap();
    }
    // Rounding in the model terms is integrated by the adaptive laws, so
    // equality holds to a small tolerance rather than bitwise.
    assert!((&sim.master.q - qm0).amax() < 1e-6, "master moved");
    assert!((&sim.surrogate.q - qs0).amax() < 1e-6, "surrogate moved");
    assert!(sim.master.qd.amax() < 1e-6 && sim.surrogate.qd.amax() < 1e-6);
}

#[test]
fn identical_configs_give_identical_hashes() {
    let a = run_scenario(&short_motion(21)).unwrap();
    let b = run_scenario(&short_motion(21)).unwrap();
    assert_eq!(a.trace_hash, b.trace_hash);
    assert_eq!(a.trace, b.trace);
    let c = run_scenario(&short_motion(22)).unwrap();
    assert_ne!(a.trace_hash, c.trace_hash, "seed should change the perturbed model");
}

/// Mechanical energy of an undamped rigid pendulum, zero at the lowest point.
fn pendulum_energy(i_pivot: f64, mgc: f64, theta: f64, omega: f64) -> f64 {
    0.5 * i_pivot * omega * omega + mgc * (1.0 - theta.cos())
}

#[test]
fn undamped_pendulum_conserves_energy() {
    let (mass, length, armature) = (400.0f64, 2.0f64, 40.0f64);
    let across = mass * length * length / 12.0;
    let spec = LinkSpec {
        name: "boom".into(),
        kind: JointKind::Revolute,
        axis: Vector3::y(),
        offset: Vector3::zeros(),
        offset_rpy: Vector3::zeros(),
        length: Vector3::new(length, 0.0, 0.0),
        mass,
        com: Vector3::new(0.5 * length, 0.0, 0.0),
        inertia_com: Vector3::new(1e-3, across, across),
        lower: -10.0,
        upper: 10.0,
        armature,
        damping: 0.0,
    };
    let chain = chain_from_specs("pendulum", &[spec]).unwrap();
    let g = GravityVector::default();
    let dt = 1e-3;
    let i_pivot = across + mass * 0.25 * length * length + armature;
    let mgc = mass * 9.81 * 0.5 * length;
    let omega0 = (mgc / i_pivot).sqrt();
    // Joint angle π/2 hangs straight down; release one radian from there.
    let hang = std::f64::consts::FRAC_PI_2;
    let amplitude = 1.0f64;
    let mut js = JointState::at_rest(DVector::from_element(1, hang - amplitude));
    let e0 = pendulum_energy(i_pivot, mgc, -amplitude, 0.0);
    let tip = ForceVector::zero(cut_after(0));
    let tau = DVector::zeros(1);
    let steps = 10_000;
    let mut energy = Vec::with_capacity(steps);
    let mut crossings = Vec::new();
    for k in 0..steps {
        let kin = chain.kinematics(&js.q).unwrap();
        let theta_before = js.q[0] - hang;
        // The chain's own energy bookkeeping must agree with the analytic form.
        let model = chain.kinetic_energy(&js).unwrap() + chain.potential_energy(&js.q, &g).unwrap() + mgc;
        let analytic = pendulum_energy(i_pivot, mgc, theta_before, js.qd[0]);
        assert!((model - analytic).abs() < 1e-9 * e0, "model energy {model} vs {analytic}");
        energy.push(analytic);
        semi_implicit_euler(&chain, &kin, &mut js, &tau, &g, &tip, dt).unwrap();
        let theta_after = js.q[0] - hang;
        if theta_before < 0.0 && theta_after >= 0.0 {
            crossings.push((k as f64 + theta_before / (theta_before - theta_after)) * dt);
        }
    }
    // No secular drift: energy averaged over the first and last periods agree.
    let period_steps = (2.0 * std::f64::consts::PI / omega0 / dt) as usize;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let drift = (mean(&energy[steps - period_steps..]) - mean(&energy[..period_steps])) / e0;
    assert!(drift.abs() < 1e-3, "secular drift {drift}");
    // Bounded oscillation, at most ω·dt/2 of the swing energy for this integrator.
    let worst = energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0;
    assert!(worst < 0.5 * omega0 * dt * 1.05, "instantaneous deviation {worst}");
    // Large-amplitude period from the arithmetic-geometric mean.
    let (mut a, mut b) = (1.0f64, (0.5 * amplitude).cos());
    for _ in 0..20 {
        (a, b) = (0.5 * (a + b), (a * b).sqrt());
    }
    let period = 2.0 * std::f64::consts::PI / omega0 / a;
    let measured = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    assert!((measured - period).abs() / period < 1e-3, "period {measured} vs {period}");
}

#[test]
fn indexing_holds_surrogate_and_blocks_master_motion() {
    let cfg = scenario("indexing_kp1");
    let [open, close] = cfg.operator.clutch[0];
    let run = run_scenario(&cfg).unwrap();
    let t = run.trace.column("time").unwrap();
    let xm = run.trace.vec3("xm").unwrap();
    let xs = run.trace.vec3("xs").unwrap();
    let at = |time: f64| t.iter().position(|&s| s >= time).unwrap();
    let (i0, i1) = (at(open + 0.01), at(close - 0.01));
    let dist = |a: &[f64; 3], b: &[f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let drift_rate = dist(&xs[i1], &xs[i0]) / (t[i1] - t[i0]);
    assert!(drift_rate < 1e-3, "surrogate drift {drift_rate} m/s");
    // The master returns with the hand while the surrogate stays put.
    let master_travel = dist(&xm[i1], &xm[i0]);
    let surrogate_travel = xs[i0..=i1].iter().map(|x| dist(x, &xs[i0])).fold(0.0, f64::max);
    assert!(master_travel > 0.03, "master travel {master_travel}");
    assert!(surrogate_travel < 0.02 * master_travel, "{surrogate_travel} vs {master_travel}");
    // After closing, the second stroke moves the surrogate again from the held pose.
    let last = xs.len() - 1;
    assert!(dist(&xs[last], &xs[i1]) > 0.03);
}

#[test]
fn metrics_survive_two_fold_decimation() {
    for name in ["free_motion_kp7", "contact_kf800"] {
        // Full-rate logging keeps the halved rate above the signal bandwidth.
        let mut cfg = scenario(name);
        cfg.log_every = 1;
        let run = run_scenario(&cfg).unwrap();
        let full = compute_metrics(&run.trace).unwrap();
        let half = compute_metrics(&run.trace.decimated(2)).unwrap();
        for ((key, a), (_, b)) in full.entries().iter().zip(half.entries()) {
            let scale = a.abs().max(1e-9);
            assert!((a - b).abs() <= 0.01 * scale, "{name} {key}: {a} vs {b}");
        }
    }
}

#[test]
fn doubling_lambda_reduces_steady_pose_error() {
    let steady = |lambda: f64| {
        let mut cfg = scenario("free_motion_kp7");
        cfg.scaling.lambda = lambda;
        let run = run_scenario(&cfg).unwrap();
        let t = run.trace.column("time").unwrap();
        let cols: Vec<Vec<f64>> = ["x", "y", "z", "rx", "ry", "rz"]
            .iter()
            .map(|a| run.trace.column(&format!("rho_p_{a}")).unwrap())
            .collect();
        let tail: Vec<f64> = (0..t.len())
            .filter(|&k| t[k] > cfg.duration - 2.0)
            .map(|k| cols.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt())
            .collect();
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    let (base, doubled) = (steady(12.0), steady(24.0));
    assert!(doubled < base, "{doubled} vs {base}");
}
