//! Force observer against the simulated plant as ground truth.

use nalgebra::{DVector, Vector6};
use vdc_teleop::chain::{cut_after, default_master, rotate6, ChainModel, JointState};
use vdc_teleop::estimation::ForceObserver;
use vdc_teleop::harness::sim::semi_implicit_euler;
use vdc_teleop::rigid_body::GravityVector;
use vdc_teleop::spatial::ForceVector;

const DT: f64 = 1e-3;

fn q0() -> DVector<f64> {
    DVector::from_vec(vec![0.2, 0.4, 0.1, 1.0, 0.2, 0.3, 0.1])
}

fn wrench() -> Vector6<f64> {
    Vector6::new(12.0, -5.0, 20.0, 0.4, -0.3, 0.2)
}

/// Simulates the master arm for `steps` steps. `applied(t)` is the wrench the
/// arm exerts at its tip in base-aligned axes. With `hold`, the joint torques
/// balance gravity and the applied wrench exactly, so the arm stays at rest;
/// otherwise a PD law tracks a slow joint sinusoid on top of gravity
/// compensation. Returns `(t, estimate, truth)` per step.
fn simulate(
    gain: f64,
    steps: usize,
    hold: bool,
    applied: impl Fn(f64) -> Vector6<f64>,
) -> Vec<(f64, Vector6<f64>, Vector6<f64>)> {
    let chain: ChainModel<f64> = default_master();
    let g = GravityVector::default();
    let n = chain.dof();
    let mut js = JointState::at_rest(q0());
    let mut obs = ForceObserver::new(gain, n).unwrap();
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * DT;
        let kin = chain.kinematics(&js.q).unwrap();
        let truth = applied(t);
        let tip = ForceVector::from_vector(&rotate6(&kin.tip_rotation().transpose(), &truth), cut_after(n - 1));
        let tau = if hold {
            chain.inverse_dynamics(&kin, &js.qd, &DVector::zeros(n), &g, &tip).unwrap()
        } else {
            let q_ref = q0().map(|q| q + 0.3 * (2.0 * t).sin());
            chain.bias_torques(&kin, &js.qd, &g).unwrap() + (q_ref - &js.q) * 200.0 - &js.qd * 20.0
        };
        let h = chain.mass_matrix(&kin).unwrap();
        let bias = chain.bias_torques(&kin, &js.qd, &g).unwrap();
        obs.update(&h, &bias, &js.qd, &tau, DT);
        let est = obs.tip_wrench(&chain, &kin).unwrap();
        out.push((t, est, truth));
        semi_implicit_euler(&chain, &kin, &mut js, &tau, &g, &tip, DT).unwrap();
    }
    out
}

#[test]
fn free_motion_estimate_vanishes_after_five_time_constants() {
    let gain = 100.0;
    let run = simulate(gain, 2000, false, |_| Vector6::zeros());
    let settle = (5.0 / gain / DT) as usize;
    for (t, est, _) in &run[settle..] {
        assert!(est.fixed_rows::<3>(0).norm() < 1.0, "t = {t}: {est}");
    }
}

#[test]
fn constant_wrench_recovered_within_two_percent() {
    for hold in [true, false] {
        let run = simulate(100.0, 1500, hold, |_| wrench());
        let (_, est, truth) = run.last().unwrap();
        let rel = (est - truth).norm() / truth.norm();
        assert!(rel < 0.02, "hold = {hold}: relative error {rel}");
    }
}

#[test]
fn higher_gain_tracks_a_step_more_closely() {
    let step = |t: f64| if t >= 0.1 { wrench() } else { Vector6::zeros() };
    let probe = 120;
    let errors: Vec<f64> = [10.0, 30.0, 100.0, 300.0]
        .iter()
        .map(|&gain| {
            let run = simulate(gain, probe + 1, false, step);
            let (_, est, truth) = run[probe];
            (est - truth).norm() / truth.norm()
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(errors[3] < 0.02, "{errors:?}");
}

#[test]
fn step_error_decays_at_the_observer_rate() {
    let gain = 100.0;
    let onset = 0.05;
    let run = simulate(gain, 200, true, |t| if t >= onset { wrench() } else { Vector6::zeros() });
    // Log-linear least squares over one to four time constants after onset.
    let pts: Vec<(f64, f64)> = run
        .iter()
        .filter(|(t, _, _)| *t >= onset + 1.0 / gain && *t <= onset + 4.0 / gain)
        .map(|(t, est, truth)| (*t, (est - truth).norm().ln()))
        .collect();
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope + gain).abs() < 0.1 * gain, "slope {slope}");
}
