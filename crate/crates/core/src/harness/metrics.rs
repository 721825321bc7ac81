//! Task metrics computed from a trace.

use std::io::Write;

use super::trace::{TraceError, TraceLog};

/// Metrics of one run. Position and velocity metrics use the scaled master
/// signals, so they compare `κ_p X_m` with `X_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Last time the surrogate speed exceeded 1% of its peak (s).
    pub task_time: f64,
    /// `𝒩 = ‖κ_p X_m‖ − ‖X_s‖`: max, RMS and integral of `|𝒩|`.
    pub n_max: f64,
    pub n_rms: f64,
    pub n_integral: f64,
    /// `‖κ_p X_m − X_s‖`: max, RMS and final value.
    pub ep_max: f64,
    pub ep_rms: f64,
    pub ep_final: f64,
    /// Relative orientation error (deg).
    pub orientation_max: f64,
    pub orientation_rms: f64,
    /// Mean of `|‖κ_p v_m‖ − ‖v_s‖|` (m/s).
    pub velocity_mae: f64,
    /// `𝒩_max / max‖v_s‖`.
    pub rho: f64,
    /// `𝓕 = κ_f f_h − f̂_s` along the contact normal (N).
    pub force_max: f64,
    pub force_rms: f64,
    pub rho_v_max: f64,
    pub rho_p_max: f64,
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn trapezoid(t: &[f64], v: &[f64]) -> f64 {
    t.windows(2)
        .zip(v.windows(2))
        .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
        .sum()
}

fn block_norm_max(trace: &TraceLog, prefix: &str) -> Result<f64, TraceError> {
    let lin = trace.vec3(prefix)?;
    Ok(lin.iter().map(norm3).fold(0.0, f64::max))
}

pub fn compute_metrics(trace: &TraceLog) -> Result<MetricsReport, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    let t = trace.column("time")?;
    let xm = trace.vec3("xm")?;
    let xs = trace.vec3("xs")?;
    let vm = trace.vec3("vm")?;
    let vs = trace.vec3("vs")?;
    let n: Vec<f64> = xm.iter().zip(&xs).map(|(a, b)| norm3(a) - norm3(b)).collect();
    let ep: Vec<f64> = xm
        .iter()
        .zip(&xs)
        .map(|(a, b)| norm3(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]]))
        .collect();
    let rot_idx = ["rho_p_rx", "rho_p_ry", "rho_p_rz"]
        .iter()
        .map(|c| trace.index(c))
        .collect::<Result<Vec<_>, _>>()?;
    let orient: Vec<f64> = trace
        .rows
        .iter()
        .map(|r| {
            let s = norm3(&[r[rot_idx[0]], r[rot_idx[1]], r[rot_idx[2]]]).min(1.0);
            2.0 * s.asin().to_degrees()
        })
        .collect();
    let speed_s: Vec<f64> = vs.iter().map(norm3).collect();
    let vel_err: Vec<f64> = vm.iter().zip(&speed_s).map(|(a, b)| (norm3(a) - b).abs()).collect();
    let peak = speed_s.iter().cloned().fold(0.0, f64::max);
    let task_time = t
        .iter()
        .zip(&speed_s)
        .rfind(|(_, &s)| s > 0.01 * peak)
        .map_or(t[t.len() - 1], |(&t, _)| t)
        - t[0];
    let f_cmd = trace.column("f_cmd")?;
    let fs_n = trace.column("fs_n")?;
    let f_err: Vec<f64> = f_cmd.iter().zip(&fs_n).map(|(a, b)| a - b).collect();
    let abs_n: Vec<f64> = n.iter().map(|x| x.abs()).collect();
    let n_max = max_abs(&n);
    Ok(MetricsReport {
        task_time,
        n_max,
        n_rms: rms(&n),
        n_integral: trapezoid(&t, &abs_n),
        ep_max: max_abs(&ep),
        ep_rms: rms(&ep),
        ep_final: ep[ep.len() - 1],
        orientation_max: max_abs(&orient),
        orientation_rms: rms(&orient),
        velocity_mae: vel_err.iter().sum::<f64>() / vel_err.len() as f64,
        rho: if peak > 0.0 { n_max / peak } else { 0.0 },
        force_max: max_abs(&f_err),
        force_rms: rms(&f_err),
        rho_v_max: block_norm_max(trace, "rho_v")?,
        rho_p_max: block_norm_max(trace, "rho_p")?,
    })
}

impl MetricsReport {
    pub fn entries(&self) -> [(&'static str, f64); 15] {
        [
            ("task_time_s", self.task_time),
            ("n_max_m", self.n_max),
            ("n_rms_m", self.n_rms),
            ("n_integral_m_s", self.n_integral),
            ("scaled_error_max_m", self.ep_max),
            ("scaled_error_rms_m", self.ep_rms),
            ("scaled_error_final_m", self.ep_final),
            ("orientation_max_deg", self.orientation_max),
            ("orientation_rms_deg", self.orientation_rms),
            ("velocity_mae_m_s", self.velocity_mae),
            ("rho_s", self.rho),
            ("force_error_max_n", self.force_max),
            ("force_error_rms_n", self.force_rms),
            ("rho_v_max", self.rho_v_max),
            ("rho_p_max", self.rho_p_max),
        ]
    }

    /// `metric,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "metric,value")?;
        for (k, v) in self.entries() {
            writeln!(out, "{k},{v:.9e}")?;
        }
        Ok(())
    }
}
