//! Frequency-domain report for a scenario's scaling gains.

use std::io::Write;

use nalgebra::Vector6;

use super::config::{AnalysisSpec, ScenarioConfig};
use crate::analysis::{
    ideal_gap, stability_condition, transparency_report, write_analysis_csv, AnalysisError, FrequencyGrid, IdealGap,
    ImpedanceModel, StabilityReport,
};
use crate::coupling::{CouplingError, ScalingConfig};

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub scaling: ScalingConfig<f64>,
    pub stability: StabilityReport<f64>,
    pub gap: IdealGap<f64>,
}

/// Environment impedance on one translational axis and a mass-damper hand
/// on every axis, as configured.
pub fn impedance_models(spec: &AnalysisSpec) -> Result<(ImpedanceModel<f64>, ImpedanceModel<f64>), AnalysisError> {
    let mut d = Vector6::zeros();
    let mut k = Vector6::zeros();
    d[spec.env_axis] = spec.env_damping;
    k[spec.env_axis] = spec.env_stiffness;
    let z_e = ImpedanceModel::new(Vector6::zeros(), d, k)?;
    let z_h = ImpedanceModel::new(
        Vector6::repeat(spec.human_mass),
        Vector6::repeat(spec.human_damping),
        Vector6::zeros(),
    )?;
    Ok((z_e, z_h))
}

pub fn analyze_scenario(cfg: &ScenarioConfig) -> Result<AnalysisOutput, AnalyzeError> {
    let s = &cfg.scaling;
    let scaling = ScalingConfig::new(s.kappa_p, s.kappa_f, s.lambda, s.a, s.filter)?;
    let a = &cfg.analysis;
    let grid = FrequencyGrid::log_spaced(a.omega_min, a.omega_max, a.points)?;
    let (z_e, z_h) = impedance_models(a)?;
    let stability = stability_condition(&scaling, &z_e, &z_h, &grid)?;
    let gap = ideal_gap(&transparency_report(&scaling, &grid));
    Ok(AnalysisOutput { scaling, stability, gap })
}

impl AnalysisOutput {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<(), AnalysisError> {
        write_analysis_csv(out, &self.stability, &self.scaling)
    }

    /// Human-readable verdict lines.
    pub fn summary(&self) -> String {
        let r = &self.stability;
        format!(
            "stability: {} (margin {:.4e}, sup {:.6}/{:.6} at omega {:.4e} rad/s, {} samples)\n\
             transparency: sup|g11| {:.4e}, sup|g22| {:.4e}\n",
            if r.satisfied { "satisfied" } else { "violated" },
            r.margin,
            r.sup.0,
            r.sup.1,
            r.worst_omega,
            r.samples.len(),
            self.gap.g11_sup,
            self.gap.g22_sup,
        )
    }
}
