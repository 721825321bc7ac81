//! Scenario files: TOML with nested sections, validated in one pass so every
//! problem is reported at once.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

fn default_dt() -> f64 {
    1e-3
}
fn default_log_every() -> usize {
    10
}
fn default_filter() -> f64 {
    35.0
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Trace rows are kept every `log_every` steps.
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    pub scaling: ScalingSpec,
    #[serde(default)]
    pub delay: DelaySpec,
    #[serde(default = "MasterSpec::default")]
    pub master: MasterSpec,
    #[serde(default = "SurrogateSpec::default")]
    pub surrogate: SurrogateSpec,
    pub operator: OperatorSpec,
    #[serde(default)]
    pub environment: Option<EnvironmentSpec>,
    #[serde(default)]
    pub uncertainty: UncertaintySpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub kappa_p: f64,
    pub kappa_f: f64,
    pub lambda: f64,
    pub a: f64,
    #[serde(default = "default_filter")]
    pub filter: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum DelayKind {
    #[default]
    None,
    Fixed,
    Varying,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    #[serde(default)]
    pub mode: DelayKind,
    /// Fixed delay, or upper bound of the varying delay (s).
    #[serde(default)]
    pub max: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MasterSpec {
    pub q0: Vec<f64>,
    pub bandwidth: f64,
    pub barrier_bound: f64,
    pub observer_gain: f64,
    pub adapt: bool,
    /// Operator arm mass carried by each listed link (1-based).
    pub human_mass: f64,
    pub human_inertia: f64,
    pub human_links: Vec<usize>,
    pub human_damping: f64,
}

impl Default for MasterSpec {
    fn default() -> Self {
        Self {
            q0: vec![0.0, 0.5, 0.0, -1.0, 0.0, 0.5, 0.0],
            bandwidth: 120.0,
            barrier_bound: 0.2,
            observer_gain: 200.0,
            adapt: true,
            human_mass: 1.5,
            human_inertia: 0.01,
            human_links: vec![5, 7],
            human_damping: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSpec {
    pub q0: Vec<f64>,
    pub bandwidth: f64,
    pub barrier_bound: f64,
    pub observer_gain: f64,
    pub adapt: bool,
    pub dls_lambda: f64,
    /// First-order actuator lag (s); zero for ideal actuators.
    pub actuator_lag: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self {
            q0: vec![0.0, -0.4, 1.0, 0.0, 0.6, 0.0],
            bandwidth: 40.0,
            barrier_bound: 0.2,
            observer_gain: 200.0,
            adapt: true,
            dls_lambda: 1e-4,
            actuator_lag: 0.02,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    #[serde(default = "OperatorSpec::default_stiffness")]
    pub stiffness: f64,
    #[serde(default = "OperatorSpec::default_damping")]
    pub damping: f64,
    #[serde(default = "OperatorSpec::default_rot_stiffness")]
    pub rot_stiffness: f64,
    #[serde(default = "OperatorSpec::default_rot_damping")]
    pub rot_damping: f64,
    /// `[t, dx, dy, dz]`: hand displacement from the initial handle position.
    pub waypoints: Vec<[f64; 4]>,
    /// `[open, close]` indexing windows (s).
    #[serde(default)]
    pub clutch: Vec<[f64; 2]>,
}

impl OperatorSpec {
    fn default_stiffness() -> f64 {
        100.0
    }
    fn default_damping() -> f64 {
        2.0
    }
    fn default_rot_stiffness() -> f64 {
        2.0
    }
    fn default_rot_damping() -> f64 {
        0.2
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    /// Surface point relative to the surrogate's initial tool position.
    pub offset: [f64; 3],
    /// Normal pointing into the material.
    pub normal: [f64; 3],
    pub stiffness: f64,
    #[serde(default)]
    pub damping: f64,
    #[serde(default)]
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Master,
    Surrogate,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub side: Side,
    /// 1-based joint index.
    pub joint: usize,
    pub amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintySpec {
    /// Relative error applied to the controllers' inertial parameters.
    pub inertia_error: f64,
    pub disturbance: Vec<DisturbanceSpec>,
}

impl Default for UncertaintySpec {
    fn default() -> Self {
        Self {
            inertia_error: 0.2,
            disturbance: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
    /// Environment impedance on the contact axis.
    pub env_stiffness: f64,
    pub env_damping: f64,
    /// Translational axis (0..3) carrying the environment impedance.
    pub env_axis: usize,
    pub human_mass: f64,
    pub human_damping: f64,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            omega_min: 1e-2,
            omega_max: 1e3,
            points: 400,
            env_stiffness: 1e5,
            env_damping: 1e3,
            env_axis: 2,
            human_mass: 2.0,
            human_damping: 20.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Copy with one sweepable parameter replaced and the name suffixed.
    pub fn with_parameter(&self, param: &str, value: f64) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        match param {
            "kappa_p" => c.scaling.kappa_p = value,
            "kappa_f" => c.scaling.kappa_f = value,
            "lambda" => c.scaling.lambda = value,
            "a" => c.scaling.a = value,
            "filter" => c.scaling.filter = value,
            "delay" => c.delay.max = value,
            "seed" => c.seed = value as u64,
            "inertia_error" => c.uncertainty.inertia_error = value,
            "env_stiffness" => match &mut c.environment {
                Some(e) => e.stiffness = value,
                None => return Err(ConfigError::Invalid(vec!["scenario has no environment".into()])),
            },
            other => return Err(ConfigError::Invalid(vec![format!("unknown sweep parameter {other:?}")])),
        }
        c.name = format!("{}_{param}_{value}", self.name);
        c.validate()?;
        Ok(c)
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut positive = |v: f64, name: &str| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive and finite, got {v}"));
            }
        };
        positive(self.dt, "dt");
        positive(self.duration, "duration");
        positive(self.scaling.kappa_p, "scaling.kappa_p");
        positive(self.scaling.kappa_f, "scaling.kappa_f");
        positive(self.scaling.lambda, "scaling.lambda");
        positive(self.scaling.a, "scaling.a");
        positive(self.scaling.filter, "scaling.filter");
        positive(self.master.bandwidth, "master.bandwidth");
        positive(self.master.barrier_bound, "master.barrier_bound");
        positive(self.master.observer_gain, "master.observer_gain");
        positive(self.surrogate.bandwidth, "surrogate.bandwidth");
        positive(self.surrogate.barrier_bound, "surrogate.barrier_bound");
        positive(self.surrogate.observer_gain, "surrogate.observer_gain");
        positive(self.surrogate.dls_lambda, "surrogate.dls_lambda");
        positive(self.analysis.omega_min, "analysis.omega_min");
        if self.duration < self.dt {
            errs.push(format!("duration {} is shorter than dt {}", self.duration, self.dt));
        }
        if self.log_every == 0 {
            errs.push("log_every must be at least 1".into());
        }
        if self.master.q0.len() != 7 {
            errs.push(format!("master.q0 needs 7 entries, got {}", self.master.q0.len()));
        }
        if self.surrogate.q0.len() != 6 {
            errs.push(format!("surrogate.q0 needs 6 entries, got {}", self.surrogate.q0.len()));
        }
        for &l in &self.master.human_links {
            if !(1..=7).contains(&l) {
                errs.push(format!("master.human_links entry {l} is outside 1..=7"));
            }
        }
        for (name, v) in [
            ("master.human_mass", self.master.human_mass),
            ("master.human_inertia", self.master.human_inertia),
            ("master.human_damping", self.master.human_damping),
            ("surrogate.actuator_lag", self.surrogate.actuator_lag),
            ("operator.stiffness", self.operator.stiffness),
            ("operator.damping", self.operator.damping),
            ("operator.rot_stiffness", self.operator.rot_stiffness),
            ("operator.rot_damping", self.operator.rot_damping),
            ("uncertainty.inertia_error", self.uncertainty.inertia_error),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.uncertainty.inertia_error >= 1.0 {
            errs.push("uncertainty.inertia_error must be below 1".into());
        }
        match self.delay.mode {
            DelayKind::None => {}
            DelayKind::Fixed | DelayKind::Varying => {
                if !(self.delay.max >= 0.0 && self.delay.max.is_finite()) {
                    errs.push(format!("delay.max must be non-negative, got {}", self.delay.max));
                }
            }
        }
        if self.operator.waypoints.is_empty() {
            errs.push("operator.waypoints must not be empty".into());
        }
        for w in self.operator.waypoints.windows(2) {
            if w[1][0] <= w[0][0] {
                errs.push(format!("operator.waypoints times must increase ({} then {})", w[0][0], w[1][0]));
            }
        }
        for c in &self.operator.clutch {
            if c[1] <= c[0] {
                errs.push(format!("operator.clutch window [{}, {}] is empty", c[0], c[1]));
            }
        }
        if let Some(env) = &self.environment {
            for (name, v) in [
                ("environment.stiffness", env.stiffness),
                ("environment.damping", env.damping),
                ("environment.mass", env.mass),
            ] {
                if !(v >= 0.0 && v.is_finite()) {
                    errs.push(format!("{name} must be non-negative, got {v}"));
                }
            }
            if env.normal.iter().all(|&x| x == 0.0) {
                errs.push("environment.normal must be nonzero".into());
            }
        }
        for d in &self.uncertainty.disturbance {
            let dof = match d.side {
                Side::Master => 7,
                Side::Surrogate => 6,
            };
            if !(1..=dof).contains(&d.joint) {
                errs.push(format!("disturbance joint {} is outside 1..={dof}", d.joint));
            }
        }
        if self.analysis.omega_max <= self.analysis.omega_min {
            errs.push("analysis.omega_max must exceed analysis.omega_min".into());
        }
        if self.analysis.points < 2 {
            errs.push("analysis.points must be at least 2".into());
        }
        if self.analysis.env_axis > 2 {
            errs.push("analysis.env_axis must be 0, 1 or 2".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
duration = 1.0
[scaling]
kappa_p = 2.0
kappa_f = 500.0
lambda = 12.0
a = 8e-4
[operator]
waypoints = [[0.0, 0.0, 0.0, 0.0], [1.0, 0.05, 0.0, 0.0]]
"#;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.dt, 1e-3);
        assert_eq!(c.steps(), 1000);
        assert_eq!(c.scaling.filter, 35.0);
        assert_eq!(c.delay.mode, DelayKind::None);
        assert_eq!(c.master.q0.len(), 7);
        assert!(c.environment.is_none());
    }

    #[test]
    fn all_errors_reported_together() {
        let text = MINIMAL.replace("kappa_p = 2.0", "kappa_p = -2.0").replace("lambda = 12.0", "lambda = 0.0")
            + "[master]\nq0 = [0.0]\n";
        match ScenarioConfig::from_toml(&text) {
            Err(ConfigError::Invalid(errs)) => {
                assert_eq!(errs.len(), 3, "{errs:?}");
                assert!(errs.iter().any(|e| e.contains("kappa_p")));
                assert!(errs.iter().any(|e| e.contains("lambda")));
                assert!(errs.iter().any(|e| e.contains("master.q0")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn sweep_override() {
        let c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        let d = c.with_parameter("lambda", 3.0).unwrap();
        assert_eq!(d.scaling.lambda, 3.0);
        assert_eq!(d.name, "t_lambda_3");
        assert!(c.with_parameter("lambda", -1.0).is_err());
        assert!(c.with_parameter("bogus", 1.0).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("duration = 1.0", "duration = 1.0\nbogus = 3");
        assert!(matches!(ScenarioConfig::from_toml(&text), Err(ConfigError::Parse(_))));
    }
}
