//! The sectioned TOML run configuration and its canonical hash.

use std::path::{Path, PathBuf};

use fracheat::analysis::{SweepMethod, SweepTarget};
use fracheat::heatkernel::LemmaId;
use fracheat::noise::dalang_check;
use fracheat::sde::{NoiseQuadrature, SimulationConfig};
use fracheat::{CorrelationModel, DomainGrid, GeneratorSpec, SigmaFunction};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// One file drives every subcommand; each reads the sections it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub operator: Option<GeneratorSpec>,
    pub grid: Option<DomainGrid>,
    #[serde(default)]
    pub noise: Option<CorrelationModel>,
    #[serde(default)]
    pub sigma: Option<SigmaFunction>,
    pub simulation: Option<SimulationSection>,
    pub analysis: Option<AnalysisSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    Constant { value: f64 },
    Indicator { lo: f64, hi: f64, value: f64 },
    Values { values: Vec<f64> },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "one")]
    pub xi: f64,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_paths")]
    pub paths: u64,
    #[serde(default)]
    pub seed: u64,
    /// Spacing of the record times; ignored when `record_times` is given.
    pub record_every: Option<f64>,
    pub record_times: Option<Vec<f64>>,
    #[serde(default = "default_orders")]
    pub moment_orders: Vec<f64>,
    #[serde(default)]
    pub quadrature: NoiseQuadrature,
    #[serde(default)]
    pub initial: InitialCondition,
    /// Interval on which `u0` must carry mass.
    pub initial_support: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaRequest {
    pub integral: LemmaId,
    /// Absolute `beta`; exclusive with `beta_factor`.
    pub beta: Option<f64>,
    /// `beta` as a multiple of `mu1`.
    pub beta_factor: Option<f64>,
    pub points: Vec<f64>,
    pub correlation: Option<CorrelationModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub xi_values: Vec<f64>,
    #[serde(default = "default_method")]
    pub method: SweepMethod,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default)]
    pub target: SweepTarget,
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_bracket")]
    pub bracket_width: f64,
    #[serde(default = "yes")]
    pub bisect: bool,
    /// Step of the Volterra oracle; defaults to the simulation step.
    pub oracle_dt: Option<f64>,
    #[serde(default)]
    pub lemmas: Vec<LemmaRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn yes() -> bool {
    true
}
fn default_paths() -> u64 {
    1000
}
fn default_orders() -> Vec<f64> {
    vec![2.0]
}
fn default_epsilon() -> f64 {
    0.2
}
fn default_method() -> SweepMethod {
    SweepMethod::Oracle
}
fn default_bracket() -> f64 {
    0.1
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Canonical JSON (sorted keys, no whitespace) of the parsed config.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Module-level checks that need more than one section; Dalang failures
    /// surface here so every subcommand rejects them.
    pub fn check(&self) -> Result<(), CliError> {
        if let Some(op) = &self.operator {
            op.validate()?;
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
            if let Some(op) = &self.operator {
                let verdict = dalang_check(noise, op.alpha());
                if !verdict.passed {
                    return Err(fracheat::Error::Assumption(format!(
                        "Dalang condition fails for {} with alpha = {}: {}",
                        noise.label(),
                        op.alpha(),
                        verdict.note
                    ))
                    .into());
                }
            }
        }
        if let Some(sigma) = &self.sigma {
            sigma.check_parameters()?;
        }
        Ok(())
    }

    pub fn operator(&self) -> Result<GeneratorSpec, CliError> {
        self.operator.ok_or_else(|| CliError::Config("missing [operator] section".into()))
    }

    pub fn grid(&self) -> Result<&DomainGrid, CliError> {
        self.grid.as_ref().ok_or_else(|| CliError::Config("missing [grid] section".into()))
    }

    pub fn noise(&self) -> CorrelationModel {
        self.noise.unwrap_or(CorrelationModel::White)
    }

    pub fn sigma(&self) -> SigmaFunction {
        self.sigma.unwrap_or(SigmaFunction::Linear { c: 1.0 })
    }

    pub fn simulation_section(&self) -> Result<&SimulationSection, CliError> {
        self.simulation
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [simulation] section".into()))
    }

    pub fn analysis(&self) -> AnalysisSection {
        self.analysis.clone().unwrap_or_else(|| {
            toml::from_str::<AnalysisSection>("").expect("all analysis fields have defaults")
        })
    }

    /// The library run description assembled from the sections.
    pub fn simulation(&self) -> Result<SimulationConfig, CliError> {
        let sim = self.simulation_section()?;
        let grid = self.grid()?.clone();
        let u0 = match &sim.initial {
            InitialCondition::Constant { value } => vec![*value; grid.len()],
            InitialCondition::Indicator { lo, hi, value } => grid
                .nodes()
                .iter()
                .map(|x| if x >= lo && x <= hi { *value } else { 0.0 })
                .collect(),
            InitialCondition::Values { values } => values.clone(),
        };
        let initial_support = sim.initial_support.unwrap_or(match sim.initial {
            InitialCondition::Indicator { lo, hi, .. } => [lo, hi],
            _ => [-0.5 * grid.radius(), 0.5 * grid.radius()],
        });
        let record_times = match (&sim.record_times, sim.record_every) {
            (Some(times), _) => times.clone(),
            (None, every) => {
                let every = every.unwrap_or(sim.horizon / 20.0);
                if !(every > 0.0) {
                    return Err(CliError::Config(format!("record_every must be positive, got {every}")));
                }
                let stride = (every / sim.dt).round().max(1.0);
                let steps = (sim.horizon / sim.dt).round();
                let count = (steps / stride).floor() as u64;
                (0..=count).map(|k| k as f64 * stride * sim.dt).collect()
            }
        };
        Ok(SimulationConfig {
            spec: self.operator()?,
            grid,
            noise: self.noise(),
            sigma: self.sigma(),
            xi: sim.xi,
            u0,
            initial_support,
            dt: sim.dt,
            horizon: sim.horizon,
            paths: sim.paths,
            seed: sim.seed,
            record_times,
            moment_orders: sim.moment_orders.clone(),
            quadrature: sim.quadrature,
        })
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output.as_ref().and_then(|o| o.dir.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[operator]
variant = "fractional"
alpha = 1.5
nu = 1.0

[grid]
radius = 1.0
nodes = 32
"#;

    #[test]
    fn hash_ignores_formatting_and_order() {
        let a = RunConfig::parse(BASE).unwrap();
        let reordered = "[grid]\nnodes = 32\nradius = 1.0\n\n[operator]\nnu = 1.0\nalpha = 1.5   # comment\nvariant = \"fractional\"\n";
        let b = RunConfig::parse(reordered).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::parse(&BASE.replace("alpha = 1.5", "alpha = 1.6")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = RunConfig::parse(&format!("{BASE}\n[output]\ndirectory = \"x\"\n")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_grid_is_a_validation_error() {
        let err = RunConfig::parse(&BASE.replace("nodes = 32", "nodes = 3")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn record_times_follow_the_step() {
        let text = format!("{BASE}\n[simulation]\ndt = 0.01\nhorizon = 1.0\nrecord_every = 0.25\n");
        let cfg = RunConfig::parse(&text).unwrap().simulation().unwrap();
        assert_eq!(cfg.record_times.len(), 5);
        cfg.validate().unwrap();
    }
}
