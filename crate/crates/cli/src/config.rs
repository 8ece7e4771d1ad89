//! Run configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shockstab_core::energy::EnergyConfig;
use shockstab_core::green::Forcing;
use shockstab_core::lopatinskii::ContourPolicy;
use shockstab_core::simulate::{Profile, SimConfig};
use shockstab_core::system_model::{self as sm, ShockProfile, SystemDescriptor, SystemFile};
use shockstab_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Analyze,
    Simulate,
    Green,
    Symmetrizer,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Constant,
    HalfLine,
    Shock,
}

/// Model selection: a built-in name (with its parameter) or a system file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// `theta` of `burgers_bistable`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// `kappa` of `appendix_3x3_quadratic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// `eps` of `appendix_3x3_eps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

/// A resolved model with its default reference states.
pub struct Model {
    pub sys: SystemDescriptor,
    pub shock: Option<ShockProfile>,
    pub equilibrium: Option<Vec<f64>>,
}

impl SystemSpec {
    pub fn resolve(&self, base: &Path) -> Result<Model> {
        match (&self.builtin, &self.file) {
            (Some(name), None) => {
                let (sys, shock) = match name.as_str() {
                    "burgers_bistable" => {
                        let (s, p) = sm::burgers_bistable(self.theta.unwrap_or(0.25));
                        (s, Some(p))
                    }
                    "appendix_3x3_quadratic" => (sm::appendix_3x3_quadratic(self.kappa.unwrap_or(0.1)), None),
                    "appendix_3x3_eps" => (sm::appendix_3x3_eps(self.eps.unwrap_or(1e-2)), None),
                    other => (sm::builtin(other)?, None),
                };
                Ok(Model { sys, shock, equilibrium: None })
            }
            (None, Some(path)) => {
                let path = if path.is_absolute() { path.clone() } else { base.join(path) };
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let file = SystemFile::parse(&text)?;
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "system".into());
                Ok(Model { sys: file.build(&name)?, shock: file.shock.clone(), equilibrium: file.equilibrium.clone() })
            }
            _ => Err(Error::Config("system needs exactly one of 'builtin' and 'file'".into())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default)]
    pub grid: SimConfig,
    pub initial: Vec<Profile>,
    /// Rescale the initial perturbation to this `H^2` norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2_size: Option<f64>,
    /// Profiles on the left of the shock (shock setting); zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_minus: Option<Vec<Profile>>,
    #[serde(default)]
    pub forcing: Forcing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    /// Attach the dissipation monitor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenSection {
    pub times: Vec<f64>,
    /// Spatial window: whole line `[a, b]`, half line `[0, b]`, shock `[-b, b]`.
    pub x_range: [f64; 2],
    pub h: f64,
    #[serde(default = "default_omega")]
    pub omega_max: f64,
    pub initial: Vec<Profile>,
    #[serde(default)]
    pub forcing: Forcing,
    /// Number of resolvent residual samples.
    #[serde(default = "default_residuals")]
    pub residual_samples: usize,
}

fn default_omega() -> f64 {
    200.0
}

fn default_residuals() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetrizerSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedRun {
    pub name: String,
    pub config: RunConfig,
}

/// Top-level configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<Setting>,
    /// Reference state for the constant and half-line settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shock: Option<ShockProfile>,
    /// Gap to certify; the best lattice value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub contour: ContourPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green: Option<GreenSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetrizer: Option<SymmetrizerSection>,
    /// Sub-runs of `report`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<NamedRun>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn setting(&self) -> Result<Setting> {
        self.setting.ok_or_else(|| Error::Config("'setting' is required for this command".into()))
    }

    pub fn model(&self, base: &Path) -> Result<Model> {
        let spec = self.system.as_ref().ok_or_else(|| Error::Config("'system' is required for this command".into()))?;
        let mut m = spec.resolve(base)?;
        if let Some(s) = &self.shock {
            m.shock = Some(s.clone());
        }
        if let Some(e) = &self.equilibrium {
            m.equilibrium = Some(e.clone());
        }
        Ok(m)
    }
}

impl Model {
    pub fn equilibrium(&self) -> Result<shockstab_core::linalg::RVec> {
        let n = self.sys.n();
        match &self.equilibrium {
            Some(v) if v.len() == n => Ok(shockstab_core::linalg::RVec::from_column_slice(v)),
            Some(v) => Err(Error::DimensionMismatch(format!("equilibrium has {} entries, n = {n}", v.len()))),
            None => Ok(shockstab_core::linalg::RVec::zeros(n)),
        }
    }

    pub fn shock(&self) -> Result<ShockProfile> {
        self.shock.clone().ok_or_else(|| Error::Config("the shock setting needs a 'shock' profile".into()))
    }
}
