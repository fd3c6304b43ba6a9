use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ingest::SynthSpec;
use crate::simulate::{ShockSpec, SimConfig, SweepConfig};

/// Where the data comes from. With no transactions and no paths, a
/// synthetic system is generated from `[synth]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub transactions: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    /// Paths as written by `reconstruct`: a directory holding
    /// `paths_<year>.csv` files, or a single paths file.
    pub paths: Option<PathBuf>,
    /// Substitution class to keep, by ingredient.
    pub class: Option<String>,
    /// Inclusive first and exclusive last accepted date, `YYYY-MM-DD`.
    pub window_start: Option<String>,
    pub window_end: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    #[serde(default)]
    pub sequential: bool,
}

fn half() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorsConfig {
    /// Flexibility of the mixed tensor.
    #[serde(default = "half")]
    pub phi: f64,
    pub year: Option<i32>,
}

impl Default for TensorsConfig {
    fn default() -> Self {
        TensorsConfig { phi: half(), year: None }
    }
}

fn fit_grid() -> usize {
    21
}
fn max_sweeps() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "fit_grid")]
    pub grid: usize,
    #[serde(default = "max_sweeps")]
    pub max_sweeps: usize,
    /// Width of the path-position bins.
    #[serde(default = "one")]
    pub position_bin: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            grid: fit_grid(),
            max_sweeps: max_sweeps(),
            position_bin: one(),
        }
    }
}

fn default_shock() -> ShockSpec {
    ShockSpec {
        shock_fraction: 0.3,
        t_star: 0,
        production_halt: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressConfig {
    /// Year whose paths and flows initialize the system; the first by default.
    pub year: Option<i32>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default = "default_shock")]
    pub shock: ShockSpec,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl Default for StressConfig {
    fn default() -> Self {
        StressConfig {
            year: None,
            sim: SimConfig::default(),
            shock: default_shock(),
            sweep: SweepConfig::default(),
        }
    }
}

fn slowdown_phis() -> Vec<f64> {
    (0..=10).map(|n| n as f64 / 10.0).collect()
}
fn samples() -> usize {
    100
}
fn tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowdownConfig {
    #[serde(default = "slowdown_phis")]
    pub phis: Vec<f64>,
    #[serde(default = "samples")]
    pub samples: usize,
    #[serde(default = "tol")]
    pub tol: f64,
    pub year: Option<i32>,
}

impl Default for SlowdownConfig {
    fn default() -> Self {
        SlowdownConfig {
            phis: slowdown_phis(),
            samples: samples(),
            tol: tol(),
            year: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default = "one")]
    pub phi: f64,
    pub year: Option<i32>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { phi: one(), year: None }
    }
}

fn default_synth() -> SynthSpec {
    SynthSpec::demo().with_years(2)
}

/// Everything a run can be configured with. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default = "default_synth")]
    pub synth: SynthSpec,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
    #[serde(default)]
    pub tensors: TensorsConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub stress: StressConfig,
    #[serde(default)]
    pub slowdown: SlowdownConfig,
    #[serde(default)]
    pub graph: GraphConfig,
}

impl Default for Config {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, toml::de::Error> {
        toml::from_str(text)
    }

    /// Sets the run seed everywhere randomness is drawn.
    pub fn with_seed(mut self, seed: u64) -> Config {
        self.seed = seed;
        self.synth.seed = seed;
        self.stress.sim.seed = seed;
        self
    }
}
