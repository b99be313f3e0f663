//! Experiment configuration: one TOML file per run, every section optional.
//!
//! Precedence: built-in defaults, then the config file, then command-line
//! flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::AdversaryConfig;
use crate::capacity::{CurveOptions, SolverOptions};
use crate::channel::{awgn_channel, ChannelModel};
use crate::error::{Error, Result};
use crate::grid::{sine_plus_step, GridFunction, FINE_GRID};
use crate::reconstruct::{Method, ReconstructionConfig};

use super::ingest;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub truth: TruthConfig,
    pub channel: ChannelConfig,
    pub reconstruct: ReconstructSection,
    pub curve: CurveSection,
    pub sweep: SweepSection,
    pub adversary: AdversarySection,
    pub demo: DemoSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config: {e}")))
    }
}

/// Source of the true harvesting function.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthConfig {
    /// `0.1 sin(4 pi x) + 1{x >= 0.5}`.
    #[default]
    SinePlusStep,
    /// `beta(x) = x`.
    Ramp,
    Constant { value: f64 },
    /// Measurements `x,value`, linearly interpolated onto the fine grid.
    Csv { path: PathBuf },
}

impl TruthConfig {
    pub fn load(&self) -> Result<GridFunction> {
        match self {
            TruthConfig::SinePlusStep => GridFunction::from_fn_points(FINE_GRID, sine_plus_step),
            TruthConfig::Ramp => GridFunction::from_fn_points(FINE_GRID, |x: f64| x),
            TruthConfig::Constant { value } => GridFunction::constant_points(FINE_GRID, *value),
            TruthConfig::Csv { path } => ingest(path, FINE_GRID),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelConfig {
    Awgn {
        noise_std: f64,
        n_x: usize,
        n_y: usize,
        #[serde(default = "default_tail_width")]
        tail_width: f64,
        /// Bound `c_max` on the input density; each grid point may carry at
        /// most `c_max / n_x` mass.
        #[serde(default)]
        density_cap: Option<f64>,
    },
    Bsc {
        crossover: f64,
    },
    Z {
        flip: f64,
    },
    Identity {
        n: usize,
    },
}

fn default_tail_width() -> f64 {
    4.0
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig::Awgn { noise_std: 0.5, n_x: 257, n_y: 257, tail_width: 4.0, density_cap: None }
    }
}

impl ChannelConfig {
    pub fn build(&self) -> Result<ChannelModel> {
        match *self {
            ChannelConfig::Awgn { noise_std, n_x, n_y, tail_width, .. } => awgn_channel(n_x, n_y, noise_std, tail_width),
            ChannelConfig::Bsc { crossover } => ChannelModel::binary_symmetric(crossover),
            ChannelConfig::Z { flip } => ChannelModel::z_channel(flip),
            ChannelConfig::Identity { n } => ChannelModel::identity(n),
        }
    }

    /// Per-point mass cap derived from the density bound.
    pub fn mass_cap(&self) -> Option<f64> {
        match *self {
            ChannelConfig::Awgn { n_x, density_cap: Some(c), .. } => Some(c / n_x as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSection {
    pub method: Method,
    /// Number of samples.
    pub m: usize,
    /// Sampling noise standard deviation.
    pub sigma: f64,
    /// Noise level handed to the shrinkage rule; estimated from the data when absent.
    pub known_sigma: Option<f64>,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        Self { method: Method::HaarShrinkage, m: 128, sigma: 0.1, known_sigma: None }
    }
}

impl ReconstructSection {
    pub fn reconstruction(&self) -> ReconstructionConfig {
        ReconstructionConfig { sigma: self.known_sigma, ..ReconstructionConfig::new(self.method) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSection {
    pub n_points: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub curve_tol: f64,
    pub max_refinements: usize,
}

impl Default for CurveSection {
    fn default() -> Self {
        let d = CurveOptions::default();
        Self {
            n_points: d.n_points,
            tol: d.solver.tol,
            max_iter: d.solver.max_iter,
            curve_tol: d.curve_tol,
            max_refinements: d.max_refinements,
        }
    }
}

impl CurveSection {
    pub fn options(&self, mass_cap: Option<f64>) -> CurveOptions {
        CurveOptions {
            n_points: self.n_points,
            solver: SolverOptions::new(self.tol, self.max_iter).with_density_cap(mass_cap),
            curve_tol: self.curve_tol,
            max_refinements: self.max_refinements,
            ..CurveOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub method: Method,
    pub sigma: f64,
    pub known_sigma: Option<f64>,
    pub m_values: Vec<usize>,
    pub trials: usize,
    /// Rates for the energy loss, as fractions of the unconstrained capacity.
    pub rate_fractions: Vec<f64>,
    /// Energies for the information loss, as fractions of the true `b_max`.
    pub energy_fractions: Vec<f64>,
    /// Tilt-ladder size for every curve in the sweep.
    pub n_points: usize,
    /// Extra tilted solves per curve for refinement.
    pub max_refinements: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            method: Method::HaarLinear,
            sigma: 0.0,
            known_sigma: None,
            m_values: (4..=10).map(|j| 1 << j).collect(),
            trials: 1,
            rate_fractions: vec![0.25, 0.5, 0.75],
            energy_fractions: vec![0.25, 0.5, 0.75, 0.9],
            n_points: 8,
            max_refinements: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarySection {
    pub k: f64,
    pub sigma: f64,
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub c0: Option<f64>,
}

impl Default for AdversarySection {
    fn default() -> Self {
        Self { k: 1.0, sigma: 0.1, m_values: (9..=15).map(|j| 1 << j).collect(), trials: 200, c0: None }
    }
}

impl AdversarySection {
    pub fn config(&self, seed: u64) -> AdversaryConfig {
        AdversaryConfig {
            k: self.k,
            sigma: self.sigma,
            m_values: self.m_values.clone(),
            trials: self.trials,
            seed,
            c0: self.c0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSection {
    pub m: usize,
    pub sigma: f64,
    /// Half-width of the window around the jump used for the max-error column.
    pub window: f64,
}

impl Default for DemoSection {
    fn default() -> Self {
        Self { m: 128, sigma: 0.0, window: 0.05 }
    }
}
