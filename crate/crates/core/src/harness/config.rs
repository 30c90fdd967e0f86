//! Scenario configuration, loadable from JSON with every field optional.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{InfoMode, OptimizerConfig, DEFAULT_SAMPLE_FLOOR};
use crate::planner::{HeuristicWeights, LatticeConfig};
use crate::primitives::SynthesisConfig;
use crate::regression::{DemeanMode, NominalModel};
use crate::sim::{DisturbanceConfig, Tau, VesselParams};

use super::{at, HarnessError, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub seed: u64,
    pub params: VesselParams,
    pub nominal: NominalModel,
    pub disturbance: DisturbanceConfig,
    pub synthesis: SynthesisConfig,
    /// Primitive library file; the reference dictionary is synthesized when absent.
    pub library: Option<PathBuf>,
    pub demean: DemeanMode,
    pub design: DesignConfig,
    pub monte_carlo: MonteCarloConfig,
    pub validation: ValidationInput,
    pub planner: PlannerConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 2021,
            params: VesselParams::reference(),
            nominal: NominalModel::reference(),
            disturbance: DisturbanceConfig::reference(0),
            synthesis: SynthesisConfig::default(),
            library: None,
            demean: DemeanMode::Complete,
            design: DesignConfig::default(),
            monte_carlo: MonteCarloConfig::default(),
            validation: ValidationInput::default(),
            planner: PlannerConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(at(Stage::Config))?;
        serde_json::from_str(&text).map_err(at(Stage::Config))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub total_n: usize,
    pub mode: InfoMode,
    pub optimizer: OptimizerConfig,
    pub sample_floor: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self { total_n: 1000, mode: InfoMode::ZeroMean, optimizer: OptimizerConfig::default(), sample_floor: DEFAULT_SAMPLE_FLOOR }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Optimized,
    Random,
    Uniform,
}

impl DesignKind {
    pub fn label(self) -> &'static str {
        match self {
            DesignKind::Optimized => "optimized",
            DesignKind::Random => "random",
            DesignKind::Uniform => "uniform",
        }
    }
}

/// Display caps for emitted plot data; raw metrics are never truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotCaps {
    pub param_error: f64,
    pub cv_dof: [f64; 3],
    pub cv_norm: f64,
}

impl Default for PlotCaps {
    fn default() -> Self {
        Self { param_error: 25.0, cv_dof: [1.0, 0.25, 0.15], cv_norm: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub runs: usize,
    pub designs: Vec<DesignKind>,
    pub random_segments: usize,
    pub random_segment_len: usize,
    pub param_threshold: f64,
    pub cv_threshold: f64,
    pub plot_caps: PlotCaps,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            runs: 500,
            designs: vec![DesignKind::Optimized, DesignKind::Random],
            random_segments: 5,
            random_segment_len: 200,
            param_threshold: 5.0,
            cv_threshold: 0.15,
            plot_caps: PlotCaps::default(),
        }
    }
}

/// Validation excitation: a swept surge force, a sway sinusoid and a swept yaw moment.
///
/// With `t = k / sample_rate`:
/// `τ1 = surge_offset + surge_amp·sin(2π f_u t (1 + t / surge_sweep))`,
/// `τ2 = sway_amp·sin(2π f_v t)`,
/// `τ3 = yaw_amp·sin(2π (f_r + yaw_rate·t) t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationInput {
    pub samples: usize,
    pub sample_rate: f64,
    pub surge_offset: f64,
    pub surge_amp: f64,
    pub surge_freq: f64,
    pub surge_sweep: f64,
    pub sway_amp: f64,
    pub sway_freq: f64,
    pub yaw_amp: f64,
    pub yaw_freq: f64,
    pub yaw_rate: f64,
}

impl Default for ValidationInput {
    fn default() -> Self {
        Self {
            samples: 800,
            sample_rate: 8.0,
            surge_offset: 3000.0,
            surge_amp: 2500.0,
            surge_freq: 0.01,
            surge_sweep: 50.0,
            sway_amp: 300.0,
            sway_freq: 0.03,
            yaw_amp: 250.0,
            yaw_freq: 0.02,
            yaw_rate: 0.002,
        }
    }
}

impl ValidationInput {
    pub fn signal(&self) -> Vec<Tau> {
        (0..self.samples)
            .map(|k| {
                let t = k as f64 / self.sample_rate;
                [
                    self.surge_offset + self.surge_amp * (2.0 * PI * self.surge_freq * t * (1.0 + t / self.surge_sweep)).sin(),
                    self.sway_amp * (2.0 * PI * self.sway_freq * t).sin(),
                    self.yaw_amp * (2.0 * PI * (self.yaw_freq + self.yaw_rate * t) * t).sin(),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MapSource {
    Reference,
    /// `.json` maps list blocked cells; anything else is read as a text grid.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub lattice: LatticeConfig,
    /// Defaults to `(1, cell/2, 5 cell)` when absent.
    pub weights: Option<HeuristicWeights>,
    pub map: MapSource,
    /// `(cell x, cell y, heading level)`.
    pub start: (i64, i64, usize),
    pub goal: (i64, i64, usize),
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeConfig::default(),
            weights: None,
            map: MapSource::Reference,
            start: (3, 3, 0),
            goal: (30, 40, 1),
        }
    }
}

impl PlannerConfig {
    pub fn weights(&self) -> HeuristicWeights {
        self.weights.unwrap_or_else(|| HeuristicWeights::default_for(&self.lattice))
    }
}
