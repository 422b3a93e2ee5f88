//! Experiment description files.
//!
//! A configuration is a flat TOML document. Keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `name` | label copied to the manifest | none |
//! | `n`, `k` | antennas per end, sub-ranges per stage | required |
//! | `trials` | Monte Carlo trials per sweep point | 10000 |
//! | `seed` | master seed | 0 |
//! | `et_db_min`, `et_db_max`, `et_db_step` | `E_T/N0` sweep in dB | 0, 30, 3 |
//! | `variants` | `overlapped`, `non_overlapped` | both |
//! | `alpha_estimators` | `mmse_all_stages`, `final_stage_only` | both |
//! | `outputs` | `pcef`, `alpha_error`, `bound`, `slots` | `["pcef"]` |
//! | `alpha_variance` | prior `E\|α\|²` | `n²` |
//! | `grid_law` | `virtual` or `sine` | `virtual` |
//! | `noiseless_row` | add an `N0 = 0` row to sweeps | false |
//! | `zero_energy_row` | add a `P_T = 0` row to bound curves | false |
//! | `table_k`, `table_stages` | slot table over `N = K^1..K^stages` | `[]`, 4 |
//! | `bound_designs` | extra `[n, k]` pairs for bound curves | `[]` |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array_model::GridLaw;
use crate::error::{Error, Result};
use crate::estimator::{Algorithm, AlphaEstimator};
use crate::montecarlo::{AngleSampling, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Failure probability curve per algorithm.
    Pcef,
    /// Relative fading-coefficient error per algorithm and estimator.
    AlphaError,
    /// Analytical union bound of the overlapped design.
    Bound,
    /// Slot-count table.
    Slots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub et_db_min: f64,
    #[serde(default = "default_et_max")]
    pub et_db_max: f64,
    #[serde(default = "default_et_step")]
    pub et_db_step: f64,
    #[serde(default = "default_variants")]
    pub variants: Vec<Algorithm>,
    #[serde(default = "default_estimators")]
    pub alpha_estimators: Vec<AlphaEstimator>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_variance: Option<f64>,
    #[serde(default)]
    pub grid_law: GridLaw,
    #[serde(default)]
    pub noiseless_row: bool,
    #[serde(default)]
    pub zero_energy_row: bool,
    #[serde(default)]
    pub table_k: Vec<usize>,
    #[serde(default = "default_table_stages")]
    pub table_stages: usize,
    #[serde(default)]
    pub bound_designs: Vec<[usize; 2]>,
}

fn default_trials() -> usize {
    10_000
}
fn default_et_max() -> f64 {
    30.0
}
fn default_et_step() -> f64 {
    3.0
}
fn default_variants() -> Vec<Algorithm> {
    vec![Algorithm::Overlapped, Algorithm::NonOverlapped]
}
fn default_estimators() -> Vec<AlphaEstimator> {
    vec![AlphaEstimator::MmseAllStages, AlphaEstimator::FinalStageOnly]
}
fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Pcef]
}
fn default_table_stages() -> usize {
    4
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.et_db_step > 0.0 && self.et_db_step.is_finite()) {
            return bad(format!("et_db_step must be positive, got {}", self.et_db_step));
        }
        if !(self.et_db_min.is_finite() && self.et_db_max.is_finite()) || self.et_db_max < self.et_db_min {
            return bad(format!("invalid sweep range [{}, {}]", self.et_db_min, self.et_db_max));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.variants.is_empty() {
            return bad("variants must not be empty".into());
        }
        if self.table_k.iter().any(|&k| k < 2) {
            return bad("table_k entries must be at least 2".into());
        }
        Ok(())
    }

    /// `et_db_min, et_db_min + step, …` up to `et_db_max` inclusive.
    pub fn et_grid(&self) -> Vec<f64> {
        let span = (self.et_db_max - self.et_db_min) / self.et_db_step;
        let count = (span + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.et_db_min + i as f64 * self.et_db_step).collect()
    }

    pub fn alpha_variance(&self) -> f64 {
        self.alpha_variance.unwrap_or((self.n * self.n) as f64)
    }

    pub fn wants(&self, kind: OutputKind) -> bool {
        self.outputs.contains(&kind)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            n: self.n,
            k: self.k,
            algorithms: self.variants.clone(),
            et_db: self.et_grid(),
            trials: self.trials,
            seed: self.seed,
            alpha_variance: self.alpha_variance(),
            angle_sampling: AngleSampling::Uniform,
            grid_law: self.grid_law,
            noiseless_row: self.noiseless_row,
        }
    }

    /// `[n, k]` pairs for bound curves: the main design first.
    pub fn bound_designs(&self) -> Vec<[usize; 2]> {
        let mut out = vec![[self.n, self.k]];
        for d in &self.bound_designs {
            if !out.contains(d) {
                out.push(*d);
            }
        }
        out
    }
}
