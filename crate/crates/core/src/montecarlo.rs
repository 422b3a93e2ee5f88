//! Seeded Monte Carlo harness.
//!
//! Trial `t` draws its channel from stream `t` of the channel key and its
//! noise from stream `t` of the noise key. Every algorithm and every energy
//! point reuses the same draws, so curves are paired. Per-trial outcomes are
//! collected in trial order and reduced sequentially, which makes the tables
//! independent of the worker count.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::pcef_upper_bound;
use crate::array_model::{sample_complex_gaussian, ChannelRealization, GridLaw, MeasurementNoise};
use crate::error::{invalid, Result};
use crate::estimator::{Algorithm, AlphaEstimator, EstimationTrace, Estimator, EstimatorConfig};
use crate::parallel::Execution;
use crate::rng::TrialStreams;
use crate::Complex64;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Below this many failures (or successes) the normal interval is unreliable.
pub const LOW_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleSampling {
    /// AOA and AOD independent and uniform over the grid indices.
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub algorithms: Vec<Algorithm>,
    /// `E_T / N0` sweep in dB, strictly increasing.
    pub et_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub alpha_variance: f64,
    pub angle_sampling: AngleSampling,
    pub grid_law: GridLaw,
    /// Append a row with `N0 = 0`.
    pub noiseless_row: bool,
}

impl ExperimentConfig {
    /// Both algorithms, `Var[α] = N²`, 10⁴ trials per point.
    pub fn new(n: usize, k: usize, et_db: Vec<f64>) -> Self {
        Self {
            n,
            k,
            algorithms: vec![Algorithm::Overlapped, Algorithm::NonOverlapped],
            et_db,
            trials: 10_000,
            seed: 0,
            alpha_variance: (n * n) as f64,
            angle_sampling: AngleSampling::Uniform,
            grid_law: GridLaw::Virtual,
            noiseless_row: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("need at least one trial per point"));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("no algorithm selected"));
        }
        if self.et_db.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sweep points must be finite"));
        }
        if self.et_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("sweep points must be strictly increasing"));
        }
        if !(self.alpha_variance >= 0.0 && self.alpha_variance.is_finite()) {
            return Err(invalid("alpha variance must be finite and >= 0"));
        }
        for &alg in &self.algorithms {
            self.estimator_config(alg).validate()?;
        }
        Ok(())
    }

    pub fn streams(&self) -> TrialStreams {
        TrialStreams::new(self.seed)
    }

    /// Estimator settings at unit `P_T` and `N0`.
    pub fn estimator_config(&self, algorithm: Algorithm) -> EstimatorConfig {
        EstimatorConfig {
            alpha_variance: self.alpha_variance,
            grid_law: self.grid_law,
            ..EstimatorConfig::new(self.n, self.k, algorithm)
        }
    }
}

/// The channel of trial `trial`: uniform independent angles and
/// `α ~ CN(0, Var[α])`.
pub fn sample_channel(cfg: &ExperimentConfig, trial: u64) -> ChannelRealization {
    let mut rng = cfg.streams().channel_rng(trial);
    let theta = rng.random_range(0..cfg.n);
    let phi = rng.random_range(0..cfg.n);
    let alpha = sample_complex_gaussian(&mut rng, cfg.alpha_variance);
    ChannelRealization { theta, phi, alpha, n: cfg.n }
}

/// True when the true AOD or AOA lies outside the final selected sub-range.
pub fn failure_indicator(trace: &EstimationTrace, truth: &ChannelRealization) -> bool {
    !trace.succeeded(truth)
}

/// `P_T` giving total energy `10^{et_db/10}` (with `N0 = 1`).
pub fn total_power_for(estimator: &Estimator, et_db: f64) -> f64 {
    10f64.powf(et_db / 10.0) / estimator.energy_per_unit_power()
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Failure probability estimate with a normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub trials: usize,
    pub failures: usize,
    pub pcef: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fewer than [`LOW_COUNT`] failures or successes.
    pub low_count: bool,
}

impl ProportionEstimate {
    pub fn new(failures: usize, trials: usize) -> Self {
        let n = trials as f64;
        let p = failures as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        Self {
            trials,
            failures,
            pcef: p,
            std_error: se,
            ci_low: (p - Z_95 * se).max(0.0),
            ci_high: (p + Z_95 * se).min(1.0),
            low_count: failures < LOW_COUNT || trials - failures < LOW_COUNT,
        }
    }
}

/// One (algorithm, energy) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    /// `E_T / N0` in dB; `+inf` for the noiseless row.
    pub et_db: f64,
    pub total_power: f64,
    pub noise_power: f64,
    pub slots: usize,
    pub estimate: ProportionEstimate,
    /// Mean `|α̂ − α| / |α|` over all trials, MMSE over all stages.
    pub mmse_error_all: f64,
    /// Same, over successful trials only (`NaN` if none).
    pub mmse_error_successful: f64,
    /// Mean relative error of the final-stage-only estimate, all trials.
    pub final_error_all: f64,
    /// Same, over successful trials only.
    pub final_error_successful: f64,
}

impl SweepRow {
    pub fn pcef(&self) -> f64 {
        self.estimate.pcef
    }

    pub fn alpha_error(&self, which: AlphaEstimator, successful_only: bool) -> f64 {
        match (which, successful_only) {
            (AlphaEstimator::MmseAllStages, false) => self.mmse_error_all,
            (AlphaEstimator::MmseAllStages, true) => self.mmse_error_successful,
            (AlphaEstimator::FinalStageOnly, false) => self.final_error_all,
            (AlphaEstimator::FinalStageOnly, true) => self.final_error_successful,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<SweepRow>,
}

impl ResultTable {
    pub fn for_algorithm(&self, algorithm: Algorithm) -> impl Iterator<Item = &SweepRow> + '_ {
        self.rows.iter().filter(move |r| r.algorithm == algorithm)
    }

    /// `(E_T dB, PCEF)` on the finite part of the sweep.
    pub fn curve(&self, algorithm: Algorithm) -> Vec<(f64, f64)> {
        self.for_algorithm(algorithm)
            .filter(|r| r.et_db.is_finite())
            .map(|r| (r.et_db, r.pcef()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    failed: bool,
    mmse_error: f64,
    final_error: f64,
}

fn relative_error(estimate: Complex64, truth: Complex64) -> f64 {
    (estimate - truth).norm() / truth.norm()
}

fn run_point(
    cfg: &ExperimentConfig,
    estimator: &Estimator,
    et_db: f64,
    exec: Execution,
) -> Result<SweepRow> {
    let streams = cfg.streams();
    let noise_power = estimator.config().noise_power;
    let outcomes = exec.map_indexed(cfg.trials, |t| -> Result<TrialOutcome> {
        let truth = sample_channel(cfg, t as u64);
        let mut noise = MeasurementNoise::from_rng(noise_power, streams.noise_rng(t as u64))?;
        let trace = estimator.run_with_noise(&truth, &mut noise)?;
        Ok(TrialOutcome {
            failed: failure_indicator(&trace, &truth),
            mmse_error: relative_error(estimator.alpha_estimate(&trace, AlphaEstimator::MmseAllStages)?, truth.alpha),
            final_error: relative_error(estimator.alpha_estimate(&trace, AlphaEstimator::FinalStageOnly)?, truth.alpha),
        })
    });

    let mut failures = 0usize;
    let mut mmse_all = CompensatedSum::default();
    let mut mmse_ok = CompensatedSum::default();
    let mut final_all = CompensatedSum::default();
    let mut final_ok = CompensatedSum::default();
    let mut counted = 0usize;
    for outcome in outcomes {
        let o = outcome?;
        if o.failed {
            failures += 1;
        }
        // α = 0 has probability zero; skip it rather than divide by zero
        if !o.mmse_error.is_finite() {
            continue;
        }
        counted += 1;
        mmse_all.add(o.mmse_error);
        final_all.add(o.final_error);
        if !o.failed {
            mmse_ok.add(o.mmse_error);
            final_ok.add(o.final_error);
        }
    }
    let successes = cfg.trials - failures;
    let mean = |s: CompensatedSum, n: usize| if n == 0 { f64::NAN } else { s.value() / n as f64 };
    Ok(SweepRow {
        algorithm: estimator.config().algorithm,
        et_db,
        total_power: estimator.config().total_power,
        noise_power,
        slots: estimator.slots(),
        estimate: ProportionEstimate::new(failures, cfg.trials),
        mmse_error_all: mean(mmse_all, counted),
        mmse_error_successful: mean(mmse_ok, successes),
        final_error_all: mean(final_all, counted),
        final_error_successful: mean(final_ok, successes),
    })
}

/// Runs every configured algorithm at every sweep point.
///
/// `P_T = E_T / (M²·Σ_s C_s^{-4})` per algorithm, `N0 = 1`.
pub fn run_sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<ResultTable> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &algorithm in &cfg.algorithms {
        let base = Estimator::new(cfg.estimator_config(algorithm))?;
        for &et_db in &cfg.et_db {
            let est = base.with_total_power(total_power_for(&base, et_db))?;
            rows.push(run_point(cfg, &est, et_db, exec)?);
        }
        if cfg.noiseless_row {
            let est = base.with_noise_power(0.0)?;
            rows.push(run_point(cfg, &est, f64::INFINITY, exec)?);
        }
    }
    Ok(ResultTable { rows })
}

/// Energy (dB) at which a decreasing PCEF curve crosses `target`, by linear
/// interpolation of `ln PCEF` against dB between the bracketing points.
pub fn energy_at_pcef(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    if !(target > 0.0 && target < 1.0) {
        return None;
    }
    curve.windows(2).find_map(|w| {
        let ((x0, p0), (x1, p1)) = (w[0], w[1]);
        if p0 >= target && p1 <= target && p0 > p1 {
            if p1 <= 0.0 {
                // no log-interpolation possible to zero; fall back to linear
                return Some(x0 + (p0 - target) / (p0 - p1) * (x1 - x0));
            }
            let (l0, l1, lt) = (p0.ln(), p1.ln(), target.ln());
            Some(x0 + (l0 - lt) / (l0 - l1) * (x1 - x0))
        } else {
            None
        }
    })
}

/// One point of the analytical bound curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: usize,
    pub k: usize,
    /// `-inf` for the zero-energy row.
    pub et_db: f64,
    pub total_power: f64,
    pub per_stage: f64,
    pub bound: f64,
    pub clamped: bool,
}

/// Evaluates the union bound of the overlapped design over an energy sweep,
/// mapping energy to `P_T` with the design's own stage gains.
pub fn bound_curve(
    n: usize,
    k: usize,
    et_db: &[f64],
    alpha_variance: f64,
    grid_law: GridLaw,
    zero_energy_row: bool,
) -> Result<Vec<BoundRow>> {
    let cfg = EstimatorConfig { alpha_variance, grid_law, ..EstimatorConfig::new(n, k, Algorithm::Overlapped) };
    let est = Estimator::new(cfg)?;
    let mut points: Vec<(f64, f64)> = Vec::new();
    if zero_energy_row {
        points.push((f64::NEG_INFINITY, 0.0));
    }
    points.extend(et_db.iter().map(|&db| (db, total_power_for(&est, db))));
    points
        .into_iter()
        .map(|(db, p)| {
            let r = pcef_upper_bound(est.description_matrix(), est.stages(), p, 1.0, alpha_variance)?;
            Ok(BoundRow {
                n,
                k,
                et_db: db,
                total_power: p,
                per_stage: r.per_stage,
                bound: r.total,
                clamped: r.clamped,
            })
        })
        .collect()
}

/// Full record of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub trial: u64,
    pub algorithm: Algorithm,
    pub et_db: f64,
    pub theta: usize,
    pub phi: usize,
    #[serde(with = "crate::io::complex_text")]
    pub alpha: Complex64,
    /// `(k_r, k_t)` per stage, 0-based.
    pub selections: Vec<(usize, usize)>,
    pub theta_hat: usize,
    pub phi_hat: usize,
    #[serde(with = "crate::io::complex_text")]
    pub alpha_hat: Complex64,
    pub correct: bool,
    pub slots: usize,
    pub total_energy: f64,
}

/// Runs trials `0..cfg.trials` of every algorithm at every sweep point and
/// keeps the full per-trial records.
pub fn run_traces(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let streams = cfg.streams();
    let mut out = Vec::new();
    for &algorithm in &cfg.algorithms {
        let base = Estimator::new(cfg.estimator_config(algorithm))?;
        for &et_db in &cfg.et_db {
            let est = base.with_total_power(total_power_for(&base, et_db))?;
            let records = exec.map_indexed(cfg.trials, |t| -> Result<TrialRecord> {
                let truth = sample_channel(cfg, t as u64);
                let mut noise = MeasurementNoise::from_rng(1.0, streams.noise_rng(t as u64))?;
                let trace = est.run_with_noise(&truth, &mut noise)?;
                Ok(TrialRecord {
                    seed: cfg.seed,
                    trial: t as u64,
                    algorithm,
                    et_db,
                    theta: truth.theta,
                    phi: truth.phi,
                    alpha: truth.alpha,
                    selections: trace.stages.iter().map(|s| (s.k_r, s.k_t)).collect(),
                    theta_hat: trace.theta_hat,
                    phi_hat: trace.phi_hat,
                    alpha_hat: trace.alpha_hat,
                    correct: !failure_indicator(&trace, &truth),
                    slots: trace.slots,
                    total_energy: trace.total_energy(),
                })
            });
            for r in records {
                out.push(r?);
            }
        }
    }
    Ok(out)
}
