//! Multi-stage single-path channel estimation.
//!
//! Each stage splits the transmit and receive sub-ranges selected in the
//! previous stage into `K` children, measures an `M×M` block with the stage
//! codebook, fuses it into the `K×K` hypothesis matrix `R = B^T Y B` and keeps
//! the strongest entry. The overlapped design uses `M = log2(K + 1)` patterns
//! per end; the non-overlapped baseline uses `K` disjoint patterns (identity
//! description matrix).

use std::ops::Range;
use std::sync::{Arc, OnceLock};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{AngleGrid, ChannelRealization, GridLaw, MeasurementNoise};
use crate::codebook::{split_range, BeamPatternMatrix, BeamSet, GridSolver};
use crate::error::{invalid, Error, Result};
use crate::CMatrix;

/// Pilot symbol used in every slot.
pub const PILOT: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Overlapped,
    #[serde(alias = "baseline")]
    NonOverlapped,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Overlapped => "overlapped",
            Algorithm::NonOverlapped => "non_overlapped",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaEstimator {
    /// MMSE combination of the selected measurement of every stage.
    MmseAllStages,
    /// MMSE estimate from the final stage's selected measurement only.
    FinalStageOnly,
}

impl AlphaEstimator {
    pub fn name(self) -> &'static str {
        match self {
            AlphaEstimator::MmseAllStages => "mmse_all_stages",
            AlphaEstimator::FinalStageOnly => "final_stage_only",
        }
    }
}

/// Exact integer logarithm: `Some(s)` with `base^s == value`.
pub fn exact_log(value: usize, base: usize) -> Option<usize> {
    if base < 2 || value == 0 {
        return None;
    }
    let mut v = value;
    let mut s = 0;
    while v.is_multiple_of(base) {
        v /= base;
        s += 1;
    }
    (v == 1).then_some(s)
}

/// Number of beam patterns used per end and per stage.
pub fn patterns_per_stage(algorithm: Algorithm, k: usize) -> Result<usize> {
    if k < 2 {
        return Err(invalid(format!("need at least 2 sub-ranges per stage, got {k}")));
    }
    match algorithm {
        Algorithm::Overlapped => exact_log(k + 1, 2)
            .ok_or_else(|| invalid(format!("K = {k} is not of the form 2^M - 1"))),
        Algorithm::NonOverlapped => Ok(k),
    }
}

/// Number of stages `S` with `K^S = N`.
pub fn stage_count(n: usize, k: usize) -> Result<usize> {
    match exact_log(n, k) {
        Some(s) if s >= 1 => Ok(s),
        _ => Err(invalid(format!("N = {n} is not a positive power of K = {k}"))),
    }
}

/// Total measurement slots: `M²·S`.
pub fn slot_count(algorithm: Algorithm, n: usize, k: usize) -> Result<usize> {
    let m = patterns_per_stage(algorithm, k)?;
    Ok(m * m * stage_count(n, k)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Antennas per end.
    pub n: usize,
    /// Sub-ranges per stage.
    pub k: usize,
    /// `P_T`; stage `s` transmits with `p_s = P_T / C_s⁴`.
    pub total_power: f64,
    /// `N0`.
    pub noise_power: f64,
    /// Prior variance of the fading coefficient.
    pub alpha_variance: f64,
    pub algorithm: Algorithm,
    pub alpha_estimator: AlphaEstimator,
    pub grid_law: GridLaw,
}

impl EstimatorConfig {
    /// Unit power and noise, `Var[α] = N²`, MMSE over all stages.
    pub fn new(n: usize, k: usize, algorithm: Algorithm) -> Self {
        Self {
            n,
            k,
            total_power: 1.0,
            noise_power: 1.0,
            alpha_variance: (n * n) as f64,
            algorithm,
            alpha_estimator: AlphaEstimator::MmseAllStages,
            grid_law: GridLaw::Virtual,
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn with_total_power(mut self, total_power: f64) -> Self {
        self.total_power = total_power;
        self
    }

    pub fn with_noise_power(mut self, noise_power: f64) -> Self {
        self.noise_power = noise_power;
        self
    }

    pub fn patterns(&self) -> Result<usize> {
        patterns_per_stage(self.algorithm, self.k)
    }

    pub fn stages(&self) -> Result<usize> {
        stage_count(self.n, self.k)
    }

    pub fn total_slots(&self) -> Result<usize> {
        slot_count(self.algorithm, self.n, self.k)
    }

    pub fn validate(&self) -> Result<()> {
        self.patterns()?;
        self.stages()?;
        for (name, v) in [
            ("total power", self.total_power),
            ("noise power", self.noise_power),
            ("alpha variance", self.alpha_variance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.total_power == 0.0 {
            return Err(invalid("total power must be positive"));
        }
        Ok(())
    }
}

/// One stage of an estimation run.
#[derive(Debug, Clone)]
pub struct StageMeasurement {
    /// Raw `M×M` outputs, row = combiner, column = beamformer.
    pub y: CMatrix,
    /// Fused `K×K` hypotheses, row = receive sub-range, column = transmit.
    pub r: CMatrix,
    /// Selected receive sub-range (0-based).
    pub k_r: usize,
    /// Selected transmit sub-range (0-based).
    pub k_t: usize,
    /// `R[k_r][k_t]`.
    pub selected: Complex64,
    /// Grid indices of the selected transmit sub-range.
    pub transmit_range: Range<usize>,
    /// Grid indices of the selected receive sub-range.
    pub receive_range: Range<usize>,
    /// Transmit power `p_s`.
    pub power: f64,
}

#[derive(Debug, Clone)]
pub struct EstimationTrace {
    pub stages: Vec<StageMeasurement>,
    pub theta_hat: usize,
    pub phi_hat: usize,
    pub alpha_hat: Complex64,
    pub slots: usize,
}

impl EstimationTrace {
    /// `r = [r^(1), …, r^(S)]`.
    pub fn selected_measurements(&self) -> Vec<Complex64> {
        self.stages.iter().map(|s| s.selected).collect()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.power).collect()
    }

    /// `E_T = M²·Σ p_s`.
    pub fn total_energy(&self) -> f64 {
        let per_stage = self.slots / self.stages.len().max(1);
        per_stage as f64 * self.stages.iter().map(|s| s.power).sum::<f64>()
    }

    /// True when the final selected sub-ranges contain both true angles.
    pub fn succeeded(&self, truth: &ChannelRealization) -> bool {
        self.stages.last().is_some_and(|last| {
            last.transmit_range.contains(&truth.phi) && last.receive_range.contains(&truth.theta)
        })
    }
}

/// `R = B^T Y B`: entry `(k_r, k_t)` is `b_{k_r}^T Y b_{k_t}`.
pub fn fuse_measurements(y: &CMatrix, b: &BeamPatternMatrix) -> Result<CMatrix> {
    let m = b.patterns();
    if y.dim() != (m, m) {
        return Err(invalid(format!(
            "measurement block is {:?} but description matrix has {m} patterns",
            y.dim()
        )));
    }
    let bc = b.matrix().mapv(Complex64::from);
    Ok(bc.t().dot(y).dot(&bc))
}

/// Index of the largest-magnitude entry; the first in row-major order wins
/// ties.
pub fn select_path(r: &CMatrix) -> Result<(usize, usize)> {
    if r.is_empty() {
        return Err(invalid("empty hypothesis matrix"));
    }
    let mut best = (0, 0);
    let mut best_mag = -1.0;
    for ((i, j), z) in r.indexed_iter() {
        if z.re.is_nan() || z.im.is_nan() {
            return Err(invalid(format!("NaN hypothesis at ({i}, {j})")));
        }
        let mag = z.norm_sqr();
        if mag > best_mag {
            best_mag = mag;
            best = (i, j);
        }
    }
    Ok(best)
}

/// Linear MMSE estimate of `α` from `r = √P_T·x·1·α + n`:
/// `Var·√P_T·x*·Σ r_s / (S·Var·P_T + N0)`.
pub fn estimate_alpha_mmse(
    r: &[Complex64],
    total_power: f64,
    pilot: Complex64,
    noise_power: f64,
    alpha_variance: f64,
) -> Result<Complex64> {
    if r.is_empty() {
        return Err(invalid("need at least one stage measurement"));
    }
    for (name, v) in [
        ("total power", total_power),
        ("noise power", noise_power),
        ("alpha variance", alpha_variance),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let s = r.len() as f64;
    let denom = s * alpha_variance * total_power * pilot.norm_sqr() + noise_power;
    if denom <= 0.0 {
        return Err(invalid("MMSE estimate undefined: zero noise power and zero signal prior"));
    }
    let sum: Complex64 = r.iter().sum();
    Ok(sum * pilot.conj() * (alpha_variance * total_power.sqrt() / denom))
}

/// The MMSE estimate using only the last stage.
pub fn estimate_alpha_final_stage(
    r_final: Complex64,
    total_power: f64,
    pilot: Complex64,
    noise_power: f64,
    alpha_variance: f64,
) -> Result<Complex64> {
    estimate_alpha_mmse(&[r_final], total_power, pilot, noise_power, alpha_variance)
}

/// Codebook data shared by every run of one design.
struct Design {
    b: BeamPatternMatrix,
    solver: GridSolver,
    stages: usize,
    /// `nodes[s][j]`: beam set for stage `s` whose parent is block `j` of
    /// size `N / K^s`.
    nodes: Vec<Vec<OnceLock<std::result::Result<BeamSet, String>>>>,
    stage_gains: Vec<f64>,
}

impl Design {
    fn node(&self, stage: usize, parent: usize) -> Result<&BeamSet> {
        let n = self.solver.grid().len();
        let k = self.b.subranges();
        let cell = &self.nodes[stage][parent];
        let built = cell.get_or_init(|| {
            let size = n / k.pow(stage as u32);
            split_range(parent * size..(parent + 1) * size, k)
                .and_then(|ranges| BeamSet::build(&self.b, &ranges, &self.solver))
                .map_err(|e| e.to_string())
        });
        built.as_ref().map_err(|e| Error::InvalidArgument(e.clone()))
    }
}

/// A prepared estimator: the description matrix, grid solver and per-parent
/// beam sets are built once and shared by every run.
#[derive(Clone)]
pub struct Estimator {
    cfg: EstimatorConfig,
    design: Arc<Design>,
}

impl std::fmt::Debug for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Estimator")
            .field("cfg", &self.cfg)
            .field("stage_gains", &self.design.stage_gains)
            .finish()
    }
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        let b = match cfg.algorithm {
            Algorithm::Overlapped => BeamPatternMatrix::overlapped(cfg.patterns()?)?,
            Algorithm::NonOverlapped => BeamPatternMatrix::identity(cfg.k)?,
        };
        let grid = AngleGrid::with_law(cfg.n, cfg.grid_law)?;
        let solver = GridSolver::new(grid)?;
        let stages = cfg.stages()?;
        let nodes = (0..stages)
            .map(|s| (0..cfg.k.pow(s as u32)).map(|_| OnceLock::new()).collect())
            .collect();
        let nodes: Vec<Vec<OnceLock<_>>> = nodes;
        // the leftmost node of each stage fixes C_s; build it eagerly so a
        // degenerate design surfaces with its own error
        let mut stage_gains = Vec::with_capacity(stages);
        for (s, row) in nodes.iter().enumerate() {
            let size = cfg.n / cfg.k.pow(s as u32);
            let set = BeamSet::build(&b, &split_range(0..size, cfg.k)?, &solver)?;
            stage_gains.push(set.gain);
            let _ = row[0].set(Ok(set));
        }
        let design = Design { b, solver, stages, nodes, stage_gains };
        Ok(Self { cfg, design: Arc::new(design) })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    /// Same codebooks with a different `P_T`.
    pub fn with_total_power(&self, total_power: f64) -> Result<Self> {
        let cfg = self.cfg.with_total_power(total_power);
        cfg.validate()?;
        Ok(Self { cfg, design: Arc::clone(&self.design) })
    }

    /// Same codebooks with a different `N0`.
    pub fn with_noise_power(&self, noise_power: f64) -> Result<Self> {
        let cfg = self.cfg.with_noise_power(noise_power);
        cfg.validate()?;
        Ok(Self { cfg, design: Arc::clone(&self.design) })
    }

    pub fn description_matrix(&self) -> &BeamPatternMatrix {
        &self.design.b
    }

    pub fn solver(&self) -> &GridSolver {
        &self.design.solver
    }

    pub fn stages(&self) -> usize {
        self.design.stages
    }

    pub fn patterns(&self) -> usize {
        self.design.b.patterns()
    }

    pub fn slots(&self) -> usize {
        self.patterns() * self.patterns() * self.stages()
    }

    /// Per-stage gain constants `C_s`.
    pub fn stage_gains(&self) -> &[f64] {
        &self.design.stage_gains
    }

    /// `p_s = P_T / C_s⁴`.
    pub fn stage_powers(&self) -> Vec<f64> {
        self.design
            .stage_gains
            .iter()
            .map(|c| self.cfg.total_power / c.powi(4))
            .collect()
    }

    /// `M²·Σ_s C_s^{-4}`: total energy per unit `P_T`.
    pub fn energy_per_unit_power(&self) -> f64 {
        let m = self.patterns() as f64;
        m * m * self.design.stage_gains.iter().map(|c| c.powi(-4)).sum::<f64>()
    }

    /// Beam set used at `stage` (0-based) when the previous stages selected
    /// block `parent`.
    pub fn beam_set(&self, stage: usize, parent: usize) -> Result<&BeamSet> {
        if stage >= self.stages() || parent >= self.cfg.k.pow(stage as u32) {
            return Err(invalid(format!("no beam set for stage {stage}, parent {parent}")));
        }
        self.design.node(stage, parent)
    }

    pub fn run(&self, channel: &ChannelRealization, noise_seed: u64) -> Result<EstimationTrace> {
        let mut noise = MeasurementNoise::new(self.cfg.noise_power, noise_seed)?;
        self.run_with_noise(channel, &mut noise)
    }

    pub fn run_with_noise(
        &self,
        channel: &ChannelRealization,
        noise: &mut MeasurementNoise,
    ) -> Result<EstimationTrace> {
        channel.validate()?;
        if channel.n != self.cfg.n {
            return Err(invalid(format!(
                "channel has {} antennas, estimator expects {}",
                channel.n, self.cfg.n
            )));
        }
        let grid = self.design.solver.grid();
        let rx = grid.steering(channel.theta)?;
        let tx = grid.steering(channel.phi)?;
        let k = self.cfg.k;
        let m = self.patterns();

        let mut parent_t = 0;
        let mut parent_r = 0;
        let mut stages = Vec::with_capacity(self.stages());
        for (s, &c_s) in self.design.stage_gains.iter().enumerate() {
            let f = self.design.node(s, parent_t)?;
            let w = self.design.node(s, parent_r)?;
            let power = self.cfg.total_power / c_s.powi(4);
            // W^H H F = α (W^H u(θ)) (u(φ)^H F)
            let rx_gain: Vec<Complex64> = (0..m)
                .map(|j| w.beams.column(j).iter().zip(rx.iter()).map(|(a, b)| a.conj() * b).sum())
                .collect();
            let tx_gain: Vec<Complex64> = (0..m)
                .map(|j| tx.iter().zip(f.beams.column(j).iter()).map(|(a, b)| a.conj() * b).sum())
                .collect();
            let scale = channel.alpha * power.sqrt() * PILOT;
            let mut y = Array2::zeros((m, m));
            for row in 0..m {
                for col in 0..m {
                    y[[row, col]] = scale * rx_gain[row] * tx_gain[col] + noise.sample();
                }
            }
            let r = fuse_measurements(&y, &self.design.b)?;
            let (k_r, k_t) = select_path(&r)?;
            let selected = r[[k_r, k_t]];
            let transmit_range = f.subranges[k_t].clone();
            let receive_range = w.subranges[k_r].clone();
            parent_t = parent_t * k + k_t;
            parent_r = parent_r * k + k_r;
            stages.push(StageMeasurement {
                y,
                r,
                k_r,
                k_t,
                selected,
                transmit_range,
                receive_range,
                power,
            });
        }

        let alpha_hat = self.estimate_alpha(&stages, self.cfg.alpha_estimator)?;
        Ok(EstimationTrace {
            stages,
            theta_hat: parent_r,
            phi_hat: parent_t,
            alpha_hat,
            slots: self.slots(),
        })
    }

    fn estimate_alpha(&self, stages: &[StageMeasurement], which: AlphaEstimator) -> Result<Complex64> {
        let cfg = &self.cfg;
        match which {
            AlphaEstimator::MmseAllStages => {
                let r: Vec<Complex64> = stages.iter().map(|s| s.selected).collect();
                estimate_alpha_mmse(&r, cfg.total_power, PILOT, cfg.noise_power, cfg.alpha_variance)
            }
            AlphaEstimator::FinalStageOnly => {
                let last = stages.last().ok_or_else(|| invalid("trace has no stages"))?;
                estimate_alpha_final_stage(
                    last.selected,
                    cfg.total_power,
                    PILOT,
                    cfg.noise_power,
                    cfg.alpha_variance,
                )
            }
        }
    }

    /// Fading estimate of `trace` under either estimator, using this
    /// estimator's power and prior.
    pub fn alpha_estimate(&self, trace: &EstimationTrace, which: AlphaEstimator) -> Result<Complex64> {
        self.estimate_alpha(&trace.stages, which)
    }
}

/// Runs the algorithm selected in `cfg` on one channel.
pub fn run_estimation(
    channel: &ChannelRealization,
    cfg: &EstimatorConfig,
    noise_seed: u64,
) -> Result<EstimationTrace> {
    Estimator::new(*cfg)?.run(channel, noise_seed)
}

/// Runs the non-overlapped baseline on one channel.
pub fn run_baseline(
    channel: &ChannelRealization,
    cfg: &EstimatorConfig,
    noise_seed: u64,
) -> Result<EstimationTrace> {
    run_estimation(channel, &cfg.with_algorithm(Algorithm::NonOverlapped), noise_seed)
}
