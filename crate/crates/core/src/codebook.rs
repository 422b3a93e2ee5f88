//! Beam-pattern description matrices and the synthesis of beamforming /
//! combining vectors whose gain is piecewise constant over sub-ranges.

use std::ops::Range;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::array_model::{AngleGrid, GridLaw};
use crate::error::{invalid, Error, Result};
use crate::linalg::ColPivQr;
use crate::{CMatrix, CVector};

/// Condition estimate above which the steering matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Largest supported number of overlapped patterns.
pub const MAX_PATTERNS: usize = 16;

/// The `M×K` matrix of per-sub-range beam amplitudes `b_{m,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPatternMatrix {
    values: Array2<f64>,
}

impl BeamPatternMatrix {
    /// All `2^M - 1` nonzero binary supports, each column normalised.
    ///
    /// Column `j` has support `gray(K - j)` read with row 0 as the most
    /// significant bit. For `M = 2` this is `[[1, 1/√2, 0], [0, 1/√2, 1]]`.
    pub fn overlapped(patterns: usize) -> Result<Self> {
        if patterns == 0 || patterns > MAX_PATTERNS {
            return Err(invalid(format!(
                "pattern count must be in 1..={MAX_PATTERNS}, got {patterns}"
            )));
        }
        let k = (1usize << patterns) - 1;
        let mut values = Array2::zeros((patterns, k));
        for j in 0..k {
            let code = k - j;
            let support = code ^ (code >> 1);
            let weight = 1.0 / (support.count_ones() as f64).sqrt();
            for m in 0..patterns {
                if support >> (patterns - 1 - m) & 1 == 1 {
                    values[[m, j]] = weight;
                }
            }
        }
        Ok(Self { values })
    }

    /// `K×K` identity: one pattern per sub-range, no overlap.
    pub fn identity(subranges: usize) -> Result<Self> {
        if subranges == 0 {
            return Err(invalid("need at least one sub-range"));
        }
        Ok(Self { values: Array2::eye(subranges) })
    }

    /// Validates an arbitrary description matrix: finite, nonnegative, unit
    /// columns.
    pub fn from_matrix(values: Array2<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("empty description matrix"));
        }
        if values.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(invalid("amplitudes must be finite and nonnegative"));
        }
        for (j, col) in values.columns().into_iter().enumerate() {
            let norm = col.dot(&col).sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("column {j} has norm {norm}, expected 1")));
            }
        }
        Ok(Self { values })
    }

    /// Number of beam patterns `M`.
    pub fn patterns(&self) -> usize {
        self.values.nrows()
    }

    /// Number of sub-ranges `K`.
    pub fn subranges(&self) -> usize {
        self.values.ncols()
    }

    pub fn amplitude(&self, pattern: usize, subrange: usize) -> f64 {
        self.values[[pattern, subrange]]
    }

    pub fn column(&self, subrange: usize) -> ArrayView1<'_, f64> {
        self.values.column(subrange)
    }

    pub fn row(&self, pattern: usize) -> ArrayView1<'_, f64> {
        self.values.row(pattern)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.values
    }

    /// `b_k^T b_l`.
    pub fn column_correlation(&self, k: usize, l: usize) -> f64 {
        self.column(k).dot(&self.column(l))
    }
}

/// Shorthand for [`BeamPatternMatrix::overlapped`].
pub fn generate_b(patterns: usize) -> Result<BeamPatternMatrix> {
    BeamPatternMatrix::overlapped(patterns)
}

/// Splits `parent` into `k` contiguous blocks of equal size, ascending.
pub fn split_range(parent: Range<usize>, k: usize) -> Result<Vec<Range<usize>>> {
    if k == 0 {
        return Err(invalid("cannot split into zero sub-ranges"));
    }
    let len = parent.len();
    if len == 0 || !len.is_multiple_of(k) {
        return Err(invalid(format!(
            "parent range of {len} indices is not divisible into {k} sub-ranges"
        )));
    }
    let step = len / k;
    Ok((0..k)
        .map(|i| parent.start + i * step..parent.start + (i + 1) * step)
        .collect())
}

/// The transmit and receive sub-ranges used in one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubrangePartition {
    pub stage: usize,
    pub transmit: Vec<Range<usize>>,
    pub receive: Vec<Range<usize>>,
}

pub fn partition_subranges(
    stage: usize,
    parent_t: Range<usize>,
    parent_r: Range<usize>,
    k: usize,
) -> Result<SubrangePartition> {
    Ok(SubrangePartition {
        stage,
        transmit: split_range(parent_t, k)?,
        receive: split_range(parent_r, k)?,
    })
}

/// Unscaled target gain of pattern `pattern` over the grid: `b_{m,k}` on
/// sub-range `k`, zero outside every sub-range.
pub fn target_profile(
    b: &BeamPatternMatrix,
    pattern: usize,
    subranges: &[Range<usize>],
    n: usize,
) -> Result<Vec<f64>> {
    if pattern >= b.patterns() {
        return Err(invalid(format!("pattern {pattern} out of {}", b.patterns())));
    }
    if subranges.len() != b.subranges() {
        return Err(invalid(format!(
            "{} sub-ranges given for a {}-column description matrix",
            subranges.len(),
            b.subranges()
        )));
    }
    let mut g = vec![0.0; n];
    let mut owner = vec![false; n];
    for (k, range) in subranges.iter().enumerate() {
        if range.end > n {
            return Err(invalid(format!("sub-range {range:?} exceeds grid of {n}")));
        }
        for i in range.clone() {
            if owner[i] {
                return Err(invalid(format!("sub-ranges overlap at index {i}")));
            }
            owner[i] = true;
            g[i] = b.amplitude(pattern, k);
        }
    }
    if g.iter().all(|&v| v == 0.0) {
        return Err(invalid(format!("pattern {pattern} has no gain in any sub-range")));
    }
    Ok(g)
}

#[derive(Clone)]
enum Inverse {
    /// On the virtual grid `U` is the unitary DFT: `(U^H)^{-1} = U`, applied
    /// with an inverse FFT, and `U^H` with a forward FFT.
    Unitary { forward: Arc<dyn Fft<f64>>, inverse: Arc<dyn Fft<f64>> },
    Qr { steering: CMatrix, qr: ColPivQr },
}

/// Solves `U^H v = g` for one angle grid. Factor once, reuse for every
/// pattern and stage.
#[derive(Clone)]
pub struct GridSolver {
    grid: AngleGrid,
    inverse: Inverse,
    condition: f64,
}

impl std::fmt::Debug for GridSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let method = match self.inverse {
            Inverse::Unitary { .. } => "fft",
            Inverse::Qr { .. } => "qr",
        };
        f.debug_struct("GridSolver")
            .field("grid", &self.grid)
            .field("method", &method)
            .field("condition", &self.condition)
            .finish()
    }
}

impl GridSolver {
    /// Uses the closed-form inverse on the unitary grid and a pivoted QR
    /// least-squares solve otherwise.
    pub fn new(grid: AngleGrid) -> Result<Self> {
        match grid.law() {
            GridLaw::Virtual => {
                let mut planner = FftPlanner::new();
                let n = grid.len();
                Ok(Self {
                    grid,
                    inverse: Inverse::Unitary {
                        forward: planner.plan_fft_forward(n),
                        inverse: planner.plan_fft_inverse(n),
                    },
                    condition: 1.0,
                })
            }
            _ => Self::least_squares(grid),
        }
    }

    /// Always factors `U^H` with a column-pivoted QR.
    pub fn least_squares(grid: AngleGrid) -> Result<Self> {
        let steering = grid.steering_matrix();
        let uh = steering.t().mapv(|z| z.conj());
        let qr = ColPivQr::factor(&uh)?;
        let condition = qr.condition_estimate();
        Ok(Self { grid, inverse: Inverse::Qr { steering, qr }, condition })
    }

    pub fn grid(&self) -> &AngleGrid {
        &self.grid
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    /// `U^H v`: the array gain `u(ε_i)^H v` at every grid angle.
    pub fn grid_response(&self, v: ArrayView1<'_, Complex64>) -> CVector {
        match &self.inverse {
            Inverse::Unitary { forward, .. } => {
                let mut buf = v.to_vec();
                forward.process(&mut buf);
                let scale = 1.0 / (buf.len() as f64).sqrt();
                Array1::from_iter(buf.into_iter().map(|z| z * scale))
            }
            Inverse::Qr { steering, .. } => Array1::from_shape_fn(self.grid.len(), |i| {
                steering.column(i).iter().zip(v.iter()).map(|(u, x)| u.conj() * x).sum()
            }),
        }
    }

    fn solve(&self, g: &[f64]) -> Result<CVector> {
        if self.condition > MAX_CONDITION || !self.condition.is_finite() {
            return Err(Error::DegenerateDesign { condition: self.condition, limit: MAX_CONDITION });
        }
        let rhs: Vec<Complex64> = g.iter().map(|&x| Complex64::from(x)).collect();
        match &self.inverse {
            Inverse::Unitary { inverse, .. } => {
                let mut buf = rhs;
                inverse.process(&mut buf);
                let scale = 1.0 / (buf.len() as f64).sqrt();
                Ok(Array1::from_iter(buf.into_iter().map(|z| z * scale)))
            }
            Inverse::Qr { qr, .. } => Ok(Array1::from(qr.solve(&rhs)?)),
        }
    }
}

/// A unit-norm beam synthesised for a target profile.
#[derive(Debug, Clone)]
pub struct SynthesizedBeam {
    pub vector: CVector,
    /// Realised gain constant `C` with `U^H v ≈ C·g`.
    pub gain: f64,
    /// `‖U^H v - C·g‖₂`.
    pub residual: f64,
    /// `residual / ‖C·g‖₂`.
    pub relative_residual: f64,
}

/// Solves `U^H v = C·g` with `‖v‖₂ = 1`.
pub fn synthesize_vector_on(solver: &GridSolver, g: &[f64]) -> Result<SynthesizedBeam> {
    let n = solver.grid().len();
    if g.len() != n {
        return Err(invalid(format!("profile has {} entries, grid has {n}", g.len())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(invalid("profile must be finite"));
    }
    let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if g_norm == 0.0 {
        return Err(invalid("target profile is identically zero"));
    }
    let raw = solver.solve(g)?;
    let raw_norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if raw_norm == 0.0 || !raw_norm.is_finite() {
        return Err(Error::DegenerateDesign { condition: f64::INFINITY, limit: MAX_CONDITION });
    }
    let gain = 1.0 / raw_norm;
    let vector = raw.mapv(|z| z * gain);
    let response = solver.grid_response(vector.view());
    let residual = response
        .iter()
        .zip(g)
        .map(|(r, &t)| (r - gain * t).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(SynthesizedBeam { vector, gain, residual, relative_residual: residual / (gain * g_norm) })
}

/// [`synthesize_vector_on`] for the default grid of `n` points.
pub fn synthesize_vector(g: &[f64], n: usize) -> Result<SynthesizedBeam> {
    synthesize_vector_on(&GridSolver::new(AngleGrid::new(n)?)?, g)
}

/// The `M` beams of one link end for one set of sub-ranges.
#[derive(Debug, Clone)]
pub struct BeamSet {
    pub subranges: Vec<Range<usize>>,
    /// `N×M`, column `m` is beam `m`.
    pub beams: CMatrix,
    /// Realised constant of each pattern before sharing.
    pub pattern_gains: Vec<f64>,
    /// Shared constant: geometric mean of `pattern_gains`.
    pub gain: f64,
    /// `max / min` of `pattern_gains`.
    pub gain_spread: f64,
    /// Largest relative synthesis residual over the patterns.
    pub max_relative_residual: f64,
}

impl BeamSet {
    pub fn build(b: &BeamPatternMatrix, subranges: &[Range<usize>], solver: &GridSolver) -> Result<Self> {
        let n = solver.grid().len();
        let m = b.patterns();
        let mut beams = Array2::zeros((n, m));
        let mut pattern_gains = Vec::with_capacity(m);
        let mut max_relative_residual: f64 = 0.0;
        for p in 0..m {
            let g = target_profile(b, p, subranges, n)?;
            let beam = synthesize_vector_on(solver, &g)?;
            beams.column_mut(p).assign(&beam.vector);
            pattern_gains.push(beam.gain);
            max_relative_residual = max_relative_residual.max(beam.relative_residual);
        }
        let gain = (pattern_gains.iter().map(|c| c.ln()).sum::<f64>() / m as f64).exp();
        let (lo, hi) = pattern_gains
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        Ok(Self {
            subranges: subranges.to_vec(),
            beams,
            pattern_gains,
            gain,
            gain_spread: hi / lo,
            max_relative_residual,
        })
    }

    /// Compares the realised gain `|u(ε_i)^H f_m|` with `C·b_{m,k}` on every
    /// grid angle.
    pub fn flatness(&self, b: &BeamPatternMatrix, solver: &GridSolver) -> FlatnessReport {
        let n = solver.grid().len();
        let mut owner = vec![None; n];
        for (k, r) in self.subranges.iter().enumerate() {
            for i in r.clone() {
                owner[i] = Some(k);
            }
        }
        let mut report = FlatnessReport::default();
        for m in 0..self.beams.ncols() {
            let response = solver.grid_response(self.beams.column(m));
            for (i, z) in response.iter().enumerate() {
                match owner[i] {
                    Some(k) => {
                        let err = (z.norm() - self.gain * b.amplitude(m, k)).abs() / self.gain;
                        report.max_in_range_error = report.max_in_range_error.max(err);
                    }
                    None => {
                        report.max_out_of_range_gain = report.max_out_of_range_gain.max(z.norm() / self.gain);
                    }
                }
            }
        }
        report
    }
}

/// Gain flatness of one beam set, relative to its gain constant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FlatnessReport {
    /// `max |(|u^H f_m| - C b_{m,k})| / C` over in-range grid angles.
    pub max_in_range_error: f64,
    /// `max |u^H f_m| / C` over grid angles outside every sub-range.
    pub max_out_of_range_gain: f64,
}

/// Beamformers `F` (transmit) and combiners `W` (receive) for one stage.
#[derive(Debug, Clone)]
pub struct StageCodebook {
    pub stage: usize,
    pub transmit: BeamSet,
    pub receive: BeamSet,
}

impl StageCodebook {
    pub fn f(&self) -> &CMatrix {
        &self.transmit.beams
    }

    pub fn w(&self) -> &CMatrix {
        &self.receive.beams
    }

    /// Stage constant `C_s`: geometric mean over both ends.
    pub fn gain(&self) -> f64 {
        (self.transmit.gain * self.receive.gain).sqrt()
    }
}

pub fn build_stage_codebook(
    b: &BeamPatternMatrix,
    partition: &SubrangePartition,
    solver: &GridSolver,
) -> Result<StageCodebook> {
    let transmit = BeamSet::build(b, &partition.transmit, solver)?;
    let receive = if partition.receive == partition.transmit {
        transmit.clone()
    } else {
        BeamSet::build(b, &partition.receive, solver)?
    };
    Ok(StageCodebook { stage: partition.stage, transmit, receive })
}
