//! Closed-form error analysis: pairwise hypothesis errors for a fixed and a
//! Rayleigh-distributed path gain, and the union bound on the probability of
//! estimation failure.
//!
//! At every stage the correct fused entry is `√P_T·α + n₁` and a competing
//! entry is `ρ·√P_T·α + n₂`, where `n₁, n₂` are `CN(0, N0)` with correlation
//! `ρ` equal to the product of the two description-matrix column correlations.
//! The probability that the competitor is larger in magnitude is
//! `Q1(A, B) − ½ I0(AB) e^{−(A²+B²)/2}` with
//! `A, B = |α|√P_T (√(1+ρ) ∓ √(1−ρ)) / (2√N0)`.

pub mod special;

use serde::{Deserialize, Serialize};

use crate::codebook::BeamPatternMatrix;
use crate::error::{invalid, Error, Result};

pub use special::{bessel_i0, bessel_i0e, marcum_difference, marcum_q1};

/// Parameters of one pair of hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseContext {
    /// Correlation between the two hypothesis signatures, in `[0, 1]`.
    pub rho: f64,
    pub noise_power: f64,
    pub total_power: f64,
    /// `E|α|²`.
    pub alpha_variance: f64,
}

impl PairwiseContext {
    pub fn new(rho: f64, noise_power: f64, total_power: f64, alpha_variance: f64) -> Result<Self> {
        let ctx = Self { rho, noise_power, total_power, alpha_variance };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(invalid(format!("correlation {} outside [0, 1]", self.rho)));
        }
        for (name, v) in [
            ("noise power", self.noise_power),
            ("total power", self.total_power),
            ("alpha variance", self.alpha_variance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Noise covariance between the two fused entries, `N0·ρ`.
    pub fn noise_covariance(&self) -> f64 {
        self.noise_power * self.rho
    }

    /// `(√(1+ρ) − √(1−ρ), √(1+ρ) + √(1−ρ)) / 2`.
    fn split(&self) -> (f64, f64) {
        let p = (1.0 + self.rho).sqrt();
        let m = (1.0 - self.rho).sqrt();
        (0.5 * (p - m), 0.5 * (p + m))
    }

    /// Marcum arguments `(A, B)` for path gain magnitude `alpha_mag`.
    pub fn arguments(&self, alpha_mag: f64) -> (f64, f64) {
        let s = alpha_mag * (self.total_power / self.noise_power).sqrt();
        let (lo, hi) = self.split();
        (s * lo, s * hi)
    }

    /// Rayleigh-averaged parameters `(Ā², B̄²) = E[A²], E[B²]`.
    pub fn mean_square_arguments(&self) -> (f64, f64) {
        let snr = self.alpha_variance * self.total_power / self.noise_power;
        let (lo, hi) = self.split();
        (snr * lo * lo, snr * hi * hi)
    }

    fn check_pair(&self) -> Result<()> {
        self.validate()?;
        if self.rho >= 1.0 {
            return Err(Error::SelfPair);
        }
        Ok(())
    }
}

/// `Pr(|r_competitor| > |r_correct|)` for a fixed `|α|`.
pub fn pairwise_error_fixed_alpha(ctx: &PairwiseContext, alpha_mag: f64) -> Result<f64> {
    ctx.check_pair()?;
    if !(alpha_mag >= 0.0 && alpha_mag.is_finite()) {
        return Err(invalid(format!("|alpha| must be finite and >= 0, got {alpha_mag}")));
    }
    let signal = alpha_mag * alpha_mag * ctx.total_power;
    if ctx.noise_power == 0.0 {
        return if signal > 0.0 { Ok(0.0) } else { Err(invalid("no signal and no noise")) };
    }
    let (a, b) = ctx.arguments(alpha_mag);
    marcum_difference(a, b)
}

/// The pairwise error averaged over `α ~ CN(0, Var[α])`:
/// `½ − (B̄² − Ā²) / (4 √(1 + Ā² + B̄² + ((B̄² − Ā²)/2)²))`.
pub fn pairwise_error_rayleigh(ctx: &PairwiseContext) -> Result<f64> {
    ctx.check_pair()?;
    if ctx.noise_power == 0.0 {
        return if ctx.alpha_variance * ctx.total_power > 0.0 {
            Ok(0.0)
        } else {
            Err(invalid("no signal and no noise"))
        };
    }
    let (a2, b2) = ctx.mean_square_arguments();
    let d = b2 - a2;
    let p = 0.5 - d / (4.0 * (1.0 + a2 + b2 + 0.25 * d * d).sqrt());
    Ok(p.clamp(0.0, 0.5))
}

/// Pairwise terms sharing one correlation value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub rho: f64,
    /// Number of ordered (true, competitor) pairs with this correlation.
    pub count: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    /// Bound on the failure probability of one stage given the previous ones
    /// succeeded.
    pub per_stage: f64,
    /// Union bound over `S` stages, clamped to 1.
    pub total: f64,
    /// `S·per_stage` before clamping.
    pub unclamped: f64,
    pub clamped: bool,
    pub stages: usize,
    /// Distinct pairwise terms, sorted by correlation.
    pub terms: Vec<BoundTerm>,
}

/// Union bound on the probability of estimation failure:
/// `(S/K²) Σ_{true} Σ_{competitor ≠ true} P̄(ρ)`.
pub fn pcef_upper_bound(
    b: &BeamPatternMatrix,
    stages: usize,
    total_power: f64,
    noise_power: f64,
    alpha_variance: f64,
) -> Result<BoundResult> {
    if stages == 0 {
        return Err(invalid("need at least one stage"));
    }
    let k = b.subranges();
    let corr: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| b.column_correlation(i, j).clamp(0.0, 1.0)).collect())
        .collect();

    // group ordered pairs by correlation (rounded) so each distinct value is
    // evaluated once
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for tr in 0..k {
        for tt in 0..k {
            for cr in 0..k {
                for ct in 0..k {
                    if (tr, tt) == (cr, ct) {
                        continue;
                    }
                    let rho = corr[tr][cr] * corr[tt][ct];
                    match groups.iter_mut().find(|(r, _)| (r - rho).abs() < 1e-12) {
                        Some(g) => g.1 += 1,
                        None => groups.push((rho, 1)),
                    }
                }
            }
        }
    }
    groups.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut sum = 0.0;
    let mut terms = Vec::with_capacity(groups.len());
    for (rho, count) in groups {
        let ctx = PairwiseContext::new(rho, noise_power, total_power, alpha_variance)?;
        let probability = pairwise_error_rayleigh(&ctx)?;
        sum += count as f64 * probability;
        terms.push(BoundTerm { rho, count, probability });
    }
    let per_stage = sum / (k * k) as f64;
    let unclamped = stages as f64 * per_stage;
    Ok(BoundResult {
        per_stage,
        total: unclamped.min(1.0),
        unclamped,
        clamped: unclamped > 1.0,
        stages,
        terms,
    })
}
