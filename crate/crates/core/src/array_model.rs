//! Uniform linear array model: angle grid, steering vectors, the rank-one
//! single-path channel and noisy block measurements.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::{CMatrix, CVector};

/// Tolerance on the unit norm of beamforming and combining columns.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Array response `u(ε)` of an `n`-element half-wavelength ULA:
/// entry `k` is `exp(j·π·k·sin ε) / √n`.
pub fn steering_vector(epsilon: f64, n: usize) -> Result<CVector> {
    spatial_steering_vector(epsilon.sin(), n)
}

/// Array response for a spatial frequency `psi`: entry `k` is
/// `exp(j·π·k·psi) / √n`. `steering_vector(ε, n)` equals
/// `spatial_steering_vector(sin ε, n)`.
pub fn spatial_steering_vector(psi: f64, n: usize) -> Result<CVector> {
    if n == 0 {
        return Err(invalid("antenna count must be at least 1"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(Array1::from_iter((0..n).map(|k| {
        Complex64::from_polar(scale, PI * k as f64 * psi)
    })))
}

/// How grid index `i` is mapped onto the array response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridLaw {
    /// Index `i` has spatial frequency `2i/N` (taken modulo 2, i.e. a physical
    /// angle `asin(2i/N)` or `asin(2i/N - 2)`). The `N` grid responses are
    /// orthonormal, so the steering matrix is unitary.
    #[default]
    Virtual,
    /// Index `i` has spatial frequency `sin(πi/N)`. Indices `i` and `N - i`
    /// produce the same response, so the steering matrix is singular for
    /// `N > 2`.
    Sine,
}

/// The `N` admissible AOA/AOD values `ε_i = π·i/N`, `i = 0..N`.
///
/// Angles are handled as grid indices; radians are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleGrid {
    n: usize,
    law: GridLaw,
}

impl AngleGrid {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_law(n, GridLaw::Virtual)
    }

    pub fn with_law(n: usize, law: GridLaw) -> Result<Self> {
        if n == 0 {
            return Err(invalid("angle grid needs at least one point"));
        }
        Ok(Self { n, law })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn law(&self) -> GridLaw {
        self.law
    }

    /// Nominal grid angle `π·i/N` in radians.
    pub fn angle(&self, index: usize) -> f64 {
        PI * index as f64 / self.n as f64
    }

    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.angle(i))
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.n
    }

    /// Spatial frequency `psi` of grid index `index` (phase step `π·psi`).
    pub fn spatial_frequency(&self, index: usize) -> f64 {
        match self.law {
            GridLaw::Virtual => 2.0 * index as f64 / self.n as f64,
            GridLaw::Sine => self.angle(index).sin(),
        }
    }

    /// Physical angle whose [`steering_vector`] equals [`Self::steering`].
    pub fn physical_angle(&self, index: usize) -> f64 {
        match self.law {
            GridLaw::Virtual => {
                let psi = self.spatial_frequency(index);
                let wrapped = if psi >= 1.0 { psi - 2.0 } else { psi };
                wrapped.asin()
            }
            GridLaw::Sine => self.angle(index),
        }
    }

    /// Array response `u(ε_index)`.
    pub fn steering(&self, index: usize) -> Result<CVector> {
        if !self.contains(index) {
            return Err(invalid(format!(
                "grid index {index} outside grid of {} points",
                self.n
            )));
        }
        spatial_steering_vector(self.spatial_frequency(index), self.n)
    }

    /// `U = [u(ε_0), …, u(ε_{N-1})]`.
    pub fn steering_matrix(&self) -> CMatrix {
        let n = self.n;
        let scale = 1.0 / (n as f64).sqrt();
        Array2::from_shape_fn((n, n), |(k, i)| {
            Complex64::from_polar(scale, PI * k as f64 * self.spatial_frequency(i))
        })
    }
}

/// Ground truth of one single-path channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// AOA grid index.
    pub theta: usize,
    /// AOD grid index.
    pub phi: usize,
    /// Complex fading coefficient.
    pub alpha: Complex64,
    /// Antenna count at each end.
    pub n: usize,
}

impl ChannelRealization {
    pub fn new(theta: usize, phi: usize, alpha: Complex64, n: usize) -> Result<Self> {
        let r = Self { theta, phi, alpha, n };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("antenna count must be at least 1"));
        }
        if self.theta >= self.n || self.phi >= self.n {
            return Err(invalid(format!(
                "angle indices ({}, {}) outside grid of {} points",
                self.theta, self.phi, self.n
            )));
        }
        if !(self.alpha.re.is_finite() && self.alpha.im.is_finite()) {
            return Err(invalid("fading coefficient must be finite"));
        }
        Ok(())
    }
}

/// `H = α·u(θ)·u(φ)^H`.
pub fn build_channel(realization: &ChannelRealization, grid: &AngleGrid) -> Result<CMatrix> {
    realization.validate()?;
    if realization.n != grid.len() {
        return Err(invalid(format!(
            "channel has {} antennas but grid has {} points",
            realization.n,
            grid.len()
        )));
    }
    let rx = grid.steering(realization.theta)?;
    let tx = grid.steering(realization.phi)?;
    let n = grid.len();
    Ok(Array2::from_shape_fn((n, n), |(i, k)| {
        realization.alpha * rx[i] * tx[k].conj()
    }))
}

/// Source of i.i.d. circularly-symmetric complex Gaussian noise with variance
/// `noise_power` per sample.
#[derive(Debug, Clone)]
pub struct MeasurementNoise {
    noise_power: f64,
    rng: ChaCha8Rng,
}

impl MeasurementNoise {
    pub fn new(noise_power: f64, seed: u64) -> Result<Self> {
        Self::from_rng(noise_power, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_rng(noise_power: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(noise_power >= 0.0 && noise_power.is_finite()) {
            return Err(invalid(format!("noise power {noise_power} must be finite and >= 0")));
        }
        Ok(Self { noise_power, rng })
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    /// One draw. Always consumes two normals so the stream position does not
    /// depend on the noise power.
    pub fn sample(&mut self) -> Complex64 {
        sample_complex_gaussian(&mut self.rng, self.noise_power)
    }
}

/// Draws `CN(0, variance)`.
pub fn sample_complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sigma = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sigma * re, sigma * im)
}

pub(crate) fn check_unit_columns(m: &CMatrix, what: &str) -> Result<()> {
    for (j, col) in m.columns().into_iter().enumerate() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(invalid(format!("{what} column {j} has norm {norm}, expected 1")));
        }
    }
    Ok(())
}

/// One block of `M×M` time slots:
/// `Y = √p · W^H H F · x + Q`, entry `(n, m)` using combiner `w_n` and
/// beamformer `f_m`.
///
/// Noise is drawn slot by slot in row-major `(n, m)` order.
pub fn measure_block(
    h: &CMatrix,
    f: &CMatrix,
    w: &CMatrix,
    power: f64,
    pilot: Complex64,
    noise: &mut MeasurementNoise,
) -> Result<CMatrix> {
    let n = h.nrows();
    if h.ncols() != n || f.nrows() != n || w.nrows() != n {
        return Err(invalid(format!(
            "dimension mismatch: H {:?}, F {:?}, W {:?}",
            h.dim(),
            f.dim(),
            w.dim()
        )));
    }
    if f.ncols() != w.ncols() {
        return Err(invalid("F and W must hold the same number of beams"));
    }
    if !(power > 0.0 && power.is_finite()) {
        return Err(invalid(format!("transmit power {power} must be positive")));
    }
    if (pilot.norm() - 1.0).abs() > UNIT_NORM_TOL {
        return Err(invalid("pilot symbol must have unit modulus"));
    }
    check_unit_columns(f, "beamforming")?;
    check_unit_columns(w, "combining")?;

    let wh = w.t().mapv(|z| z.conj());
    let clean = wh.dot(h).dot(f);
    let gain = Complex64::from(power.sqrt()) * pilot;
    let m = f.ncols();
    let mut y = Array2::zeros((m, m));
    for r in 0..m {
        for c in 0..m {
            y[[r, c]] = gain * clean[[r, c]] + noise.sample();
        }
    }
    Ok(y)
}
