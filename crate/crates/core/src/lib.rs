//! Hierarchical channel estimation for sparse single-path millimetre-wave
//! MIMO links using overlapped beam patterns.
//!
//! The crate is organised along the processing chain:
//!
//! * [`array_model`]: angle grid, steering vectors, channel matrices and noisy
//!   block measurements.
//! * [`codebook`]: the beam-pattern description matrix and the synthesis of
//!   beamforming/combining vectors with piecewise-constant gain.
//! * [`estimator`]: the multi-stage search (overlapped and non-overlapped
//!   baseline), measurement fusion and fading-coefficient estimation.
//! * [`analysis`]: pairwise error probabilities, Rayleigh averaging and the
//!   union bound on the probability of estimation failure.
//! * [`montecarlo`]: seeded, order-independent trial harness and energy sweeps.
//! * [`config`], [`io`] and [`report`]: experiment description files and output
//!   formats.
//!
//! With the default `parallel` feature, trial loops run on rayon; without it
//! every loop runs sequentially. Results are bit-identical either way.

pub mod analysis;
pub mod array_model;
pub mod codebook;
pub mod config;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod parallel;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = ndarray::Array2<Complex64>;
/// Dense complex vector used throughout the crate.
pub type CVector = ndarray::Array1<Complex64>;
