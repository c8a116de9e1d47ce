//! Wideband ultra-massive MIMO channel estimation under hybrid near/far-field beam
//! squint.
//!
//! The crate is organised along the processing chain:
//!
//! * [`geometry`]: array layout, steering vectors, channel realisations
//! * [`frontend`]: hybrid-precoded pilots and the impaired receiver (AWGN, IQ
//!   imbalance, oversampling, low-resolution quantisation)
//! * [`dictionary`]: frequency-dependent redundant dictionaries and measurement
//!   matrices
//! * [`estimators`]: Bernoulli-Gaussian MMSE shrinkage, SMV/GMMV-AMP and SOMP
//! * [`lamp`]: the unrolled GMMV-LAMP network, its reverse-mode gradients and
//!   layer-wise training
//! * [`feedback`]: fixed-budget bit-vector CSI feedback codec
//! * [`harness`]: datasets, sweeps, metrics and complexity accounting

pub mod dictionary;
pub mod error;
pub mod estimators;
pub mod feedback;
pub mod frontend;
pub mod geometry;
pub mod harness;
pub mod lamp;
pub mod metrics;
pub mod rng;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub use error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
