//! Reconstruction of energy-harvesting functions of bounded variation from
//! grid samples, and capacity-energy tradeoff curves over discretized
//! memoryless channels.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: grid functions on `[0, 1]`, total variation, sampling, numeric helpers.
//! - [`wavelet`]: orthonormal Haar analysis, linear projection, t-term selection, soft thresholding.
//! - [`reconstruct`]: noiseless Haar, Haar shrinkage and natural cubic spline reconstructions.
//! - [`channel`]: quantized channel models (AWGN and small discrete channels) and mutual information.
//! - [`capacity`]: Blahut-Arimoto, the energy-tilted variant, capacity-energy curves.
//! - [`loss`]: energy and information losses, Monte Carlo sweeps, decay-exponent fits.
//! - [`adversary`]: the Haar-bump detection family behind the `m^{-1/3}` lower bound.
//! - [`cli`]: the `siet` command-line front end (configs, CSV/JSON/SVG outputs, verification).
//!
//! Runnable walkthroughs for each capability live in the crate's `examples/` directory.

// `!(x >= 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod capacity;
pub mod channel;
pub mod cli;
pub mod error;
pub mod grid;
pub mod loss;
pub mod reconstruct;
pub mod spline;
pub mod wavelet;

pub use error::{Error, Result};
