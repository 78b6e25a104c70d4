//! Link-level simulation of EVM-based SINR prediction for massive MIMO OFDM.
//!
//! The crate is organised bottom-up:
//!
//! - [`waveform`]: Gray-labelled QAM constellations, frequency-domain OFDM
//!   symbol grids and interference/noise mixing at a controlled SINR.
//! - [`channel`]: synthetic flat Rayleigh, tapped-delay-line and Doppler
//!   evolved channels, plus CSV/binary channel tensor exchange.
//! - [`precoding`]: per-carrier zero-forcing precoders and the effective
//!   per-user channels they produce, including CSI aging.
//! - [`metrics`]: BER, RMS EVM, signalled SINR and the EVM-to-SINR predictor.
//! - [`calibration`]: the experiment drivers (gradient fit, iteration study,
//!   massive MIMO runs, signalling repeatability, bandwidth sweep).
//! - [`config`] and [`study`]: the batch front end used by the `evm-sinr`
//!   binary.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibration;
pub mod channel;
pub mod config;
pub mod error;
pub mod metrics;
pub mod precoding;
pub mod rng;
pub mod study;
pub mod waveform;

pub use error::{Error, Result};
pub use num_complex::Complex64;
