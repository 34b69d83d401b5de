//! Link-level Monte Carlo simulation of generalized receiver spatial
//! modulation (GRSM) with MQAM over a zero-forcing precoded massive MIMO
//! downlink impaired by oscillator phase noise.
//!
//! The crate is organised bottom-up:
//!
//! - [`pn_model`]: transmitter/receiver phase-noise sampling and the
//!   combined-branch variance law.
//! - [`constellation`]: square MQAM, phase-noise sensitivity, overlap
//!   probability and the pi-separated symbol pools.
//! - [`mapping`]: classical and pool-driven (E-PN) bit mappings.
//! - [`channel`]: clustered and Rayleigh channels, receive-antenna
//!   selection, ZF precoding and the power normalization constant.
//! - [`transceiver`]: one symbol slot through the link, energy detection,
//!   combining and the compensated detectors.
//! - [`sim`]: the seeded, thread-count independent SNR sweep.
//! - [`report`]: CSV/SVG outputs.

pub mod channel;
pub mod constellation;
mod error;
pub mod mapping;
pub mod pn_model;
pub mod report;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod transceiver;

pub use error::{Error, Result};

/// Complex baseband sample.
pub type Complex = num_complex::Complex64;
