//! Nonlinear RF fingerprinting for QPSK-OFDM transmitters.
//!
//! The transmitter and channel are modelled as a Hammerstein system: a static
//! odd-order polynomial nonlinearity followed by an FIR filter. Fingerprints
//! are the nonlinear coefficients `b`, estimated by least squares over an
//! orthogonalised polynomial basis and separated from the FIR taps.
//!
//! The crate is organised bottom-up:
//!
//! * [`ofdm`]: QPSK mapping, unitary OFDM modulation and frame assembly.
//! * [`device`]: transmitter nonlinearity, Rayleigh multipath and AWGN.
//! * [`basis`]: conventional and orthogonalised regression matrices.
//! * [`separation`]: least squares and linear/nonlinear parameter separation.
//! * [`pipeline`]: pilot channel estimate, one-tap equalisation and the
//!   payload-based fingerprint.
//! * [`classifier`]: k-NN on the `b3` feature.
//! * [`harness`]: seeded Monte Carlo experiments, IQ files and outputs.

pub mod basis;
pub mod classifier;
pub mod device;
mod error;
pub mod harness;
pub mod linalg;
pub mod ofdm;
pub mod pipeline;
pub mod separation;

pub use error::{Error, Result};

pub use num_complex::Complex64;
