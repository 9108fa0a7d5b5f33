//! General Transform: trainable blends of discrete transforms.
//!
//! The crate provides dense kernels for the component transforms (DFT,
//! DCT-II, Haar DWT, discrete Legendre, identity), the blended transform
//! with analytic gradients, block-based image feature extraction, a toy
//! token-mixing encoder, a small training harness, and a statevector
//! simulation of the quantum variant built from a linear combination of
//! unitaries.

pub mod error;
pub mod gradcheck;
pub mod gt;
pub mod io;
pub mod kernels;
pub mod nlp;
pub mod qgt;
pub mod train;
pub mod vision;

pub use error::{GtError, Result};
