//! Decoupled range/velocity/angle estimation for frequency-agile MIMO radar with
//! index-modulated transmit selections.

// `!(x < bound)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anm;
pub mod baseline;
pub mod bench;
pub mod codec;
pub mod config;
pub mod crlb;
pub mod error;
pub mod estimate;
pub mod io;
pub mod linalg;
pub mod scenario;
pub mod sdp;
pub mod signal;
pub mod spectral;
pub mod tucker;

pub use config::{Estimate, EstimateSet, RadarConfig, Scene, Target};
pub use error::{FracError, Result};
