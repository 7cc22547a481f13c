//! Polynomial attention kernels.
//!
//! * [`matrix`]: dense row-major matrices and elementwise/row-wise kernels.
//! * [`sketch`]: recursive Gaussian polynomial sketches and the non-negative
//!   self-tensored feature map.
//! * [`attention`]: softmax, exact polynomial and sketched attention.
//! * [`causal`]: blocked lower-triangular multiplication and linear-time
//!   causal attention.
//! * [`learnable`]: forward pass of sketches built from small dense networks.
//! * [`verify`] and [`bench`]: the invariant suites and measurement drivers
//!   behind the `polysketch` command-line tool.

pub mod attention;
pub mod bench;
pub mod causal;
pub mod error;
#[doc(hidden)]
pub mod fault;
pub mod io;
pub mod learnable;
pub mod matrix;
pub mod rng;
pub mod sketch;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::{Element, Matrix, Precision};
pub use sketch::{sample_sketch, FeatureMap, SketchTree};
