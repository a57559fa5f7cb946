//! Affine Volterra processes with jumps: convolution algebra on uniform grids,
//! Riccati–Volterra solvers for the Fourier–Laplace transform, Monte Carlo
//! simulation of the Volterra square-root process with jumps, and checks of the
//! identities and inequalities that tie them together.

// `!(x <= 0.0)`-style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod conv;
pub mod error;
pub mod grid;
pub mod jumps;
pub mod kernel;
pub mod model;
pub mod output;
pub mod pastform;
pub mod resolvent;
pub mod riccati;
pub mod scalar;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use grid::Grid;
pub use jumps::LevyMeasure;
pub use kernel::Kernel;
pub use model::{InputCurve, ModelSpec, TestFunction, Theta};
pub use num_complex::Complex64;
