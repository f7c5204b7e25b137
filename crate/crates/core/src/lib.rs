//! Numerical laboratory for Bergman kernels and Berezin–Toeplitz operators on
//! high tensor powers `L^k` of model hermitian line bundles over `CP¹` and
//! `CP¹ × CP¹`.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] – the model catalog, curvature data, stratification into
//!   `X(q)` and quadrature grids;
//! * [`superform`] – graded forms in orthonormal coframes, wedge, dagger,
//!   Berezin integral and symbol reduction `f_χ`;
//! * [`spaces`] – harmonic section/form spaces, Gram matrices and all Bergman
//!   objects;
//! * [`toeplitz`] – scalar and super Toeplitz matrices, spectra, counting
//!   functions and pushforward measures;
//! * [`asymptotics`] – k-sweeps turning the limit statements into finite-k
//!   diagnostics;
//! * [`sampling`] – point families, frame bounds and density reports;
//! * [`acceptance`] – the executable acceptance criteria.

pub mod acceptance;
pub mod asymptotics;
mod error;
pub mod geometry;
pub mod linalg;
pub mod report;
pub mod sampling;
pub mod spaces;
pub mod superform;
pub mod symbol;
pub mod toeplitz;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
