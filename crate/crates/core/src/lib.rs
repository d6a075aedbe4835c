//! Phase-field brittle fracture on thin shells described by a single chart.
//!
//! The crate is organised bottom-up: [`geometry`] evaluates the chart
//! coefficients, [`mesh`] holds planar triangulations of the chart domain,
//! [`fem`] assembles the discrete energies, [`solver`] runs the alternating
//! minimization, [`estimator`] and [`adaptation`] drive anisotropic remeshing,
//! and [`driver`] ties everything into the quasi-static time loop.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod par;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
