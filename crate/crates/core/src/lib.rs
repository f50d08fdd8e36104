//! Simulation of Itô–Lévy jump diffusions and term-by-term verification of
//! Itô formulas along simulated paths.
//!
//! The crate is split into:
//!
//! - [`drivers`]: Wiener increments, layered Poisson random measures and mark
//!   quadrature.
//! - [`process`]: pathwise construction of the jump diffusion and numerical
//!   checks of its standing conditions.
//! - [`calculus`]: increment operators, test functions and the three
//!   finite-dimensional Itô ledgers (standard, natural and power).
//! - [`lpfield`]: grid fields, mollification, summation-by-parts derivatives
//!   and the `L_p`-norm Itô ledger.
//! - [`harness`]: scenario library, Monte-Carlo ensembles, refinement studies
//!   and verification reports.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calculus;
pub mod drivers;
pub mod error;
pub mod harness;
pub mod lpfield;
pub mod process;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
