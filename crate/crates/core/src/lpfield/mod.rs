//! Grid-sampled fields on a truncated box in `ℝ^d`: mollification,
//! summation-by-parts derivatives, `L_p` norms and weak pairings, an Euler
//! scheme for divergence-form field equations with noise and jumps, and
//! the `L_p`-norm Itô ledger.

mod grid;
mod ledger;
mod ops;
mod simulate;

pub use grid::{Boundary, Field, Grid, MIN_CELLS};
pub use ledger::{ledger_lp, ledger_lp_scalar, lp_diagnostics, weak_form_defect, LpDiagnostics, LpLedger, LP_DS_NODES};
pub use ops::{discrete_gradient, lp_norm, lp_norm_pow, weak_pair, weak_pair_components, Mollifier};
pub use simulate::{simulate_lp, FieldFn, JumpFieldFn, LpCoefficients, LpJump, LpPath};
