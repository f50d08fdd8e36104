//! Increment operators `I^a`, `J^a`, test functions with checked derivatives
//! and term-by-term ledgers of Itô's formula along simulated paths.

mod ledger;
mod testfn;

pub use ledger::{ledger_natural, ledger_power, ledger_standard, Formula, LedgerOptions, TermLedger, TermSeries};

pub use testfn::{
    increment_i, increment_j, validate_derivatives, DerivativeReport, FnTestFunction, Linear, Monomial, PowerNorm,
    Product, Sine, Smoothness, SquaredNorm, TestFunction, DERIVATIVE_TOLERANCE,
};
pub(crate) use testfn::{dot, norm};
