//! Pathwise construction of the `ℝ^M`-valued jump diffusion
//!
//! ```text
//! X_t = X_0 + ∫ f ds + ∫ g^r dw^r + Σ_k ∫∫ h̄^k π^k(dz,ds) + Σ_k ∫∫ h^k π̃^k(dz,ds)
//! ```
//!
//! and numerical checks of its standing conditions.

mod coefficients;
mod conditions;
mod simulate;

pub use coefficients::{Coefficients, DiffusionFn, DriftFn, JumpCoefficient, JumpFn};
pub use conditions::{check_conditions, ConditionConfig, ConditionReport, DivergenceStatus, IntegralsEstimate, TruncatedIntegral};
pub use simulate::{simulate, JumpRecord, PathRecord, Scheme, StepCache};
