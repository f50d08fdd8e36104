use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// `f(t, x)` with `x` the left limit of the state; returns `ℝ^M`.
pub type DriftFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// `g(t, x)` as an `M × R` row-major matrix.
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// Jump integrand `(t, z, x) ↦ ℝ^M`.
pub type JumpFn = Arc<dyn Fn(f64, f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Integrands against the `k`-th Poisson random measure: `h̄^k` against `π^k`
/// and `h^k` against the compensated `π̃^k`. Their products must vanish
/// pointwise.
#[derive(Clone, Default)]
pub struct JumpCoefficient {
    pub uncompensated: Option<JumpFn>,
    pub compensated: Option<JumpFn>,
}

/// Coefficients of the jump diffusion.
///
/// Coefficients see `(t, X_{t-})` and, for jump integrands, the mark. Any
/// further ω-dependence of the integrands is out of reach of this interface.
#[derive(Clone)]
pub struct Coefficients {
    dim: usize,
    n_wiener: usize,
    drift: Option<DriftFn>,
    diffusion: Option<DiffusionFn>,
    jumps: Vec<JumpCoefficient>,
    finite_activity: bool,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients")
            .field("dim", &self.dim)
            .field("n_wiener", &self.n_wiener)
            .field("drift", &self.drift.is_some())
            .field("diffusion", &self.diffusion.is_some())
            .field("measures", &self.jumps.len())
            .field("finite_activity", &self.finite_activity)
            .finish()
    }
}

impl Coefficients {
    /// Zero coefficients in dimension `dim` with `n_wiener` Wiener components.
    pub fn new(dim: usize, n_wiener: usize) -> Self {
        Coefficients { dim, n_wiener, drift: None, diffusion: None, jumps: Vec::new(), finite_activity: true }
    }

    pub fn with_drift(mut self, f: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn with_diffusion(mut self, g: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Arc::new(g));
        self
    }

    fn jump_slot(&mut self, k: usize) -> &mut JumpCoefficient {
        if self.jumps.len() <= k {
            self.jumps.resize_with(k + 1, JumpCoefficient::default);
        }
        &mut self.jumps[k]
    }

    /// Sets `h̄^k`, integrated against `π^k`.
    pub fn with_uncompensated(
        mut self,
        k: usize,
        h: impl Fn(f64, f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jump_slot(k).uncompensated = Some(Arc::new(h));
        self
    }

    /// Sets `h^k`, integrated against `π̃^k`.
    pub fn with_compensated(
        mut self,
        k: usize,
        h: impl Fn(f64, f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jump_slot(k).compensated = Some(Arc::new(h));
        self
    }

    /// Declares whether all jump integrands live on finitely many layers.
    pub fn with_finite_activity(mut self, finite: bool) -> Self {
        self.finite_activity = finite;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_wiener(&self) -> usize {
        self.n_wiener
    }

    pub fn finite_activity(&self) -> bool {
        self.finite_activity
    }

    pub fn has_diffusion(&self) -> bool {
        self.diffusion.is_some()
    }

    pub fn n_measures(&self) -> usize {
        self.jumps.len()
    }

    pub fn jump(&self, k: usize) -> Option<&JumpCoefficient> {
        self.jumps.get(k)
    }

    pub fn drift(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match &self.drift {
            None => Ok(vec![0.0; self.dim]),
            Some(f) => self.checked(f(t, x), self.dim, "drift"),
        }
    }

    pub fn diffusion(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match &self.diffusion {
            None => Ok(vec![0.0; self.dim * self.n_wiener]),
            Some(g) => self.checked(g(t, x), self.dim * self.n_wiener, "diffusion"),
        }
    }

    pub fn uncompensated(&self, k: usize, t: f64, z: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self.jumps.get(k).and_then(|j| j.uncompensated.as_ref()) {
            None => Ok(vec![0.0; self.dim]),
            Some(h) => self.checked(h(t, z, x), self.dim, "uncompensated jump"),
        }
    }

    pub fn compensated(&self, k: usize, t: f64, z: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self.jumps.get(k).and_then(|j| j.compensated.as_ref()) {
            None => Ok(vec![0.0; self.dim]),
            Some(h) => self.checked(h(t, z, x), self.dim, "compensated jump"),
        }
    }

    pub fn has_compensated(&self, k: usize) -> bool {
        self.jumps.get(k).is_some_and(|j| j.compensated.is_some())
    }

    pub fn has_uncompensated(&self, k: usize) -> bool {
        self.jumps.get(k).is_some_and(|j| j.uncompensated.is_some())
    }

    fn checked(&self, v: Vec<f64>, len: usize, what: &str) -> Result<Vec<f64>> {
        if v.len() != len {
            return Err(Error::Shape(format!("{what} returned {} values, expected {len}", v.len())));
        }
        Ok(v)
    }
}
