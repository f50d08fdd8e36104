use std::sync::Arc;

use crate::{Error, Result};

/// Declared regularity of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Smoothness {
    /// `C²(ℝ^M)`.
    C2,
    /// `C²` with bounded derivatives up to second order.
    C2Bounded,
}

/// A `C²` function `φ: ℝ^M → ℝ` with its first and second derivatives.
pub trait TestFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Writes `Dφ(x)` into `out` (length `M`).
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Writes `D²φ(x)` into `out` (length `M²`, row-major).
    fn hessian(&self, x: &[f64], out: &mut [f64]);
    fn smoothness(&self) -> Smoothness {
        Smoothness::C2
    }
}

/// `I^a φ(v) = φ(v + a) − φ(v)`.
pub fn increment_i(phi: &dyn TestFunction, v: &[f64], a: &[f64]) -> f64 {
    let va: Vec<f64> = v.iter().zip(a).map(|(x, y)| x + y).collect();
    phi.value(&va) - phi.value(v)
}

/// `J^a φ(v) = φ(v + a) − φ(v) − a·Dφ(v)`.
pub fn increment_j(phi: &dyn TestFunction, v: &[f64], a: &[f64]) -> f64 {
    let mut grad = vec![0.0; v.len()];
    phi.gradient(v, &mut grad);
    increment_i(phi, v, a) - dot(a, &grad)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `|x|²`.
#[derive(Debug, Clone, Copy)]
pub struct SquaredNorm {
    pub dim: usize,
}

impl TestFunction for SquaredNorm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        dot(x, x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * v;
        }
    }

    fn hessian(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.dim {
            out[i * self.dim + i] = 2.0;
        }
    }
}

/// `|x|^p` for real `p ≥ 2`, with `0/0 := 0` in the direction factors.
#[derive(Debug, Clone, Copy)]
pub struct PowerNorm {
    dim: usize,
    p: f64,
}

impl PowerNorm {
    pub fn new(dim: usize, p: f64) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::Domain(format!("power norm needs p >= 2, got {p}")));
        }
        Ok(PowerNorm { dim, p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `|x|^{p−2}`, equal to 1 for `p = 2` even at the origin.
    fn weight(&self, r: f64) -> f64 {
        if self.p == 2.0 {
            1.0
        } else {
            r.powf(self.p - 2.0)
        }
    }
}

impl TestFunction for PowerNorm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.p == 2.0 {
            dot(x, x)
        } else {
            norm(x).powf(self.p)
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let w = self.p * self.weight(norm(x));
        for (o, v) in out.iter_mut().zip(x) {
            *o = w * v;
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let m = self.dim;
        let r = norm(x);
        let w = self.p * self.weight(r);
        for i in 0..m {
            for j in 0..m {
                let cross = if r > 0.0 { (self.p - 2.0) * (x[i] / r) * (x[j] / r) } else { 0.0 };
                out[i * m + j] = w * (f64::from(u8::from(i == j)) + cross);
            }
        }
    }
}

/// `x^n` on `ℝ`.
#[derive(Debug, Clone, Copy)]
pub struct Monomial {
    pub n: i32,
}

impl TestFunction for Monomial {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        x[0].powi(self.n)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = if self.n == 0 { 0.0 } else { f64::from(self.n) * x[0].powi(self.n - 1) };
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        out[0] = if self.n < 2 { 0.0 } else { f64::from(self.n * (self.n - 1)) * x[0].powi(self.n - 2) };
    }
}

/// `c·x + c₀`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub coef: Vec<f64>,
    pub offset: f64,
}

impl TestFunction for Linear {
    fn dim(&self) -> usize {
        self.coef.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.coef, x) + self.offset
    }

    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.coef);
    }

    fn hessian(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::C2Bounded
    }
}

/// `Σ_i sin(x_i)`.
#[derive(Debug, Clone, Copy)]
pub struct Sine {
    pub dim: usize,
}

impl TestFunction for Sine {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.sin()).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v.cos();
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.dim {
            out[i * self.dim + i] = -x[i].sin();
        }
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::C2Bounded
    }
}

/// Pointwise product `φψ`.
#[derive(Debug, Clone)]
pub struct Product<A, B>(pub A, pub B);

impl<A: TestFunction, B: TestFunction> TestFunction for Product<A, B> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x) * self.1.value(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let m = self.dim();
        let (mut ga, mut gb) = (vec![0.0; m], vec![0.0; m]);
        self.0.gradient(x, &mut ga);
        self.1.gradient(x, &mut gb);
        let (a, b) = (self.0.value(x), self.1.value(x));
        for i in 0..m {
            out[i] = ga[i] * b + a * gb[i];
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let m = self.dim();
        let (mut ga, mut gb) = (vec![0.0; m], vec![0.0; m]);
        let (mut ha, mut hb) = (vec![0.0; m * m], vec![0.0; m * m]);
        self.0.gradient(x, &mut ga);
        self.1.gradient(x, &mut gb);
        self.0.hessian(x, &mut ha);
        self.1.hessian(x, &mut hb);
        let (a, b) = (self.0.value(x), self.1.value(x));
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                out[k] = ha[k] * b + a * hb[k] + ga[i] * gb[j] + gb[i] * ga[j];
            }
        }
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::C2
    }
}

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type FillFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A test function assembled from closures.
#[derive(Clone)]
pub struct FnTestFunction {
    dim: usize,
    value: ValueFn,
    gradient: FillFn,
    hessian: FillFn,
    smoothness: Smoothness,
}

impl FnTestFunction {
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        hessian: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        FnTestFunction {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            smoothness: Smoothness::C2,
        }
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }
}

impl TestFunction for FnTestFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        (self.hessian)(x, out)
    }

    fn smoothness(&self) -> Smoothness {
        self.smoothness
    }
}

/// Comparison of supplied derivatives with central finite differences.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DerivativeReport {
    pub points: usize,
    pub max_gradient_error: f64,
    pub max_hessian_error: f64,
    pub max_asymmetry: f64,
    /// Indices of sample points where `φ` or a derivative was not finite.
    pub non_finite: Vec<usize>,
    pub tolerance: f64,
    pub passed: bool,
}

pub const DERIVATIVE_TOLERANCE: f64 = 1e-4;
const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Checks `Dφ` and `D²φ` against central differences of `φ` with step
/// `fd_step` at each point. Errors are relative in the Euclidean
/// (Frobenius) norm; the check fails above [`DERIVATIVE_TOLERANCE`].
pub fn validate_derivatives(phi: &dyn TestFunction, points: &[Vec<f64>], fd_step: f64) -> Result<DerivativeReport> {
    if !(fd_step > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {fd_step}")));
    }
    let m = phi.dim();
    let mut report = DerivativeReport {
        points: points.len(),
        max_gradient_error: 0.0,
        max_hessian_error: 0.0,
        max_asymmetry: 0.0,
        non_finite: Vec::new(),
        tolerance: DERIVATIVE_TOLERANCE,
        passed: true,
    };
    let h = fd_step;
    let mut grad = vec![0.0; m];
    let mut hess = vec![0.0; m * m];
    let mut fd_grad = vec![0.0; m];
    let mut fd_hess = vec![0.0; m * m];
    for (idx, x) in points.iter().enumerate() {
        if x.len() != m {
            return Err(Error::Shape(format!("sample point has length {}, expected {m}", x.len())));
        }
        let f0 = phi.value(x);
        phi.gradient(x, &mut grad);
        phi.hessian(x, &mut hess);
        let shifted = |steps: &[(usize, f64)]| {
            let mut y = x.clone();
            for &(i, s) in steps {
                y[i] += s;
            }
            phi.value(&y)
        };
        for i in 0..m {
            let (fp, fm) = (shifted(&[(i, h)]), shifted(&[(i, -h)]));
            fd_grad[i] = (fp - fm) / (2.0 * h);
            fd_hess[i * m + i] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let v = (shifted(&[(i, h), (j, h)]) - shifted(&[(i, h), (j, -h)]) - shifted(&[(i, -h), (j, h)])
                    + shifted(&[(i, -h), (j, -h)]))
                    / (4.0 * h * h);
                fd_hess[i * m + j] = v;
                fd_hess[j * m + i] = v;
            }
        }
        let finite = f0.is_finite()
            && grad.iter().chain(&hess).chain(&fd_grad).chain(&fd_hess).all(|v| v.is_finite());
        if !finite {
            report.non_finite.push(idx);
            continue;
        }
        report.max_gradient_error = report.max_gradient_error.max(relative_error(&grad, &fd_grad));
        report.max_hessian_error = report.max_hessian_error.max(relative_error(&hess, &fd_hess));
        let scale = norm(&hess).max(f64::MIN_POSITIVE);
        for i in 0..m {
            for j in 0..i {
                let a = (hess[i * m + j] - hess[j * m + i]).abs() / scale;
                report.max_asymmetry = report.max_asymmetry.max(a);
            }
        }
    }
    report.passed = report.non_finite.is_empty()
        && report.max_gradient_error <= report.tolerance
        && report.max_hessian_error <= report.tolerance
        && report.max_asymmetry <= SYMMETRY_TOLERANCE;
    Ok(report)
}

fn relative_error(supplied: &[f64], reference: &[f64]) -> f64 {
    let diff: Vec<f64> = supplied.iter().zip(reference).map(|(a, b)| a - b).collect();
    let scale = norm(supplied).max(norm(reference));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale.max(1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_by_hand() {
        let sq = SquaredNorm { dim: 2 };
        assert_eq!(increment_i(&sq, &[1.0, 2.0], &[3.0, 4.0]), 47.0);
        assert_eq!(increment_j(&sq, &[1.0, 2.0], &[3.0, 4.0]), 25.0);
        let q = Monomial { n: 4 };
        assert_eq!(increment_j(&q, &[1.0], &[1.0]), 11.0);
        assert_eq!(increment_i(&q, &[0.0], &[1.0]), 1.0);
        assert_eq!(increment_i(&q, &[0.3], &[0.0]), 0.0);
    }

    #[test]
    fn power_norm_matches_finite_differences() {
        let phi = PowerNorm::new(3, 4.0).unwrap();
        let pts = vec![vec![0.5, -1.0, 2.0], vec![1.0, 1.0, 1.0], vec![-0.3, 0.7, 0.2]];
        let r = validate_derivatives(&phi, &pts, 1e-4).unwrap();
        assert!(r.max_gradient_error < 1e-6 && r.max_hessian_error < 1e-6, "{r:?}");
        assert!(r.passed);
        let frac = PowerNorm::new(2, 2.5).unwrap();
        assert!(validate_derivatives(&frac, &[vec![0.4, -0.9]], 1e-5).unwrap().passed);
    }

    #[test]
    fn wrong_gradient_fails() {
        let bad = FnTestFunction::new(
            1,
            |x| x[0].powi(3),
            |x, g| g[0] = 1.1 * 3.0 * x[0] * x[0],
            |x, h| h[0] = 6.0 * x[0],
        );
        let r = validate_derivatives(&bad, &[vec![1.0], vec![2.0]], 1e-4).unwrap();
        assert!(!r.passed);
        assert!(r.max_gradient_error > 0.05);
    }

    #[test]
    fn power_norm_at_origin() {
        let phi = PowerNorm::new(2, 3.0).unwrap();
        let mut g = [1.0; 2];
        let mut h = [1.0; 4];
        phi.gradient(&[0.0, 0.0], &mut g);
        phi.hessian(&[0.0, 0.0], &mut h);
        assert_eq!(g, [0.0; 2]);
        assert_eq!(h, [0.0; 4]);
        assert!(PowerNorm::new(1, 1.5).is_err());
    }

    #[test]
    fn non_finite_points_reported() {
        let phi = FnTestFunction::new(1, |x| 1.0 / x[0], |x, g| g[0] = -1.0 / (x[0] * x[0]), |x, h| h[0] = 2.0 / x[0].powi(3));
        let r = validate_derivatives(&phi, &[vec![0.0], vec![1.0]], 1e-4).unwrap();
        assert_eq!(r.non_finite, vec![0]);
        assert!(!r.passed);
    }

    #[test]
    fn product_rule() {
        let p = Product(Sine { dim: 2 }, SquaredNorm { dim: 2 });
        let r = validate_derivatives(&p, &[vec![0.3, 1.2], vec![-2.0, 0.5]], 1e-4).unwrap();
        assert!(r.passed, "{r:?}");
    }
}
