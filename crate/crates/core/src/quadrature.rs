//! Gauss–Legendre rules and log-scale composite integration.

use std::f64::consts::PI;

/// Gauss–Legendre rule mapped to the unit interval: nodes in `(0, 1)` and
/// weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss rule needs at least one node");
        let (x, w) = gauss_legendre(n);
        let nodes = x.iter().map(|&xi| 0.5 * (xi + 1.0)).collect();
        let weights = w.iter().map(|&wi| 0.5 * wi).collect();
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(theta, weight)` pairs on the unit interval.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let len = b - a;
        self.iter().map(|(th, w)| w * f(a + th * len)).sum::<f64>() * len
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]` with `0 < a < b` using the substitution
/// `s = e^u` and composite Gauss–Legendre panels of log-width at most
/// `ln 2`. Suited to integrands with algebraic behaviour at the origin.
pub fn integrate_log_panels(a: f64, b: f64, rule: &GaussRule, mut f: impl FnMut(f64) -> f64) -> f64 {
    assert!(a > 0.0 && b >= a, "log panels need 0 < a <= b");
    if b == a {
        return 0.0;
    }
    let (la, lb) = (a.ln(), b.ln());
    let panels = ((lb - la) / std::f64::consts::LN_2).ceil().max(1.0) as usize;
    let h = (lb - la) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let u0 = la + k as f64 * h;
        total += rule.integrate(u0, u0 + h, |u| {
            let s = u.exp();
            f(s) * s
        });
    }
    total
}
