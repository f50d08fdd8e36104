use serde::Serialize;

use super::{Coefficients, PathRecord};
use crate::calculus::TestFunction;
use crate::drivers::Drivers;
use crate::quadrature::GaussRule;
use crate::Result;

/// Tuning of [`check_conditions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ConditionConfig {
    /// Truncation levels `δ_ℓ = T·10^{−ℓ}`, `ℓ = 1..=levels`.
    pub levels: usize,
    /// Growth per unit of `ln(1/δ)` above which an increment counts as
    /// growing.
    pub min_slope: f64,
    /// Gauss nodes per log panel in time.
    pub nodes: usize,
    pub orthogonality_tolerance: f64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        ConditionConfig { levels: 6, min_slope: 0.1, nodes: 8, orthogonality_tolerance: 1e-12 }
    }
}

/// Value of a truncated time–mark integral over `[δ, T]` and the first
/// `layers` mark layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncatedIntegral {
    pub delta: f64,
    pub layers: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum DivergenceStatus {
    /// No test function was supplied.
    NotEvaluated,
    Finite,
    /// Sustained growth in `ln(1/δ)` up to truncation level `level`.
    SuspectedDivergent { level: usize, delta: f64 },
}

impl DivergenceStatus {
    pub fn is_divergent(&self) -> bool {
        matches!(self, DivergenceStatus::SuspectedDivergent { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEstimate {
    pub levels: Vec<TruncatedIntegral>,
    pub status: DivergenceStatus,
}

impl ConditionEstimate {
    fn not_evaluated() -> Self {
        ConditionEstimate { levels: Vec::new(), status: DivergenceStatus::NotEvaluated }
    }
}

/// Path integrals whose finiteness the process construction assumes,
/// evaluated over `[delta, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralsEstimate {
    pub delta: f64,
    /// `Σ_k ∫∫ |h̄^k| π^k(dz, ds)` over realized events.
    pub uncompensated_abs: f64,
    /// `Σ_k ∫∫ |h^k|² μ^k(dz) ds`.
    pub compensated_sq: f64,
    pub drift_abs: f64,
    pub diffusion_sq: f64,
}

impl IntegralsEstimate {
    pub fn is_finite(&self) -> bool {
        [self.uncompensated_abs, self.compensated_sq, self.drift_abs, self.diffusion_sq].iter().all(|v| v.is_finite())
    }
}

/// Numerical status of the standing conditions along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `max |h̄^i h^j|` over probed `(t, z, x)`.
    pub orthogonality_max: f64,
    pub orthogonality_violated: bool,
    pub integrals: IntegralsEstimate,
    /// `ξ`: largest `|h̄|` over realized events.
    pub esssup_uncompensated: f64,
    /// `η`: largest `|h|` over realized events.
    pub esssup_compensated: f64,
    /// `∫∫ |φ(X_s + h) − φ(X_s)|² μ(dz) ds`.
    pub condition1: ConditionEstimate,
    /// `∫∫ |φ(X_s + h) − φ(X_s) − h·Dφ(X_s)| μ(dz) ds`.
    pub condition2: ConditionEstimate,
}

impl ConditionReport {
    /// Names of the conditions flagged divergent, remainder condition first.
    pub fn divergent_conditions(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.condition2.status.is_divergent() {
            out.push("condition2");
        }
        if self.condition1.status.is_divergent() {
            out.push("condition1");
        }
        out
    }
}

/// Checks orthogonality of the jump integrands, estimates the path
/// integrals and, given `φ`, the two integrability conditions of the
/// standard Itô formula at decreasing truncation `δ`.
///
/// Time integrals run over each merged-grid interval with log-panel Gauss
/// quadrature, using the linear interpolant of `X` and the true time `s`
/// in the coefficients. Divergence is a heuristic: the last three
/// increments per unit `ln(1/δ)` all exceed `min_slope` and none shrinks
/// by more than half relative to its predecessor.
pub fn check_conditions(
    coeffs: &Coefficients,
    path: &PathRecord,
    drivers: &Drivers,
    phi: Option<&dyn TestFunction>,
    config: &ConditionConfig,
) -> Result<ConditionReport> {
    let m = coeffs.dim();
    let n_meas = coeffs.n_measures();
    let horizon = *path.times().last().unwrap();
    let rule = GaussRule::new(config.nodes.max(1));

    let mut orth = 0.0f64;
    let mut probe = |k: usize, t: f64, z: f64, x: &[f64]| -> Result<()> {
        if coeffs.has_compensated(k) && coeffs.has_uncompensated(k) {
            let a = coeffs.uncompensated(k, t, z, x)?;
            let b = coeffs.compensated(k, t, z, x)?;
            let ma = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            let mb = b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            orth = orth.max(ma * mb);
        }
        Ok(())
    };
    for k in 0..n_meas {
        let marks = drivers.measures[k].probe_points(path.layers_for(k))?;
        for (i, &t) in path.times().iter().enumerate() {
            let x = &path.left_limits()[i];
            for &z in &marks {
                probe(k, t, z, x)?;
            }
        }
    }
    let mut xi = 0.0f64;
    let mut eta = 0.0f64;
    let mut hbar_abs = 0.0;
    for j in path.jumps() {
        probe(j.event.measure, j.event.time, j.event.mark, &j.before)?;
        let a = crate::calculus::norm(&j.uncompensated);
        xi = xi.max(a);
        eta = eta.max(crate::calculus::norm(&j.compensated));
        hbar_abs += a;
    }

    let delta_min = horizon * 10f64.powi(-(config.levels.max(1) as i32));
    let max_layers: Vec<usize> = (0..n_meas).map(|k| path.layers_for(k)).collect();
    let [drift_abs, diffusion_sq, compensated_sq] = path_integral(path, delta_min, &rule, |s, x| {
        let f = coeffs.drift(s, x)?;
        let g = coeffs.diffusion(s, x)?;
        let mut hsq = 0.0;
        for (k, &layers) in max_layers.iter().enumerate() {
            if coeffs.has_compensated(k) && layers > 0 {
                let [v] = mark_integral_n(drivers, k, layers, |z| {
                    let h = coeffs.compensated(k, s, z, x)?;
                    Ok([crate::calculus::dot(&h, &h)])
                })?;
                hsq += v;
            }
        }
        Ok([crate::calculus::norm(&f), g.iter().map(|v| v * v).sum(), hsq])
    })?;

    let integrals = IntegralsEstimate {
        delta: delta_min,
        uncompensated_abs: hbar_abs,
        compensated_sq,
        drift_abs,
        diffusion_sq,
    };

    let (condition1, condition2) = match phi {
        None => (ConditionEstimate::not_evaluated(), ConditionEstimate::not_evaluated()),
        Some(phi) => {
            let mut c1 = Vec::new();
            let mut c2 = Vec::new();
            let mut grad = vec![0.0; m];
            let mut shifted = vec![0.0; m];
            for level in 1..=config.levels {
                let delta = horizon * 10f64.powi(-(level as i32));
                let layers: Vec<usize> = max_layers.iter().map(|&l| l.min(level + 1)).collect();
                let [v1, v2] = path_integral(path, delta, &rule, |s, x| {
                    let base = phi.value(x);
                    phi.gradient(x, &mut grad);
                    let mut acc = [0.0, 0.0];
                    for (k, &nl) in layers.iter().enumerate() {
                        if !coeffs.has_compensated(k) || nl == 0 {
                            continue;
                        }
                        let [a, b] = mark_integral_n(drivers, k, nl, |z| {
                            let h = coeffs.compensated(k, s, z, x)?;
                            for i in 0..m {
                                shifted[i] = x[i] + h[i];
                            }
                            let inc = phi.value(&shifted) - base;
                            Ok([inc * inc, (inc - crate::calculus::dot(&h, &grad)).abs()])
                        })?;
                        acc[0] += a;
                        acc[1] += b;
                    }
                    Ok(acc)
                })?;
                let nl = layers.iter().copied().max().unwrap_or(0);
                c1.push(TruncatedIntegral { delta, layers: nl, value: v1 });
                c2.push(TruncatedIntegral { delta, layers: nl, value: v2 });
            }
            let s1 = divergence_status(&c1, config.min_slope);
            let s2 = divergence_status(&c2, config.min_slope);
            (ConditionEstimate { levels: c1, status: s1 }, ConditionEstimate { levels: c2, status: s2 })
        }
    };

    Ok(ConditionReport {
        orthogonality_max: orth,
        orthogonality_violated: orth > config.orthogonality_tolerance,
        integrals,
        esssup_uncompensated: xi,
        esssup_compensated: eta,
        condition1,
        condition2,
    })
}

/// `∫_δ^T F(s, X_s) ds` for vector-valued `F`, with `X_s` the linear
/// interpolant on each merged-grid interval and log panels in time.
fn path_integral<const N: usize>(
    path: &PathRecord,
    delta: f64,
    rule: &GaussRule,
    mut f: impl FnMut(f64, &[f64]) -> Result<[f64; N]>,
) -> Result<[f64; N]> {
    let times = path.times();
    let mut total = [0.0; N];
    let mut x = vec![0.0; path.dim()];
    for j in 0..times.len() - 1 {
        let (t0, t1) = (times[j], times[j + 1]);
        if t1 <= delta {
            continue;
        }
        let a = t0.max(delta);
        let (la, lb) = (a.ln(), t1.ln());
        let panels = ((lb - la) / std::f64::consts::LN_2).ceil().max(1.0) as usize;
        let hu = (lb - la) / panels as f64;
        for p in 0..panels {
            let u0 = la + p as f64 * hu;
            for (theta, w) in rule.iter() {
                let s = (u0 + theta * hu).exp();
                path.interpolate(j, (s - t0) / (t1 - t0), &mut x);
                let v = f(s, &x)?;
                for (acc, vi) in total.iter_mut().zip(v) {
                    *acc += w * hu * s * vi;
                }
            }
        }
    }
    Ok(total)
}

/// `∫ F(z) μ^k(dz)` over the first `layers` layers for vector-valued `F`.
fn mark_integral_n<const N: usize>(
    drivers: &Drivers,
    k: usize,
    layers: usize,
    mut f: impl FnMut(f64) -> Result<[f64; N]>,
) -> Result<[f64; N]> {
    let mut failure = None;
    let (v, _) = drivers.measures[k].integrate_vec(layers, N, |z, out| match f(z) {
        Ok(r) => out.copy_from_slice(&r),
        Err(e) => {
            failure.get_or_insert(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut r = [0.0; N];
    r.copy_from_slice(&v);
    Ok(r)
}

fn divergence_status(levels: &[TruncatedIntegral], min_slope: f64) -> DivergenceStatus {
    if let Some(bad) = levels.iter().position(|l| !l.value.is_finite()) {
        return DivergenceStatus::SuspectedDivergent { level: bad + 1, delta: levels[bad].delta };
    }
    let slopes: Vec<f64> = levels
        .windows(2)
        .map(|w| (w[1].value - w[0].value) / (w[0].delta / w[1].delta).ln())
        .collect();
    if slopes.len() < 3 {
        return DivergenceStatus::Finite;
    }
    let tail = &slopes[slopes.len() - 3..];
    let growing = tail.iter().all(|&s| s >= min_slope) && tail.windows(2).all(|w| w[1] >= 0.5 * w[0]);
    if growing {
        let last = levels.len() - 1;
        DivergenceStatus::SuspectedDivergent { level: last + 1, delta: levels[last].delta }
    } else {
        DivergenceStatus::Finite
    }
}
