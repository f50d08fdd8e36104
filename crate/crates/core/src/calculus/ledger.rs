use std::io::Write;

use serde::Serialize;

use super::testfn::{dot, norm, PowerNorm, TestFunction};
use crate::drivers::Drivers;
use crate::process::{Coefficients, ConditionReport, PathRecord, StepCache};
use crate::quadrature::GaussRule;
use crate::{Error, Result};

/// Which form of Itô's formula a ledger tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formula {
    /// Compensated increment `I^h φ` against `π̃` and `J^h φ` against `μ ds`.
    Standard,
    /// Linear part `Dφ·h` against `π̃` and `J^h φ` against `π`.
    Natural,
    /// The natural form specialised to `φ = |x|^p`.
    Power,
    /// `|u|^p_{L_p}` of an `ℝ^M`-valued field.
    LpVector,
    /// `|u|^p_{L_p}` of a scalar field.
    LpScalar,
}

/// Cumulative values of one right-hand-side term on the merged grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermSeries {
    pub name: &'static str,
    pub values: Vec<f64>,
}

/// Term-by-term account of `φ(X_t) = φ(X_0) + Σ terms(t)` along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermLedger {
    pub formula: Formula,
    pub times: Vec<f64>,
    /// `φ(X_t)`.
    pub lhs: Vec<f64>,
    pub initial: f64,
    pub terms: Vec<TermSeries>,
    /// `lhs − initial − Σ terms`.
    pub residual: Vec<f64>,
    /// Standard error of the mark quadrature carried into the `ds` terms;
    /// zero for exact quadrature.
    pub quadrature_se: f64,
}

impl TermLedger {
    pub fn term(&self, name: &str) -> Option<&[f64]> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.values.as_slice())
    }

    /// `φ(X_0) + Σ terms` at grid index `i`.
    pub fn rhs(&self, i: usize) -> f64 {
        self.initial + self.terms.iter().map(|t| t.values[i]).sum::<f64>()
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual.last().unwrap()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// `Σ |term(T)|`, the natural scale of the residual.
    pub fn term_scale(&self) -> f64 {
        self.terms.iter().map(|t| t.values.last().unwrap().abs()).sum()
    }

    /// One row per grid time: `t`, `lhs`, each term, `residual`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t", "lhs"];
        header.extend(self.terms.iter().map(|t| t.name));
        header.push("residual");
        w.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![format!("{:.17e}", self.times[i]), format!("{:.17e}", self.lhs[i])];
            row.extend(self.terms.iter().map(|t| format!("{:.17e}", t.values[i])));
            row.push(format!("{:.17e}", self.residual[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct LedgerOptions {
    /// Gauss nodes per step for the `ds` integrals.
    pub ds_nodes: usize,
    /// Evaluate the standard ledger even when a condition is flagged.
    pub force: bool,
}

impl Default for LedgerOptions {
    fn default() -> Self {
        LedgerOptions { ds_nodes: 5, force: false }
    }
}

const STANDARD_TERMS: [&str; 6] =
    ["drift", "ito_correction", "dw", "uncompensated_jumps", "compensated_increments", "jump_compensator"];
const NATURAL_TERMS: [&str; 6] =
    ["dw", "drift", "ito_correction", "uncompensated_jumps", "compensated_linear", "jump_remainder"];
const POWER_TERMS: [&str; 7] =
    ["dw", "drift", "diffusion_p2", "diffusion", "compensated_linear", "uncompensated_jumps", "jump_remainder"];

/// Per-step and per-jump increments of every term.
trait Increments {
    fn names(&self) -> &'static [&'static str];
    fn step(&mut self, j: usize, step: &StepCache, left: &[f64], nodes: &[(f64, Vec<f64>)], out: &mut [f64])
        -> Result<()>;
    fn jump(&mut self, before: &[f64], hbar: &[f64], h: &[f64], out: &mut [f64]);
    fn quadrature_se(&self) -> f64;
}

fn run(
    formula: Formula,
    path: &PathRecord,
    phi: &dyn TestFunction,
    opts: &LedgerOptions,
    inc: &mut dyn Increments,
) -> Result<TermLedger> {
    let m = path.dim();
    if phi.dim() != m {
        return Err(Error::Shape(format!("test function has dimension {}, path has {m}", phi.dim())));
    }
    let names = inc.names();
    let times = path.times().to_vec();
    let n = times.len();
    let rule = GaussRule::new(opts.ds_nodes.max(1));
    let mut cum = vec![vec![0.0; n]; names.len()];
    let mut delta = vec![0.0; names.len()];
    let mut nodes: Vec<(f64, Vec<f64>)> = rule.iter().map(|(_, w)| (w, vec![0.0; m])).collect();
    for (j, step) in path.steps().iter().enumerate() {
        for ((theta, _), node) in rule.iter().zip(nodes.iter_mut()) {
            path.interpolate(j, theta, &mut node.1);
        }
        delta.iter_mut().for_each(|d| *d = 0.0);
        inc.step(j, step, &path.values()[j], &nodes, &mut delta)?;
        let mut jd = vec![0.0; names.len()];
        for jr in path.jumps_at(j + 1) {
            inc.jump(&jr.before, &jr.uncompensated, &jr.compensated, &mut jd);
        }
        for (t, series) in cum.iter_mut().enumerate() {
            let v = series[j] + delta[t] + jd[t];
            if !v.is_finite() {
                return Err(Error::NonFinite { term: names[t].to_string(), time: times[j + 1] });
            }
            series[j + 1] = v;
        }
    }
    let lhs: Vec<f64> = path.values().iter().map(|x| phi.value(x)).collect();
    if let Some(i) = lhs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { term: "lhs".into(), time: times[i] });
    }
    let initial = lhs[0];
    let residual = (0..n).map(|i| lhs[i] - initial - cum.iter().map(|s| s[i]).sum::<f64>()).collect();
    Ok(TermLedger {
        formula,
        times,
        lhs,
        initial,
        terms: names.iter().zip(cum).map(|(&name, values)| TermSeries { name, values }).collect(),
        residual,
        quadrature_se: inc.quadrature_se(),
    })
}

/// `½ Σ_{ik} (g gᵀ)_{ik} D²_{ik}φ` for row-major `g` (`M × R`) and `D²φ`.
fn half_trace(g: &[f64], hess: &[f64], m: usize, r: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..m {
        for k in 0..m {
            let ggt: f64 = (0..r).map(|q| g[i * r + q] * g[k * r + q]).sum();
            s += ggt * hess[i * m + k];
        }
    }
    0.5 * s
}

fn noise(step: &StepCache, m: usize) -> Vec<f64> {
    let r = step.dw.len();
    if step.diffusion.len() != m * r {
        return vec![0.0; m];
    }
    (0..m).map(|i| (0..r).map(|q| step.diffusion[i * r + q] * step.dw[q]).sum()).collect()
}

struct Natural<'a> {
    phi: &'a dyn TestFunction,
    r: usize,
    grad: Vec<f64>,
    hess: Vec<f64>,
    shifted: Vec<f64>,
    var: f64,
}

impl Natural<'_> {
    fn new(phi: &dyn TestFunction, r: usize) -> Natural<'_> {
        let m = phi.dim();
        Natural { phi, r, grad: vec![0.0; m], hess: vec![0.0; m * m], shifted: vec![0.0; m], var: 0.0 }
    }

    fn increment(&mut self, v: &[f64], a: &[f64]) -> f64 {
        for ((s, x), y) in self.shifted.iter_mut().zip(v).zip(a) {
            *s = x + y;
        }
        self.phi.value(&self.shifted) - self.phi.value(v)
    }
}

impl Increments for Natural<'_> {
    fn names(&self) -> &'static [&'static str] {
        &NATURAL_TERMS
    }

    fn step(
        &mut self,
        _j: usize,
        step: &StepCache,
        left: &[f64],
        nodes: &[(f64, Vec<f64>)],
        out: &mut [f64],
    ) -> Result<()> {
        let m = self.phi.dim();
        let dt = step.dt();
        let has_g = step.diffusion.len() == m * self.r && self.r > 0;
        let mut gmax = 0.0f64;
        for (w, x) in nodes {
            self.phi.gradient(x, &mut self.grad);
            out[1] += w * dt * dot(&step.drift, &self.grad);
            out[4] -= w * dt * dot(&step.compensator, &self.grad);
            if has_g {
                self.phi.hessian(x, &mut self.hess);
                out[2] += w * dt * half_trace(&step.diffusion, &self.hess, m, self.r);
            }
            gmax = gmax.max(norm(&self.grad));
        }
        self.var += (dt * gmax * step.compensator_se).powi(2);
        if has_g {
            self.phi.gradient(left, &mut self.grad);
            out[0] += dot(&self.grad, &noise(step, m));
        }
        Ok(())
    }

    fn jump(&mut self, before: &[f64], hbar: &[f64], h: &[f64], out: &mut [f64]) {
        out[3] += self.increment(before, hbar);
        let i = self.increment(before, h);
        self.phi.gradient(before, &mut self.grad);
        let lin = dot(h, &self.grad);
        out[4] += lin;
        out[5] += i - lin;
    }

    fn quadrature_se(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Ledger of the natural form of Itô's formula:
///
/// `φ(X_t) = φ(X_0) + ∫ Dφ·g dw + ∫ (f·Dφ + ½ g gᵀ:D²φ) ds + ∫∫ I^{h̄}φ π
///  + ∫∫ Dφ·h π̃ + ∫∫ J^h φ π`.
///
/// Needs only the standing conditions on the integrands; jump terms use
/// `X_{s-}`, `ds` terms a Gauss rule along the continuous motion of each
/// step with the coefficients the path was built with.
pub fn ledger_natural(
    path: &PathRecord,
    coeffs: &Coefficients,
    phi: &dyn TestFunction,
    opts: &LedgerOptions,
) -> Result<TermLedger> {
    let mut inc = Natural::new(phi, coeffs.n_wiener());
    run(Formula::Natural, path, phi, opts, &mut inc)
}

struct Standard<'a> {
    inner: Natural<'a>,
    path: &'a PathRecord,
    coeffs: &'a Coefficients,
    drivers: &'a Drivers,
    var: f64,
}

impl Increments for Standard<'_> {
    fn names(&self) -> &'static [&'static str] {
        &STANDARD_TERMS
    }

    fn step(
        &mut self,
        j: usize,
        step: &StepCache,
        left: &[f64],
        nodes: &[(f64, Vec<f64>)],
        out: &mut [f64],
    ) -> Result<()> {
        // natural layout: dw, drift, ito, uncompensated, compensated_linear, remainder
        let mut nat = [0.0; 6];
        let saved = self.inner.var;
        self.inner.step(j, step, left, nodes, &mut nat)?;
        self.inner.var = saved;
        out[0] += nat[1];
        out[1] += nat[2];
        out[2] += nat[0];

        let phi = self.inner.phi;
        let m = phi.dim();
        let dt = step.dt();
        let nq = nodes.len();
        let base: Vec<f64> = nodes.iter().map(|(_, x)| phi.value(x)).collect();
        let grads: Vec<Vec<f64>> = nodes
            .iter()
            .map(|(_, x)| {
                let mut g = vec![0.0; m];
                phi.gradient(x, &mut g);
                g
            })
            .collect();
        let mut shifted = vec![0.0; m];
        for k in 0..self.coeffs.n_measures() {
            let layers = self.path.layers_for(k);
            if !self.coeffs.has_compensated(k) || layers == 0 {
                continue;
            }
            let mut failure = None;
            let (vals, se) = self.drivers.measures[k].integrate_vec(layers, 2 * nq, |z, o| {
                let h = match self.path.step_compensated(self.coeffs, k, j, z) {
                    Ok(h) => h,
                    Err(e) => {
                        failure.get_or_insert(e);
                        return;
                    }
                };
                for (q, (_, x)) in nodes.iter().enumerate() {
                    for i in 0..m {
                        shifted[i] = x[i] + h[i];
                    }
                    let inc = phi.value(&shifted) - base[q];
                    o[2 * q] = inc;
                    o[2 * q + 1] = inc - dot(&h, &grads[q]);
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            for (q, (w, _)) in nodes.iter().enumerate() {
                out[4] -= w * dt * vals[2 * q];
                out[5] += w * dt * vals[2 * q + 1];
            }
            self.var += (dt * se).powi(2) * 2.0;
        }
        Ok(())
    }

    fn jump(&mut self, before: &[f64], hbar: &[f64], h: &[f64], out: &mut [f64]) {
        out[3] += self.inner.increment(before, hbar);
        out[4] += self.inner.increment(before, h);
    }

    fn quadrature_se(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Ledger of the standard form of Itô's formula:
///
/// `φ(X_t) = φ(X_0) + ∫ (f·Dφ + ½ g gᵀ:D²φ) ds + ∫ Dφ·g dw + ∫∫ I^{h̄}φ π
///  + ∫∫ I^h φ π̃ + ∫∫ J^h φ μ ds`.
///
/// The last two terms need not exist. If `conditions` flags either
/// integrability condition as divergent, or the integrands overlap, the
/// ledger is refused unless `opts.force` is set.
pub fn ledger_standard(
    path: &PathRecord,
    coeffs: &Coefficients,
    drivers: &Drivers,
    phi: &dyn TestFunction,
    conditions: &ConditionReport,
    opts: &LedgerOptions,
) -> Result<TermLedger> {
    if !opts.force {
        if conditions.orthogonality_violated {
            return Err(Error::Refused {
                term: "uncompensated_jumps".into(),
                reason: format!("jump integrands overlap (max |h̄ h| = {:e})", conditions.orthogonality_max),
            });
        }
        let divergent = conditions.divergent_conditions();
        if let Some(first) = divergent.first() {
            let term = if *first == "condition2" { "jump_compensator" } else { "compensated_increments" };
            return Err(Error::Refused {
                term: term.into(),
                reason: format!("{} suspected divergent", divergent.join(" and ")),
            });
        }
    }
    let mut inc = Standard { inner: Natural::new(phi, coeffs.n_wiener()), path, coeffs, drivers, var: 0.0 };
    run(Formula::Standard, path, phi, opts, &mut inc)
}

struct Power {
    phi: PowerNorm,
    r: usize,
    grad: Vec<f64>,
    shifted: Vec<f64>,
    var: f64,
}

impl Power {
    /// `p|x|^{p−2}`, `|x|^{p−2}` read as 1 when `p = 2`.
    fn weight(&self, x: &[f64]) -> f64 {
        let p = self.phi.p();
        if p == 2.0 {
            2.0
        } else {
            p * norm(x).powf(p - 2.0)
        }
    }
}

impl Increments for Power {
    fn names(&self) -> &'static [&'static str] {
        &POWER_TERMS
    }

    fn step(
        &mut self,
        _j: usize,
        step: &StepCache,
        left: &[f64],
        nodes: &[(f64, Vec<f64>)],
        out: &mut [f64],
    ) -> Result<()> {
        let m = self.phi.dim();
        let r = self.r;
        let dt = step.dt();
        let p = self.phi.p();
        let has_g = step.diffusion.len() == m * r && r > 0;
        let mut gmax = 0.0f64;
        for (w, x) in nodes {
            let wt = self.weight(x);
            out[1] += w * dt * wt * dot(x, &step.drift);
            out[4] -= w * dt * wt * dot(x, &step.compensator);
            gmax = gmax.max(wt * norm(x));
            if has_g {
                let rad = norm(x);
                let mut along = 0.0;
                let mut total = 0.0;
                for q in 0..r {
                    let mut proj = 0.0;
                    for i in 0..m {
                        let gi = step.diffusion[i * r + q];
                        total += gi * gi;
                        if rad > 0.0 {
                            proj += (x[i] / rad) * gi;
                        }
                    }
                    along += proj * proj;
                }
                out[2] += w * dt * 0.5 * wt * (p - 2.0) * along;
                out[3] += w * dt * 0.5 * wt * total;
            }
        }
        self.var += (dt * gmax * step.compensator_se).powi(2);
        if has_g {
            out[0] += self.weight(left) * dot(left, &noise(step, m));
        }
        Ok(())
    }

    fn jump(&mut self, before: &[f64], hbar: &[f64], h: &[f64], out: &mut [f64]) {
        let value = |s: &Self, y: &[f64]| s.phi.value(y);
        let base = value(self, before);
        for ((s, x), y) in self.shifted.iter_mut().zip(before).zip(hbar) {
            *s = x + y;
        }
        out[5] += value(self, &self.shifted) - base;
        for ((s, x), y) in self.shifted.iter_mut().zip(before).zip(h) {
            *s = x + y;
        }
        let i = value(self, &self.shifted) - base;
        self.phi.gradient(before, &mut self.grad);
        let lin = dot(h, &self.grad);
        out[4] += lin;
        out[6] += i - lin;
    }

    fn quadrature_se(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Ledger of the natural form for `φ(x) = |x|^p`, `p ≥ 2`, with the
/// diffusion correction split into the `(p − 2)`-weighted directional part
/// and the isotropic part. Direction factors `x/|x|` are 0 at the origin.
pub fn ledger_power(path: &PathRecord, coeffs: &Coefficients, p: f64, opts: &LedgerOptions) -> Result<TermLedger> {
    let phi = PowerNorm::new(path.dim(), p)?;
    let m = path.dim();
    let mut inc = Power { phi, r: coeffs.n_wiener(), grad: vec![0.0; m], shifted: vec![0.0; m], var: 0.0 };
    run(Formula::Power, path, &phi, opts, &mut inc)
}
