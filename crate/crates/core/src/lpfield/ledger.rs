use serde::Serialize;

use super::{discrete_gradient, lp_norm_pow, weak_pair_components, Field, LpCoefficients, LpPath};
use crate::calculus::{Formula, TermLedger, TermSeries};
use crate::drivers::Drivers;
use crate::quadrature::GaussRule;
use crate::{Error, Result};

/// Gauss nodes per step for the `ds` integrals of the field ledgers.
pub const LP_DS_NODES: usize = 3;

const VECTOR_TERMS: [&str; 8] =
    ["dw", "f0", "flux_gradient", "flux_norm", "noise_cross", "noise_norm", "jump_linear", "jump_remainder"];
const SCALAR_TERMS: [&str; 6] = ["dw", "f0", "flux", "noise", "jump_linear", "jump_remainder"];

/// Ledger of `|u_t|^p_{L_p}` along a field path.
#[derive(Debug, Clone, Serialize)]
pub struct LpLedger {
    pub ledger: TermLedger,
    pub p: f64,
    /// `∫∫ p|u|^{p−2} u·D_k f^k dx ds` before integration by parts; equals
    /// `flux_gradient + flux_norm` exactly at `p = 2` and up to the discrete
    /// chain-rule error otherwise.
    pub flux_pre_ibp: Vec<f64>,
    /// Spatial rule used for every integral.
    pub quadrature: &'static str,
}

/// Per-node pieces of the `L_p` formula at a state `u` (components `m`).
struct NodeWeights {
    p: f64,
}

impl NodeWeights {
    /// `p|u|^{p−2}` with `|u|^0 := 1`.
    fn w(&self, u: &[f64]) -> f64 {
        let r2: f64 = u.iter().map(|x| x * x).sum();
        if self.p == 2.0 {
            2.0
        } else {
            self.p * r2.sqrt().powf(self.p - 2.0)
        }
    }

    fn pow(&self, u: &[f64]) -> f64 {
        let r2: f64 = u.iter().map(|x| x * x).sum();
        if self.p == 2.0 {
            r2
        } else {
            r2.sqrt().powf(self.p)
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `e·v` with `e = u/|u|`, 0 at `u = 0`.
fn along(u: &[f64], v: &[f64]) -> f64 {
    let r = dot(u, u).sqrt();
    if r > 0.0 {
        u.iter().zip(v).map(|(x, y)| (x / r) * y).sum()
    } else {
        0.0
    }
}

struct StepFields {
    f0: Field,
    flux: Vec<Option<Field>>,
    div_flux: Field,
    noise: Vec<Field>,
    compensator: Field,
}

fn step_fields(coeffs: &LpCoefficients, t: f64, drivers: &Drivers, layers: &[usize]) -> Result<StepFields> {
    let grid = *coeffs.grid();
    let mut flux = Vec::with_capacity(grid.d);
    let mut div_flux = Field::zeros(grid, coeffs.m());
    for axis in 0..grid.d {
        let f = coeffs.flux(axis, t)?;
        if f.values().iter().any(|v| *v != 0.0) {
            div_flux.axpy(1.0, &discrete_gradient(&f, axis)?)?;
            flux.push(Some(f));
        } else {
            flux.push(None);
        }
    }
    Ok(StepFields {
        f0: coeffs.f0(t)?,
        flux,
        div_flux,
        noise: (0..coeffs.n_wiener()).map(|r| coeffs.noise(r, t)).collect::<Result<_>>()?,
        compensator: coeffs.compensator(t, drivers, layers)?.0,
    })
}

fn interpolate(a: &Field, b: &Field, theta: f64) -> Field {
    let mut out = a.clone();
    for (o, (x, y)) in out.values_mut().iter_mut().zip(a.values().iter().zip(b.values())) {
        *o = x + theta * (y - x);
    }
    out
}

/// Term-by-term ledger of the `L_p` Itô formula for an `ℝ^M`-valued field,
///
/// `|u_t|^p = |ψ|^p + p∫∫|u|^{p−2}u·g^r dx dw^r + ½p∫∫(2|u|^{p−2}u·f⁰
///  − 2|u|^{p−2}D_k u·f^k − (p−2)|u|^{p−4}(u·f^k)D_k|u|²) dx ds
///  + ½p∫∫((p−2)|u|^{p−4}|u·g|² + |u|^{p−2}|g|²) dx ds
///  + p∫∫∫|u_{s−}|^{p−2}u_{s−}·h dx π̃ + ∫∫∫(|u_{s−}+h|^p − |u_{s−}|^p − p|u_{s−}|^{p−2}u_{s−}·h) dx π`,
///
/// with `D_k|u|² := 2u·D_k u` on the grid, `ds` integrals by a Gauss rule
/// along the linear motion of each step and coefficients at the left end.
pub fn ledger_lp(path: &LpPath, coeffs: &LpCoefficients, drivers: &Drivers, p: f64) -> Result<LpLedger> {
    run(path, coeffs, drivers, p, false)
}

/// The scalar (`M = 1`) form of [`ledger_lp`], assembled independently:
/// the flux terms merge into `−p(p−1)|u|^{p−2}f^k D_k u` and the noise
/// terms into `½p(p−1)|u|^{p−2}|g|²`.
pub fn ledger_lp_scalar(path: &LpPath, coeffs: &LpCoefficients, drivers: &Drivers, p: f64) -> Result<LpLedger> {
    if coeffs.m() != 1 {
        return Err(Error::Shape(format!("scalar L_p ledger needs M = 1, got {}", coeffs.m())));
    }
    run(path, coeffs, drivers, p, true)
}

fn run(path: &LpPath, coeffs: &LpCoefficients, drivers: &Drivers, p: f64, scalar: bool) -> Result<LpLedger> {
    if !(p >= 2.0) {
        return Err(Error::Domain(format!("L_p ledger needs p >= 2, got {p}")));
    }
    let grid = *coeffs.grid();
    let m = coeffs.m();
    let names: &[&'static str] = if scalar { &SCALAR_TERMS } else { &VECTOR_TERMS };
    let nw = NodeWeights { p };
    let vol = grid.cell_volume();
    let rule = GaussRule::new(LP_DS_NODES);
    let times = path.times().to_vec();
    let n = times.len();
    let mut cum = vec![vec![0.0; n]; names.len()];
    let mut pre = vec![0.0; n];
    let nodes = grid.n_nodes();

    for j in 0..n - 1 {
        let (t0, t1) = (times[j], times[j + 1]);
        let dt = t1 - t0;
        let sf = step_fields(coeffs, t0, drivers, path.layers())?;
        let mut d = vec![0.0; names.len()];
        let mut dpre = 0.0;

        let u0 = &path.values()[j];
        let dw = path.dw(j);
        for x in 0..nodes {
            let u = u0.at(x);
            let mut s = 0.0;
            for (r, g) in sf.noise.iter().enumerate() {
                s += dot(u, g.at(x)) * dw[r];
            }
            d[0] += vol * nw.w(u) * s;
        }

        let end = path.left_limit(j + 1);
        for (theta, wq) in rule.iter() {
            let uq = interpolate(u0, end, theta);
            let grads: Vec<Option<Field>> = sf
                .flux
                .iter()
                .enumerate()
                .map(|(k, f)| f.as_ref().map(|_| discrete_gradient(&uq, k)).transpose())
                .collect::<Result<_>>()?;
            let c = wq * dt * vol;
            for x in 0..nodes {
                let u = uq.at(x);
                let w = nw.w(u);
                d[1] += c * w * dot(u, sf.f0.at(x));
                dpre += c * w * dot(u, sf.div_flux.at(x));
                let lin = if scalar { 4 } else { 6 };
                d[lin] -= c * w * dot(u, sf.compensator.at(x));
                let mut grad_term = 0.0;
                let mut norm_term = 0.0;
                for (f, du) in sf.flux.iter().zip(&grads) {
                    if let (Some(f), Some(du)) = (f, du) {
                        grad_term += dot(du.at(x), f.at(x));
                        norm_term += along(u, f.at(x)) * along(u, du.at(x));
                    }
                }
                let mut g_along = 0.0;
                let mut g_sq = 0.0;
                for g in &sf.noise {
                    g_along += along(u, g.at(x)).powi(2);
                    g_sq += dot(g.at(x), g.at(x));
                }
                if scalar {
                    d[2] -= c * w * (p - 1.0) * grad_term;
                    d[3] += c * 0.5 * w * (p - 1.0) * g_sq;
                } else {
                    d[2] -= c * w * grad_term;
                    d[3] -= c * w * (p - 2.0) * norm_term;
                    d[4] += c * 0.5 * w * (p - 2.0) * g_along;
                    d[5] += c * 0.5 * w * g_sq;
                }
            }
        }

        for jump in path.jumps_at(j + 1) {
            let (lin, rem) = if scalar { (4, 5) } else { (6, 7) };
            let mut shifted = vec![0.0; m];
            for x in 0..nodes {
                let b = jump.before.at(x);
                let h = jump.h.at(x);
                for i in 0..m {
                    shifted[i] = b[i] + h[i];
                }
                let l = nw.w(b) * dot(b, h);
                d[lin] += vol * l;
                d[rem] += vol * (nw.pow(&shifted) - nw.pow(b) - l);
            }
        }

        for (t, series) in cum.iter_mut().enumerate() {
            let v = series[j] + d[t];
            if !v.is_finite() {
                return Err(Error::NonFinite { term: names[t].to_string(), time: t1 });
            }
            series[j + 1] = v;
        }
        pre[j + 1] = pre[j] + dpre;
    }

    let lhs: Vec<f64> = path.values().iter().map(|u| lp_norm_pow(u, p)).collect::<Result<_>>()?;
    let initial = lhs[0];
    let residual = (0..n).map(|i| lhs[i] - initial - cum.iter().map(|s| s[i]).sum::<f64>()).collect();
    Ok(LpLedger {
        ledger: TermLedger {
            formula: if scalar { Formula::LpScalar } else { Formula::LpVector },
            times,
            lhs,
            initial,
            terms: names.iter().zip(cum).map(|(&name, values)| TermSeries { name, values }).collect(),
            residual,
            quadrature_se: 0.0,
        },
        p,
        flux_pre_ibp: pre,
        quadrature: "cell-midpoint",
    })
}

/// Finiteness diagnostics of a field path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpDiagnostics {
    /// `sup_t |u_t|^p_{L_p}` over grid times.
    pub sup_norm_p: f64,
    /// `∫ |u_t|^p_{W¹_p} dt` by the left-point rule.
    pub w1p_integral: f64,
    /// `∫ |u_t|^p_{L_p} dt` by the left-point rule.
    pub lp_integral: f64,
}

impl LpDiagnostics {
    pub fn is_finite(&self) -> bool {
        self.sup_norm_p.is_finite() && self.w1p_integral.is_finite() && self.lp_integral.is_finite()
    }
}

pub fn lp_diagnostics(path: &LpPath, p: f64) -> Result<LpDiagnostics> {
    let mut sup = 0.0f64;
    let mut w1p = 0.0;
    let mut lp = 0.0;
    let times = path.times();
    for (i, u) in path.values().iter().enumerate() {
        let a = lp_norm_pow(u, p)?;
        sup = sup.max(a);
        if i + 1 < times.len() {
            let dt = times[i + 1] - times[i];
            let mut g = 0.0;
            for axis in 0..u.grid().d {
                g += lp_norm_pow(&discrete_gradient(u, axis)?, p)?;
            }
            lp += dt * a;
            w1p += dt * (a + g);
        }
    }
    Ok(LpDiagnostics { sup_norm_p: sup, w1p_integral: w1p, lp_integral: lp })
}

/// Largest defect of the weak form
/// `(u_t, φ) = (ψ, φ) + ∫ (f⁰, φ) − (f^k, D_k φ) ds + ∫ (g^r, φ) dw^r + ∫∫ (h, φ) π̃`
/// over grid times and the scalar test fields `tests`, relative to the
/// size of the pairings.
pub fn weak_form_defect(path: &LpPath, coeffs: &LpCoefficients, drivers: &Drivers, tests: &[Field]) -> Result<f64> {
    let grid = *coeffs.grid();
    let m = coeffs.m();
    let times = path.times();
    let mut worst = 0.0f64;
    for phi in tests {
        if phi.m() != 1 {
            return Err(Error::Shape("weak-form test fields must be scalar".into()));
        }
        let dphi: Vec<Field> = (0..grid.d).map(|k| discrete_gradient(phi, k)).collect::<Result<_>>()?;
        let mut defect = 0.0f64;
        let mut rhs = weak_pair_components(path.initial(), phi)?;
        let mut scale = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for j in 0..times.len() - 1 {
            let t0 = times[j];
            let dt = times[j + 1] - t0;
            let sf = step_fields(coeffs, t0, drivers, path.layers())?;
            let mut inc = weak_pair_components(&sf.f0, phi)?;
            for (k, f) in sf.flux.iter().enumerate() {
                if let Some(f) = f {
                    let w = weak_pair_components(f, &dphi[k])?;
                    inc.iter_mut().zip(w).for_each(|(a, b)| *a -= b);
                }
            }
            let c = weak_pair_components(&sf.compensator, phi)?;
            for i in 0..m {
                rhs[i] += dt * (inc[i] - c[i]);
            }
            for (r, g) in sf.noise.iter().enumerate() {
                let w = weak_pair_components(g, phi)?;
                for i in 0..m {
                    rhs[i] += w[i] * path.dw(j)[r];
                }
            }
            for jump in path.jumps_at(j + 1) {
                let w = weak_pair_components(&jump.h, phi)?;
                for i in 0..m {
                    rhs[i] += w[i];
                }
            }
            let lhs = weak_pair_components(&path.values()[j + 1], phi)?;
            for i in 0..m {
                scale = scale.max(lhs[i].abs()).max(rhs[i].abs());
                defect = defect.max((lhs[i] - rhs[i]).abs());
            }
        }
        worst = worst.max(if scale > 0.0 { defect / scale } else { defect });
    }
    Ok(worst)
}
