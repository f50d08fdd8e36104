use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::process::PathRecord;
use crate::quadrature::{integrate_log_panels, GaussRule};
use crate::{Error, Result};

/// Integrals of the three pieces of the `x⁴` jump integrand over `[δ, t]`
/// for the unit Poisson process with `h_s = s^{-1/4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Row {
    pub delta: f64,
    /// `∫ s^{-1/2} ds`, numerical and closed form.
    pub c1: f64,
    pub c1_exact: f64,
    /// `∫ s^{-3/4} ds`.
    pub c2: f64,
    pub c2_exact: f64,
    /// `∫ s^{-1} ds`.
    pub c3: f64,
    pub c3_exact: f64,
    /// `∫ 6|X_{s-}|² s^{-1/2} ds` and `∫ 4X_{s-} s^{-3/4} ds` along a path.
    pub c1_path: Option<f64>,
    pub c2_path: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Report {
    pub t: f64,
    pub rows: Vec<Example1Row>,
    /// Aitken Δ² limits of the last three `c1` and `c2` values.
    pub c1_limit: Option<f64>,
    pub c2_limit: Option<f64>,
    /// `c3(δ_{k+1}) − c3(δ_k)`.
    pub c3_increments: Vec<f64>,
}

impl Example1Report {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["delta", "c1", "c1_exact", "c2", "c2_exact", "c3", "c3_exact", "c1_path", "c2_path"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.delta.to_string(),
                r.c1.to_string(),
                r.c1_exact.to_string(),
                r.c2.to_string(),
                r.c2_exact.to_string(),
                r.c3.to_string(),
                r.c3_exact.to_string(),
                opt(r.c1_path),
                opt(r.c2_path),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Aitken's Δ² extrapolation of the last three terms of a sequence.
pub fn aitken(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let (a, b, c) = (xs[n - 3], xs[n - 2], xs[n - 1]);
    let den = (c - b) - (b - a);
    if den == 0.0 {
        return Some(c);
    }
    Some(c - (c - b).powi(2) / den)
}

pub fn example1_experiment(deltas: &[f64], t: f64, path: Option<&PathRecord>) -> Result<Example1Report> {
    if !(t > 0.0) || deltas.is_empty() {
        return Err(Error::config("need t > 0 and at least one truncation level"));
    }
    if deltas.iter().any(|d| !(*d > 0.0 && *d < t)) || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("truncation levels must be decreasing and lie in (0, t)"));
    }
    if let Some(p) = path {
        if p.dim() != 1 || *p.times().last().unwrap() < t {
            return Err(Error::config("example path must be scalar and cover [0, t]"));
        }
    }
    let rule = GaussRule::new(8);
    let mut x = [0.0];
    let mut along = |f: &dyn Fn(f64, f64) -> f64, delta: f64| {
        path.map(|p| {
            integrate_log_panels(delta, t, &rule, |s| {
                p.state_at(s, &mut x);
                f(s, x[0])
            })
        })
    };
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        rows.push(Example1Row {
            delta,
            c1: integrate_log_panels(delta, t, &rule, |s| s.powf(-0.5)),
            c1_exact: 2.0 * (t.sqrt() - delta.sqrt()),
            c2: integrate_log_panels(delta, t, &rule, |s| s.powf(-0.75)),
            c2_exact: 4.0 * (t.powf(0.25) - delta.powf(0.25)),
            c3: integrate_log_panels(delta, t, &rule, |s| 1.0 / s),
            c3_exact: (t / delta).ln(),
            c1_path: along(&|s, x| 6.0 * x * x * s.powf(-0.5), delta),
            c2_path: along(&|s, x| 4.0 * x * s.powf(-0.75), delta),
        });
    }
    let c1: Vec<f64> = rows.iter().map(|r| r.c1).collect();
    let c2: Vec<f64> = rows.iter().map(|r| r.c2).collect();
    let c3_increments = rows.windows(2).map(|w| w[1].c3 - w[0].c3).collect();
    Ok(Example1Report { t, c1_limit: aitken(&c1), c2_limit: aitken(&c2), rows, c3_increments })
}
