use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::OrderRecord;
use super::scenarios::{dt_residuals, dx_residuals, eps_errors};
use super::stats::{replicate, rms, slope};
use crate::drivers::{sample_jump_family, sample_wiener, Drivers, MarkLayer, MarkMeasure, TimeGrid};
use crate::process::{simulate, Coefficients, Scheme};
use crate::{Error, Result};

/// Errors at or below this fraction of the largest error count as a floor.
const FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyAxis {
    Dt,
    Dx,
    Eps,
    R,
    Layers,
}

impl StudyAxis {
    pub fn name(self) -> &'static str {
        match self {
            StudyAxis::Dt => "dt",
            StudyAxis::Dx => "dx",
            StudyAxis::Eps => "eps",
            StudyAxis::R => "r",
            StudyAxis::Layers => "layers",
        }
    }
}

impl fmt::Display for StudyAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [StudyAxis::Dt, StudyAxis::Dx, StudyAxis::Eps, StudyAxis::R, StudyAxis::Layers]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown study axis '{s}' (known: dt, dx, eps, r, layers)")))
    }
}

/// Errors along one refinement axis with the fitted order.
///
/// `dt`, `dx` and `eps` fit `error ≈ C·h^q`; `r` and `layers` fit
/// `error ≈ C·2^{-q·level}` against the finest truncation.
pub fn convergence_study(cfg: &ExperimentConfig, axis: StudyAxis) -> Result<OrderRecord> {
    let (levels, errors, geometric) = match axis {
        StudyAxis::Dt => (cfg.refinement.dt.clone(), dt_residuals(cfg)?, false),
        StudyAxis::Dx => {
            let (dx, e) = dx_residuals(cfg)?;
            (dx, e, false)
        }
        StudyAxis::Eps => (cfg.refinement.eps.clone(), eps_errors(&cfg.refinement.eps, 2.0)?, false),
        StudyAxis::R => {
            let levels = [1usize, 2, 3, 4, 5];
            (levels.iter().map(|v| *v as f64).collect(), wiener_truncation_errors(cfg, &levels, 8)?, true)
        }
        StudyAxis::Layers => {
            let levels = [1usize, 2, 3, 4];
            (levels.iter().map(|v| *v as f64).collect(), layer_truncation_errors(cfg, &levels)?, true)
        }
    };
    if levels.len() < 3 {
        return Err(Error::config(format!("axis {axis} needs at least 3 levels")));
    }
    Ok(fit(axis.name(), levels, errors, geometric))
}

fn fit(axis: &str, levels: Vec<f64>, errors: Vec<f64>, geometric: bool) -> OrderRecord {
    let top = errors.iter().copied().fold(0.0, f64::max);
    let floor_at = errors.iter().position(|e| *e <= FLOOR * top);
    let usable = floor_at.unwrap_or(errors.len());
    let decreasing = errors[..usable].windows(2).all(|w| w[1] < w[0]);
    let order = (usable >= 2 && errors[..usable].iter().all(|e| e.is_finite())).then(|| {
        let ly: Vec<f64> = errors[..usable].iter().map(|e| e.log2()).collect();
        if geometric {
            -slope(&levels[..usable], &ly)
        } else {
            let lx: Vec<f64> = levels[..usable].iter().map(|h| h.log2()).collect();
            slope(&lx, &ly)
        }
    });
    let status = match (floor_at, decreasing) {
        (Some(k), true) => format!("floor from level {}", levels[k]),
        (None, true) => "determinate".into(),
        _ => "indeterminate".into(),
    };
    OrderRecord { axis: axis.into(), levels, errors, order, status }
}

/// RMS of `X_T^{(R)} − X_T^{(R_max)}` for additive noise `Σ_r 2^{-r} w^r`.
fn wiener_truncation_errors(cfg: &ExperimentConfig, levels: &[usize], r_max: usize) -> Result<Vec<f64>> {
    let grid = TimeGrid::uniform(cfg.horizon, cfg.steps)?;
    let coeffs = |r: usize| {
        Coefficients::new(1, r)
            .with_drift(|_, x| vec![-x[0]])
            .with_diffusion(move |_, _| (1..=r).map(|k| 0.5f64.powi(k as i32)).collect())
    };
    let empty = crate::drivers::JumpStream::empty(cfg.horizon);
    let per = replicate(cfg.seed, cfg.replicas, |_, seed| {
        let w = sample_wiener(&grid, r_max, seed)?;
        let run = |r: usize| -> Result<f64> {
            let d = Drivers::new(w.truncate_components(r)?, vec![], empty.clone())?;
            Ok(simulate(&[1.0], &coeffs(r), &d, Scheme::Euler)?.terminal()[0])
        };
        let reference = run(r_max)?;
        levels.iter().map(|&r| Ok(run(r)? - reference)).collect::<Result<Vec<f64>>>()
    })?;
    Ok((0..levels.len()).map(|i| rms(&per.iter().map(|r| r[i]).collect::<Vec<_>>())).collect())
}

/// RMS of the terminal gap to the all-layers path for a three-layer
/// finite-activity measure.
fn layer_truncation_errors(cfg: &ExperimentConfig, levels: &[usize]) -> Result<Vec<f64>> {
    let measure = MarkMeasure::new(vec![
        MarkLayer::dirac(1.0, 1.0)?,
        MarkLayer::dirac(0.5, 0.5)?,
        MarkLayer::dirac(0.25, 0.25)?,
    ]);
    let n_all = measure.layers().len();
    let grid = TimeGrid::uniform(cfg.horizon, cfg.steps)?;
    let c = Coefficients::new(1, 1).with_compensated(0, |_, z, _| vec![z]);
    let measures = vec![measure];
    let per = replicate(cfg.seed, cfg.replicas, |_, seed| {
        let w = sample_wiener(&grid, 1, seed)?;
        let run = |layers: usize| -> Result<f64> {
            let jumps = sample_jump_family(&measures, cfg.horizon, layers, seed)?;
            let d = Drivers::new(w.clone(), measures.clone(), jumps)?;
            Ok(simulate(&[0.0], &c, &d, Scheme::Euler)?.terminal()[0])
        };
        let reference = run(n_all)?;
        levels.iter().map(|&l| Ok(run(l)? - reference)).collect::<Result<Vec<f64>>>()
    })?;
    Ok((0..levels.len()).map(|i| rms(&per.iter().map(|r| r[i]).collect::<Vec<_>>())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Scenario;

    #[test]
    fn layers_hit_floor() {
        let cfg = ExperimentConfig { replicas: 16, steps: 8, ..ExperimentConfig::builtin(Scenario::DiffusionOrder) };
        let rec = convergence_study(&cfg, StudyAxis::Layers).unwrap();
        assert_eq!(rec.errors[2], 0.0);
        assert!(rec.status.starts_with("floor"), "{rec:?}");
    }

    #[test]
    fn wiener_truncation_is_geometric() {
        let cfg = ExperimentConfig { replicas: 64, steps: 8, ..ExperimentConfig::builtin(Scenario::DiffusionOrder) };
        let rec = convergence_study(&cfg, StudyAxis::R).unwrap();
        assert_eq!(rec.status, "determinate");
        assert!((rec.order.unwrap() - 1.0).abs() < 0.2, "{rec:?}");
    }

    #[test]
    fn non_monotone_is_indeterminate() {
        let rec = fit("dt", vec![0.4, 0.2, 0.1], vec![1.0, 2.0, 0.5], false);
        assert_eq!(rec.status, "indeterminate");
    }

    #[test]
    fn eps_axis_order_two() {
        let cfg = ExperimentConfig::builtin(Scenario::Mollifier);
        let rec = convergence_study(&cfg, StudyAxis::Eps).unwrap();
        assert!((rec.order.unwrap() - 2.0).abs() < 0.2);
    }
}
