use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;

use super::config::{ExperimentConfig, Scenario};
use super::example1::example1_experiment;
use super::report::{Check, EnsembleStat, OrderRecord, RuleOutcome, VerificationReport};
use super::stats::{mean_se, observed_order, replica_seed, replicate, rms};
use crate::calculus::{
    increment_i, increment_j, ledger_natural, ledger_power, ledger_standard, LedgerOptions, Monomial, PowerNorm,
    Product, Sine, SquaredNorm, TermLedger, TestFunction,
};
use crate::drivers::{sample_jump_family, sample_wiener, Drivers, JumpStream, MarkMeasure, TimeGrid};
use crate::lpfield::{
    discrete_gradient, ledger_lp, ledger_lp_scalar, lp_norm, simulate_lp, weak_pair, Boundary, Field, Grid,
    LpCoefficients, Mollifier,
};
use crate::process::{check_conditions, simulate, Coefficients, ConditionConfig, Scheme};
use crate::rng::{substream, tags};
use crate::{Error, Result};

const INTEGRAL_TOLERANCE: f64 = 1e-6;
const MASS_TOLERANCE: f64 = 1e-14;
const SBP_TOLERANCE: f64 = 1e-12;
const TAYLOR_INFLATION: f64 = 1.05;
const HALF_WIDTH: f64 = 4.0;

/// Runs the scenario of `cfg`. CSV artifacts go under `output` when given.
pub fn run_verification(cfg: &ExperimentConfig, output: Option<&Path>) -> Result<VerificationReport> {
    cfg.validate()?;
    let mut out = Artifacts::new(output, cfg.scenario)?;
    let mut report = VerificationReport::new(cfg.scenario.name(), cfg.seed);
    match cfg.scenario {
        Scenario::Acceptance => {
            for sc in [
                Scenario::PureJumpExact,
                Scenario::LedgerEquivalence,
                Scenario::Example1,
                Scenario::CompensatedPoissonP2,
                Scenario::DiffusionOrder,
                Scenario::LpFormula,
                Scenario::Mollifier,
                Scenario::Operators,
            ] {
                let sub = ExperimentConfig { seed: cfg.seed, ..ExperimentConfig::builtin(sc) };
                let mut sub_out = Artifacts::new(output, sc)?;
                run_one(&sub, &mut report, &mut sub_out)?;
                report.artifacts.extend(sub_out.written);
            }
        }
        _ => run_one(cfg, &mut report, &mut out)?,
    }
    report.artifacts.extend(out.written);
    Ok(report)
}

fn run_one(cfg: &ExperimentConfig, report: &mut VerificationReport, out: &mut Artifacts) -> Result<()> {
    match cfg.scenario {
        Scenario::PureJumpExact => pure_jump_exact(cfg, report, out),
        Scenario::LedgerEquivalence => ledger_equivalence(cfg, report, out),
        Scenario::Example1 => example1(cfg, report, out),
        Scenario::CompensatedPoissonP2 => compensated_poisson(cfg, report, out),
        Scenario::DiffusionOrder => diffusion_order(cfg, report, out),
        Scenario::LpJumpP2 => lp_jump_p2(cfg, report, out),
        Scenario::LpFullP4 => lp_full_p4(cfg, report, out),
        Scenario::LpFormula => {
            lp_jump_p2(cfg, report, out)?;
            lp_full_p4(cfg, report, out)
        }
        Scenario::Mollifier => mollifier(cfg, report, out),
        Scenario::Operators => operators(cfg, report),
        Scenario::Acceptance => unreachable!("expanded by run_verification"),
    }
}

struct Artifacts {
    dir: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(root: Option<&Path>, scenario: Scenario) -> Result<Self> {
        let dir = match root {
            Some(r) => {
                let d = r.join(scenario.name());
                fs::create_dir_all(&d)?;
                Some(d)
            }
            None => None,
        };
        Ok(Artifacts { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(BufWriter<File>) -> Result<()>) -> Result<()> {
        if let Some(dir) = &self.dir {
            let path = dir.join(name);
            f(BufWriter::new(File::create(&path)?))?;
            self.written.push(path);
        }
        Ok(())
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        self.write(name, |w| {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r.iter().map(|v| v.to_string()))?;
            }
            w.flush()?;
            Ok(())
        })
    }
}

fn relative_residual(l: &TermLedger) -> f64 {
    l.max_abs_residual() / (1.0 + l.term_scale())
}

fn order_record(axis: &str, levels: &[f64], errors: &[f64]) -> OrderRecord {
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let finite = errors.iter().all(|e| e.is_finite() && *e > 0.0);
    OrderRecord {
        axis: axis.into(),
        levels: levels.to_vec(),
        errors: errors.to_vec(),
        order: finite.then(|| observed_order(levels, errors)),
        status: if decreasing { "determinate".into() } else { "indeterminate".into() },
    }
}

struct PureJumpCase {
    name: &'static str,
    coeffs: Coefficients,
    measures: Vec<MarkMeasure>,
    x0: Vec<f64>,
    phi: Box<dyn TestFunction>,
}

fn pure_jump_cases() -> Result<Vec<PureJumpCase>> {
    Ok(vec![
        PureJumpCase {
            name: "square",
            coeffs: Coefficients::new(1, 1).with_compensated(0, |t, _, _| vec![if t < 0.5 { 0.3 } else { -0.2 }]),
            measures: vec![MarkMeasure::dirac(1.0, 2.0)?],
            x0: vec![0.3],
            phi: Box::new(SquaredNorm { dim: 1 }),
        },
        PureJumpCase {
            name: "quartic",
            coeffs: Coefficients::new(1, 1).with_uncompensated(0, |t, _, _| vec![if t < 0.5 { 0.5 } else { -0.25 }]),
            measures: vec![MarkMeasure::dirac(1.0, 1.5)?],
            x0: vec![0.7],
            phi: Box::new(Monomial { n: 4 }),
        },
        PureJumpCase {
            name: "cube-norm",
            coeffs: Coefficients::new(2, 1)
                .with_compensated(0, |t, _, _| if t < 0.25 { vec![0.2, -0.1] } else { vec![-0.3, 0.15] })
                .with_uncompensated(1, |t, _, _| if t < 0.75 { vec![-0.1, 0.3] } else { vec![0.4, -0.2] }),
            measures: vec![MarkMeasure::dirac(1.0, 1.0)?, MarkMeasure::dirac(1.0, 2.0)?],
            x0: vec![0.5, -0.4],
            phi: Box::new(PowerNorm::new(2, 3.0)?),
        },
    ])
}

fn pure_jump_exact(cfg: &ExperimentConfig, report: &mut VerificationReport, out: &mut Artifacts) -> Result<()> {
    let grid = TimeGrid::uniform(cfg.horizon, cfg.steps)?;
    let opts = LedgerOptions::default();
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for case in pure_jump_cases()? {
        let res = replicate(cfg.seed, cfg.replicas, |_, seed| {
            let d = Drivers::sample(&grid, 1, case.measures.clone(), cfg.layers, seed)?;
            let p = simulate(&case.x0, &case.coeffs, &d, Scheme::ExactBetweenJumps)?;
            let l = ledger_natural(&p, &case.coeffs, case.phi.as_ref(), &opts)?;
            Ok((relative_residual(&l), p.jumps().len(), l))
        })?;
        let worst = res.iter().map(|r| r.0).fold(0.0, f64::max);
        let jumps: usize = res.iter().map(|r| r.1).sum();
        checks.push(
            Check::at_most(format!("{} max relative residual", case.name), worst, cfg.tolerances.residual)
                .with_detail(format!("{} replicas, {jumps} jumps in total", cfg.replicas)),
        );
        for (r, (v, n, _)) in res.iter().enumerate() {
            rows.push(vec![r as f64, *v, *n as f64]);
        }
        let first = &res[0].2;
        out.write(&format!("ledger_{}.csv", case.name), |w| first.write_csv(w))?;
        report.replica_residuals.push((format!("natural/{}", case.name), res.into_iter().map(|r| r.0).collect()));
    }
    out.table("residuals.csv", &["replica", "relative_residual", "jumps"], &rows)?;
    report.push_rule(RuleOutcome::new("AC1", "pathwise exactness of the natural ledger for pure-jump paths", checks));
    Ok(())
}

fn equivalence_setup(cfg: &ExperimentConfig) -> Result<(Coefficients, MarkMeasure)> {
    let measure = MarkMeasure::uniform(0.0, 1.0, 3.0)?.with_monte_carlo(cfg.mc_samples, cfg.seed);
    let c = Coefficients::new(1, 1)
        .with_drift(|_, x| vec![-0.5 * x[0]])
        .with_diffusion(|_, _| vec![0.4])
        .with_compensated(0, |_, z, x| vec![0.2 * z * (1.0 + 0.1 * x[0].cos())]);
    Ok((c, measure))
}

fn ledger_equivalence(cfg: &ExperimentConfig, report: &mut VerificationReport, out: &mut Artifacts) -> Result<()> {
    let (c, measure) = equivalence_setup(cfg)?;
    let grid = TimeGrid::uniform(cfg.horizon, cfg.steps)?;
    let phi = Monomial { n: 4 };
    let opts = LedgerOptions::default();
    let rows = replicate(cfg.seed, cfg.replicas, |_, seed| {
        let d = Drivers::sample(&grid, 1, vec![measure.clone()], cfg.layers, seed)?;
        let p = simulate(&[0.5], &c, &d, Scheme::Euler)?;
        let rep = check_conditions(&c, &p, &d, Some(&phi), &ConditionConfig::default())?;
        let s = ledger_standard(&p, &c, &d, &phi, &rep, &opts)?;
        let n = ledger_natural(&p, &c, &phi, &opts)?;
        let last = s.times.len() - 1;
        let budget = cfg.tolerances.equivalence + cfg.tolerances.se_multiplier * (s.quadrature_se + n.quadrature_se);
        Ok(vec![s.rhs(last), n.rhs(last), (s.rhs(last) - n.rhs(last)).abs(), budget])
    })?;
    let violations = rows.iter().filter(|r| r[2] > r[3]).count();
    let worst = rows.iter().map(|r| r[2] / r[3]).fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("replicas over budget", violations as f64, 0.0),
        Check::at_most("max gap / budget", worst, 1.0),
    ];
    out.table("equivalence.csv", &["rhs_standard", "rhs_natural", "gap", "budget"], &rows)?;
    report.push_rule(RuleOutcome::new("AC2", "standard and natural ledgers agree where both are valid", checks));
    Ok(())
}

/// `h_s = s^{-1/4}` on a unit Poisson process; `φ = x⁴`.
pub fn example1_coefficients() -> Coefficients {
    Coefficients::new(1, 1).with_compensated(0, |t, _, _| vec![if t > 0.0 { t.powf(-0.25) } else { 0.0 }])
}

fn example1(cfg: &ExperimentConfig, report: &mut VerificationReport, out: &mut Artifacts) -> Result<()> {
    let mut checks = Vec::new();
    let deltas: Vec<f64> = cfg.refinement.delta.iter().map(|d| d * cfg.horizon).collect();
    let table = example1_experiment(&deltas, cfg.horizon, None)?;
    let c3_err = table.rows.iter().map(|r| (r.c3 - (cfg.horizon / r.delta).ln()).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("max |c3 integral - ln(t/δ)|", c3_err, INTEGRAL_TOLERANCE));
    let limit = 2.0 * cfg.horizon.sqrt();
    match table.c1_limit {
        Some(v) => checks.push(Check::at_most("|extrapolated c1 integral - 2√t|", (v - limit).abs(), INTEGRAL_TOLERANCE)),
        None => checks.push(Check::flag("c1 extrapolation", false, "needs at least three truncation levels")),
    }
    out.write("integrals.csv", |w| table.write_csv(w))?;

    let c = example1_coefficients();
    let grid = TimeGrid::uniform(cfg.horizon, cfg.steps)?;
    let measure = MarkMeasure::dirac(1.0, 1.0)?;
    let phi = Monomial { n: 4 };
    let opts = LedgerOptions::default();
    let ccfg = ConditionConfig::default();
    let res = replicate(cfg.seed, cfg.replicas, |_, seed| {
        let d = Drivers::sample(&grid, 1, vec![measure.clone()], 1, seed)?;
        let p = simulate(&[0.0], &c, &d, Scheme::Euler)?;
        let rep = check_conditions(&c, &p, &d, Some(&phi), &ccfg)?;
        let flagged = rep.condition2.status.is_divergent();
        let refused = matches!(
            ledger_standard(&p, &c, &d, &phi, &rep, &opts),
            Err(Error::Refused { ref reason, .. }) if reason.contains("condition2")
        );
        let nat = ledger_natural(&p, &c, &phi, &opts)?;
        Ok((flagged, refused, relative_residual(&nat), nat, p))
    })?;
    let n = res.len() as f64;
    let flagged = res.iter().filter(|r| r.0).count() as f64;
    let refused = res.iter().filter(|r| r.1).count() as f64;
    let worst = res.iter().map(|r| r.2).fold(0.0, f64::max);
    checks.push(Check::at_least("fraction of paths with condition2 flagged", flagged / n, 1.0));
    checks.push(Check::at_least("fraction of standard ledgers refused", refused / n, 1.0));
    checks.push(Check::at_most("natural ledger max relative residual", worst, cfg.tolerances.residual));
    report.conditions.push(format!("example1: condition2 flagged on {flagged}/{n} paths, standard ledger refused on {refused}/{n}"));
    let with_path = example1_experiment(&deltas, cfg.horizon, Some(&res[0].4))?;
    out.write("integrals_along_path.csv", |w| with_path.write_csv(w))?;
    out.write("ledger_natural.csv", |w| res[0].3.write_csv(w))?;
    out.write("path.csv", |w| res[0].4.write_csv(w))?;
    report.replica_residuals.push(("natural/example1".into(), res.iter().map(|r| r.2).collect()));
    report.push_rule(RuleOutcome::new(
        "AC3",
        "divergent compensator integral: standard ledger refused, natural ledger exact",
        checks,
    ));
    Ok(())
}

fn compensated_poisson(cfg: &ExperimentConfig, report: &mut VerificationReport, out: &mut Artifacts) -> Result<()> {
    let c = Coefficients::new(1, 1).with_compensated(0, |_, z, _| vec![z]);
    let grid = TimeGrid::uniform(cfg.horizon, cfg.steps)?;
    let measure = MarkMeasure::dirac(1.0, 1.0)?;
    let opts = LedgerOptions::default();
    let res = replicate(cfg.seed, cfg.replicas, |_, seed| {
        let d = Drivers::sample(&grid, 1, vec![measure.clone()], 1, seed)?;
        let p = simulate(&[0.0], &c, &d, Scheme::Euler)?;
        let l = ledger_power(&p, &c, 2.0, &opts)?;
        let zero = l.term("diffusion_p2").is_some_and(|v| v.iter().all(|x| x.to_bits() == 0));
        Ok((p.terminal()[0].powi(2), zero))
    })?;
    let sq: Vec<f64> = res.iter().map(|r| r.0).collect();
    let stat = mean_se(&sq);
    let expected = cfg.horizon;
    let mut checks = vec![
        Check::at_most("|mean |X_t|² - t| / SE", (stat.mean - expected).abs() / stat.se, cfg.tolerances.se_multiplier)
            .with_detail(format!("mean {} ± {} over {} paths", stat.mean, stat.se, stat.n)),
        Check::flag("(p-2) term bitwise zero on every path", res.iter().all(|r| r.1), ""),
    ];
    let cd = Coefficients::new(2, 2)
        .with_drift(|_, x| vec![-x[0], 0.5 * x[1]])
        .with_diffusion(|_, x| vec![1.0, x[0].sin(), 0.3, 0.7])
        .with_compensated(0, |_, z, _| vec![z, 0.0]);
    let d = Drivers::sample(&grid, 2, vec![MarkMeasure::uniform(-1.0, 1.0, 2.0)?], 1, cfg.seed)?;
    let p = simulate(&[0.5, -0.5], &cd, &d, Scheme::Euler)?;
    let l = ledger_power(&p, &cd, 2.0, &opts)?;
    let zero = l.term("diffusion_p2").is_some_and(|v| v.iter().all(|x| x.to_bits() == 0));
    checks.push(Check::flag("(p-2) term bitwise zero with diffusion", zero, ""));
    report.ensembles.push(EnsembleStat { name: "|X_t|^2".into(), n: stat.n, mean: stat.mean, se: stat.se });
    let rows: Vec<Vec<f64>> = sq.iter().map(|v| vec![*v]).collect();
    out.table("terminal_square.csv", &["x_sq"], &rows)?;
    out.write("ledger_power_diffusion.csv", |w| l.write_csv(w))?;
    report.push_rule(RuleOutcome::new("AC4", "second moment of the compensated Poisson process", checks));
    Ok(())
}

fn diffusion_coefficients() -> Coefficients {
    Coefficients::new(1, 1)
        .with_drift(|_, x| vec![-x[0]])
        .with_diffusion(|_, x| vec![0.5 + 0.25 * x[0].sin()])
}

fn integer_ratios(levels: &[f64], finest: f64) -> Result<Vec<usize>> {
    levels
        .iter()
        .map(|h| {
            let r = h / finest;
            let k = r.round();
            if k < 1.0 || (r - k).abs() > 1e-9 * r {
                Err(Error::config(format!("refinement level {h} is not a multiple of the finest level {finest}")))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

/// RMS terminal residual of the natural ledger per `Δt` level, all levels
/// driven by one Wiener path per replica.
pub fn dt_residuals(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let levels = &cfg.refinement.dt;
    let finest = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let factors = integer_ratios(levels, finest)?;
    let n_fine = (cfg.horizon / finest).round() as usize;
    let fine = TimeGrid::uniform(cfg.horizon, n_fine)?;
    let c = diffusion_coefficients();
    let phi = SquaredNorm { dim: 1 };
    let opts = LedgerOptions::default();
    let per = replicate(cfg.seed, cfg.replicas, |_, seed| {
        let w = sample_wiener(&fine, 1, seed)?;
        factors
            .iter()
            .map(|&f| {
                let d = Drivers::new(w.coarsen(f)?, vec![], JumpStream::empty(cfg.horizon))?;
                let p = simulate(&[1.0], &c, &d, Scheme::Euler)?;
                Ok(ledger_natural(&p, &c, &phi, &opts)?.final_residual())
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok((0..levels.len()).map(|i| rms(&per.iter().map(|r| r[i]).collect::<Vec<_>>())).collect())
}

fn order_checks(rec: &OrderRecord, lo: f64, hi: f64) -> Vec<Check> {
    vec![
        Check::flag("errors strictly decreasing", rec.status == "determinate", format!("{:?}", rec.errors)),
        Check::within(format!("observed order along {}", rec.axis), rec.order.unwrap_or(f64::NAN), lo, hi),
    ]
}

fn diffusion_order(cfg: &ExperimentConfig, report: &mut VerificationReport, out: &mut Artifacts) -> Result<()> {
    let errs = dt_residuals(cfg)?;
    let rec = order_record("dt", &cfg.refinement.dt, &errs);
    let checks = order_checks(&rec, cfg.tolerances.order_min, cfg.tolerances.order_max);
    let rows: Vec<Vec<f64>> = cfg.refinement.dt.iter().zip(&errs).map(|(h, e)| vec![*h, *e]).collect();
    out.table("order_dt.csv", &["dt", "rms_residual"], &rows)?;
    report.orders.push(rec);
    report.push_rule(RuleOutcome::new("AC5", "natural-ledger residual converges under time refinement", checks));
    Ok(())
}

fn bump(x: f64, c: f64, r: f64) -> f64 {
    let y = (x - c) / r;
    if y.abs() < 1.0 {
        (-1.0 / (1.0 - y * y)).exp()
    } else {
        0.0
    }
}

fn lp_grid(n: usize) -> Result<Grid> {
    Grid::new(1, HALF_WIDTH, n, Boundary::ZeroPadded)
}

fn lp_pure_jump(g: Grid) -> LpCoefficients {
    LpCoefficients::new(g, 1).with_jump(0, move |t, z| Field::scalar(g, |x| z * (1.0 + t) * bump(x[0], 0.5, 1.5)))
}

fn lp_full(g: Grid) -> LpCoefficients {
    LpCoefficients::new(g, 1)
        .with_f0(move |t| Field::scalar(g, |x| -0.3 * (1.0 + t) * bump(x[0], 0.0, 2.0)))
        .with_flux(0, move |_| Field::scalar(g, |x| 0.4 * bump(x[0], 0.3, 2.0)))
        .with_noise(move |_| Field::scalar(g, |x| 0.5 * bump(x[0], -0.2, 2.2)))
        .with_jump(0, move |_, z| Field::scalar(g, |x| z * bump(x[0], 0.5, 1.5)))
}

fn lp_jump_p2(cfg: &ExperimentConfig, report: &mut VerificationReport, out: &mut Artifacts) -> Result<()> {
    let g = lp_grid(64)?;
    let c = lp_pure_jump(g);
    let psi = Field::scalar(g, |x| bump(x[0], -0.5, 2.0));
    let tg = TimeGrid::uniform(cfg.horizon, cfg.steps)?;
    let measure = MarkMeasure::uniform_gauss(-1.0, 1.0, 3.0, 3)?;
    let res = replicate(cfg.seed, cfg.replicas, |_, seed| {
        let d = Drivers::sample(&tg, 1, vec![measure.clone()], cfg.layers, seed)?;
        let path = simulate_lp(&psi, &c, &d)?;
        let l = ledger_lp(&path, &c, &d, 2.0)?.ledger;
        let scale = 1.0 + l.term_scale() + l.lhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok((l.max_abs_residual() / scale, l))
    })?;
    let worst = res.iter().map(|r| r.0).fold(0.0, f64::max);
    let mut checks = vec![Check::at_most("p=2 pure-jump max relative residual", worst, cfg.tolerances.residual)];
    out.write("ledger_p2.csv", |w| res[0].1.write_csv(w))?;
    report.replica_residuals.push(("lp/p2".into(), res.into_iter().map(|r| r.0).collect()));

    let cf = lp_full(g);
    let psi = Field::scalar(g, |x| bump(x[0], 0.0, 2.5));
    let tg = TimeGrid::uniform(cfg.horizon, 2 * cfg.steps)?;
    let measure = MarkMeasure::uniform_gauss(0.0, 1.0, 2.0, 2)?;
    let gaps = replicate(cfg.seed ^ 1, cfg.replicas.min(8), |_, seed| {
        let d = Drivers::sample(&tg, 1, vec![measure.clone()], cfg.layers, seed)?;
        let path = simulate_lp(&psi, &cf, &d)?;
        let mut worst = 0.0f64;
        for p in [2.0, 3.0, 4.0] {
            let v = ledger_lp(&path, &cf, &d, p)?.ledger;
            let s = ledger_lp_scalar(&path, &cf, &d, p)?.ledger;
            for i in 0..v.times.len() {
                let (a, b) = (v.rhs(i), s.rhs(i));
                let m = a.abs().max(b.abs());
                if m > 0.0 {
                    worst = worst.max((a - b).abs() / m);
                }
            }
        }
        Ok(worst)
    })?;
    checks.push(Check::at_most(
        "vector vs scalar form relative gap",
        gaps.iter().copied().fold(0.0, f64::max),
        cfg.tolerances.relative,
    ));
    report.push_rule(RuleOutcome::new("AC6", "L_p-norm Itô formula on grid fields", checks));
    Ok(())
}

/// RMS terminal residual of the `p = 4` field ledger per grid level with
/// `Δt = Δx⁴`, sharing Wiener and jump drivers across levels.
pub fn dx_residuals(cfg: &ExperimentConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let cells = &cfg.refinement.cells;
    let dx: Vec<f64> = cells.iter().map(|n| 2.0 * HALF_WIDTH / *n as f64).collect();
    let steps: Vec<f64> = dx.iter().map(|h| (cfg.horizon / h.powi(4)).round().max(1.0)).collect();
    let n_fine = steps.iter().copied().fold(0.0, f64::max);
    let dts: Vec<f64> = steps.iter().map(|s| cfg.horizon / s).collect();
    let factors = integer_ratios(&dts, cfg.horizon / n_fine)?;
    let fine = TimeGrid::uniform(cfg.horizon, n_fine as usize)?;
    let measures = vec![MarkMeasure::dirac(0.5, 2.0)?];
    let setups: Vec<(Grid, LpCoefficients, Field)> = cells
        .iter()
        .map(|&n| {
            let g = lp_grid(n)?;
            Ok((g, lp_full(g), Field::scalar(g, |x| bump(x[0], 0.0, 2.5))))
        })
        .collect::<Result<_>>()?;
    let per = replicate(cfg.seed, cfg.replicas, |_, seed| {
        let w = sample_wiener(&fine, 1, seed)?;
        let jumps = sample_jump_family(&measures, cfg.horizon, cfg.layers, seed)?;
        setups
            .iter()
            .zip(&factors)
            .map(|((_, c, psi), &f)| {
                let d = Drivers::new(w.coarsen(f)?, measures.clone(), jumps.clone())?;
                let path = simulate_lp(psi, c, &d)?;
                Ok(ledger_lp(&path, c, &d, 4.0)?.ledger.final_residual())
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let errs = (0..cells.len()).map(|i| rms(&per.iter().map(|r| r[i]).collect::<Vec<_>>())).collect();
    Ok((dx, errs))
}

fn lp_full_p4(cfg: &ExperimentConfig, report: &mut VerificationReport, out: &mut Artifacts) -> Result<()> {
    let (dx, errs) = dx_residuals(cfg)?;
    let rec = order_record("dx", &dx, &errs);
    let checks = order_checks(&rec, cfg.tolerances.order_min, cfg.tolerances.order_max);
    let rows: Vec<Vec<f64>> = dx.iter().zip(&errs).map(|(h, e)| vec![*h, h.powi(4), *e]).collect();
    out.table("order_dx.csv", &["dx", "dt", "rms_residual"], &rows)?;
    report.orders.push(rec);
    report.push_rule(RuleOutcome::new("AC6", "L_p-norm Itô formula on grid fields", checks));
    Ok(())
}

/// `|v^{(ε)} − v|_{L_p}` for a smooth bump on a fine grid.
pub fn eps_errors(eps: &[f64], p: f64) -> Result<Vec<f64>> {
    let g = lp_grid(2048)?;
    let v = Field::scalar(g, |x| bump(x[0], 0.0, 2.0));
    eps.iter()
        .map(|&e| {
            let mut diff = Mollifier::new(&g, e)?.mollify(&v)?;
            diff.axpy(-1.0, &v)?;
            lp_norm(&diff, p)
        })
        .collect()
}

fn mollifier(cfg: &ExperimentConfig, report: &mut VerificationReport, out: &mut Artifacts) -> Result<()> {
    let mut checks = Vec::new();
    let mut mass_err = 0.0f64;
    for (d, n) in [(1usize, 256usize), (2, 64)] {
        let g = Grid::new(d, HALF_WIDTH, n, Boundary::ZeroPadded)?;
        for &e in &cfg.refinement.eps {
            mass_err = mass_err.max((Mollifier::new(&g, e)?.mass() - 1.0).abs());
        }
    }
    checks.push(Check::at_most("max |kernel mass - 1|", mass_err, MASS_TOLERANCE));
    let mut rows = Vec::new();
    for p in [2.0, 4.0] {
        let errs = eps_errors(&cfg.refinement.eps, p)?;
        if p == 2.0 {
            for w in errs.windows(2).zip(cfg.refinement.eps.windows(2)) {
                let q = (w.0[0] / w.0[1]).ln() / (w.1[0] / w.1[1]).ln();
                checks.push(Check::within(
                    format!("order between eps={} and eps={}", w.1[0], w.1[1]),
                    q,
                    cfg.tolerances.order_min,
                    cfg.tolerances.order_max,
                ));
            }
        }
        rows.extend(cfg.refinement.eps.iter().zip(&errs).map(|(e, v)| vec![p, *e, *v]));
        report.orders.push(order_record(&format!("eps (p={p})"), &cfg.refinement.eps, &errs));
    }
    out.table("order_eps.csv", &["p", "eps", "lp_error"], &rows)?;

    let mut rng = substream(cfg.seed, &[tags::HARNESS, 7]);
    let mut worst = 0.0f64;
    for pair in 0..cfg.replicas {
        let d = 1 + pair % 2;
        let g = Grid::new(d, 1.0, 16, Boundary::ZeroPadded)?;
        let mut make = || {
            Field::from_fn(g, 1, |x, o| {
                o[0] = if x.iter().all(|v| v.abs() < 0.7) { rng.random::<f64>() - 0.5 } else { 0.0 }
            })
        };
        let (u, phi) = (make(), make());
        for axis in 0..d {
            let a = weak_pair(&discrete_gradient(&u, axis)?, &phi)?;
            let b = weak_pair(&u, &discrete_gradient(&phi, axis)?)?;
            worst = worst.max((a + b).abs());
        }
    }
    checks.push(
        Check::at_most("max summation-by-parts defect", worst, SBP_TOLERANCE)
            .with_detail(format!("{} random field pairs", cfg.replicas)),
    );
    report.push_rule(RuleOutcome::new("AC7", "mollifier mass, convergence order and summation by parts", checks));
    Ok(())
}

fn sup_norms(phi: &dyn TestFunction, v: &[f64], a: &[f64], rng: &mut impl Rng) -> (f64, f64) {
    let m = v.len();
    let r = crate::calculus::norm(v) + crate::calculus::norm(a);
    let mut g = vec![0.0; m];
    let mut h = vec![0.0; m * m];
    let mut x = vec![0.0; m];
    let mut sup = (0.0f64, 0.0f64);
    let mut visit = |x: &[f64]| {
        phi.gradient(x, &mut g);
        phi.hessian(x, &mut h);
        sup.0 = sup.0.max(crate::calculus::norm(&g));
        sup.1 = sup.1.max(crate::calculus::norm(&h));
    };
    for k in 0..96 {
        for xi in x.iter_mut() {
            *xi = rng.random::<f64>() * 2.0 - 1.0;
        }
        let len = crate::calculus::norm(&x).max(1e-300);
        let rad = if k < 32 { r } else { r * rng.random::<f64>().powf(1.0 / m as f64) };
        for xi in x.iter_mut() {
            *xi *= rad / len;
        }
        visit(&x);
    }
    for k in 0..=32 {
        let t = k as f64 / 32.0;
        for i in 0..m {
            x[i] = v[i] + t * a[i];
        }
        visit(&x);
    }
    (sup.0, sup.1)
}

fn operators(cfg: &ExperimentConfig, report: &mut VerificationReport) -> Result<()> {
    let tol = cfg.tolerances.relative;
    let chunks = 64usize;
    let per_chunk = cfg.samples.div_ceil(chunks);
    let stats = replicate(cfg.seed, chunks, |chunk, seed| {
        let mut rng = substream(seed, &[tags::HARNESS, 8]);
        let mut s = [0.0f64; 5];
        let n = per_chunk.min(cfg.samples.saturating_sub(chunk * per_chunk));
        for _ in 0..n {
            let m = rng.random_range(1..=3usize);
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = rng.random_range(2.0..6.0);
            let va: Vec<f64> = v.iter().zip(&a).map(|(x, y)| x + y).collect();
            let pw = PowerNorm::new(m, p)?;
            let sine = Sine { dim: m };

            let j = increment_j(&pw, &v, &a);
            s[0] = s[0].max(-j / (1.0 + pw.value(&v) + pw.value(&va)));

            let na = crate::calculus::norm(&a);
            for phi in [&pw as &dyn TestFunction, &sine] {
                let (d1, d2) = sup_norms(phi, &v, &a, &mut rng);
                let i = increment_i(phi, &v, &a).abs();
                let j = increment_j(phi, &v, &a).abs();
                s[1] = s[1].max(i / (TAYLOR_INFLATION * d1 * na + 1e-12));
                s[2] = s[2].max(j / (TAYLOR_INFLATION * d2 * na * na + 1e-12));
            }

            let prod = Product(sine, pw);
            let (ip, iq) = (increment_i(&sine, &v, &a), increment_i(&pw, &v, &a));
            let (fv, gv) = (sine.value(&v), pw.value(&v));
            let lhs = increment_i(&prod, &v, &a);
            let rhs = gv * ip + sine.value(&va) * iq;
            let scale = 1.0 + (gv * ip).abs() + (sine.value(&va) * iq).abs();
            s[3] = s[3].max((lhs - rhs).abs() / scale);
            let (jp, jq) = (increment_j(&sine, &v, &a), increment_j(&pw, &v, &a));
            let lhs = increment_j(&prod, &v, &a);
            let rhs = gv * jp + fv * jq + ip * iq;
            let scale = 1.0 + (gv * jp).abs() + (fv * jq).abs() + (ip * iq).abs();
            s[4] = s[4].max((lhs - rhs).abs() / scale);
        }
        Ok(s)
    })?;
    let worst = |k: usize| stats.iter().map(|s| s[k]).fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("max relative negativity of J|v|^p", worst(0), 1e-12),
        Check::at_most("max |I| / inflated first-order bound", worst(1), 1.0),
        Check::at_most("max |J| / inflated second-order bound", worst(2), 1.0),
        Check::at_most("I product identity relative defect", worst(3), tol),
        Check::at_most("J product identity relative defect", worst(4), tol),
    ];
    let checks = checks.into_iter().map(|c| c.with_detail(format!("{} samples", cfg.samples))).collect();
    report.push_rule(RuleOutcome::new("AC8", "increment operator properties", checks));
    Ok(())
}

fn write_finite(
    out: &mut Artifacts,
    tag: &str,
    c: &Coefficients,
    d: &Drivers,
    x0: &[f64],
    scheme: Scheme,
    phi: &dyn TestFunction,
) -> Result<()> {
    let opts = LedgerOptions::default();
    let p = simulate(x0, c, d, scheme)?;
    out.write(&format!("path{tag}.csv"), |w| p.write_csv(w))?;
    out.write(&format!("jumps{tag}.csv"), |w| d.jumps.write_csv(w))?;
    let l = ledger_natural(&p, c, phi, &opts)?;
    out.write(&format!("ledger_natural{tag}.csv"), |w| l.write_csv(w))?;
    let rep = check_conditions(c, &p, d, Some(phi), &ConditionConfig::default())?;
    match ledger_standard(&p, c, d, phi, &rep, &opts) {
        Ok(l) => out.write(&format!("ledger_standard{tag}.csv"), |w| l.write_csv(w)),
        Err(Error::Refused { term, reason }) => out.write(&format!("ledger_standard{tag}.refused.txt"), |mut w| {
            writeln!(w, "term {term}: {reason}")?;
            Ok(())
        }),
        Err(e) => Err(e),
    }
}

/// Simulates one path of the scenario (replica 0) and writes the path,
/// its jumps and its ledgers under `output`.
pub fn simulate_scenario(cfg: &ExperimentConfig, output: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut out = Artifacts::new(Some(output), cfg.scenario)?;
    let seed = replica_seed(cfg.seed, 0);
    let opts = LedgerOptions::default();
    let grid = TimeGrid::uniform(cfg.horizon, cfg.steps)?;
    match cfg.scenario {
        Scenario::PureJumpExact => {
            for case in pure_jump_cases()? {
                let d = Drivers::sample(&grid, 1, case.measures.clone(), cfg.layers, seed)?;
                let tag = format!("_{}", case.name);
                write_finite(&mut out, &tag, &case.coeffs, &d, &case.x0, Scheme::ExactBetweenJumps, case.phi.as_ref())?;
            }
        }
        Scenario::LedgerEquivalence => {
            let (c, m) = equivalence_setup(cfg)?;
            let d = Drivers::sample(&grid, 1, vec![m], cfg.layers, seed)?;
            write_finite(&mut out, "", &c, &d, &[0.5], Scheme::Euler, &Monomial { n: 4 })?;
        }
        Scenario::Example1 => {
            let d = Drivers::sample(&grid, 1, vec![MarkMeasure::dirac(1.0, 1.0)?], 1, seed)?;
            write_finite(&mut out, "", &example1_coefficients(), &d, &[0.0], Scheme::Euler, &Monomial { n: 4 })?;
        }
        Scenario::CompensatedPoissonP2 => {
            let c = Coefficients::new(1, 1).with_compensated(0, |_, z, _| vec![z]);
            let d = Drivers::sample(&grid, 1, vec![MarkMeasure::dirac(1.0, 1.0)?], 1, seed)?;
            let p = simulate(&[0.0], &c, &d, Scheme::Euler)?;
            out.write("path.csv", |w| p.write_csv(w))?;
            let l = ledger_power(&p, &c, 2.0, &opts)?;
            out.write("ledger_power.csv", |w| l.write_csv(w))?;
        }
        Scenario::DiffusionOrder => {
            let finest = cfg.refinement.dt.iter().copied().fold(f64::INFINITY, f64::min);
            let fine = TimeGrid::uniform(cfg.horizon, (cfg.horizon / finest).round() as usize)?;
            let d = Drivers::new(sample_wiener(&fine, 1, seed)?, vec![], JumpStream::empty(cfg.horizon))?;
            write_finite(&mut out, "", &diffusion_coefficients(), &d, &[1.0], Scheme::Euler, &SquaredNorm { dim: 1 })?;
        }
        Scenario::LpJumpP2 | Scenario::LpFullP4 | Scenario::LpFormula => {
            let (c, psi, measure, p) = if cfg.scenario == Scenario::LpJumpP2 {
                let g = lp_grid(64)?;
                let psi = Field::scalar(g, |x| bump(x[0], -0.5, 2.0));
                (lp_pure_jump(g), psi, MarkMeasure::uniform_gauss(-1.0, 1.0, 3.0, 3)?, 2.0)
            } else {
                let g = lp_grid(cfg.refinement.cells[0])?;
                let psi = Field::scalar(g, |x| bump(x[0], 0.0, 2.5));
                (lp_full(g), psi, MarkMeasure::dirac(0.5, 2.0)?, 4.0)
            };
            let d = Drivers::sample(&grid, 1, vec![measure], cfg.layers, seed)?;
            let path = simulate_lp(&psi, &c, &d)?;
            out.write("field_initial.csv", |w| path.initial().write_csv(w))?;
            out.write("field_terminal.csv", |w| path.terminal().write_csv(w))?;
            out.write("field_terminal.f64", |w| path.terminal().write_raw(w))?;
            out.write("jumps.csv", |w| d.jumps.write_csv(w))?;
            let l = ledger_lp(&path, &c, &d, p)?;
            out.write(&format!("ledger_lp_p{p}.csv"), |w| l.ledger.write_csv(w))?;
        }
        Scenario::Mollifier | Scenario::Operators | Scenario::Acceptance => {
            return Err(Error::config(format!("scenario '{}' has no simulated path", cfg.scenario)));
        }
    }
    Ok(out.written)
}
