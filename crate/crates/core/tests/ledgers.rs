use itolevy::calculus::{
    ledger_natural, ledger_power, ledger_standard, LedgerOptions, Linear, Monomial, PowerNorm, SquaredNorm, TermLedger,
};
use itolevy::drivers::{Drivers, JumpStream, MarkMeasure, TimeGrid};
use itolevy::process::{check_conditions, simulate, Coefficients, ConditionConfig, Scheme};
use itolevy::Error;

fn pure_jump(seed: u64) -> (Coefficients, Drivers) {
    let c = Coefficients::new(1, 1).with_compensated(0, |t, _, _| vec![if t < 0.5 { 0.3 } else { -0.2 }]);
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let d = Drivers::sample(&grid, 1, vec![MarkMeasure::dirac(1.0, 2.0).unwrap()], 1, seed).unwrap();
    (c, d)
}

fn exact_enough(l: &TermLedger) -> bool {
    l.max_abs_residual() <= 1e-10 * (1.0 + l.term_scale())
}

#[test]
fn pure_jump_ledgers_close_exactly() {
    for seed in 0..20 {
        let (c, d) = pure_jump(seed);
        let p = simulate(&[0.3], &c, &d, Scheme::ExactBetweenJumps).unwrap();
        let phi = SquaredNorm { dim: 1 };
        let nat = ledger_natural(&p, &c, &phi, &LedgerOptions::default()).unwrap();
        assert!(exact_enough(&nat), "seed {seed}: {}", nat.max_abs_residual());
        let rep = check_conditions(&c, &p, &d, Some(&phi), &ConditionConfig::default()).unwrap();
        let std = ledger_standard(&p, &c, &d, &phi, &rep, &LedgerOptions::default()).unwrap();
        assert!(exact_enough(&std), "seed {seed}: {}", std.max_abs_residual());
        let pow = ledger_power(&p, &c, 2.0, &LedgerOptions::default()).unwrap();
        assert!(exact_enough(&pow));
        assert_eq!(nat.residual[0], 0.0);
    }
}

#[test]
fn standard_and_natural_totals_agree() {
    let measure = MarkMeasure::uniform(0.0, 1.0, 3.0).unwrap().with_monte_carlo(256, 7);
    let c = Coefficients::new(1, 1)
        .with_drift(|_, x| vec![-0.5 * x[0]])
        .with_diffusion(|_, _| vec![0.4])
        .with_compensated(0, |_, z, x| vec![0.2 * z * (1.0 + 0.1 * x[0].cos())]);
    let grid = TimeGrid::uniform(1.0, 128).unwrap();
    let phi = Monomial { n: 4 };
    for seed in 0..5 {
        let d = Drivers::sample(&grid, 1, vec![measure.clone()], 1, seed).unwrap();
        let p = simulate(&[0.5], &c, &d, Scheme::Euler).unwrap();
        let rep = check_conditions(&c, &p, &d, Some(&phi), &ConditionConfig::default()).unwrap();
        let s = ledger_standard(&p, &c, &d, &phi, &rep, &LedgerOptions::default()).unwrap();
        let n = ledger_natural(&p, &c, &phi, &LedgerOptions::default()).unwrap();
        let last = s.times.len() - 1;
        let budget = 1e-9 + 4.0 * (s.quadrature_se + n.quadrature_se);
        assert!((s.rhs(last) - n.rhs(last)).abs() <= budget, "{} vs {}", s.rhs(last), n.rhs(last));
    }
}

#[test]
fn singular_compensated_integrand_refused_by_standard_only() {
    let c = Coefficients::new(1, 1).with_compensated(0, |t, _, _| vec![if t > 0.0 { t.powf(-0.25) } else { 0.0 }]);
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let phi = Monomial { n: 4 };
    let d = Drivers::sample(&grid, 1, vec![MarkMeasure::dirac(1.0, 1.0).unwrap()], 1, 11).unwrap();
    let p = simulate(&[0.0], &c, &d, Scheme::Euler).unwrap();
    let rep = check_conditions(&c, &p, &d, Some(&phi), &ConditionConfig::default()).unwrap();
    match ledger_standard(&p, &c, &d, &phi, &rep, &LedgerOptions::default()) {
        Err(Error::Refused { term, reason }) => {
            assert_eq!(term, "jump_compensator");
            assert!(reason.contains("condition2"));
        }
        other => panic!("expected refusal, got {other:?}"),
    }
    let nat = ledger_natural(&p, &c, &phi, &LedgerOptions::default()).unwrap();
    assert!(exact_enough(&nat), "{}", nat.max_abs_residual());
    let forced = ledger_standard(&p, &c, &d, &phi, &rep, &LedgerOptions { force: true, ..Default::default() });
    assert!(forced.is_ok());
}

#[test]
fn linear_test_function_has_no_remainders() {
    let c = Coefficients::new(2, 2)
        .with_drift(|_, x| vec![-x[0], x[1]])
        .with_diffusion(|_, _| vec![1.0, 0.0, 0.5, 0.5]);
    let grid = TimeGrid::uniform(1.0, 32).unwrap();
    let d = Drivers::sample(&grid, 2, vec![], 0, 2).unwrap();
    let p = simulate(&[1.0, 1.0], &c, &d, Scheme::Euler).unwrap();
    let phi = Linear { coef: vec![2.0, -1.0], offset: 3.0 };
    let l = ledger_natural(&p, &c, &phi, &LedgerOptions::default()).unwrap();
    assert!(l.term("jump_remainder").unwrap().iter().all(|v| *v == 0.0));
    assert!(l.term("ito_correction").unwrap().iter().all(|v| *v == 0.0));
    assert!(l.max_abs_residual() < 1e-12);
}

#[test]
fn power_two_diffusion_split_is_exactly_zero() {
    let c = Coefficients::new(2, 2)
        .with_drift(|_, x| vec![-x[0], 0.5 * x[1]])
        .with_diffusion(|_, x| vec![1.0, x[0].sin(), 0.3, 0.7])
        .with_compensated(0, |_, z, _| vec![z, 0.0]);
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let d = Drivers::sample(&grid, 2, vec![MarkMeasure::uniform(-1.0, 1.0, 2.0).unwrap()], 1, 5).unwrap();
    let p = simulate(&[0.5, -0.5], &c, &d, Scheme::Euler).unwrap();
    let l = ledger_power(&p, &c, 2.0, &LedgerOptions::default()).unwrap();
    assert!(l.term("diffusion_p2").unwrap().iter().all(|v| v.to_bits() == 0));
    assert!(matches!(ledger_power(&p, &c, 1.5, &LedgerOptions::default()), Err(Error::Domain(_))));
    let l4 = ledger_power(&p, &c, 4.0, &LedgerOptions::default()).unwrap();
    assert!(l4.term("diffusion_p2").unwrap().last().unwrap().abs() > 0.0);
}

#[test]
fn zero_path_with_zero_integrands() {
    let c = Coefficients::new(3, 1);
    let grid = TimeGrid::uniform(1.0, 16).unwrap();
    let d = Drivers::new(
        itolevy::drivers::sample_wiener(&grid, 1, 0).unwrap(),
        vec![],
        JumpStream::empty(1.0),
    )
    .unwrap();
    let p = simulate(&[0.0; 3], &c, &d, Scheme::Euler).unwrap();
    for q in [2.0, 2.5, 3.0, 6.0] {
        let l = ledger_power(&p, &c, q, &LedgerOptions::default()).unwrap();
        assert!(l.terms.iter().all(|t| t.values.iter().all(|v| *v == 0.0)));
        assert!(l.lhs.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn power_ledger_matches_natural_for_power_norm() {
    let c = Coefficients::new(2, 1)
        .with_drift(|_, x| vec![-x[1], x[0]])
        .with_diffusion(|_, _| vec![0.3, 0.2])
        .with_compensated(0, |_, z, _| vec![0.1 * z, -0.2 * z]);
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let d = Drivers::sample(&grid, 1, vec![MarkMeasure::uniform(0.0, 1.0, 4.0).unwrap()], 1, 9).unwrap();
    let p = simulate(&[1.0, 0.5], &c, &d, Scheme::Euler).unwrap();
    let phi = PowerNorm::new(2, 3.0).unwrap();
    let n = ledger_natural(&p, &c, &phi, &LedgerOptions::default()).unwrap();
    let w = ledger_power(&p, &c, 3.0, &LedgerOptions::default()).unwrap();
    for i in 0..n.times.len() {
        assert!((n.residual[i] - w.residual[i]).abs() < 1e-12);
    }
    let mut buf = Vec::new();
    w.write_csv(&mut buf).unwrap();
    let head = String::from_utf8(buf).unwrap();
    assert!(head.starts_with("t,lhs,dw,drift,diffusion_p2,diffusion,compensated_linear,uncompensated_jumps,jump_remainder,residual"));
}

#[test]
fn diffusion_residual_shrinks_with_step() {
    let c = Coefficients::new(1, 1)
        .with_drift(|_, x| vec![-x[0]])
        .with_diffusion(|_, x| vec![0.5 + 0.25 * x[0].sin()]);
    let phi = SquaredNorm { dim: 1 };
    let fine = TimeGrid::uniform(1.0, 2048).unwrap();
    let mut rms = Vec::new();
    for factor in [8usize, 4, 2, 1] {
        let mut s = 0.0;
        for seed in 0..64 {
            let w = itolevy::drivers::sample_wiener(&fine, 1, seed).unwrap().coarsen(factor).unwrap();
            let d = Drivers::new(w, vec![], JumpStream::empty(1.0)).unwrap();
            let p = simulate(&[1.0], &c, &d, Scheme::Euler).unwrap();
            let l = ledger_natural(&p, &c, &phi, &LedgerOptions::default()).unwrap();
            s += l.final_residual().powi(2);
        }
        rms.push((s / 64.0).sqrt());
    }
    assert!(rms.windows(2).all(|w| w[1] < w[0]), "{rms:?}");
    let order = (rms[0] / rms[3]).log2() / 3.0;
    assert!(order > 0.35, "{order}");
}
