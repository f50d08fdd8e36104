use itolevy::drivers::{sample_wiener, Drivers, JumpStream, MarkMeasure, TimeGrid};
use itolevy::lpfield::{
    discrete_gradient, ledger_lp, ledger_lp_scalar, lp_diagnostics, lp_norm, simulate_lp, weak_form_defect, weak_pair,
    Boundary, Field, Grid, LpCoefficients, Mollifier,
};
use rand::{Rng, SeedableRng};

fn bump(x: f64, c: f64, r: f64) -> f64 {
    let y = (x - c) / r;
    if y.abs() < 1.0 {
        (-1.0 / (1.0 - y * y)).exp()
    } else {
        0.0
    }
}

fn grid(n: usize) -> Grid {
    Grid::new(1, 4.0, n, Boundary::ZeroPadded).unwrap()
}

fn pure_jump(g: Grid) -> LpCoefficients {
    LpCoefficients::new(g, 1).with_jump(0, move |t, z| Field::scalar(g, |x| z * (1.0 + t) * bump(x[0], 0.5, 1.5)))
}

#[test]
fn pure_jump_p2_ledger_is_exact() {
    let g = grid(64);
    let c = pure_jump(g);
    let psi = Field::scalar(g, |x| bump(x[0], -0.5, 2.0));
    let tg = TimeGrid::uniform(1.0, 32).unwrap();
    for seed in 0..10 {
        let d = Drivers::sample(&tg, 1, vec![MarkMeasure::uniform_gauss(-1.0, 1.0, 3.0, 3).unwrap()], 1, seed).unwrap();
        let path = simulate_lp(&psi, &c, &d).unwrap();
        let l = ledger_lp(&path, &c, &d, 2.0).unwrap();
        let scale = 1.0 + l.ledger.term_scale() + l.ledger.lhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(l.ledger.max_abs_residual() <= 1e-9 * scale, "{}", l.ledger.max_abs_residual());
        assert_eq!(l.ledger.residual[0], 0.0);
    }
}

fn full(g: Grid) -> LpCoefficients {
    LpCoefficients::new(g, 1)
        .with_f0(move |t| Field::scalar(g, |x| -0.3 * (1.0 + t) * bump(x[0], 0.0, 2.0)))
        .with_flux(0, move |_| Field::scalar(g, |x| 0.4 * bump(x[0], 0.3, 2.0)))
        .with_noise(move |_| Field::scalar(g, |x| 0.5 * bump(x[0], -0.2, 2.2)))
        .with_jump(0, move |_, z| Field::scalar(g, |x| z * bump(x[0], 0.5, 1.5)))
}

#[test]
fn scalar_and_vector_forms_agree() {
    let g = grid(64);
    let c = full(g);
    let psi = Field::scalar(g, |x| bump(x[0], 0.0, 2.5));
    let tg = TimeGrid::uniform(0.5, 64).unwrap();
    let d = Drivers::sample(&tg, 1, vec![MarkMeasure::uniform_gauss(0.0, 1.0, 2.0, 2).unwrap()], 1, 4).unwrap();
    let path = simulate_lp(&psi, &c, &d).unwrap();
    for p in [2.0, 3.0, 4.0] {
        let v = ledger_lp(&path, &c, &d, p).unwrap().ledger;
        let s = ledger_lp_scalar(&path, &c, &d, p).unwrap().ledger;
        for i in 0..v.times.len() {
            let (a, b) = (v.rhs(i), s.rhs(i));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300), "p={p} i={i}: {a} vs {b}");
        }
    }
}

#[test]
fn flux_terms_match_divergence_form_at_p2() {
    let g = grid(64);
    let c = full(g);
    let k = Mollifier::new(&g, 0.3).unwrap();
    let psi = k.mollify(&Field::scalar(g, |x| bump(x[0], 0.0, 2.5))).unwrap();
    let cm = c.mollified(&k);
    let tg = TimeGrid::uniform(0.25, 32).unwrap();
    let d = Drivers::sample(&tg, 1, vec![MarkMeasure::dirac(0.7, 2.0).unwrap()], 1, 6).unwrap();
    let path = simulate_lp(&psi, &cm, &d).unwrap();
    let l = ledger_lp(&path, &cm, &d, 2.0).unwrap();
    let fg = l.ledger.term("flux_gradient").unwrap();
    let fnorm = l.ledger.term("flux_norm").unwrap();
    for i in 0..fg.len() {
        let direct = fg[i] + fnorm[i];
        assert!((direct - l.flux_pre_ibp[i]).abs() <= 1e-10 * (1.0 + direct.abs()));
    }
}

#[test]
fn summation_by_parts_on_random_pairs() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    for d in [1usize, 2] {
        let g = Grid::new(d, 1.0, 16, Boundary::ZeroPadded).unwrap();
        for _ in 0..50 {
            let mut make = || {
                Field::from_fn(g, 1, |x, o| {
                    o[0] = if x.iter().all(|v| v.abs() < 0.7) { rng.random::<f64>() - 0.5 } else { 0.0 }
                })
            };
            let (u, phi) = (make(), make());
            for axis in 0..d {
                let a = weak_pair(&discrete_gradient(&u, axis).unwrap(), &phi).unwrap();
                let b = weak_pair(&u, &discrete_gradient(&phi, axis).unwrap()).unwrap();
                assert!((a + b).abs() <= 1e-12, "{a} {b}");
            }
        }
    }
}

#[test]
fn mollification_error_is_second_order() {
    let g = grid(2048);
    let v = Field::scalar(g, |x| bump(x[0], 0.0, 2.0));
    let mut errs = Vec::new();
    for eps in [0.4, 0.2, 0.1] {
        let k = Mollifier::new(&g, eps).unwrap();
        let mut diff = k.mollify(&v).unwrap();
        diff.axpy(-1.0, &v).unwrap();
        errs.push(lp_norm(&diff, 2.0).unwrap());
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..=2.2).contains(&order), "{errs:?}");
    }
}

#[test]
fn indicator_mollification_stays_in_unit_interval() {
    let g = grid(256);
    let v = Field::scalar(g, |x| if x[0] < 0.0 && x[0] > -3.0 { 1.0 } else { 0.0 });
    let k = Mollifier::new(&g, 0.25).unwrap();
    let out = k.mollify(&v).unwrap();
    let mut x = [0.0];
    for node in 0..g.n_nodes() {
        let y = out.at(node)[0];
        assert!((-1e-15..=1.0 + 1e-15).contains(&y));
        g.position(node, &mut x);
        if (x[0] + 0.0).abs() > 0.25 + g.dx() && (x[0] + 3.0).abs() > 0.25 + g.dx() {
            assert!((y - v.at(node)[0]).abs() < 1e-14);
        }
    }
}

#[test]
fn trivial_coefficients_keep_initial_field() {
    let g = Grid::new(1, 4.0, 32, Boundary::Periodic).unwrap();
    let psi = Field::scalar(g, |x| x[0].sin());
    let tg = TimeGrid::uniform(1.0, 10).unwrap();
    let d = Drivers::sample(&tg, 1, vec![], 0, 1).unwrap();
    let zero = LpCoefficients::new(g, 1);
    let path = simulate_lp(&psi, &zero, &d).unwrap();
    assert!(path.values().iter().all(|u| u == &psi));
    let constant_flux = LpCoefficients::new(g, 1).with_flux(0, move |_| Field::constant(g, &[2.0]));
    let path = simulate_lp(&psi, &constant_flux, &d).unwrap();
    assert!(path.values().iter().all(|u| u == &psi));
}

#[test]
fn additive_noise_variance() {
    let g = Grid::new(1, 4.0, 16, Boundary::ZeroPadded).unwrap();
    let gamma = Field::scalar(g, |x| bump(x[0], 0.0, 3.0));
    let gm = gamma.clone();
    let c = LpCoefficients::new(g, 1).with_noise(move |_| gm.clone());
    let psi = Field::zeros(g, 1);
    let tg = TimeGrid::uniform(1.0, 4).unwrap();
    let n = 10_000;
    let mut s2 = vec![0.0; g.n_nodes()];
    for seed in 0..n {
        let d = Drivers::new(sample_wiener(&tg, 1, seed).unwrap(), vec![], JumpStream::empty(1.0)).unwrap();
        let path = simulate_lp(&psi, &c, &d).unwrap();
        for (a, v) in s2.iter_mut().zip(path.terminal().values()) {
            *a += v * v;
        }
    }
    for (node, s) in s2.iter().enumerate() {
        let expect = gamma.at(node)[0].powi(2);
        let var = s / n as f64;
        // relative standard error of a chi-square mean is sqrt(2/n)
        assert!((var - expect).abs() <= 4.0 * (2.0 / n as f64).sqrt() * expect + 1e-300, "{node}: {var} vs {expect}");
    }
}

#[test]
fn weak_form_holds_to_rounding() {
    let g = grid(64);
    let c = full(g);
    let psi = Field::scalar(g, |x| bump(x[0], 0.0, 2.5));
    let tg = TimeGrid::uniform(0.5, 32).unwrap();
    let d = Drivers::sample(&tg, 1, vec![MarkMeasure::dirac(0.5, 3.0).unwrap()], 1, 8).unwrap();
    let path = simulate_lp(&psi, &c, &d).unwrap();
    let tests: Vec<Field> = [-1.0, 0.0, 1.0].iter().map(|&c0| Field::scalar(g, move |x| bump(x[0], c0, 1.0))).collect();
    assert!(weak_form_defect(&path, &c, &d, &tests).unwrap() < 1e-12);
    let diag = lp_diagnostics(&path, 4.0).unwrap();
    assert!(diag.is_finite() && diag.sup_norm_p > 0.0);
}

#[test]
fn mollified_ledgers_settle_as_eps_shrinks() {
    let g = grid(256);
    let c = full(g);
    let psi = Field::scalar(g, |x| if x[0].abs() < 1.0 { 1.0 } else { 0.0 });
    let tg = TimeGrid::uniform(0.25, 16).unwrap();
    let d = Drivers::sample(&tg, 1, vec![MarkMeasure::dirac(0.5, 3.0).unwrap()], 1, 9).unwrap();
    let mut finals = Vec::new();
    for eps in [0.4, 0.2, 0.1] {
        let k = Mollifier::new(&g, eps).unwrap();
        let cm = c.mollified(&k);
        let path = simulate_lp(&k.mollify(&psi).unwrap(), &cm, &d).unwrap();
        let l = ledger_lp(&path, &cm, &d, 2.0).unwrap().ledger;
        finals.push(l.terms.iter().map(|t| *t.values.last().unwrap()).collect::<Vec<_>>());
    }
    let gap = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
    assert!(gap(&finals[1], &finals[2]) < gap(&finals[0], &finals[1]));
}
