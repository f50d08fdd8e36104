use itolevy::calculus::{increment_i, increment_j, Monomial, PowerNorm, Product, Sine, SquaredNorm, TestFunction};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn vec2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 2)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Samples of `(|Dφ|, |D²φ|_F)` over the ball of radius `r`, densified along
/// the segment from `v` to `v + a`.
fn sampled_sups(phi: &dyn TestFunction, v: &[f64], a: &[f64], r: f64) -> (f64, f64) {
    let mut rng = rand::rngs::StdRng::seed_from_u64(1);
    let m = phi.dim();
    let mut g = vec![0.0; m];
    let mut h = vec![0.0; m * m];
    let mut sup = (0.0f64, 0.0f64);
    let mut visit = |x: &[f64]| {
        phi.gradient(x, &mut g);
        phi.hessian(x, &mut h);
        sup.0 = sup.0.max(norm(&g));
        sup.1 = sup.1.max(norm(&h));
    };
    for _ in 0..2000 {
        let rad = r * rng.random::<f64>().sqrt();
        let ang = std::f64::consts::TAU * rng.random::<f64>();
        visit(&[rad * ang.cos(), rad * ang.sin()]);
    }
    for k in 0..=400 {
        let t = k as f64 / 400.0;
        visit(&[v[0] + t * a[0], v[1] + t * a[1]]);
    }
    sup
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn product_identity(v in vec2(), a in vec2()) {
        let phi = Sine { dim: 2 };
        let psi = SquaredNorm { dim: 2 };
        let prod = Product(phi, psi);
        let va = [v[0] + a[0], v[1] + a[1]];
        let lhs = increment_i(&prod, &v, &a);
        let rhs = psi.value(&v) * increment_i(&phi, &v, &a) + phi.value(&va) * increment_i(&psi, &v, &a);
        let scale = 1.0 + lhs.abs() + (psi.value(&v) * increment_i(&phi, &v, &a)).abs();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
    }

    #[test]
    fn taylor_bounds(v in vec2(), a in vec2(), p in 2.0f64..5.0) {
        let fns: [Box<dyn TestFunction>; 2] = [Box::new(PowerNorm::new(2, p).unwrap()), Box::new(Sine { dim: 2 })];
        for phi in &fns {
            let r = norm(&v) + norm(&a);
            let (d1, d2) = sampled_sups(phi.as_ref(), &v, &a, r);
            let i = increment_i(phi.as_ref(), &v, &a).abs();
            let j = increment_j(phi.as_ref(), &v, &a).abs();
            prop_assert!(i <= 1.05 * d1 * norm(&a) + 1e-12, "I={i} bound={}", d1 * norm(&a));
            prop_assert!(j <= 1.05 * d2 * norm(&a).powi(2) + 1e-12, "J={j} bound={}", d2 * norm(&a).powi(2));
        }
    }

    #[test]
    fn power_remainder_is_nonnegative(v in vec2(), a in vec2(), p in 2.0f64..8.0) {
        let phi = PowerNorm::new(2, p).unwrap();
        let j = increment_j(&phi, &v, &a);
        let scale = phi.value(&v) + phi.value(&[v[0] + a[0], v[1] + a[1]]);
        prop_assert!(j >= -1e-12 * (1.0 + scale));
    }

    #[test]
    fn quadratic_remainder_is_square(v in vec2(), a in vec2()) {
        let j = increment_j(&SquaredNorm { dim: 2 }, &v, &a);
        prop_assert!((j - (a[0] * a[0] + a[1] * a[1])).abs() <= 1e-12 * (1.0 + norm(&v) * norm(&a) + j));
    }

    #[test]
    fn hessians_are_symmetric(v in vec2(), p in 2.0f64..6.0) {
        let mut h = [0.0; 4];
        PowerNorm::new(2, p).unwrap().hessian(&v, &mut h);
        prop_assert!((h[1] - h[2]).abs() <= 1e-10 * (1.0 + h[0].abs() + h[3].abs()));
    }
}

#[test]
fn quartic_increment_at_unit_time() {
    assert_eq!(increment_i(&Monomial { n: 4 }, &[0.0], &[1.0]), 1.0);
}
