use itolevy::drivers::{sample_wiener, Drivers, JumpStream, MarkMeasure, TimeGrid};
use itolevy::process::{simulate, Coefficients, Scheme};

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn unit_rate_poisson_mean() {
    let c = Coefficients::new(1, 1).with_uncompensated(0, |_, _, _| vec![1.0]);
    let grid = TimeGrid::uniform(1.0, 4).unwrap();
    let xs: Vec<f64> = (0..10_000)
        .map(|s| {
            let d = Drivers::sample(&grid, 1, vec![MarkMeasure::dirac(1.0, 1.0).unwrap()], 1, s).unwrap();
            simulate(&[2.0], &c, &d, Scheme::Euler).unwrap().terminal()[0] - 2.0
        })
        .collect();
    let (m, se) = mean_se(&xs);
    assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
}

#[test]
fn wiener_marginal_variance() {
    let c = Coefficients::new(1, 3).with_diffusion(|_, _| vec![1.0, 0.0, 0.0]);
    let grid = TimeGrid::uniform(1.0, 8).unwrap();
    let xs: Vec<f64> = (0..10_000)
        .map(|s| {
            let d = Drivers::new(sample_wiener(&grid, 3, s).unwrap(), vec![], JumpStream::empty(1.0)).unwrap();
            simulate(&[0.5], &c, &d, Scheme::Euler).unwrap().terminal()[0]
        })
        .collect();
    let (m, _) = mean_se(&xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0);
    assert!((var - 1.0).abs() < 0.05, "{var}");
    assert!((m - 0.5).abs() < 0.04);
}

#[test]
fn compensated_jumps_are_martingale() {
    let c = Coefficients::new(1, 1).with_compensated(0, |t, z, x| vec![z * (1.0 + t) * (0.5 + 0.25 * x[0].cos())]);
    let grid = TimeGrid::uniform(1.0, 32).unwrap();
    let m = MarkMeasure::uniform_gauss(-0.5, 1.5, 2.0, 4).unwrap();
    let xs: Vec<f64> = (0..10_000)
        .map(|s| {
            let d = Drivers::sample(&grid, 1, vec![m.clone()], 1, s).unwrap();
            let p = simulate(&[0.0], &c, &d, Scheme::Euler).unwrap();
            p.terminal()[0] - p.initial()[0]
        })
        .collect();
    let (mean, se) = mean_se(&xs);
    // state dependence makes the Euler compensator only approximately exact
    assert!(mean.abs() < 4.0 * se + 5e-3, "{mean} ± {se}");
}

#[test]
fn piecewise_constant_compensated_poisson_is_exact_martingale() {
    let c = Coefficients::new(1, 1).with_compensated(0, |_, z, _| vec![z]);
    let grid = TimeGrid::uniform(1.0, 16).unwrap();
    let m = MarkMeasure::uniform_gauss(0.0, 1.0, 3.0, 2).unwrap();
    let xs: Vec<f64> = (0..10_000)
        .map(|s| {
            let d = Drivers::sample(&grid, 1, vec![m.clone()], 1, 100 + s).unwrap();
            simulate(&[0.0], &c, &d, Scheme::Euler).unwrap().terminal()[0]
        })
        .collect();
    let (mean, se) = mean_se(&xs);
    assert!(mean.abs() < 4.0 * se, "{mean} ± {se}");
}

#[test]
fn euler_strong_order() {
    let c = Coefficients::new(1, 1)
        .with_drift(|_, x| vec![-x[0]])
        .with_diffusion(|_, x| vec![0.5 + 0.25 * x[0].sin()]);
    let fine = TimeGrid::uniform(1.0, 1024).unwrap();
    let factors = [64usize, 32, 16, 8];
    let mut err = vec![0.0; factors.len()];
    let paths = 256;
    for seed in 0..paths {
        let w = sample_wiener(&fine, 1, seed).unwrap();
        for (e, &f) in err.iter_mut().zip(&factors) {
            let run = |k: usize| {
                let d = Drivers::new(w.coarsen(k).unwrap(), vec![], JumpStream::empty(1.0)).unwrap();
                simulate(&[1.0], &c, &d, Scheme::Euler).unwrap().terminal()[0]
            };
            *e += (run(f) - run(f / 2)).powi(2);
        }
    }
    let rms: Vec<f64> = err.iter().map(|e| (e / paths as f64).sqrt()).collect();
    let n = rms.len() as f64;
    let xs: Vec<f64> = factors.iter().map(|f| (*f as f64).log2()).collect();
    let ys: Vec<f64> = rms.iter().map(|r| r.log2()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((0.35..=0.7).contains(&slope), "order {slope}, rms {rms:?}");
}

#[test]
fn jumps_move_state_by_integrand() {
    let c = Coefficients::new(2, 1)
        .with_drift(|_, x| vec![x[1], -x[0]])
        .with_compensated(0, |_, z, x| vec![z * x[0], 0.0])
        .with_uncompensated(1, |t, z, _| vec![0.0, t + z]);
    let grid = TimeGrid::uniform(2.0, 20).unwrap();
    let ms = vec![MarkMeasure::uniform(0.0, 1.0, 3.0).unwrap(), MarkMeasure::dirac(0.5, 2.0).unwrap()];
    let d = Drivers::sample(&grid, 1, ms, 1, 77).unwrap();
    let p = simulate(&[1.0, 0.0], &c, &d, Scheme::Euler).unwrap();
    assert!(p.jumps().len() > 3);
    for j in p.jumps() {
        let (t, z) = (j.event.time, j.event.mark);
        let expect = if j.event.measure == 0 { [j.before[0] + z * j.before[0], j.before[1]] } else { [j.before[0], j.before[1] + (t + z)] };
        assert_eq!(j.after, expect.to_vec());
        assert_eq!(p.times()[j.index], t);
    }
    for i in 0..p.times().len() {
        if !p.is_jump_time(i) {
            assert_eq!(p.values()[i], p.left_limits()[i]);
        }
    }
    assert_eq!(p.initial(), &[1.0, 0.0]);
}
