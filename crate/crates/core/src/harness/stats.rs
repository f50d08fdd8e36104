use rayon::prelude::*;
use serde::Serialize;

use crate::rng::{derive_seed, tags};
use crate::Result;

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe { n, mean: f64::NAN, se: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    MeanSe { n, mean, se }
}

pub fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

/// Observed order `q` in `error ≈ C·h^q` by least squares in log–log.
pub fn observed_order(h: &[f64], err: &[f64]) -> f64 {
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    slope(&lx, &ly)
}

/// Seed of replica `r` under a run seed.
pub fn replica_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, &[tags::REPLICA, r as u64])
}

/// Runs `f(r, seed_r)` for `r = 0..replicas` in parallel and returns the
/// results in replica order.
pub fn replicate<T: Send>(seed: u64, replicas: usize, f: impl Fn(usize, u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..replicas).into_par_iter().map(|r| f(r, replica_seed(seed, r))).collect()
}
