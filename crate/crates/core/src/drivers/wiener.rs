use rand::Rng;
use rand_distr::StandardNormal;

use super::TimeGrid;
use crate::rng::{substream, tags};
use crate::{Error, Result};

/// Increments of `R` independent Wiener processes over the steps of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerBasis {
    grid: TimeGrid,
    n_components: usize,
    seed: u64,
    /// Step-major: `increments[step * R + r]`.
    increments: Vec<f64>,
    tail_bound: Option<f64>,
}

/// Samples `R` Wiener components on `grid`. Component `r` is drawn from its
/// own substream, so the first `R` components do not depend on how many
/// more are requested.
pub fn sample_wiener(grid: &TimeGrid, n_components: usize, seed: u64) -> Result<WienerBasis> {
    if n_components == 0 {
        return Err(Error::config("Wiener basis needs at least one component"));
    }
    let n = grid.len() - 1;
    let mut increments = vec![0.0; n * n_components];
    for r in 0..n_components {
        let mut rng = substream(seed, &[tags::WIENER, r as u64]);
        for (step, w) in grid.points().windows(2).enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            increments[step * n_components + r] = z * (w[1] - w[0]).sqrt();
        }
    }
    Ok(WienerBasis { grid: grid.clone(), n_components, seed, increments, tail_bound: None })
}

impl WienerBasis {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    /// The `R` increments over step `step`.
    pub fn increment(&self, step: usize) -> &[f64] {
        &self.increments[step * self.n_components..(step + 1) * self.n_components]
    }

    /// User-declared bound on the ℓ₂ mass of the discarded components; the
    /// library reports it but cannot check it.
    pub fn tail_bound(&self) -> Option<f64> {
        self.tail_bound
    }

    pub fn with_tail_bound(mut self, bound: f64) -> Self {
        self.tail_bound = Some(bound);
        self
    }

    /// Basis on the grid with every `factor` consecutive steps merged. The
    /// coarse path is the same Brownian path sampled less often.
    pub fn coarsen(&self, factor: usize) -> Result<WienerBasis> {
        let n = self.n_steps();
        if factor == 0 || !n.is_multiple_of(factor) {
            return Err(Error::config(format!("cannot coarsen {n} steps by factor {factor}")));
        }
        let pts: Vec<f64> = self.grid.points().iter().step_by(factor).copied().collect();
        let r = self.n_components;
        let mut increments = vec![0.0; (n / factor) * r];
        for (step, chunk) in self.increments.chunks(factor * r).enumerate() {
            for sub in chunk.chunks(r) {
                for c in 0..r {
                    increments[step * r + c] += sub[c];
                }
            }
        }
        let grid = TimeGrid::from_points(pts)?;
        Ok(WienerBasis { grid, n_components: r, seed: self.seed, increments, tail_bound: self.tail_bound })
    }

    /// Keeps only the first `r` components.
    pub fn truncate_components(&self, r: usize) -> Result<WienerBasis> {
        if r == 0 || r > self.n_components {
            return Err(Error::config(format!("cannot keep {r} of {} components", self.n_components)));
        }
        let increments = self
            .increments
            .chunks(self.n_components)
            .flat_map(|c| c[..r].iter().copied())
            .collect();
        Ok(WienerBasis { grid: self.grid.clone(), n_components: r, seed: self.seed, increments, tail_bound: self.tail_bound })
    }

    /// Extends the basis to a finer grid containing every current point.
    /// Values at inserted times are drawn from the Brownian bridge, so the
    /// increments over the original steps are unchanged.
    pub fn refine_to(&self, fine: &TimeGrid) -> Result<WienerBasis> {
        if fine.points() == self.grid.points() {
            return Ok(self.clone());
        }
        let r = self.n_components;
        let fpts = fine.points();
        let mut increments = Vec::with_capacity((fpts.len() - 1) * r);
        let mut fi = 0usize;
        for (step, w) in self.grid.points().windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if fpts.get(fi) != Some(&a) {
                return Err(Error::config(format!("refined grid is missing base point {a}")));
            }
            let start = fi;
            while fi < fpts.len() && fpts[fi] < b {
                fi += 1;
            }
            if fpts.get(fi) != Some(&b) {
                return Err(Error::config(format!("refined grid is missing base point {b}")));
            }
            let inner = &fpts[start..=fi];
            let total = self.increment(step);
            if inner.len() == 2 {
                increments.extend_from_slice(total);
                continue;
            }
            let mut rows = vec![vec![0.0; r]; inner.len() - 1];
            for c in 0..r {
                let mut rng = substream(self.seed, &[tags::BRIDGE, step as u64, c as u64]);
                let mut t_prev = a;
                let mut w_prev = 0.0;
                let w_end = total[c];
                for (k, &s) in inner[1..inner.len() - 1].iter().enumerate() {
                    let mean = w_prev + (s - t_prev) / (b - t_prev) * (w_end - w_prev);
                    let var = (s - t_prev) * (b - s) / (b - t_prev);
                    let z: f64 = rng.sample(StandardNormal);
                    let w_s = mean + var.max(0.0).sqrt() * z;
                    rows[k][c] = w_s - w_prev;
                    t_prev = s;
                    w_prev = w_s;
                }
                rows[inner.len() - 2][c] = w_end - w_prev;
            }
            for row in rows {
                increments.extend(row);
            }
        }
        Ok(WienerBasis { grid: fine.clone(), n_components: r, seed: self.seed, increments, tail_bound: self.tail_bound })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_components() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert!(sample_wiener(&g, 0, 1).is_err());
    }

    #[test]
    fn bit_identical_for_fixed_seed() {
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let a = sample_wiener(&g, 3, 42).unwrap();
        let b = sample_wiener(&g, 3, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_wiener(&g, 3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn component_streams_are_nested() {
        let g = TimeGrid::uniform(1.0, 20).unwrap();
        let a = sample_wiener(&g, 2, 5).unwrap();
        let b = sample_wiener(&g, 4, 5).unwrap();
        assert_eq!(a, b.truncate_components(2).unwrap());
    }

    #[test]
    fn unit_step_moments() {
        // 1e5 draws of component 1 over a unit step, as 1e5 unit steps.
        let n = 100_000;
        let g = TimeGrid::uniform(n as f64, n).unwrap();
        let w = sample_wiener(&g, 1, 2024).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| w.increment(i)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn coarsen_sums_increments() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let w = sample_wiener(&g, 2, 9).unwrap();
        let c = w.coarsen(4).unwrap();
        assert_eq!(c.n_steps(), 2);
        assert_eq!(c.grid().n_steps(), 2);
        let s: f64 = (0..4).map(|i| w.increment(i)[1]).sum();
        assert!((c.increment(0)[1] - s).abs() < 1e-15);
        assert!(w.coarsen(3).is_err());
    }

    #[test]
    fn bridge_preserves_base_increments() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let w = sample_wiener(&g, 2, 11).unwrap();
        let fine = g.merged_with(&[0.1, 0.2, 0.6]).unwrap();
        let wf = w.refine_to(&fine).unwrap();
        assert_eq!(wf.n_steps(), 7);
        // base step 0 = [0, 0.25] now split into [0,0.1],[0.1,0.2],[0.2,0.25]
        for c in 0..2 {
            let s: f64 = (0..3).map(|i| wf.increment(i)[c]).sum();
            assert!((s - w.increment(0)[c]).abs() < 1e-14);
            let s2: f64 = (4..6).map(|i| wf.increment(i)[c]).sum();
            assert!((s2 - w.increment(2)[c]).abs() < 1e-14);
        }
        assert_eq!(wf.increment(3), w.increment(1));
    }
}
