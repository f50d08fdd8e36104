//! Reproducible realizations of the driving noises.
//!
//! A run is driven by a finite truncation `w^1..w^R` of the Wiener sequence
//! and by Poisson random measures whose σ-finite intensities are supplied as
//! disjoint finite-mass layers. All sampling is a pure function of
//! `(config, seed)`; see [`crate::rng`] for the substream contract.

mod grid;
mod jumps;
mod marks;
mod wiener;

pub use grid::TimeGrid;
pub use jumps::{sample_jump_family, sample_jumps, JumpEvent, JumpStream};
pub use marks::{mark_integral, LayerQuadrature, MarkIntegral, MarkLayer, MarkMeasure, MarkSampler, ScalarIntegrator};
pub use wiener::{sample_wiener, WienerBasis};

use crate::{Error, Result};

/// Everything random that a path depends on.
#[derive(Clone)]
pub struct Drivers {
    pub wiener: WienerBasis,
    pub measures: Vec<MarkMeasure>,
    pub jumps: JumpStream,
}

impl Drivers {
    pub fn new(wiener: WienerBasis, measures: Vec<MarkMeasure>, jumps: JumpStream) -> Result<Self> {
        if (wiener.grid().horizon() - jumps.horizon()).abs() > 0.0 {
            return Err(Error::config("Wiener grid and jump stream have different horizons"));
        }
        if let Some(e) = jumps.events().iter().find(|e| e.measure >= measures.len()) {
            return Err(Error::config(format!(
                "jump event refers to measure {} but only {} measures are given",
                e.measure,
                measures.len()
            )));
        }
        Ok(Drivers { wiener, measures, jumps })
    }

    /// Samples Wiener increments on `grid` and a jump family from `measures`
    /// with the given layer truncation, all from one seed.
    pub fn sample(
        grid: &TimeGrid,
        n_wiener: usize,
        measures: Vec<MarkMeasure>,
        n_layers: usize,
        seed: u64,
    ) -> Result<Self> {
        let wiener = sample_wiener(grid, n_wiener, seed)?;
        let jumps = sample_jump_family(&measures, grid.horizon(), n_layers, seed)?;
        Drivers::new(wiener, measures, jumps)
    }

    /// Number of layers included for measure `k` in this realization.
    pub fn layers_for(&self, k: usize) -> usize {
        self.jumps.n_layers().min(self.measures[k].layers().len())
    }
}
