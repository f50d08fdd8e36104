use crate::{Error, Result};

/// Time discretization of `[0, T]`.
///
/// `n_steps` is the count of the base (uniform or user) grid; grids produced
/// by [`TimeGrid::merged_with`] keep the base count and only gain points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config(format!("horizon must be positive and finite, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::config("time grid needs at least one step"));
        }
        let mut points: Vec<f64> = (0..=n_steps).map(|i| horizon * i as f64 / n_steps as f64).collect();
        points[n_steps] = horizon;
        Ok(TimeGrid { horizon, n_steps, points })
    }

    /// Grid from explicit points. They must start at 0 and be strictly
    /// increasing; a repeated point is a zero-length step and is rejected.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::config("time grid needs at least two points"));
        }
        if points[0] != 0.0 {
            return Err(Error::config("time grid must start at 0"));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::config(format!(
                    "zero-length or decreasing step at index {i}: {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        let horizon = *points.last().unwrap();
        let n_steps = points.len() - 1;
        Ok(TimeGrid { horizon, n_steps, points })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_spacing(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Inserts the given times (typically jump times in `(0, T]`). Times equal
    /// to an existing point are not duplicated.
    pub fn merged_with(&self, extra: &[f64]) -> Result<TimeGrid> {
        let mut extra: Vec<f64> = extra.to_vec();
        if let Some(bad) = extra.iter().find(|&&t| !(t > 0.0 && t <= self.horizon)) {
            return Err(Error::config(format!("inserted time {bad} outside (0, {}]", self.horizon)));
        }
        extra.sort_by(f64::total_cmp);
        let mut points = Vec::with_capacity(self.points.len() + extra.len());
        let (mut i, mut j) = (0, 0);
        while i < self.points.len() || j < extra.len() {
            let next = match (self.points.get(i), extra.get(j)) {
                (Some(&a), Some(&b)) if a <= b => {
                    i += 1;
                    a
                }
                (Some(_), Some(&b)) | (None, Some(&b)) => {
                    j += 1;
                    b
                }
                (Some(&a), None) => {
                    i += 1;
                    a
                }
                (None, None) => unreachable!(),
            };
            if points.last() != Some(&next) {
                points.push(next);
            }
        }
        Ok(TimeGrid { horizon: self.horizon, n_steps: self.n_steps, points })
    }

    /// Index of `t` among the grid points, if present.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.points.binary_search_by(|p| p.total_cmp(&t)).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_endpoints() {
        let g = TimeGrid::uniform(2.0, 7).unwrap();
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(*g.points().last().unwrap(), 2.0);
        assert_eq!(g.len(), 8);
    }

    #[test]
    fn zero_length_step_rejected() {
        assert!(TimeGrid::from_points(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::from_points(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::uniform(0.0, 3).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
    }

    #[test]
    fn merge_keeps_spacing_bound() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let m = g.merged_with(&[0.35, 0.5, 0.999, 1.0]).unwrap();
        assert_eq!(m.len(), 11 + 2);
        assert!(m.max_spacing() <= 0.1 + 1e-15);
        assert!(m.points().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(m.index_of(0.35), Some(4));
        assert!(g.merged_with(&[0.0]).is_err());
    }
}
