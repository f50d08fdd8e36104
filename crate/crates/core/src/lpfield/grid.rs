use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    /// Values outside the box are zero.
    ZeroPadded,
}

/// Uniform cell-centred grid on the box `[−L, L]^d`.
///
/// Node `j` on an axis sits at the cell midpoint `−L + (j + ½)Δx`; nodes are
/// stored row-major with the last axis fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub half_width: f64,
    pub n_cells: usize,
    pub boundary: Boundary,
}

pub const MIN_CELLS: usize = 8;

impl Grid {
    pub fn new(d: usize, half_width: f64, n_cells: usize, boundary: Boundary) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("grid dimension must be at least 1"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::config(format!("box half-width must be positive, got {half_width}")));
        }
        if n_cells < MIN_CELLS {
            return Err(Error::config(format!("need at least {MIN_CELLS} cells per axis, got {n_cells}")));
        }
        Ok(Grid { d, half_width, n_cells, boundary })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n_cells as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells.pow(self.d as u32)
    }

    /// Coordinate of node index `j` along any axis.
    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_width + (j as f64 + 0.5) * self.dx()
    }

    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.d).rev() {
            out[a] = flat % self.n_cells;
            flat /= self.n_cells;
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n_cells + i)
    }

    pub fn position(&self, flat: usize, out: &mut [f64]) {
        let mut idx = vec![0; self.d];
        self.multi_index(flat, &mut idx);
        for (o, i) in out.iter_mut().zip(idx) {
            *o = self.coordinate(i);
        }
    }

    /// Stride of `axis` in the flat node order.
    pub fn stride(&self, axis: usize) -> usize {
        self.n_cells.pow((self.d - 1 - axis) as u32)
    }

    /// Index of the node `offset` cells away along `axis`, wrapping on
    /// periodic grids and `None` outside a zero-padded box.
    pub fn shift(&self, flat: usize, axis: usize, offset: isize) -> Option<usize> {
        let stride = self.stride(axis);
        let n = self.n_cells as isize;
        let j = ((flat / stride) % self.n_cells) as isize;
        let k = j + offset;
        let k = match self.boundary {
            Boundary::Periodic => k.rem_euclid(n),
            Boundary::ZeroPadded if (0..n).contains(&k) => k,
            Boundary::ZeroPadded => return None,
        };
        Some((flat as isize + (k - j) * stride as isize) as usize)
    }

    /// Distance in cells from `flat` to the nearest box face.
    pub fn distance_to_boundary(&self, flat: usize) -> usize {
        let mut idx = vec![0; self.d];
        self.multi_index(flat, &mut idx);
        idx.iter().map(|&j| j.min(self.n_cells - 1 - j)).min().unwrap()
    }
}

/// Grid values of an `ℝ^M`-valued function; the `M` components of a node
/// are stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    m: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid, m: usize) -> Self {
        Field { grid, m, values: vec![0.0; grid.n_nodes() * m] }
    }

    pub fn constant(grid: Grid, c: &[f64]) -> Self {
        let values = c.iter().copied().cycle().take(grid.n_nodes() * c.len()).collect();
        Field { grid, m: c.len(), values }
    }

    /// Samples `f(x, out)` at every node.
    pub fn from_fn(grid: Grid, m: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let mut field = Field::zeros(grid, m);
        let mut x = vec![0.0; grid.d];
        for node in 0..grid.n_nodes() {
            grid.position(node, &mut x);
            f(&x, &mut field.values[node * m..(node + 1) * m]);
        }
        field
    }

    /// Scalar field from `f(x)`.
    pub fn scalar(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Field::from_fn(grid, 1, |x, out| out[0] = f(x))
    }

    pub fn from_values(grid: Grid, m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() * m {
            return Err(Error::Shape(format!(
                "{} values for {} nodes with {m} components",
                values.len(),
                grid.n_nodes()
            )));
        }
        Ok(Field { grid, m, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.m..(node + 1) * self.m]
    }

    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.m != other.m {
            return Err(Error::Shape(format!(
                "fields differ: {:?}/M={} vs {:?}/M={}",
                self.grid, self.m, other.grid, other.m
            )));
        }
        Ok(())
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Field) -> Result<()> {
        self.check_compatible(other)?;
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field { grid: self.grid, m: self.m, values: self.values.iter().map(|v| a * v).collect() }
    }

    /// First node holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite()).map(|i| i / self.m)
    }

    /// Width in cells of the zero band along the box faces; unbounded on
    /// periodic grids.
    pub fn support_margin(&self) -> usize {
        if self.grid.boundary == Boundary::Periodic {
            return usize::MAX;
        }
        (0..self.grid.n_nodes())
            .filter(|&n| self.at(n).iter().any(|v| *v != 0.0))
            .map(|n| self.grid.distance_to_boundary(n))
            .min()
            .unwrap_or(usize::MAX)
    }

    /// CSV with columns `x1..xd, u1..uM`, one row per node.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.grid.d).map(|i| format!("x{i}")).collect();
        header.extend((1..=self.m).map(|i| format!("u{i}")));
        w.write_record(&header)?;
        let mut x = vec![0.0; self.grid.d];
        for node in 0..self.grid.n_nodes() {
            self.grid.position(node, &mut x);
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            row.extend(self.at(node).iter().map(|v| format!("{v:.17e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Raw little-endian `f64` values in storage order (nodes row-major,
    /// components interleaved), without a header.
    pub fn write_raw<W: Write>(&self, mut writer: W) -> Result<()> {
        for v in &self.values {
            writer.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_raw(grid: Grid, m: usize, bytes: &[u8]) -> Result<Field> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::Parse(format!("{} bytes is not a whole number of f64 values", bytes.len())));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Field::from_values(grid, m, values)
    }
}
