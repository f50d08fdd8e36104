use super::{Field, Grid};
use crate::{Error, Result};

/// Sampled `k_ε(y) = ε^{−d} k(y/ε)` with the bump
/// `k(y) = exp(−1/(1 − |y|²))` on `|y| < 1`, renormalised to unit discrete
/// mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    eps: f64,
    grid: Grid,
    radius_cells: usize,
    /// `(offset in cells per axis, weight)`; weights already include the
    /// cell volume.
    stencil: Vec<(Vec<isize>, f64)>,
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

impl Mollifier {
    pub fn new(grid: &Grid, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::config(format!("mollifier radius must be positive, got {eps}")));
        }
        let dx = grid.dx();
        let radius_cells = (eps / dx).floor() as usize;
        let span = 2 * radius_cells + 1;
        let mut stencil = Vec::new();
        let mut idx = vec![0isize; grid.d];
        for flat in 0..span.pow(grid.d as u32) {
            let mut rest = flat;
            for a in (0..grid.d).rev() {
                idx[a] = (rest % span) as isize - radius_cells as isize;
                rest /= span;
            }
            let r2: f64 = idx.iter().map(|&i| (i as f64 * dx / eps).powi(2)).sum();
            let w = bump(r2);
            if w > 0.0 {
                stencil.push((idx.clone(), w));
            }
        }
        let total: f64 = stencil.iter().map(|(_, w)| w).sum();
        for (_, w) in &mut stencil {
            *w /= total;
        }
        Ok(Mollifier { eps, grid: *grid, radius_cells, stencil })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Largest stencil offset in cells.
    pub fn radius_cells(&self) -> usize {
        self.radius_cells
    }

    /// Discrete mass `Σ_m w_m`.
    pub fn mass(&self) -> f64 {
        self.stencil.iter().map(|(_, w)| w).sum()
    }

    pub fn weights(&self) -> impl Iterator<Item = (&[isize], f64)> {
        self.stencil.iter().map(|(o, w)| (o.as_slice(), *w))
    }

    /// `v^{(ε)} = k_ε * v` on the grid. On zero-padded grids the field must
    /// vanish within `radius + 1` cells of the box faces.
    pub fn mollify(&self, v: &Field) -> Result<Field> {
        if *v.grid() != self.grid {
            return Err(Error::Shape("mollifier and field live on different grids".into()));
        }
        let need = self.radius_cells + 1;
        if v.support_margin() < need {
            return Err(Error::SupportViolation(format!(
                "field support reaches within {} cells of the boundary; mollifier needs {need}",
                v.support_margin()
            )));
        }
        Ok(self.mollify_unchecked(v))
    }

    /// Convolution with values outside a zero-padded box taken as zero.
    pub(crate) fn mollify_unchecked(&self, v: &Field) -> Field {
        let grid = self.grid;
        let m = v.m();
        let mut out = Field::zeros(grid, m);
        for node in 0..grid.n_nodes() {
            let acc = &mut out.values_mut()[node * m..(node + 1) * m];
            'stencil: for (off, w) in &self.stencil {
                let mut src = node;
                for (axis, &o) in off.iter().enumerate() {
                    match grid.shift(src, axis, -o) {
                        Some(s) => src = s,
                        None => continue 'stencil,
                    }
                }
                for (a, x) in acc.iter_mut().zip(v.at(src)) {
                    *a += w * x;
                }
            }
        }
        out
    }
}

/// Second-order central difference `(v(x + e_k) − v(x − e_k)) / 2Δx` with
/// zero extension or wrap-around at the faces. Satisfies discrete summation
/// by parts exactly: `(D_k u, φ) = −(u, D_k φ)`.
pub fn discrete_gradient(v: &Field, axis: usize) -> Result<Field> {
    let grid = *v.grid();
    if axis >= grid.d {
        return Err(Error::Shape(format!("axis {axis} out of range for d = {}", grid.d)));
    }
    let m = v.m();
    let h = 2.0 * grid.dx();
    let mut out = Field::zeros(grid, m);
    let zero = vec![0.0; m];
    for node in 0..grid.n_nodes() {
        let plus = grid.shift(node, axis, 1).map_or(zero.as_slice(), |n| v.at(n));
        let minus = grid.shift(node, axis, -1).map_or(zero.as_slice(), |n| v.at(n));
        for i in 0..m {
            out.values_mut()[node * m + i] = (plus[i] - minus[i]) / h;
        }
    }
    Ok(out)
}

/// `∫ |v|^p dx` by the cell-midpoint rule, `|v|` the Euclidean norm over
/// components.
pub fn lp_norm_pow(v: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("L_p norm needs p >= 1, got {p}")));
    }
    let m = v.m();
    let s: f64 = v
        .values()
        .chunks_exact(m)
        .map(|c| {
            let r2: f64 = c.iter().map(|x| x * x).sum();
            if p == 2.0 {
                r2
            } else {
                r2.sqrt().powf(p)
            }
        })
        .sum();
    Ok(v.grid().cell_volume() * s)
}

/// `|v|_{L_p}`.
pub fn lp_norm(v: &Field, p: f64) -> Result<f64> {
    Ok(lp_norm_pow(v, p)?.powf(1.0 / p))
}

/// `(v, φ) = Σ_i ∫ v^i φ^i dx`; a scalar `φ` pairs with every component
/// and the results are summed.
pub fn weak_pair(v: &Field, phi: &Field) -> Result<f64> {
    Ok(weak_pair_components(v, phi)?.iter().sum())
}

/// `((v^1, φ), …, (v^M, φ))` for scalar `φ`, or componentwise pairs when
/// `φ` has `M` components.
pub fn weak_pair_components(v: &Field, phi: &Field) -> Result<Vec<f64>> {
    if v.grid() != phi.grid() {
        return Err(Error::Shape("weak pairing of fields on different grids".into()));
    }
    let m = v.m();
    if phi.m() != 1 && phi.m() != m {
        return Err(Error::Shape(format!("cannot pair M={m} with M={}", phi.m())));
    }
    let mut out = vec![0.0; m];
    for node in 0..v.grid().n_nodes() {
        let a = v.at(node);
        let b = phi.at(node);
        for i in 0..m {
            out[i] += a[i] * b[if b.len() == 1 { 0 } else { i }];
        }
    }
    let vol = v.grid().cell_volume();
    Ok(out.into_iter().map(|s| s * vol).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpfield::Boundary;

    fn grid(n: usize) -> Grid {
        Grid::new(1, 4.0, n, Boundary::ZeroPadded).unwrap()
    }

    #[test]
    fn indicator_norm_is_exact() {
        let g = grid(64);
        let v = Field::scalar(g, |x| if x[0].abs() < 1.0 { 1.0 } else { 0.0 });
        assert_eq!(lp_norm_pow(&v, 2.0).unwrap(), 2.0);
        assert_eq!(lp_norm(&Field::zeros(g, 2), 3.0).unwrap(), 0.0);
    }

    #[test]
    fn mollifier_has_unit_mass_and_fixes_constants() {
        for eps in [0.4, 0.2, 0.1] {
            let g = Grid::new(2, 1.0, 32, Boundary::Periodic).unwrap();
            let k = Mollifier::new(&g, eps).unwrap();
            assert!((k.mass() - 1.0).abs() < 1e-14);
            let c = Field::constant(g, &[2.5, -1.0]);
            let out = k.mollify(&c).unwrap();
            assert!(out.values().iter().zip(c.values()).all(|(a, b)| (a - b).abs() < 1e-13));
        }
    }

    #[test]
    fn support_violation_detected() {
        let g = grid(32);
        let k = Mollifier::new(&g, 0.8).unwrap();
        let v = Field::scalar(g, |x| if x[0] > 3.0 { 1.0 } else { 0.0 });
        assert!(matches!(k.mollify(&v), Err(Error::SupportViolation(_))));
    }

    #[test]
    fn gradient_of_sine() {
        let mut errs = Vec::new();
        for n in [64, 128] {
            let g = Grid::new(1, 4.0, n, Boundary::Periodic).unwrap();
            let l = 4.0;
            let v = Field::scalar(g, |x| (std::f64::consts::PI * x[0] / l).sin());
            let dv = discrete_gradient(&v, 0).unwrap();
            let mut e = 0.0f64;
            let mut x = [0.0];
            for node in 0..g.n_nodes() {
                g.position(node, &mut x);
                let exact = std::f64::consts::PI / l * (std::f64::consts::PI * x[0] / l).cos();
                e = e.max((dv.at(node)[0] - exact).abs());
            }
            errs.push(e);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 2.0).abs() < 0.1, "{errs:?}");
    }

    #[test]
    fn constant_gradient_is_zero_on_periodic_grid() {
        let g = Grid::new(2, 1.0, 8, Boundary::Periodic).unwrap();
        let d = discrete_gradient(&Field::constant(g, &[3.0]), 1).unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn weak_pair_with_unit_field() {
        let g = grid(32);
        let phi = Field::scalar(g, |x| (-x[0] * x[0]).exp());
        let one = Field::constant(g, &[1.0]);
        let total: f64 = phi.values().iter().sum::<f64>() * g.dx();
        assert!((weak_pair(&one, &phi).unwrap() - total).abs() < 1e-15);
        assert!(weak_pair(&Field::zeros(grid(16), 1), &phi).is_err());
    }
}
