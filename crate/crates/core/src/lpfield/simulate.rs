use std::sync::Arc;

use super::{discrete_gradient, Field, Grid, Mollifier};
use crate::drivers::{Drivers, JumpEvent};
use crate::{Error, Result};

/// `t ↦` field.
pub type FieldFn = Arc<dyn Fn(f64) -> Field + Send + Sync>;
/// `(t, z) ↦` field.
pub type JumpFieldFn = Arc<dyn Fn(f64, f64) -> Field + Send + Sync>;

/// Coefficients of the field equation
/// `du = (f⁰ + Σ_k D_k f^k) dt + g^r dw^r + ∫ h^k(z) π̃^k(dz, dt)`,
/// given as functions of time (and mark) only.
#[derive(Clone)]
pub struct LpCoefficients {
    grid: Grid,
    m: usize,
    f0: Option<FieldFn>,
    flux: Vec<Option<FieldFn>>,
    noise: Vec<FieldFn>,
    jumps: Vec<Option<JumpFieldFn>>,
}

impl std::fmt::Debug for LpCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LpCoefficients")
            .field("grid", &self.grid)
            .field("m", &self.m)
            .field("f0", &self.f0.is_some())
            .field("flux", &self.flux.iter().filter(|f| f.is_some()).count())
            .field("noise", &self.noise.len())
            .field("jumps", &self.jumps.len())
            .finish()
    }
}

impl LpCoefficients {
    pub fn new(grid: Grid, m: usize) -> Self {
        LpCoefficients { grid, m, f0: None, flux: vec![None; grid.d], noise: Vec::new(), jumps: Vec::new() }
    }

    pub fn with_f0(mut self, f: impl Fn(f64) -> Field + Send + Sync + 'static) -> Self {
        self.f0 = Some(Arc::new(f));
        self
    }

    /// `f^k` for spatial axis `k`.
    pub fn with_flux(mut self, axis: usize, f: impl Fn(f64) -> Field + Send + Sync + 'static) -> Self {
        self.flux[axis] = Some(Arc::new(f));
        self
    }

    /// Appends `g^r` for the next Wiener component.
    pub fn with_noise(mut self, g: impl Fn(f64) -> Field + Send + Sync + 'static) -> Self {
        self.noise.push(Arc::new(g));
        self
    }

    /// `h^k(t, z)` against the compensated `k`-th Poisson random measure.
    pub fn with_jump(mut self, k: usize, h: impl Fn(f64, f64) -> Field + Send + Sync + 'static) -> Self {
        if self.jumps.len() <= k {
            self.jumps.resize(k + 1, None);
        }
        self.jumps[k] = Some(Arc::new(h));
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_wiener(&self) -> usize {
        self.noise.len()
    }

    pub fn n_measures(&self) -> usize {
        self.jumps.len()
    }

    pub fn has_flux(&self) -> bool {
        self.flux.iter().any(Option::is_some)
    }

    fn checked(&self, f: Field, what: &str) -> Result<Field> {
        if *f.grid() != self.grid || f.m() != self.m {
            return Err(Error::Shape(format!("{what} returned a field of the wrong shape")));
        }
        Ok(f)
    }

    pub fn f0(&self, t: f64) -> Result<Field> {
        match &self.f0 {
            Some(f) => self.checked(f(t), "f0"),
            None => Ok(Field::zeros(self.grid, self.m)),
        }
    }

    /// `f^k(t)`, zero when absent.
    pub fn flux(&self, axis: usize, t: f64) -> Result<Field> {
        match &self.flux[axis] {
            Some(f) => self.checked(f(t), "flux"),
            None => Ok(Field::zeros(self.grid, self.m)),
        }
    }

    pub fn noise(&self, r: usize, t: f64) -> Result<Field> {
        self.checked((self.noise[r])(t), "noise")
    }

    pub fn has_jump(&self, k: usize) -> bool {
        self.jumps.get(k).is_some_and(Option::is_some)
    }

    pub fn jump(&self, k: usize, t: f64, z: f64) -> Result<Field> {
        match self.jumps.get(k).and_then(Option::as_ref) {
            Some(h) => self.checked(h(t, z), "jump"),
            None => Ok(Field::zeros(self.grid, self.m)),
        }
    }

    /// `f⁰ + Σ_k D_k f^k` at time `t`.
    pub fn drift(&self, t: f64) -> Result<Field> {
        let mut out = self.f0(t)?;
        for axis in 0..self.grid.d {
            if self.flux[axis].is_some() {
                out.axpy(1.0, &discrete_gradient(&self.flux(axis, t)?, axis)?)?;
            }
        }
        Ok(out)
    }

    /// `Σ_k ∫ h^k(t, z) μ^k(dz)` over the first `layers[k]` layers, with the
    /// largest standard error of the mark quadrature.
    pub fn compensator(&self, t: f64, drivers: &Drivers, layers: &[usize]) -> Result<(Field, f64)> {
        let mut out = Field::zeros(self.grid, self.m);
        let mut se = 0.0f64;
        let len = out.values().len();
        for (k, &n) in layers.iter().enumerate() {
            if !self.has_jump(k) || n == 0 {
                continue;
            }
            let mut failure = None;
            let (v, e) = drivers.measures[k].integrate_vec(n, len, |z, o| match self.jump(k, t, z) {
                Ok(h) => o.copy_from_slice(h.values()),
                Err(e) => {
                    failure.get_or_insert(e);
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            for (a, b) in out.values_mut().iter_mut().zip(v) {
                *a += b;
            }
            se = se.max(e);
        }
        Ok((out, se))
    }

    /// The same equation with every coefficient mollified.
    pub fn mollified(&self, k: &Mollifier) -> LpCoefficients {
        let wrap = |f: &FieldFn| -> FieldFn {
            let f = f.clone();
            let k = k.clone();
            Arc::new(move |t| k.mollify_unchecked(&f(t)))
        };
        LpCoefficients {
            grid: self.grid,
            m: self.m,
            f0: self.f0.as_ref().map(wrap),
            flux: self.flux.iter().map(|f| f.as_ref().map(wrap)).collect(),
            noise: self.noise.iter().map(wrap).collect(),
            jumps: self
                .jumps
                .iter()
                .map(|h| {
                    h.as_ref().map(|h| {
                        let h = h.clone();
                        let k = k.clone();
                        Arc::new(move |t, z| k.mollify_unchecked(&h(t, z))) as JumpFieldFn
                    })
                })
                .collect(),
        }
    }
}

/// One applied field jump.
#[derive(Debug, Clone)]
pub struct LpJump {
    pub event: JumpEvent,
    pub index: usize,
    /// `u_{s−}` before this jump.
    pub before: Field,
    pub h: Field,
}

/// A simulated field path on the merged grid.
#[derive(Debug, Clone)]
pub struct LpPath {
    times: Vec<f64>,
    values: Vec<Field>,
    jumps: Vec<LpJump>,
    jump_offsets: Vec<usize>,
    dw: Vec<Vec<f64>>,
    layers: Vec<usize>,
}

impl LpPath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Field] {
        &self.values
    }

    pub fn initial(&self) -> &Field {
        &self.values[0]
    }

    pub fn terminal(&self) -> &Field {
        self.values.last().unwrap()
    }

    pub fn jumps(&self) -> &[LpJump] {
        &self.jumps
    }

    pub fn jumps_at(&self, i: usize) -> &[LpJump] {
        &self.jumps[self.jump_offsets[i]..self.jump_offsets[i + 1]]
    }

    /// `u_{t_i−}`.
    pub fn left_limit(&self, i: usize) -> &Field {
        match self.jumps_at(i).first() {
            Some(j) => &j.before,
            None => &self.values[i],
        }
    }

    /// Wiener increments of step `j`.
    pub fn dw(&self, j: usize) -> &[f64] {
        &self.dw[j]
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }
}

/// Euler scheme for the field equation on the merged grid: the coefficients
/// are evaluated at the left end of each step and jumps are added at event
/// times.
pub fn simulate_lp(psi: &Field, coeffs: &LpCoefficients, drivers: &Drivers) -> Result<LpPath> {
    if *psi.grid() != coeffs.grid || psi.m() != coeffs.m {
        return Err(Error::Shape("initial field does not match the coefficient grid".into()));
    }
    if let Some(node) = psi.first_non_finite() {
        return Err(Error::BlowUp { time: 0.0, detail: format!("non-finite initial value at node {node}") });
    }
    let r = coeffs.n_wiener();
    if r > 0 && drivers.wiener.n_components() < r {
        return Err(Error::config(format!(
            "field noise uses {r} Wiener components but the drivers provide {}",
            drivers.wiener.n_components()
        )));
    }
    if coeffs.n_measures() > drivers.measures.len() {
        return Err(Error::config(format!(
            "field jumps reference {} measures but the drivers provide {}",
            coeffs.n_measures(),
            drivers.measures.len()
        )));
    }
    let merged = drivers.wiener.grid().merged_with(&drivers.jumps.times())?;
    let wiener = drivers.wiener.refine_to(&merged)?;
    let times = merged.points().to_vec();
    let n = times.len();
    let layers: Vec<usize> = (0..coeffs.n_measures()).map(|k| drivers.layers_for(k)).collect();
    let events = drivers.jumps.events();
    let mut ev = 0usize;

    let mut values = Vec::with_capacity(n);
    let mut jumps = Vec::new();
    let mut jump_offsets = vec![0usize; n + 1];
    let mut dws = Vec::with_capacity(n - 1);
    values.push(psi.clone());
    for j in 0..n - 1 {
        let (t0, t1) = (times[j], times[j + 1]);
        let dt = t1 - t0;
        let mut u = values[j].clone();
        u.axpy(dt, &coeffs.drift(t0)?)?;
        let (c, _) = coeffs.compensator(t0, drivers, &layers)?;
        u.axpy(-dt, &c)?;
        let dw = wiener.increment(j)[..r].to_vec();
        for (q, w) in dw.iter().enumerate() {
            u.axpy(*w, &coeffs.noise(q, t0)?)?;
        }
        if let Some(node) = u.first_non_finite() {
            return Err(Error::BlowUp { time: t1, detail: format!("non-finite value at node {node}") });
        }
        dws.push(dw);
        jump_offsets[j + 1] = jumps.len();
        while ev < events.len() && merged.index_of(events[ev].time) == Some(j + 1) {
            let e = events[ev];
            ev += 1;
            if !coeffs.has_jump(e.measure) {
                continue;
            }
            let h = coeffs.jump(e.measure, e.time, e.mark)?;
            let before = u.clone();
            u.axpy(1.0, &h)?;
            if let Some(node) = u.first_non_finite() {
                return Err(Error::BlowUp { time: e.time, detail: format!("jump left non-finite value at node {node}") });
            }
            jumps.push(LpJump { event: e, index: j + 1, before, h });
        }
        values.push(u);
    }
    jump_offsets[n] = jumps.len();
    Ok(LpPath { times, values, jumps, jump_offsets, dw: dws, layers })
}
