use std::io::Write;

use super::Coefficients;
use crate::drivers::{Drivers, JumpEvent};
use crate::quadrature::GaussRule;
use crate::{Error, Result};

/// Time-stepping scheme between merged-grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Euler–Maruyama with coefficients frozen at the left endpoint.
    Euler,
    /// Pure-jump paths whose coefficients see the state only through its
    /// value after the last jump; the time dependence is integrated with a
    /// Gauss rule on each step.
    ExactBetweenJumps,
}

const EXACT_NODES: usize = 8;

/// Coefficient values used over one step `[t0, t1)` of the merged grid.
///
/// Over the step the path moves by `(drift − compensator)·Δt + diffusion·dw`;
/// ledgers read these values back so that they integrate exactly the
/// dynamics that produced the path.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub t0: f64,
    pub t1: f64,
    /// State the coefficients were evaluated at.
    pub anchor: Vec<f64>,
    /// Sampling times of the coefficients with weights summing to one.
    pub nodes: Vec<(f64, f64)>,
    pub drift: Vec<f64>,
    /// `M × R`, row-major.
    pub diffusion: Vec<f64>,
    /// `Σ_k ∫ h^k μ^k(dz)`, averaged over the step.
    pub compensator: Vec<f64>,
    pub compensator_se: f64,
    pub dw: Vec<f64>,
}

impl StepCache {
    pub fn dt(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// One applied jump.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub event: JumpEvent,
    /// Index of the jump time in [`PathRecord::times`].
    pub index: usize,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    /// `h̄^k(s, z, X_{s-})`.
    pub uncompensated: Vec<f64>,
    /// `h^k(s, z, X_{s-})`.
    pub compensated: Vec<f64>,
}

/// A simulated path on the merged grid (base grid ∪ jump times).
#[derive(Debug, Clone)]
pub struct PathRecord {
    dim: usize,
    n_wiener: usize,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    left: Vec<Vec<f64>>,
    steps: Vec<StepCache>,
    jumps: Vec<JumpRecord>,
    jump_offsets: Vec<usize>,
    layers: Vec<usize>,
}

impl PathRecord {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_wiener(&self) -> usize {
        self.n_wiener
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `X_t` (right-continuous value) at each merged-grid time.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// `X_{t-}` at each merged-grid time; equal to `X_t` away from jumps.
    pub fn left_limits(&self) -> &[Vec<f64>] {
        &self.left
    }

    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn terminal(&self) -> &[f64] {
        self.values.last().unwrap()
    }

    pub fn steps(&self) -> &[StepCache] {
        &self.steps
    }

    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }

    /// Jumps applied at merged-grid index `i`, in application order.
    pub fn jumps_at(&self, i: usize) -> &[JumpRecord] {
        &self.jumps[self.jump_offsets[i]..self.jump_offsets[i + 1]]
    }

    pub fn is_jump_time(&self, i: usize) -> bool {
        self.jump_offsets[i + 1] > self.jump_offsets[i]
    }

    /// Layers of measure `k` that were simulated.
    pub fn layers_for(&self, k: usize) -> usize {
        self.layers.get(k).copied().unwrap_or(0)
    }

    /// Linear interpolant of the continuous motion on step `j` at fraction
    /// `theta`, between `X_{t_j}` and `X_{t_{j+1}-}`.
    pub fn interpolate(&self, j: usize, theta: f64, out: &mut [f64]) {
        let (a, b) = (&self.values[j], &self.left[j + 1]);
        for i in 0..self.dim {
            out[i] = a[i] + theta * (b[i] - a[i]);
        }
    }

    /// State at time `t` from the piecewise-linear interpolant, taking the
    /// right value at jump times.
    pub fn state_at(&self, t: f64, out: &mut [f64]) {
        let j = match self.times.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => {
                out.copy_from_slice(&self.values[i]);
                return;
            }
            Err(0) => {
                out.copy_from_slice(&self.values[0]);
                return;
            }
            Err(i) if i >= self.times.len() => {
                out.copy_from_slice(self.terminal());
                return;
            }
            Err(i) => i - 1,
        };
        let theta = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        self.interpolate(j, theta, out);
    }

    /// `h^k` as seen by the compensator over step `j`:
    /// `Σ_q w_q h^k(s_q, z, anchor)`.
    pub fn step_compensated(&self, coeffs: &Coefficients, k: usize, j: usize, z: f64) -> Result<Vec<f64>> {
        let step = &self.steps[j];
        effective_compensated(coeffs, k, &step.nodes, z, &step.anchor)
    }

    /// CSV with columns `t, is_jump, x1..xM, left_x1..left_xM`; the left-limit
    /// columns are filled only at jump times.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "is_jump".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x{i}")));
        header.extend((1..=self.dim).map(|i| format!("left_x{i}")));
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let jump = self.is_jump_time(i);
            let mut row = vec![format!("{t:.17e}"), u8::from(jump).to_string()];
            row.extend(self.values[i].iter().map(|v| format!("{v:.17e}")));
            if jump {
                row.extend(self.left[i].iter().map(|v| format!("{v:.17e}")));
            } else {
                row.extend(std::iter::repeat_n(String::new(), self.dim));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn effective_compensated(
    coeffs: &Coefficients,
    k: usize,
    nodes: &[(f64, f64)],
    z: f64,
    anchor: &[f64],
) -> Result<Vec<f64>> {
    if let [(s, _)] = nodes {
        return coeffs.compensated(k, *s, z, anchor);
    }
    let mut acc = vec![0.0; coeffs.dim()];
    for &(s, w) in nodes {
        let h = coeffs.compensated(k, s, z, anchor)?;
        for (a, v) in acc.iter_mut().zip(&h) {
            *a += w * v;
        }
    }
    Ok(acc)
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Builds the path of the jump diffusion started at `x0` from the given
/// drivers. Jumps are applied atomically at event times with integrands
/// evaluated at `X_{s-}`; between grid points the chosen scheme advances
/// the continuous part and subtracts the compensator of every `h^k`.
pub fn simulate(x0: &[f64], coeffs: &Coefficients, drivers: &Drivers, scheme: Scheme) -> Result<PathRecord> {
    let dim = coeffs.dim();
    if x0.len() != dim {
        return Err(Error::Shape(format!("initial value has length {}, expected {dim}", x0.len())));
    }
    if !all_finite(x0) {
        return Err(Error::BlowUp { time: 0.0, detail: "non-finite initial value".into() });
    }
    let n_wiener = coeffs.n_wiener();
    if coeffs.has_diffusion() && drivers.wiener.n_components() != n_wiener {
        return Err(Error::config(format!(
            "coefficients use {n_wiener} Wiener components but the drivers provide {}",
            drivers.wiener.n_components()
        )));
    }
    if coeffs.n_measures() > drivers.measures.len() {
        return Err(Error::config(format!(
            "coefficients reference {} measures but the drivers provide {}",
            coeffs.n_measures(),
            drivers.measures.len()
        )));
    }
    if scheme == Scheme::ExactBetweenJumps {
        if !coeffs.finite_activity() {
            return Err(Error::config("exact-between-jumps requires finite activity"));
        }
        if coeffs.has_diffusion() {
            return Err(Error::config("exact-between-jumps requires zero diffusion"));
        }
    }

    let base = drivers.wiener.grid();
    let merged = base.merged_with(&drivers.jumps.times())?;
    let wiener = drivers.wiener.refine_to(&merged)?;
    let times = merged.points().to_vec();
    let n = times.len();
    let layers: Vec<usize> = (0..drivers.measures.len()).map(|k| drivers.layers_for(k)).collect();
    let rule = GaussRule::new(EXACT_NODES);

    // events grouped by merged-grid index
    let events = drivers.jumps.events();
    let mut event_index = Vec::with_capacity(events.len());
    for e in events {
        let i = merged
            .index_of(e.time)
            .ok_or_else(|| Error::config(format!("jump time {} missing from merged grid", e.time)))?;
        event_index.push(i);
    }

    let mut values = Vec::with_capacity(n);
    let mut left = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n - 1);
    let mut jumps = Vec::with_capacity(events.len());
    let mut jump_offsets = vec![0usize; n + 1];
    values.push(x0.to_vec());
    left.push(x0.to_vec());
    let mut anchor = x0.to_vec();
    let mut ev = 0usize;

    for j in 0..n - 1 {
        let (t0, t1) = (times[j], times[j + 1]);
        let dt = t1 - t0;
        let x = values[j].clone();
        let nodes: Vec<(f64, f64)> = match scheme {
            Scheme::Euler => {
                anchor.clone_from(&x);
                vec![(t0, 1.0)]
            }
            Scheme::ExactBetweenJumps => rule.iter().map(|(th, w)| (t0 + th * dt, w)).collect(),
        };

        let mut drift = vec![0.0; dim];
        for &(s, w) in &nodes {
            for (d, v) in drift.iter_mut().zip(coeffs.drift(s, &anchor)?) {
                *d += w * v;
            }
        }
        let diffusion = coeffs.diffusion(t0, &anchor)?;
        let mut compensator = vec![0.0; dim];
        let mut var = 0.0;
        for (k, &n_layers) in layers.iter().enumerate().take(coeffs.n_measures()) {
            if !coeffs.has_compensated(k) || n_layers == 0 {
                continue;
            }
            let mut failure = None;
            let (c, se) = drivers.measures[k].integrate_vec(n_layers, dim, |z, out| {
                match effective_compensated(coeffs, k, &nodes, z, &anchor) {
                    Ok(h) => out.copy_from_slice(&h),
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            for (a, v) in compensator.iter_mut().zip(&c) {
                *a += v;
            }
            var += se * se;
        }
        let dw = wiener.increment(j).to_vec();

        let mut xe = x.clone();
        for i in 0..dim {
            let mut noise = 0.0;
            if coeffs.has_diffusion() {
                for r in 0..n_wiener {
                    noise += diffusion[i * n_wiener + r] * dw[r];
                }
            }
            xe[i] += (drift[i] - compensator[i]) * dt + noise;
        }
        if !all_finite(&xe) {
            return Err(Error::BlowUp { time: t1, detail: format!("continuous step produced {xe:?}") });
        }
        steps.push(StepCache {
            t0,
            t1,
            anchor: anchor.clone(),
            nodes,
            drift,
            diffusion,
            compensator,
            compensator_se: var.sqrt(),
            dw,
        });
        left.push(xe.clone());

        let mut state = xe;
        jump_offsets[j + 1] = jumps.len();
        while ev < events.len() && event_index[ev] == j + 1 {
            let e = events[ev];
            let hbar = coeffs.uncompensated(e.measure, e.time, e.mark, &state)?;
            let h = coeffs.compensated(e.measure, e.time, e.mark, &state)?;
            let after: Vec<f64> = state.iter().zip(hbar.iter().zip(&h)).map(|(x, (a, b))| x + a + b).collect();
            if !all_finite(&after) {
                return Err(Error::BlowUp { time: e.time, detail: format!("jump produced {after:?}") });
            }
            jumps.push(JumpRecord {
                event: e,
                index: j + 1,
                before: state,
                after: after.clone(),
                uncompensated: hbar,
                compensated: h,
            });
            state = after;
            ev += 1;
        }
        if jumps.len() > jump_offsets[j + 1] {
            anchor.clone_from(&state);
        }
        values.push(state);
    }
    jump_offsets[n] = jumps.len();

    Ok(PathRecord { dim, n_wiener, times, values, left, steps, jumps, jump_offsets, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{sample_wiener, JumpStream, MarkMeasure, TimeGrid};

    fn drivers(n: usize, r: usize, measures: Vec<MarkMeasure>, seed: u64) -> Drivers {
        let grid = TimeGrid::uniform(1.0, n).unwrap();
        Drivers::sample(&grid, r, measures, 1, seed).unwrap()
    }

    #[test]
    fn zero_coefficients_keep_initial_value() {
        let c = Coefficients::new(2, 1);
        let d = drivers(20, 1, vec![MarkMeasure::dirac(1.0, 3.0).unwrap()], 1);
        let p = simulate(&[0.5, -1.0], &c, &d, Scheme::Euler).unwrap();
        assert!(p.values().iter().all(|v| v == &vec![0.5, -1.0]));
    }

    #[test]
    fn jump_sizes_are_exact() {
        let c = Coefficients::new(1, 1)
            .with_compensated(0, |t, z, x| vec![z * (1.0 + t) + 0.1 * x[0].sin()])
            .with_drift(|_, x| vec![-x[0]]);
        let d = drivers(16, 1, vec![MarkMeasure::uniform(0.0, 1.0, 4.0).unwrap()], 3);
        let p = simulate(&[0.2], &c, &d, Scheme::Euler).unwrap();
        assert!(!p.jumps().is_empty());
        for j in p.jumps() {
            let expect = j.event.mark * (1.0 + j.event.time) + 0.1 * j.before[0].sin();
            assert_eq!(j.after[0], j.before[0] + expect);
            assert_eq!(j.compensated[0], expect);
        }
    }

    #[test]
    fn pure_uncompensated_is_counting_path() {
        let c = Coefficients::new(1, 1).with_uncompensated(0, |_, _, _| vec![1.0]);
        let d = drivers(10, 1, vec![MarkMeasure::dirac(1.0, 5.0).unwrap()], 8);
        let p = simulate(&[2.0], &c, &d, Scheme::Euler).unwrap();
        for (i, t) in p.times().iter().enumerate() {
            let count = d.jumps.events().iter().filter(|e| e.time <= *t).count();
            assert_eq!(p.values()[i][0], 2.0 + count as f64);
        }
    }

    #[test]
    fn scheme_mismatch_rejected() {
        let c = Coefficients::new(1, 1).with_diffusion(|_, _| vec![1.0]);
        let d = drivers(4, 1, vec![], 1);
        assert!(matches!(simulate(&[0.0], &c, &d, Scheme::ExactBetweenJumps), Err(Error::Config(_))));
        let c = Coefficients::new(1, 1).with_finite_activity(false);
        assert!(simulate(&[0.0], &c, &d, Scheme::ExactBetweenJumps).is_err());
        let c = Coefficients::new(1, 2).with_diffusion(|_, _| vec![1.0, 1.0]);
        assert!(simulate(&[0.0], &c, &d, Scheme::Euler).is_err());
    }

    #[test]
    fn blow_up_reports_first_bad_time() {
        let c = Coefficients::new(1, 1).with_drift(|t, _| vec![if t >= 0.5 { f64::INFINITY } else { 0.0 }]);
        let d = drivers(4, 1, vec![], 1);
        match simulate(&[0.0], &c, &d, Scheme::Euler) {
            Err(Error::BlowUp { time, .. }) => assert_eq!(time, 0.75),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn exact_scheme_integrates_time_dependence() {
        // dX = -∫ h μ dt with h_t = t^2, no jumps inside (empty stream)
        let c = Coefficients::new(1, 1).with_compensated(0, |t, _, _| vec![t * t]);
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let w = sample_wiener(&grid, 1, 1).unwrap();
        let d = Drivers::new(w, vec![MarkMeasure::dirac(1.0, 1.0).unwrap()], JumpStream::from_events(Vec::new(), 1.0, 1).unwrap()).unwrap();
        let p = simulate(&[0.0], &c, &d, Scheme::ExactBetweenJumps).unwrap();
        assert!((p.terminal()[0] + 1.0 / 3.0).abs() < 1e-13);
        let e = simulate(&[0.0], &c, &d, Scheme::Euler).unwrap();
        assert!((e.terminal()[0] + 1.0 / 3.0).abs() > 1e-3);
    }

    #[test]
    fn csv_dump_shape() {
        let c = Coefficients::new(1, 1).with_uncompensated(0, |_, _, _| vec![1.0]);
        let d = drivers(5, 1, vec![MarkMeasure::dirac(1.0, 2.0).unwrap()], 4);
        let p = simulate(&[0.0], &c, &d, Scheme::Euler).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,is_jump,x1,left_x1"));
        assert_eq!(text.lines().count(), p.times().len() + 1);
    }
}
