use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use super::MarkMeasure;
use crate::rng::{substream, tags};
use crate::{Error, Result};

/// One atom of a realized Poisson random measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
    /// Index `k` of the Poisson random measure.
    pub measure: usize,
    /// Index `n` of the layer `Z_n \ Z_{n-1}` the mark came from.
    pub layer: usize,
}

/// Realized Poisson random measures on `(0, T]`, merged and time-sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpStream {
    events: Vec<JumpEvent>,
    horizon: f64,
    n_layers: usize,
    ties: Vec<usize>,
}

impl JumpStream {
    pub fn empty(horizon: f64) -> Self {
        JumpStream { events: Vec::new(), horizon, n_layers: 0, ties: Vec::new() }
    }

    /// Builds a stream from explicit events (sorted internally).
    pub fn from_events(mut events: Vec<JumpEvent>, horizon: f64, n_layers: usize) -> Result<Self> {
        if let Some(e) = events.iter().find(|e| !(e.time > 0.0 && e.time <= horizon)) {
            return Err(Error::config(format!("event time {} outside (0, {horizon}]", e.time)));
        }
        sort_events(&mut events);
        let ties = find_ties(&events);
        Ok(JumpStream { events, horizon, n_layers, ties })
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Layer truncation the stream was sampled with.
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Indices of events sharing their time with the preceding event. These
    /// have probability zero; when floating point produces one, the pair is
    /// ordered by measure index and reported here.
    pub fn tie_warnings(&self) -> &[usize] {
        &self.ties
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    pub fn count_in_layer(&self, measure: usize, layer: usize) -> usize {
        self.events.iter().filter(|e| e.measure == measure && e.layer == layer).count()
    }

    /// CSV with columns `time, mark, measure_k, layer_n`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "mark", "measure_k", "layer_n"])?;
        for e in &self.events {
            w.write_record([
                format!("{:.17e}", e.time),
                format!("{:.17e}", e.mark),
                e.measure.to_string(),
                e.layer.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sort_events(events: &mut [JumpEvent]) {
    events.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.measure.cmp(&b.measure))
            .then(a.layer.cmp(&b.layer))
    });
}

fn find_ties(events: &[JumpEvent]) -> Vec<usize> {
    events
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].time == w[1].time)
        .map(|(i, _)| i + 1)
        .collect()
}

fn sample_layers(
    measure: &MarkMeasure,
    k: usize,
    horizon: f64,
    n_layers: usize,
    seed: u64,
    out: &mut Vec<JumpEvent>,
) -> Result<()> {
    for (n, layer) in measure.layers().iter().take(n_layers).enumerate() {
        let mass = layer.mass();
        if !mass.is_finite() {
            return Err(Error::config(format!("measure {k} layer {n} has non-finite mass {mass}")));
        }
        if mass == 0.0 {
            continue;
        }
        let sampler = layer.sampler().ok_or_else(|| {
            Error::UnsupportedMeasure(format!("measure {k} layer {n} has no sampler and cannot be simulated"))
        })?;
        let mut rng = substream(seed, &[tags::JUMPS, k as u64, n as u64]);
        let lambda = mass * horizon;
        let count = Poisson::new(lambda)
            .map_err(|e| Error::config(format!("Poisson intensity {lambda}: {e}")))?
            .sample(&mut rng) as usize;
        for _ in 0..count {
            // uniform on (0, T]
            let time = horizon * (1.0 - rng.random::<f64>());
            let mark = sampler(&mut rng);
            out.push(JumpEvent { time, mark, measure: k, layer: n });
        }
    }
    Ok(())
}

/// Samples one Poisson random measure with intensity `μ(dz) dt` truncated to
/// the first `n_layers` layers. Each layer draws from its own substream, so
/// the result for `n_layers = m` is contained in the result for `m + 1`.
pub fn sample_jumps(measure: &MarkMeasure, horizon: f64, n_layers: usize, seed: u64) -> Result<JumpStream> {
    if n_layers > measure.layers().len() {
        return Err(Error::config(format!(
            "requested {n_layers} layers but the measure has {}",
            measure.layers().len()
        )));
    }
    if !(horizon > 0.0) {
        return Err(Error::config("horizon must be positive"));
    }
    let mut events = Vec::new();
    sample_layers(measure, 0, horizon, n_layers, seed, &mut events)?;
    JumpStream::from_events(events, horizon, n_layers)
}

/// Samples independent Poisson random measures `π^1..π^m`. Measure `k` uses
/// `min(n_layers, layers of μ^k)` layers.
pub fn sample_jump_family(
    measures: &[MarkMeasure],
    horizon: f64,
    n_layers: usize,
    seed: u64,
) -> Result<JumpStream> {
    if !(horizon > 0.0) {
        return Err(Error::config("horizon must be positive"));
    }
    let mut events = Vec::new();
    for (k, m) in measures.iter().enumerate() {
        let n = n_layers.min(m.layers().len());
        sample_layers(m, k, horizon, n, seed, &mut events)?;
    }
    JumpStream::from_events(events, horizon, n_layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::MarkLayer;

    #[test]
    fn zero_mass_gives_empty_stream() {
        let m = MarkMeasure::new(vec![MarkLayer::dirac(1.0, 0.0).unwrap(), MarkLayer::uniform(0.0, 1.0, 0.0).unwrap()]);
        let s = sample_jumps(&m, 3.0, 2, 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn non_finite_mass_rejected() {
        let m = MarkMeasure::new(vec![MarkLayer::dirac(1.0, f64::NAN).unwrap()]);
        assert!(sample_jumps(&m, 1.0, 1, 1).is_err());
        let m = MarkMeasure::new(vec![MarkLayer::dirac(1.0, f64::INFINITY).unwrap()]);
        assert!(sample_jumps(&m, 1.0, 1, 1).is_err());
    }

    #[test]
    fn too_many_layers_rejected() {
        let m = MarkMeasure::dirac(1.0, 1.0).unwrap();
        assert!(sample_jumps(&m, 1.0, 2, 1).is_err());
    }

    #[test]
    fn events_sorted_and_in_range() {
        let m = MarkMeasure::new(vec![MarkLayer::uniform(0.0, 1.0, 5.0).unwrap(), MarkLayer::dirac(3.0, 2.0).unwrap()]);
        let s = sample_jumps(&m, 2.0, 2, 77).unwrap();
        assert!(!s.is_empty());
        assert!(s.events().windows(2).all(|w| w[0].time <= w[1].time));
        assert!(s.events().iter().all(|e| e.time > 0.0 && e.time <= 2.0));
        assert!(s.events().iter().filter(|e| e.layer == 1).all(|e| e.mark == 3.0));
        assert!(s.events().iter().filter(|e| e.layer == 0).all(|e| (0.0..1.0).contains(&e.mark)));
    }

    #[test]
    fn ties_are_flagged() {
        let ev = vec![
            JumpEvent { time: 0.5, mark: 1.0, measure: 1, layer: 0 },
            JumpEvent { time: 0.5, mark: 1.0, measure: 0, layer: 0 },
        ];
        let s = JumpStream::from_events(ev, 1.0, 1).unwrap();
        assert_eq!(s.tie_warnings(), &[1]);
        assert_eq!(s.events()[0].measure, 0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = MarkMeasure::dirac(1.0, 3.0).unwrap();
        let s = sample_jumps(&m, 1.0, 1, 3).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time,mark,measure_k,layer_n"));
        assert_eq!(lines.count(), s.len());
    }
}
