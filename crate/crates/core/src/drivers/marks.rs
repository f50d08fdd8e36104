use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, RngCore};

use crate::quadrature::GaussRule;
use crate::rng::{substream, tags};
use crate::{Error, Result};

/// Draws one mark from a layer's normalized distribution.
pub type MarkSampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Closed-form `∫ φ(z) μ(dz)` over one layer.
pub type ScalarIntegrator = Arc<dyn Fn(&dyn Fn(f64) -> f64) -> f64 + Send + Sync>;

/// How integrals against a layer are evaluated.
#[derive(Clone)]
pub enum LayerQuadrature {
    /// The layer is a finite atomic measure `Σ w_i δ_{z_i}`; integrals are exact.
    Atoms(Vec<(f64, f64)>),
    /// User-supplied exact integral for scalar integrands.
    Analytic(ScalarIntegrator),
    /// Fixed-seed Monte-Carlo over the layer sampler.
    MonteCarlo,
}

impl fmt::Debug for LayerQuadrature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerQuadrature::Atoms(a) => f.debug_tuple("Atoms").field(a).finish(),
            LayerQuadrature::Analytic(_) => f.write_str("Analytic(..)"),
            LayerQuadrature::MonteCarlo => f.write_str("MonteCarlo"),
        }
    }
}

/// One finite-mass piece `Z_n \ Z_{n-1}` of a σ-finite mark measure.
#[derive(Clone)]
pub struct MarkLayer {
    mass: f64,
    sampler: Option<MarkSampler>,
    quadrature: LayerQuadrature,
}

impl fmt::Debug for MarkLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarkLayer")
            .field("mass", &self.mass)
            .field("sampler", &self.sampler.as_ref().map(|_| ".."))
            .field("quadrature", &self.quadrature)
            .finish()
    }
}

impl MarkLayer {
    pub fn new(mass: f64, sampler: Option<MarkSampler>, quadrature: LayerQuadrature) -> Result<Self> {
        if mass < 0.0 {
            return Err(Error::config(format!("layer mass must be non-negative, got {mass}")));
        }
        Ok(MarkLayer { mass, sampler, quadrature })
    }

    /// `mass · δ_z`.
    pub fn dirac(z: f64, mass: f64) -> Result<Self> {
        let sampler: MarkSampler = Arc::new(move |_| z);
        MarkLayer::new(mass, Some(sampler), LayerQuadrature::Atoms(vec![(z, mass)]))
    }

    /// `mass` spread uniformly over `[a, b)`; integrals by Monte-Carlo.
    pub fn uniform(a: f64, b: f64, mass: f64) -> Result<Self> {
        if !(b > a) {
            return Err(Error::config(format!("empty uniform mark interval [{a}, {b})")));
        }
        let sampler: MarkSampler = Arc::new(move |rng| a + (b - a) * rng.random::<f64>());
        MarkLayer::new(mass, Some(sampler), LayerQuadrature::MonteCarlo)
    }

    /// Uniform mass on `[a, b)` sampled exactly but integrated with an
    /// `nodes`-point Gauss–Legendre rule.
    pub fn uniform_gauss(a: f64, b: f64, mass: f64, nodes: usize) -> Result<Self> {
        let mut layer = MarkLayer::uniform(a, b, mass)?;
        let rule = GaussRule::new(nodes.max(1));
        layer.quadrature = LayerQuadrature::Atoms(rule.iter().map(|(t, w)| (a + t * (b - a), w * mass)).collect());
        Ok(layer)
    }

    /// Finite atomic layer `Σ w_i δ_{z_i}`.
    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|&(_, w)| w < 0.0) {
            return Err(Error::config("atom weights must be non-negative"));
        }
        let mass: f64 = atoms.iter().map(|&(_, w)| w).sum();
        let table = atoms.clone();
        let sampler: MarkSampler = Arc::new(move |rng| {
            let mut u = rng.random::<f64>() * mass;
            for &(z, w) in &table {
                if u < w {
                    return z;
                }
                u -= w;
            }
            table.last().map(|&(z, _)| z).unwrap_or(0.0)
        });
        MarkLayer::new(mass, Some(sampler), LayerQuadrature::Atoms(atoms))
    }

    /// Layer without a sampler, known only through its integral. It can be
    /// integrated against but not simulated.
    pub fn analytic_only(mass: f64, integrator: ScalarIntegrator) -> Result<Self> {
        MarkLayer::new(mass, None, LayerQuadrature::Analytic(integrator))
    }

    pub fn with_analytic(mut self, integrator: ScalarIntegrator) -> Self {
        self.quadrature = LayerQuadrature::Analytic(integrator);
        self
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn sampler(&self) -> Option<&MarkSampler> {
        self.sampler.as_ref()
    }

    pub fn quadrature(&self) -> &LayerQuadrature {
        &self.quadrature
    }
}

/// Value of a mark integral with its quadrature standard error (zero for
/// exact rules).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkIntegral {
    pub value: f64,
    pub std_error: f64,
}

/// σ-finite mark measure realized as disjoint layers.
#[derive(Clone)]
pub struct MarkMeasure {
    layers: Vec<MarkLayer>,
    mc_samples: usize,
    mc_seed: u64,
    mc_cache: Arc<OnceLock<std::result::Result<Vec<Vec<f64>>, String>>>,
}

impl fmt::Debug for MarkMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarkMeasure")
            .field("layers", &self.layers)
            .field("mc_samples", &self.mc_samples)
            .field("mc_seed", &self.mc_seed)
            .finish()
    }
}

pub const DEFAULT_MC_SAMPLES: usize = 4096;
const DEFAULT_MC_SEED: u64 = 0x6d63_7175_6164;

impl MarkMeasure {
    pub fn new(layers: Vec<MarkLayer>) -> Self {
        MarkMeasure {
            layers,
            mc_samples: DEFAULT_MC_SAMPLES,
            mc_seed: DEFAULT_MC_SEED,
            mc_cache: Arc::new(OnceLock::new()),
        }
    }

    pub fn dirac(z: f64, mass: f64) -> Result<Self> {
        Ok(MarkMeasure::new(vec![MarkLayer::dirac(z, mass)?]))
    }

    pub fn uniform(a: f64, b: f64, mass: f64) -> Result<Self> {
        Ok(MarkMeasure::new(vec![MarkLayer::uniform(a, b, mass)?]))
    }

    pub fn uniform_gauss(a: f64, b: f64, mass: f64, nodes: usize) -> Result<Self> {
        Ok(MarkMeasure::new(vec![MarkLayer::uniform_gauss(a, b, mass, nodes)?]))
    }

    /// Sets the sample count and seed of the Monte-Carlo fallback.
    pub fn with_monte_carlo(mut self, samples: usize, seed: u64) -> Self {
        self.mc_samples = samples.max(2);
        self.mc_seed = seed;
        self.mc_cache = Arc::new(OnceLock::new());
        self
    }

    pub fn layers(&self) -> &[MarkLayer] {
        &self.layers
    }

    /// `μ(Z_n)` for the first `n_layers` layers.
    pub fn total_mass(&self, n_layers: usize) -> f64 {
        self.layers.iter().take(n_layers).map(MarkLayer::mass).sum()
    }

    /// True when every selected layer is integrated exactly.
    pub fn is_exact(&self, n_layers: usize) -> bool {
        self.layers
            .iter()
            .take(n_layers)
            .all(|l| !matches!(l.quadrature, LayerQuadrature::MonteCarlo))
    }

    fn mc_points(&self, layer: usize) -> Result<&[f64]> {
        let cache = self.mc_cache.get_or_init(|| {
            self.layers
                .iter()
                .enumerate()
                .map(|(n, l)| match (&l.quadrature, &l.sampler) {
                    (LayerQuadrature::MonteCarlo, Some(s)) => {
                        let mut rng = substream(self.mc_seed, &[tags::MARKS_MC, n as u64]);
                        Ok((0..self.mc_samples).map(|_| s(&mut rng)).collect())
                    }
                    (LayerQuadrature::MonteCarlo, None) => {
                        Err(format!("layer {n} has neither an analytic integral nor a sampler"))
                    }
                    _ => Ok(Vec::new()),
                })
                .collect::<std::result::Result<Vec<_>, String>>()
        });
        match cache {
            Ok(points) => Ok(&points[layer]),
            Err(msg) => Err(Error::UnsupportedMeasure(msg.clone())),
        }
    }

    fn check_layers(&self, n_layers: usize) -> Result<()> {
        if n_layers > self.layers.len() {
            return Err(Error::config(format!(
                "requested {n_layers} layers but the measure has {}",
                self.layers.len()
            )));
        }
        for (n, l) in self.layers.iter().take(n_layers).enumerate() {
            if !l.mass.is_finite() {
                return Err(Error::config(format!("layer {n} has non-finite mass {}", l.mass)));
            }
        }
        Ok(())
    }

    /// `∫_{Z_n} f(z) μ(dz)` over the first `n_layers` layers.
    pub fn integrate(&self, n_layers: usize, f: impl Fn(f64) -> f64) -> Result<MarkIntegral> {
        self.check_layers(n_layers)?;
        let mut value = 0.0;
        let mut var = 0.0;
        for (n, layer) in self.layers.iter().take(n_layers).enumerate() {
            if layer.mass == 0.0 {
                continue;
            }
            match &layer.quadrature {
                LayerQuadrature::Atoms(atoms) => {
                    value += atoms.iter().map(|&(z, w)| w * f(z)).sum::<f64>();
                }
                LayerQuadrature::Analytic(int) => value += int(&f),
                LayerQuadrature::MonteCarlo => {
                    let pts = self.mc_points(n)?;
                    let k = pts.len() as f64;
                    let (mut s, mut s2) = (0.0, 0.0);
                    for &z in pts {
                        let v = f(z);
                        s += v;
                        s2 += v * v;
                    }
                    let mean = s / k;
                    let sample_var = ((s2 - k * mean * mean) / (k - 1.0)).max(0.0);
                    value += layer.mass * mean;
                    var += layer.mass * layer.mass * sample_var / k;
                }
            }
        }
        Ok(MarkIntegral { value, std_error: var.sqrt() })
    }

    /// Vector-valued version of [`MarkMeasure::integrate`]: `f(z, out)` fills
    /// `out` (length `dim`). Returns the integral and the largest
    /// per-component standard error.
    pub fn integrate_vec(
        &self,
        n_layers: usize,
        dim: usize,
        mut f: impl FnMut(f64, &mut [f64]),
    ) -> Result<(Vec<f64>, f64)> {
        self.check_layers(n_layers)?;
        let mut value = vec![0.0; dim];
        let mut var = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        for (n, layer) in self.layers.iter().take(n_layers).enumerate() {
            if layer.mass == 0.0 {
                continue;
            }
            match &layer.quadrature {
                LayerQuadrature::Atoms(atoms) => {
                    for &(z, w) in atoms {
                        buf.iter_mut().for_each(|b| *b = 0.0);
                        f(z, &mut buf);
                        for (v, b) in value.iter_mut().zip(&buf) {
                            *v += w * b;
                        }
                    }
                }
                LayerQuadrature::Analytic(int) => {
                    let cell = std::cell::RefCell::new((&mut f, vec![0.0; dim]));
                    for (i, v) in value.iter_mut().enumerate() {
                        *v += int(&|z| {
                            let mut guard = cell.borrow_mut();
                            let (g, b) = &mut *guard;
                            b.iter_mut().for_each(|x| *x = 0.0);
                            g(z, b);
                            b[i]
                        });
                    }
                }
                LayerQuadrature::MonteCarlo => {
                    let pts = self.mc_points(n)?;
                    let k = pts.len() as f64;
                    let mut s = vec![0.0; dim];
                    let mut s2 = vec![0.0; dim];
                    for &z in pts {
                        buf.iter_mut().for_each(|b| *b = 0.0);
                        f(z, &mut buf);
                        for i in 0..dim {
                            s[i] += buf[i];
                            s2[i] += buf[i] * buf[i];
                        }
                    }
                    for i in 0..dim {
                        let mean = s[i] / k;
                        let sv = ((s2[i] - k * mean * mean) / (k - 1.0)).max(0.0);
                        value[i] += layer.mass * mean;
                        var[i] += layer.mass * layer.mass * sv / k;
                    }
                }
            }
        }
        let se = var.iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
        Ok((value, se))
    }

    /// Points at which the measure is probed by its quadrature (atoms and
    /// Monte-Carlo samples) for the first `n_layers` layers. Analytic layers
    /// contribute no points.
    pub fn probe_points(&self, n_layers: usize) -> Result<Vec<f64>> {
        self.check_layers(n_layers)?;
        let mut out = Vec::new();
        for (n, layer) in self.layers.iter().take(n_layers).enumerate() {
            match &layer.quadrature {
                LayerQuadrature::Atoms(a) => out.extend(a.iter().map(|&(z, _)| z)),
                LayerQuadrature::MonteCarlo => out.extend_from_slice(self.mc_points(n)?),
                LayerQuadrature::Analytic(_) => {}
            }
        }
        Ok(out)
    }
}

/// `∫_Z f(z) μ(dz)` over all layers of `measure`.
pub fn mark_integral(measure: &MarkMeasure, f: impl Fn(f64) -> f64) -> Result<MarkIntegral> {
    measure.integrate(measure.layers().len(), f)
}
