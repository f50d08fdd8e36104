use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Built-in verification scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    PureJumpExact,
    LedgerEquivalence,
    Example1,
    CompensatedPoissonP2,
    DiffusionOrder,
    /// Both field-ledger parts below.
    LpFormula,
    LpJumpP2,
    LpFullP4,
    Mollifier,
    Operators,
    /// Every rule.
    Acceptance,
}

impl Scenario {
    pub const ALL: [Scenario; 11] = [
        Scenario::PureJumpExact,
        Scenario::LedgerEquivalence,
        Scenario::Example1,
        Scenario::CompensatedPoissonP2,
        Scenario::DiffusionOrder,
        Scenario::LpFormula,
        Scenario::LpJumpP2,
        Scenario::LpFullP4,
        Scenario::Mollifier,
        Scenario::Operators,
        Scenario::Acceptance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::PureJumpExact => "pure-jump-exact",
            Scenario::LedgerEquivalence => "ledger-equivalence",
            Scenario::Example1 => "example1",
            Scenario::CompensatedPoissonP2 => "compensated-poisson-p2",
            Scenario::DiffusionOrder => "diffusion-order",
            Scenario::LpFormula => "lp-formula",
            Scenario::LpJumpP2 => "lp-jump-p2",
            Scenario::LpFullP4 => "lp-full-p4",
            Scenario::Mollifier => "mollifier",
            Scenario::Operators => "operators",
            Scenario::Acceptance => "acceptance",
        }
    }

    /// Acceptance rule the scenario reports under.
    pub fn rule_id(self) -> Option<&'static str> {
        match self {
            Scenario::PureJumpExact => Some("AC1"),
            Scenario::LedgerEquivalence => Some("AC2"),
            Scenario::Example1 => Some("AC3"),
            Scenario::CompensatedPoissonP2 => Some("AC4"),
            Scenario::DiffusionOrder => Some("AC5"),
            Scenario::LpFormula | Scenario::LpJumpP2 | Scenario::LpFullP4 => Some("AC6"),
            Scenario::Mollifier => Some("AC7"),
            Scenario::Operators => Some("AC8"),
            Scenario::Acceptance => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .iter()
            .copied()
            .find(|sc| sc.name() == s || (s == "all" && *sc == Scenario::Acceptance))
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
                Error::config(format!("unknown scenario '{s}' (known: {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Pathwise residual bound, relative to `1 + Σ|terms|`.
    pub residual: f64,
    /// Absolute part of the ledger-equivalence bound.
    pub equivalence: f64,
    /// Standard errors allowed in statistical checks.
    pub se_multiplier: f64,
    pub order_min: f64,
    pub order_max: f64,
    /// Bound for relative agreement checks.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Refinement {
    /// Time steps.
    pub dt: Vec<f64>,
    /// Cells per axis.
    pub cells: Vec<usize>,
    /// Mollifier radii.
    pub eps: Vec<f64>,
    /// Truncation levels `δ`.
    pub delta: Vec<f64>,
}

/// A verification run. Config files give `scenario` and may override any
/// other field; unset fields keep the scenario defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub replicas: usize,
    pub horizon: f64,
    pub steps: usize,
    /// Mark layers included in the jump simulation.
    pub layers: usize,
    /// Monte-Carlo points per mark layer where no exact rule exists.
    pub mc_samples: usize,
    /// Random samples for property checks.
    pub samples: usize,
    pub tolerances: Tolerances,
    pub refinement: Refinement,
}

impl ExperimentConfig {
    pub fn builtin(scenario: Scenario) -> Self {
        let mut cfg = ExperimentConfig {
            scenario,
            seed: 20_240_601,
            replicas: 100,
            horizon: 1.0,
            steps: 64,
            layers: 1,
            mc_samples: 256,
            samples: 100_000,
            tolerances: Tolerances {
                residual: 1e-10,
                equivalence: 1e-9,
                se_multiplier: 4.0,
                order_min: 0.35,
                order_max: 1.2,
                relative: 1e-12,
            },
            refinement: Refinement {
                dt: (8..=11).map(|k| 2f64.powi(-k)).collect(),
                cells: vec![32, 64, 128],
                eps: vec![0.4, 0.2, 0.1],
                delta: (1..=6).map(|k| 10f64.powi(-k)).collect(),
            },
        };
        match scenario {
            Scenario::LedgerEquivalence => cfg.steps = 128,
            Scenario::Example1 => cfg.replicas = 20,
            Scenario::CompensatedPoissonP2 => {
                cfg.replicas = 10_000;
                cfg.steps = 16;
            }
            Scenario::DiffusionOrder => cfg.replicas = 256,
            Scenario::LpFormula | Scenario::LpJumpP2 | Scenario::LpFullP4 => {
                cfg.replicas = 32;
                cfg.horizon = 0.25;
                cfg.steps = 32;
                cfg.tolerances.residual = 1e-9;
                cfg.tolerances.order_min = 1.5;
                cfg.tolerances.order_max = 2.5;
            }
            Scenario::Mollifier => {
                cfg.replicas = 100;
                cfg.tolerances.order_min = 1.8;
                cfg.tolerances.order_max = 2.2;
            }
            Scenario::Operators => cfg.tolerances.relative = 1e-10,
            _ => {}
        }
        cfg
    }

    /// Parses TOML and lays it over the defaults of its scenario.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        let scenario = match user.get("scenario") {
            Some(toml::Value::String(s)) => s.parse::<Scenario>()?,
            Some(_) => return Err(Error::config("'scenario' must be a string")),
            None => return Err(Error::config("config is missing 'scenario'")),
        };
        let base = toml::Table::try_from(ExperimentConfig::builtin(scenario)).map_err(|e| Error::config(e.to_string()))?;
        let mut merged = base;
        merge(&mut merged, user);
        let cfg: ExperimentConfig =
            toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [
            ("residual", t.residual),
            ("equivalence", t.equivalence),
            ("se_multiplier", t.se_multiplier),
            ("relative", t.relative),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("tolerance '{name}' must be positive, got {v}")));
            }
        }
        if !(t.order_min < t.order_max) {
            return Err(Error::config("order_min must be below order_max"));
        }
        if self.replicas == 0 {
            return Err(Error::config("replicas must be at least 1"));
        }
        if self.steps == 0 || !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("need a positive horizon and at least one step"));
        }
        let r = &self.refinement;
        let needs = match self.scenario {
            Scenario::DiffusionOrder => vec![("dt", r.dt.len())],
            Scenario::LpFormula | Scenario::LpFullP4 => vec![("cells", r.cells.len())],
            Scenario::Mollifier => vec![("eps", r.eps.len())],
            Scenario::Acceptance => vec![("dt", r.dt.len()), ("cells", r.cells.len()), ("eps", r.eps.len())],
            _ => Vec::new(),
        };
        for (axis, n) in needs {
            if n < 3 {
                return Err(Error::config(format!("refinement '{axis}' needs at least 3 levels, got {n}")));
            }
        }
        if r.dt.iter().chain(&r.eps).chain(&r.delta).any(|v| !(*v > 0.0)) {
            return Err(Error::config("refinement levels must be positive"));
        }
        if r.delta.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("truncation levels must decrease"));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_merge_onto_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "scenario = \"diffusion-order\"\nreplicas = 8\n[tolerances]\norder_min = 0.4\n",
        )
        .unwrap();
        assert_eq!(cfg.replicas, 8);
        assert_eq!(cfg.tolerances.order_min, 0.4);
        assert_eq!(cfg.tolerances.order_max, 1.2);
        assert_eq!(cfg.refinement.dt.len(), 4);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "scenario = \"nope\"",
            "replicas = 3",
            "scenario = \"example1\"\nunknown = 1",
            "scenario = \"example1\"\n[tolerances]\nresidual = -1.0",
            "scenario = \"diffusion-order\"\n[refinement]\ndt = [0.1, 0.05]",
            "scenario = \"example1\"\nreplicas = 0",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn builtin_round_trips() {
        for sc in Scenario::ALL {
            let cfg = ExperimentConfig::builtin(sc);
            cfg.validate().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
    }
}
