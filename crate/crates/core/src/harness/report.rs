use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::Result;

/// One measured quantity compared against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), passed: value <= threshold, value, threshold, detail: String::new() }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), passed: value >= threshold, value, threshold, detail: String::new() }
    }

    /// Passes when `lo <= value <= hi`; `threshold` records `hi`.
    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            passed: (lo..=hi).contains(&value),
            value,
            threshold: hi,
            detail: format!("allowed range [{lo}, {hi}]"),
        }
    }

    pub fn flag(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, value: f64::from(u8::from(passed)), threshold: 1.0, detail: detail.into() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Outcome of one acceptance rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub rule_id: String,
    pub description: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl RuleOutcome {
    pub fn new(rule_id: &str, description: &str, checks: Vec<Check>) -> Self {
        RuleOutcome {
            rule_id: rule_id.into(),
            description: description.into(),
            passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Merges checks of another run of the same rule.
    pub fn absorb(&mut self, other: RuleOutcome) {
        self.checks.extend(other.checks);
        self.passed = self.checks.iter().all(|c| c.passed);
    }
}

impl fmt::Display for RuleOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.rule_id, if self.passed { "PASS" } else { "FAIL" }, self.description)?;
        for c in self.failures() {
            write!(f, "\n    {} = {:e} (threshold {:e}) {}", c.name, c.value, c.threshold, c.detail)?;
        }
        Ok(())
    }
}

/// Named ensemble statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStat {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

/// Observed order along one refinement axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub axis: String,
    pub levels: Vec<f64>,
    pub errors: Vec<f64>,
    pub order: Option<f64>,
    pub status: String,
}

/// Everything a verification run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub scenario: String,
    pub seed: u64,
    pub rules: Vec<RuleOutcome>,
    /// Largest `|residual| / (1 + Σ|terms|)` per replica, per ledger family.
    pub replica_residuals: Vec<(String, Vec<f64>)>,
    pub ensembles: Vec<EnsembleStat>,
    pub orders: Vec<OrderRecord>,
    pub conditions: Vec<String>,
    pub artifacts: Vec<PathBuf>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn new(scenario: &str, seed: u64) -> Self {
        VerificationReport {
            scenario: scenario.into(),
            seed,
            rules: Vec::new(),
            replica_residuals: Vec::new(),
            ensembles: Vec::new(),
            orders: Vec::new(),
            conditions: Vec::new(),
            artifacts: Vec::new(),
            passed: true,
        }
    }

    pub fn push_rule(&mut self, rule: RuleOutcome) {
        match self.rules.iter_mut().find(|r| r.rule_id == rule.rule_id) {
            Some(existing) => existing.absorb(rule),
            None => self.rules.push(rule),
        }
        self.passed = self.rules.iter().all(|r| r.passed);
    }

    pub fn merge(&mut self, other: VerificationReport) {
        for r in other.rules {
            self.push_rule(r);
        }
        self.replica_residuals.extend(other.replica_residuals);
        self.ensembles.extend(other.ensembles);
        self.orders.extend(other.orders);
        self.conditions.extend(other.conditions);
        self.artifacts.extend(other.artifacts);
    }

    pub fn rule(&self, id: &str) -> Option<&RuleOutcome> {
        self.rules.iter().find(|r| r.rule_id == id)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} (seed {})", self.scenario, self.seed)?;
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        for o in &self.orders {
            match o.order {
                Some(q) => writeln!(f, "order[{}] = {q:.3} ({})", o.axis, o.status)?,
                None => writeln!(f, "order[{}] {}", o.axis, o.status)?,
            }
        }
        write!(f, "{}", if self.passed { "all rules passed" } else { "verification FAILED" })
    }
}
