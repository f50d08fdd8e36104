use std::process::ExitCode;
use std::time::Instant;

use itolevy::harness::{run_verification, ExperimentConfig, Scenario};

const CRITERIA: [(&str, Scenario); 8] = [
    ("AC1", Scenario::PureJumpExact),
    ("AC2", Scenario::LedgerEquivalence),
    ("AC3", Scenario::Example1),
    ("AC4", Scenario::CompensatedPoissonP2),
    ("AC5", Scenario::DiffusionOrder),
    ("AC6", Scenario::LpFormula),
    ("AC7", Scenario::Mollifier),
    ("AC8", Scenario::Operators),
];

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for (id, scenario) in CRITERIA {
        let start = Instant::now();
        let report = run_verification(&ExperimentConfig::builtin(scenario), None).expect("scenario runs");
        let rule = report.rule(id).expect("rule reported");
        println!("{} {id} {} ({:.1}s)", if rule.passed { "PASS" } else { "FAIL" }, rule.description, start.elapsed().as_secs_f64());
        for c in &rule.checks {
            println!("    [{}] {}: {:e} (threshold {:e}) {}", if c.passed { "ok" } else { "x" }, c.name, c.value, c.threshold, c.detail);
        }
        if !rule.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: {} of {} criteria passed", CRITERIA.len(), CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
