use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use itolevy::harness::{
    convergence_study, example1_experiment, run_verification, simulate_scenario, ExperimentConfig, Scenario,
    StudyAxis, VerificationReport,
};
use itolevy::Error;

#[derive(Parser)]
#[command(name = "itolevy", version, about = "Jump-diffusion simulation and pathwise checks of Itô formulas")]
struct Cli {
    /// TOML experiment config; fields not given keep the scenario defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in scenario, used when no config file is given.
    #[arg(long, global = true)]
    scenario: Option<String>,

    /// Directory for reports and CSV artifacts (created if absent).
    #[arg(long, global = true, env = "ITOLEVY_OUTPUT")]
    output: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Caps replica parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Prints every check, not only rule lines.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulates one path of a scenario and writes path, jump and ledger CSVs.
    Simulate,
    /// Runs a verification scenario (default: every acceptance rule).
    Verify,
    /// Tabulates the three pieces of the divergent jump integrand.
    Example1 {
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Number of halvings `δ = t·2^{-k}`, `k = 1..N`.
        #[arg(long, default_value_t = 6)]
        delta_levels: u32,
    },
    /// Runs the field-ledger scenarios.
    LpVerify,
    /// Observed convergence order along one refinement axis.
    Study {
        #[arg(long)]
        axis: String,
    },
    /// Prints a saved report and exits with its verdict.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli, default: Scenario) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (&cli.config, &cli.scenario) {
        (Some(path), None) => ExperimentConfig::from_file(path)?,
        (Some(_), Some(_)) => return Err(Failure::Config("give either --config or --scenario, not both".into())),
        (None, Some(name)) => ExperimentConfig::builtin(name.parse()?),
        (None, None) => ExperimentConfig::builtin(default),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cli: &Cli) -> Result<Option<&Path>, Failure> {
    match &cli.output {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("cannot create {}: {e}", dir.display())))?;
            Ok(Some(dir.as_path()))
        }
        None => Ok(None),
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Run(e.to_string()))?;
    }
    match &cli.command {
        Command::Verify => verify(&cli, Scenario::Acceptance),
        Command::LpVerify => verify(&cli, Scenario::LpFormula),
        Command::Simulate => {
            let cfg = load_config(&cli, Scenario::PureJumpExact)?;
            let dir = output_dir(&cli)?.unwrap_or(Path::new("."));
            for path in simulate_scenario(&cfg, dir)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Example1 { t, delta_levels } => {
            if *delta_levels == 0 {
                return Err(Failure::Config("--delta-levels must be at least 1".into()));
            }
            let deltas: Vec<f64> = (1..=*delta_levels).map(|k| t * 0.5f64.powi(k as i32)).collect();
            let table = example1_experiment(&deltas, *t, None)?;
            println!("{:>12} {:>14} {:>14} {:>14} {:>14}", "delta", "c1", "c2", "c3", "c3 step");
            for (i, r) in table.rows.iter().enumerate() {
                let step = if i == 0 { String::new() } else { format!("{:.10}", table.c3_increments[i - 1]) };
                println!("{:>12.6e} {:>14.10} {:>14.10} {:>14.10} {:>14}", r.delta, r.c1, r.c2, r.c3, step);
            }
            let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.10}"));
            println!("extrapolated c1 {} (exact {:.10})", show(table.c1_limit), 2.0 * t.sqrt());
            println!("extrapolated c2 {} (exact {:.10})", show(table.c2_limit), 4.0 * t.powf(0.25));
            println!("c3 grows like ln(t/δ): no finite limit");
            if let Some(dir) = output_dir(&cli)? {
                let path = dir.join("example1.csv");
                table.write_csv(std::fs::File::create(&path).map_err(Error::from)?)?;
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Study { axis } => {
            let axis: StudyAxis = axis.parse()?;
            let default = match axis {
                StudyAxis::Dx => Scenario::LpFullP4,
                StudyAxis::Eps => Scenario::Mollifier,
                _ => Scenario::DiffusionOrder,
            };
            let cfg = load_config(&cli, default)?;
            let rec = convergence_study(&cfg, axis)?;
            for (h, e) in rec.levels.iter().zip(&rec.errors) {
                println!("{h:>12.6e} {e:>14.6e}");
            }
            match rec.order {
                Some(q) => println!("order[{}] = {q:.3} ({})", rec.axis, rec.status),
                None => println!("order[{}] {}", rec.axis, rec.status),
            }
            if let Some(dir) = output_dir(&cli)? {
                let path = dir.join(format!("study_{}.json", rec.axis));
                let text = serde_json::to_string_pretty(&rec).map_err(Error::from)?;
                std::fs::write(&path, text).map_err(Error::from)?;
            }
            Ok(true)
        }
        Command::Report { input } => {
            let report = VerificationReport::read_json(input)?;
            print_report(&report, cli.verbose);
            Ok(report.passed)
        }
    }
}

fn verify(cli: &Cli, default: Scenario) -> Result<bool, Failure> {
    let cfg = load_config(cli, default)?;
    let dir = output_dir(cli)?;
    let mut report = run_verification(&cfg, dir)?;
    if let Some(dir) = dir {
        let path = dir.join("report.json");
        report.artifacts.push(path.clone());
        report.write_json(&path)?;
    }
    print_report(&report, cli.verbose);
    Ok(report.passed)
}

fn print_report(report: &VerificationReport, verbose: u8) {
    println!("scenario {} (seed {})", report.scenario, report.seed);
    for rule in &report.rules {
        println!("{} {} {}", if rule.passed { "PASS" } else { "FAIL" }, rule.rule_id, rule.description);
        for c in &rule.checks {
            if verbose > 0 || !c.passed {
                let mark = if c.passed { "ok" } else { "FAILED" };
                println!("    [{mark}] {}: {:e} (threshold {:e}) {}", c.name, c.value, c.threshold, c.detail);
            }
        }
    }
    for o in &report.orders {
        match o.order {
            Some(q) => println!("order[{}] = {q:.3} ({})", o.axis, o.status),
            None => println!("order[{}] {}", o.axis, o.status),
        }
    }
    if verbose > 1 {
        for line in &report.conditions {
            println!("{line}");
        }
        for a in &report.artifacts {
            println!("artifact {}", a.display());
        }
    }
    println!("{}", if report.passed { "all rules passed" } else { "verification FAILED" });
}
