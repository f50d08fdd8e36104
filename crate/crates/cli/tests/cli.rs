use std::path::Path;
use std::process::{Command, Output};

fn itolevy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itolevy")).args(args).env_remove("ITOLEVY_OUTPUT").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_pure_jump_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pure_jump.cfg");
    std::fs::write(&cfg, "scenario = \"pure-jump-exact\"\nreplicas = 20\n").unwrap();
    let out = dir.path().join("out");
    let o = itolevy(&["verify", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS AC1"));
    let report = out.join("report.json");
    assert!(report.exists());
    assert!(out.join("pure-jump-exact").join("residuals.csv").exists());

    let again = itolevy(&["report", "--input", report.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
    assert!(stdout(&again).contains("PASS AC1"));
}

#[test]
fn example1_table_grows_by_ln2() {
    let o = itolevy(&["example1", "--t", "1", "--delta-levels", "6"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let steps: Vec<f64> = text
        .lines()
        .skip(2)
        .take(5)
        .map(|l| l.split_whitespace().last().unwrap().parse().unwrap())
        .collect();
    assert_eq!(steps.len(), 5);
    assert!(steps.iter().all(|s| (s - std::f64::consts::LN_2).abs() < 1e-8), "{text}");
}

#[test]
fn missing_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = itolevy(&["verify", "--config", "/definitely/missing.toml", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn bad_inputs_are_config_errors() {
    assert_eq!(itolevy(&["verify", "--scenario", "nope"]).status.code(), Some(2));
    assert_eq!(itolevy(&["verify", "--unknown-flag"]).status.code(), Some(2));
    assert_eq!(itolevy(&["study", "--axis", "sideways"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "scenario = \"example1\"\n[tolerances]\nresidual = 0.0\n").unwrap();
    assert_eq!(itolevy(&["verify", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn failing_verification_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    std::fs::write(&cfg, "scenario = \"pure-jump-exact\"\nreplicas = 5\n[tolerances]\nresidual = 1e-30\n").unwrap();
    let o = itolevy(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL AC1"));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env_out");
    let o = Command::new(env!("CARGO_BIN_EXE_itolevy"))
        .args(["simulate", "--scenario", "example1", "--seed", "3"])
        .env("ITOLEVY_OUTPUT", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let sub = out.join("example1");
    for f in ["path.csv", "jumps.csv", "ledger_natural.csv", "ledger_standard.refused.txt"] {
        assert!(sub.join(f).exists(), "{f}");
    }
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = itolevy(&[
            "verify",
            "--scenario",
            "example1",
            "--seed",
            "9",
            "--threads",
            "2",
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read_to_string(out.join("example1").join("ledger_natural.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
    assert!(Path::new(&dir.path().join("a").join("report.json")).exists());
}

#[test]
fn study_on_eps_axis() {
    let o = itolevy(&["study", "--axis", "eps"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("order[eps]")).unwrap();
    let q: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((q - 2.0).abs() < 0.2, "{text}");
}
