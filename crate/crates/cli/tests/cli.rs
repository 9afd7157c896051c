use std::path::Path;
use std::process::{Command, Output};

fn anytime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anytime"))
        .args(args)
        .env_remove("ANYTIME_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn no_subcommand_is_a_usage_error() {
    let out = anytime(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flags_are_rejected() {
    assert_eq!(anytime(&["curves", "--nonsense"]).status.code(), Some(2));
    assert_eq!(anytime(&["coverage", "--family", "poisson"]).status.code(), Some(2));
    assert_eq!(anytime(&["coverage", "--alpha", "1.5"]).status.code(), Some(2));
}

#[test]
fn klcheck_passes_and_prints_json() {
    let out = anytime(&["klcheck", "--trials", "10000", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["passed"], true);
    assert_eq!(report["seed"], 7);
    assert_eq!(report["checks"].as_array().unwrap().len(), 6);
}

#[test]
fn curves_write_stable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let args = |file: &Path| {
        vec![
            "curves".to_string(),
            "--alpha".into(),
            "0.1".into(),
            "--sigma".into(),
            "1".into(),
            "--n-min".into(),
            "16".into(),
            "--n-max".into(),
            "1048576".into(),
            "--points".into(),
            "64".into(),
            "--out".into(),
            file.display().to_string(),
        ]
    };
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for file in [&a, &b] {
        let argv = args(file);
        let out = anytime(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(out.status.code(), Some(0));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("n,lb_loglog,lb_fixed_alpha,upper_width\n"));
    assert_eq!(text.lines().count(), 65);
}

#[test]
fn sandwich_exit_code_follows_ratio_cap() {
    let ok = anytime(&["sandwich", "--n-max", "1073741824", "--points", "40"]);
    assert_eq!(ok.status.code(), Some(0));
    let tight = anytime(&["sandwich", "--n-max", "1073741824", "--points", "40", "--ratio-max", "2"]);
    assert_eq!(tight.status.code(), Some(1));
}

#[test]
fn coverage_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for name in ["one", "two"] {
        let out_dir = dir.path().join(name);
        let out = anytime(&[
            "coverage", "--horizon", "4", "--reps", "1", "--seed", "11", "--threads", "1",
            "--out", out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(["ledger.csv", "failures.csv"].map(|f| std::fs::read(out_dir.join(f)).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn seed_precedence_flag_then_config_then_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "reps = 3\nhorizon = 8\ndepth = 2\n").unwrap();
    let seed_of = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_anytime"));
        cmd.args(["coverage", "--config", cfg.to_str().unwrap()]).args(extra);
        match env {
            Some(v) => cmd.env("ANYTIME_SEED", v),
            None => cmd.env_remove("ANYTIME_SEED"),
        };
        json(&cmd.output().unwrap())["config"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], None), 20_240_917);
    assert_eq!(seed_of(&[], Some("99")), 99);
    assert_eq!(seed_of(&["--seed", "5"], Some("99")), 5);
    std::fs::write(&cfg, "reps = 3\nhorizon = 8\ndepth = 2\nseed = 42\n").unwrap();
    assert_eq!(seed_of(&[], Some("99")), 42);
    assert_eq!(seed_of(&["--seed", "5"], None), 5);
}

#[test]
fn testgame_with_oracle_reports_no_errors() {
    let out = anytime(&["testgame", "--estimator", "oracle", "--depth", "10", "--reps", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["total_cond_err"], 0.0);
    assert_eq!(report["rows"].as_array().unwrap().len(), 10);
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "depth = 40\n").unwrap();
    assert_eq!(anytime(&["testgame", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(anytime(&["testgame", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}
