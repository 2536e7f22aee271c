use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_spirofair");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Synthetic cohort, group tables, and a pooled table interpolated at 0.62.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let spec = fixture("small_cohort.toml");
    ok(dir.path(), &["synth", "--spec", spec.to_str().unwrap(), "--out", "cohort.csv", "--tables-out", "tables"]);
    ok(dir.path(), &["pool-tables", "--tables", "tables", "--between", "Black,White", "--phi", "0.62", "--out", "tables"]);
    dir
}

#[test]
fn estimate_phi_recovers_interpolation_fraction() {
    let dir = workspace();
    let out = ok(dir.path(), &["--canonical", "estimate-phi", "--cohort", "cohort.csv", "--tables", "tables"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let estimates = v["result"]["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 2);
    for e in estimates {
        assert!((e["phi_hat"].as_f64().unwrap() - 0.62).abs() < 1e-3, "{e}");
    }
    assert!(v.get("provenance").is_none());
}

#[test]
fn provenance_header_on_every_output() {
    let dir = workspace();
    let out = ok(dir.path(), &["--seed", "3", "--format", "csv", "estimate-phi", "--cohort", "cohort.csv", "--tables", "tables"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# tool=spirofair "));
    assert!(text.contains("# config_sha256="));
    assert!(text.contains("# seed=3"));
    let cohort = std::fs::read_to_string(dir.path().join("cohort.csv")).unwrap();
    assert!(cohort.contains("# seed=11"));
    let table = std::fs::read_to_string(dir.path().join("tables/global_male.csv")).unwrap();
    assert!(table.contains("config_sha256"));
}

#[test]
fn exit_codes() {
    let dir = workspace();
    let code = |args: &[&str]| run(dir.path(), args).status.code().unwrap();
    assert_eq!(code(&["score", "--no-such-flag"]), 2);
    assert_eq!(code(&["audit", "--cohort", "cohort.csv", "--tables", "tables", "--outcome", "death"]), 2);
    assert_eq!(code(&["--seed", "1", "evaluate", "--cohort", "cohort.csv", "--tables", "tables", "--outcomes", "death", "--replicates", "10"]), 2);
    assert_eq!(code(&["score", "--cohort", "missing.csv", "--tables", "tables"]), 2);
    assert_eq!(code(&["--threads", "0", "score", "--cohort", "cohort.csv", "--tables", "tables"]), 2);
    // Config errors win over data problems: the broken cohort is never read.
    std::fs::write(dir.path().join("broken.csv"), "not,a,cohort\n").unwrap();
    assert_eq!(code(&["audit", "--cohort", "broken.csv", "--tables", "tables", "--outcome", "death"]), 2);
    assert_eq!(code(&["--seed", "1", "audit", "--cohort", "broken.csv", "--tables", "tables", "--outcome", "death"]), 3);
    assert_eq!(
        code(&["estimate-phi", "--cohort", "cohort.csv", "--tables", "tables", "--privileged", "Black", "--groups", "Black"]),
        4
    );
    assert_eq!(code(&["score", "--cohort", "cohort.csv", "--tables", "tables"]), 0);
}

#[test]
fn canonical_outputs_do_not_depend_on_threads() {
    let dir = workspace();
    let spec = fixture("small_cohort.toml");
    let spec = spec.to_str().unwrap();
    for t in ["1", "4"] {
        let common = ["--canonical", "--seed", "21", "--threads", t];
        let a = format!("audit{t}.json");
        let e = format!("eval{t}.csv");
        let s = format!("synth{t}.csv");
        let audit = ["audit", "--cohort", "cohort.csv", "--tables", "tables", "--outcome", "death", "--replicates", "100", "--out", &a];
        ok(dir.path(), &[&common[..], &audit].concat());
        let eval = ["evaluate", "--cohort", "cohort.csv", "--tables", "tables", "--scores", "gli2012,raw", "--outcomes", "death", "--replicates", "100", "--format", "csv", "--out", &e];
        ok(dir.path(), &[&common[..], &eval].concat());
        ok(dir.path(), &[&common[..], &["synth", "--spec", spec, "--out", &s]].concat());
    }
    for (a, b) in [("audit1.json", "audit4.json"), ("eval1.csv", "eval4.csv"), ("synth1.csv", "synth4.csv")] {
        let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
        assert_eq!(read(a), read(b), "{a} vs {b}");
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = workspace();
    std::fs::write(
        dir.path().join("run.toml"),
        "seed = 4\ncanonical = true\nformat = \"csv\"\n\n[evaluate]\ncohort = \"cohort.csv\"\ntables = \"tables\"\n\
         scores = \"gli2012,raw\"\noutcomes = \"death\"\nreplicates = 100\n",
    )
    .unwrap();
    let from_file = ok(dir.path(), &["--config", "run.toml", "evaluate"]).stdout;
    let text = String::from_utf8(from_file.clone()).unwrap();
    assert!(text.starts_with("outcome,orientation,gli2012,raw\n"), "{text}");

    // Same run fully on the command line.
    let flags = ok(
        dir.path(),
        &["--seed", "4", "--canonical", "--format", "csv", "evaluate", "--cohort", "cohort.csv", "--tables", "tables",
          "--scores", "gli2012,raw", "--outcomes", "death", "--replicates", "100"],
    )
    .stdout;
    assert_eq!(from_file, flags);

    let overridden = ok(dir.path(), &["--config", "run.toml", "--format", "json", "evaluate", "--scores", "raw"]).stdout;
    let v: serde_json::Value = serde_json::from_slice(&overridden).unwrap();
    assert_eq!(v["result"]["cells"].as_array().unwrap().len(), 1);

    // Paths in the config resolve against the config's directory.
    let elsewhere = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    ok(elsewhere.path(), &["--config", cfg.to_str().unwrap(), "evaluate"]);

    std::fs::write(dir.path().join("bad.toml"), "[evaluate]\nno-such-key = 1\n").unwrap();
    assert_eq!(run(dir.path(), &["--config", "bad.toml", "evaluate"]).status.code(), Some(2));
}

#[test]
fn synth_refuses_json_and_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), "[[groups]]\nlabel = \"White\"\nn = 10\n").unwrap();
    assert_eq!(run(dir.path(), &["synth", "--spec", "s.toml"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--seed", "1", "--format", "json", "synth", "--spec", "s.toml"]).status.code(), Some(2));
    let out = ok(dir.path(), &["--seed", "1", "--canonical", "synth", "--spec", "s.toml"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 11);
}
