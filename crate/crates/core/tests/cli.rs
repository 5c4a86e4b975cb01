use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TOY: &str = r#"
folds = 3

[generate]
n_blocks = 9
n_schools = 2
n_magnets = 1
n_students = 60
n_choice_zones = 1
seed = 7

[train]
epochs = 50
max_iter = 50

[solver]
n_scenarios = 4
restarts = 1
"#;

fn rwc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwc"))
        .current_dir(dir)
        .args(args)
        .env_remove("RWC_WORKERS")
        .env_remove("RWC_TMPDIR")
        .output()
        .expect("binary runs")
}

fn toy_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), TOY).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_then_optimize_r_writes_a_report() {
    let dir = toy_dir();
    let o = rwc(dir.path(), &["generate", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = rwc(dir.path(), &["optimize", "--config", "run.toml", "--method", "R"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("R,")), "{report}");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest-optimize.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "optimize");
    assert_eq!(manifest["config"]["solver"]["method"], "R");
    assert!(manifest["wall_time_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn rwc_without_a_trained_model_is_a_one_line_config_error() {
    let dir = toy_dir();
    assert!(rwc(dir.path(), &["generate", "--config", "run.toml"]).status.success());
    let o = rwc(dir.path(), &["optimize", "--config", "run.toml", "--method", "RWC"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("model.json"), "{err}");
    assert!(!dir.path().join("out/zoning.csv").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[solver]\nalpah = 0.2\n").unwrap();
    let o = rwc(dir.path(), &["generate", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpah"), "{}", stderr(&o));
}

#[test]
fn flags_override_the_config_file() {
    let dir = toy_dir();
    let o = rwc(
        dir.path(),
        &["optimize", "--config", "run.toml", "--alpha", "0.3", "--seed", "5", "--print-config"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = rwc::pipeline::RunConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.solver.alpha, 0.3);
    assert_eq!(cfg.solver.seed, 5);
    assert_eq!(cfg.generate.n_blocks, 9);
}

#[test]
fn full_toy_pipeline_is_byte_deterministic() {
    let run = || {
        let dir = toy_dir();
        for args in [
            &["generate"][..],
            &["train"],
            &["evaluate"],
            &["scenarios", "--choice-model", "logit", "--table", "table.bin"],
            &["optimize", "--table", "table.bin"],
            &["report", "--table", "table.bin"],
            &["export-map", "--overlay", "opt-out-rate", "--table", "table.bin"][..],
        ] {
            let mut a = args.to_vec();
            a.extend(["--config", "run.toml", "--workers", "2"]);
            let o = rwc(dir.path(), &a);
            assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        }
        dir
    };
    let (a, b) = (run(), run());
    for name in ["report.csv", "enrollment.csv", "zoning.csv", "metrics.json", "attendance_counts.csv", "map.geojson"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}
