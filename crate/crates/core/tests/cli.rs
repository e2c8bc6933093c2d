//! The `airgam` binary: subcommands, outputs and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
observations = "data/obs.csv"
stations = "data/stations.csv"
target = "NO2"
seed = 3
features = ["T", "WS", "D"]

[regions.LowerAustria]
lockdown_start = "2020-03-16"
lockdown_end = "2020-04-26"

[[synth.stations]]
region = "LowerAustria"
class_label = "Urban"

[synth.stations.generator]
station_id = "AT 1/x"
start = "2017-12-01"
n_days = 950

[[synth.stations.generator.regimes]]
start = "2020-03-16"
end = "2020-04-26"
multiplier = 0.6
"#;

fn airgam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airgam"))
        .args(args)
        .arg("--config")
        .arg(dir.join("run.toml"))
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = setup(CONFIG);
    for args in [
        vec!["synth"],
        vec!["fit"],
        vec!["validate", "--protocol", "pre-ld"],
        vec!["transfer"],
        vec!["validate", "--protocol", "ld"],
        vec!["reduce"],
        vec!["mix"],
        vec!["scenario"],
    ] {
        let out = airgam(dir.path(), &args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = dir.path().join("out");
    for name in [
        "AT_1_x.model.json",
        "AT_1_x.ld.model.json",
        "AT_1_x.pre-ld.cv.json",
        "AT_1_x.pre-ld.cv.csv",
        "AT_1_x.ld.cv.csv",
        "AT_1_x.reduce.svg",
        "AT_1_x.mix.svg",
        "AT_1_x.alpha.report.csv",
        "reduce.report.json",
        "reduce.report.csv",
        "mix.report.csv",
        "scenario.report.json",
        "scenario.report.csv",
        "manifest.json",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let commands = manifest["commands"].as_object().unwrap();
    assert_eq!(commands.len(), 8);
    let cv = fs::read_to_string(out.join("AT_1_x.ld.cv.csv")).unwrap();
    assert_eq!(cv.lines().count(), 1 + 14);
    let reduce: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reduce.report.json")).unwrap()).unwrap();
    let pct = reduce["stations"][0]["percent_change"].as_f64().unwrap();
    assert!((pct + 40.0).abs() < 5.0, "reduction {pct}");
    assert_eq!(reduce["classes"][0]["subject"], "Urban");
}

#[test]
fn config_errors_exit_2() {
    let dir = setup("target = 3");
    assert_eq!(airgam(dir.path(), &["fit"]).status.code(), Some(2));
    let dir = setup(&CONFIG.replace("\"NO2\"", "\"T\""));
    assert_eq!(airgam(dir.path(), &["fit"]).status.code(), Some(2));
    let dir = setup(CONFIG);
    assert_eq!(airgam(dir.path(), &["fit"]).status.code(), Some(2), "data files absent");
    assert_eq!(airgam(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        airgam(dir.path(), &["validate", "--protocol", "post"]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_upstream_models_exit_3() {
    let dir = setup(CONFIG);
    assert_eq!(airgam(dir.path(), &["synth"]).status.code(), Some(0));
    let out = airgam(dir.path(), &["transfer"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifact"));
    let manifest = fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("missing artifact"));
}

#[test]
fn partial_failure_exits_0() {
    // a second station in a region without a configured lockdown
    let config = format!(
        "{CONFIG}\n[[synth.stations]]\nregion = \"Wuhan\"\nclass_label = \"Urban\"\n\n[synth.stations.generator]\nstation_id = \"NOLD\"\n"
    );
    let dir = setup(&config);
    assert_eq!(airgam(dir.path(), &["synth"]).status.code(), Some(0));
    let out = airgam(dir.path(), &["fit"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NOLD"));
    assert!(dir.path().join("out/AT_1_x.model.json").is_file());
}
