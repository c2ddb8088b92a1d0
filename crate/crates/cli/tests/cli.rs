use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_holoreg"))
}

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("run holoreg")
}

fn run_config(command: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut c = bin();
    c.arg(command).arg("--config").arg(cfg).arg("--out").arg(out).args(extra);
    c.output().expect("run holoreg")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn validate_report(out: &Path) {
    let o = run(&["validate", "--report", out.join("report.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_config_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "command = \"simulate\"\n[device\nkappa = 3\n");
    let out = dir.path().join("out");
    let o = run_config("simulate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_units_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.cfg", "command = \"overlap\"\n[device]\nkappa = 250000.0\n");
    let out = dir.path().join("out");
    assert_eq!(run_config("overlap", &cfg, &out, &[]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn empty_mode_list_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e.cfg", "command = \"overlap\"\n[layout]\ncount = 0\n");
    let out = dir.path().join("out");
    assert_eq!(run_config("overlap", &cfg, &out, &[]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn single_point_sweep_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.cfg",
        "command = \"sweep\"\n[sweep]\nexperiment = \"rabi_vs_n\"\ngrid = [64.0]\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run_config("sweep", &cfg, &out, &[]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn subcommand_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_config("sweep", &example("overlap.cfg"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn truncation_overflow_exits_1() {
    // Two photons in a two-level truncation overflow on the first swap.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "t.cfg",
        r#"
command = "simulate"
[device]
kappa = "0 Hz"
[engine]
kind = "register"
truncation = 2
initial = "cavity_one"
[program]
qubits = { a = 1 }
ops = [ { op = "write", qubit = "a", state = { theta = 3.141592653589793, phi = 0.0 } } ]
"#,
    );
    let out = dir.path().join("out");
    let o = run_config("simulate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn stride3_five_modes_give_identity_gram() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_config("overlap", &example("overlap.cfg"), &out, &["--format", "tabular"]);
    assert!(o.status.success());
    let r = report(&out);
    let layout = &r["results"]["data"]["layout"];
    assert_eq!(layout["windings"].as_array().unwrap().len(), 5);
    assert!(layout["max_offdiagonal"].as_f64().unwrap() < 1e-12);
    let table = r["results"]["data"]["table"].as_array().unwrap();
    let m2 = table.iter().find(|row| row["delta_w"] == 2.0).unwrap();
    assert!((m2["discrete_re"].as_f64().unwrap() + 0.5).abs() < 1e-6);
    assert!(out.join("overlap.tsv").exists() && out.join("gram.tsv").exists());
    validate_report(&out);
}

#[test]
fn store_retrieve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_config("simulate", &example("store-retrieve.cfg"), &out, &[]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("round-trip fidelity"));
    let f = report(&out)["results"]["data"]["round_trip_fidelity"].as_f64().unwrap();
    assert!(f >= 0.999, "{f}");
    validate_report(&out);
}

#[test]
fn bell_pair_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(run_config("simulate", &example("bell-pair.cfg"), &out, &[]).status.success());
    let f = report(&out)["results"]["data"]["bell_fidelity"].as_f64().unwrap();
    assert!(f >= 0.995, "{f}");
    validate_report(&out);
}

#[test]
fn rabi_sweep_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(run_config("sweep", &example("rabi-vs-N.cfg"), &out, &["--jobs", "2"]).status.success());
    let slope = report(&out)["results"]["data"]["fit"]["slope"].as_f64().unwrap();
    assert!((slope - 0.5).abs() <= 0.01, "{slope}");
    validate_report(&out);
}

#[test]
fn echo_sweep_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(run_config("sweep", &example("echo-eps.cfg"), &out, &[]).status.success());
    let slope = report(&out)["results"]["data"]["fit"]["slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() <= 0.2, "{slope}");
    validate_report(&out);
}

#[test]
fn every_bundled_config_validates_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(example("")).unwrap() {
        let cfg = entry.unwrap().path();
        let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{}", cfg.display());
        let command = String::from_utf8_lossy(&o.stdout)
            .split('`')
            .nth(1)
            .unwrap()
            .to_string();
        let out = dir.path().join(cfg.file_stem().unwrap());
        let o = run_config(&command, &cfg, &out, &["--format", "tabular"]);
        assert!(o.status.success(), "{}: {}", cfg.display(), String::from_utf8_lossy(&o.stderr));
        validate_report(&out);
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(run_config("simulate", &example("bell-pair.cfg"), &out, &["--seed", "99"]).status.success());
    assert_eq!(report(&out)["config"]["seed"], 99);
}

#[test]
fn stdout_report_without_out_dir() {
    let o = run(&["overlap", "--config", example("overlap.cfg").to_str().unwrap()]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn tampered_report_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(run_config("simulate", &example("bell-pair.cfg"), &out, &[]).status.success());
    let mut v = report(&out);
    v["schema_version"] = 7.into();
    v["surprise"] = true.into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    assert_eq!(run(&["validate", "--report", bad.to_str().unwrap()]).status.code(), Some(2));
}
