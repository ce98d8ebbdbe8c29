use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const FAT2_MODEL: &str = "[model]\ne = [[2]]\nc = [[0.6]]\nforcing = [{ k = [1], cos = [0.1] }]\n";
const ZERO_MODEL: &str = "[model]\ne = [[2]]\nc = [[0.6]]\n";

fn solab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_solab")).args(args).output().expect("spawn solab");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> (i32, String, String) {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    solab(&args)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// File name → sha256 from the manifest.
fn hashes(out: &Path) -> BTreeMap<String, String> {
    let m = read_json(&out.join("manifest.json"));
    m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["path"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect()
}

fn small_density(model: &str) -> String {
    format!("{model}\n[density]\nresolution = [16]\neigenvalues = 0\nmc = {{ n_orbits = 8, burn_in = 100, orbit_len = 2000 }}\n")
}

#[test]
fn unknown_key_is_a_schema_error_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &format!("{FAT2_MODEL}\n[density]\nresolutoin = [8]\n"));
    let (code, _, err) = run("density", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("density.resolutoin"), "{err}");
}

#[test]
fn invalid_model_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[model]\ne = [[2]]\nc = [[1.5]]\n");
    let (code, _, err) = run("certify", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("model.c"), "{err}");
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run("certify", &dir.path().join("nope.toml"), &dir.path().join("out"), &[]);
    assert_eq!(code, 1);
}

#[test]
fn certify_fat2_reports_margin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fat2.toml", &format!("{FAT2_MODEL}\n[certify]\nq = 3\np_list = [1]\n"));
    let out = dir.path().join("out");
    let (code, _, err) = run("certify", &cfg, &out, &[]);
    assert!(code == 0 || code == 5, "{err}");
    let summary = read_json(&out.join("certify.json"));
    assert!(summary["margin"].is_f64());
    assert!(out.join("transversality.json").exists());
    assert!(out.join("conditions.json").exists());
}

#[test]
fn certify_zero_forcing_is_not_certified_with_trivial_tau() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.toml", &format!("{ZERO_MODEL}\n[certify]\nq = 3\np_list = [1, 2]\n"));
    let out = dir.path().join("out");
    let (code, _, _) = run("certify", &cfg, &out, &[]);
    assert_eq!(code, 5);
    let summary = read_json(&out.join("certify.json"));
    assert_eq!(summary["tau_upper"], 8);
    assert_eq!(summary["trivial_bound"], 8);
    assert_eq!(summary["certified"], false);
}

#[test]
fn volume_clause_failure_refuses_before_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", &format!("{FAT2_MODEL}\n[certify]\ns = 0.2\n"));
    let out = dir.path().join("out");
    let (code, _, _) = run("certify", &cfg, &out, &[]);
    assert_eq!(code, 5);
    let summary = read_json(&out.join("certify.json"));
    assert_eq!(summary["volume_clause"], false);
    assert!(summary["tau_upper"].is_null());
    assert!(!out.join("transversality.json").exists());
}

#[test]
fn exhausted_budget_exits_with_budget_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", &format!("{FAT2_MODEL}\n[certify]\nq = 3\np_list = [1]\nmax_triples = 1\n"));
    let out = dir.path().join("out");
    let (code, _, _) = run("certify", &cfg, &out, &[]);
    assert_eq!(code, 3);
    assert_eq!(read_json(&out.join("certify.json"))["budget_limited"], true);
}

#[test]
fn boundary_guard_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    // K₀ barely above ‖f‖/(1 − ‖C‖): the attractor reaches the outer cells
    let cfg = write_config(
        dir.path(),
        "g.toml",
        &format!("{FAT2_MODEL}trap_margin = 1e-6\ntrap_floor = 0.0\n\n[sobolev]\nresolution = [16]\niterations = 4\nplateau_start = 2\n"),
    );
    let (code, _, err) = run("sobolev", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 4, "{err}");
}

#[test]
fn density_writes_binary_with_header_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.toml", &small_density(FAT2_MODEL));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("density", &cfg, &a, &["--seed", "3"]).0, 0);
    assert_eq!(run("density", &cfg, &b, &["--seed", "3"]).0, 0);
    assert_eq!(hashes(&a), hashes(&b));
    let header = read_json(&a.join("ulam.json"));
    assert_eq!(header["dims"], serde_json::json!([16, 16]));
    let bytes = std::fs::read(a.join("ulam.bin")).unwrap();
    assert_eq!(bytes.len(), 16 * 16 * 8);
    let total: f64 = bytes.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).sum();
    assert!((total - 1.0).abs() < 1e-10);
    // another seed changes the Monte-Carlo histogram only
    let c = dir.path().join("c");
    run("density", &cfg, &c, &["--seed", "4"]);
    let (ha, hc) = (hashes(&a), hashes(&c));
    assert_eq!(ha["ulam.bin"], hc["ulam.bin"]);
    assert_ne!(ha["mc.bin"], hc["mc.bin"]);
}

#[test]
fn manifest_inventory_matches_disk_and_drops_stale_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let dcfg = write_config(dir.path(), "d.toml", &small_density(FAT2_MODEL));
    run("density", &dcfg, &out, &[]);
    let ccfg = write_config(dir.path(), "c.toml", &format!("{FAT2_MODEL}\n[certify]\nq = 2\np_list = [1]\n"));
    run("certify", &ccfg, &out, &[]);
    let listed: Vec<String> = hashes(&out).into_keys().collect();
    let mut on_disk: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["command"], "certify");
    assert!(m["removed_stale"].as_array().unwrap().iter().any(|v| v == "ulam.bin"));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(m["config"]["certify"]["q"] == 2);
}

#[test]
fn zero_amplitude_scan_row_matches_zero_forcing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        &format!("{FAT2_MODEL}\n[scan]\namplitudes = [0.0, 0.1]\nseeds = [0, 1]\nq = 2\ndepths = [1]\n"),
    );
    let out = dir.path().join("out");
    assert_eq!(run("scan", &cfg, &out, &[]).0, 0);
    let text = std::fs::read_to_string(out.join("scan.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in rows.iter().filter(|r| r[1] == "0") {
        assert_eq!(r[4], "4");
        assert_eq!(r[8], "false");
    }
    let again = dir.path().join("again");
    run("scan", &cfg, &again, &[]);
    assert_eq!(hashes(&out), hashes(&again));
}

#[test]
fn decay_on_fat2_fits_contraction_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.toml",
        &format!(
            "{FAT2_MODEL}\n[certify]\nq = 2\np_list = [1]\n\n[decay]\nn_orbits = 16\norbit_len = 20000\nmax_lag = 25\nphi = {{ y = {{ kind = \"polynomial\", axis = 0, coeffs = [0.0, 1.0] }} }}\n"
        ),
    );
    let out = dir.path().join("out");
    assert_eq!(run("decay", &cfg, &out, &[]).0, 0);
    let d = read_json(&out.join("decay.json"));
    let zeta = d["fit"]["zeta"].as_f64().unwrap();
    assert!(zeta > 0.5 && zeta < 0.7, "{zeta}");
    assert_eq!(d["interval"]["b1_omitted"], true);
}

#[test]
fn sobolev_reports_plateau_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        &format!("{FAT2_MODEL}\n[sobolev]\nresolution = [32]\ns_values = [0.0, 0.15]\niterations = 10\nplateau_start = 5\ndagger = {{ rho = 0, base_points = 2, quad_points = 8 }}\n"),
    );
    let out = dir.path().join("out");
    let (code, _, err) = run("sobolev", &cfg, &out, &[]);
    assert_eq!(code, 0, "{err}");
    let s = read_json(&out.join("sobolev.json"));
    assert_eq!(s["plateau"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(out.join("sobolev.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 11);
    assert!(s["reports"][0]["rows"][3]["dagger"].as_f64().unwrap() > 0.0);
}

#[test]
fn shipped_fixture_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["fat2.toml", "zero_forcing.toml", "diag33.toml"] {
        solab::ExperimentConfig::load(&root.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
