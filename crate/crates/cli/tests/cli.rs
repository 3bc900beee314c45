use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polyloc_cli::ExperimentConfig;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn polyloc(sub: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyloc"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("POLYLOC_THREADS", "1")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("test.conf");
    fs::write(&path, text).unwrap();
    path
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = match fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    names
}

#[test]
fn partition_check_default_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyloc("partition-check", &configs().join("partition_check.conf"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("partition_check.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("J,max_abs_residual"));
    let rows: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|&v| v <= 1e-12));
}

#[test]
fn audit_radius_beyond_support_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("maximal_demo.conf"))
        .unwrap()
        .replace("audit.r = 1", "audit.r = 3.5");
    let config = write_config(dir.path(), &text);
    let out_dir = dir.path().join("out");
    let out = polyloc("maximal-audit", &config, &out_dir);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("r < 3"), "{stderr}");
    assert!(listing(&out_dir).is_empty(), "{:?}", listing(&out_dir));
}

#[test]
fn unknown_key_and_missing_file_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "grid.n = 64\ngrid.colour = blue\n");
    assert_eq!(polyloc("transform-check", &config, dir.path()).status.code(), Some(3));
    let missing = dir.path().join("absent.conf");
    assert_eq!(polyloc("transform-check", &missing, dir.path()).status.code(), Some(3));
}

#[test]
fn support_violation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("maximal_demo.conf")).unwrap() + "function.inner_radius = 2.5\n";
    let config = write_config(dir.path(), &text);
    let out = polyloc("maximal-audit", &config, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn resource_cap_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "grid.dims = 3\ngrid.n = 512\n");
    let out_dir = dir.path().join("out");
    let out = polyloc("transform-check", &config, &out_dir);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(listing(&out_dir).is_empty());
}

#[test]
fn failing_assertion_exits_two_and_names_the_metric() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("maximal_stability.conf"))
        .unwrap()
        .replace("audit.threshold = 1.5", "audit.threshold = 1.0")
        .replace("audit.refinements = 16,16,16", "audit.refinements = 1,4,16");
    let config = write_config(dir.path(), &text);
    let out = polyloc("maximal-audit", &config, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stability"));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("# status fail"));
}

#[test]
fn manifest_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("maximal_demo.conf");
    let out = polyloc("maximal-audit", &config, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("# seed 42"));
    assert!(manifest.contains("# polyloc-core "));
    let echoed = ExperimentConfig::parse(&manifest).unwrap();
    let original = ExperimentConfig::from_path(&config).unwrap();
    assert_eq!(echoed, original);

    let pgm = fs::read(dir.path().join("maximal_demo.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n512 1\n255\n"));
    assert!(manifest.contains("heatmap maximal_demo.pgm"));
}

#[test]
fn every_shipped_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, file) in [
        ("transform-check", "transform_check.conf"),
        ("localization-run", "localization.conf"),
        ("maximal-audit", "maximal_stability.conf"),
    ] {
        let out = polyloc(sub, &configs().join(file), dir.path());
        assert_eq!(out.status.code(), Some(0), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        let printed = String::from_utf8_lossy(&out.stdout);
        assert!(printed.lines().all(|p| Path::new(p).exists()), "{printed}");
    }
    assert!(!listing(dir.path()).iter().any(|f| f.starts_with(".staging")));
}
