use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use delone_core::export::parse_pgm;
use tempfile::TempDir;

const C2: &str = r#"{"schedule": {"d": 2, "p": [0, 5, 10, 15], "c": [2, 2, 2], "mode": "plain"},
 "density": {"kind": "constant", "params": {"value": 1.5}}}"#;
const C3: &str = r#"{"schedule": {"d": 2, "p": [0, 8, 16, 24], "c": [3, 3, 3]},
 "density": {"kind": "affine", "params": {"a": 1.2, "b": 0.6}}}"#;

fn config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn delone(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delone"))
        .args(args)
        .arg("-c")
        .arg(cfg)
        .arg("-o")
        .arg(out)
        .env_remove("DELONE_CACHE_DIR")
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn points_are_deterministic_and_hash_tracks_density() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c2.json", C2);
    let window = ["points", "--lo", "-32,-32", "--hi", "32,32"];
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = delone(&window, &cfg, &out);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        runs.push((fs::read(out.join("points.csv")).unwrap(), fs::read_to_string(out.join("points.meta.json")).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    let csv = String::from_utf8(runs[0].0.clone()).unwrap();
    assert_eq!(csv.lines().next(), Some("x1,x2"));
    let n = csv.lines().count() - 1;
    assert!((4096..=8192).contains(&n), "{n} points");

    let other = config(&dir, "other.json", &C2.replace("1.5", "1.6"));
    let out = dir.path().join("other");
    let o = delone(&window, &other, &out);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let meta: serde_json::Value = serde_json::from_str(&runs[0].1).unwrap();
    let meta2: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("points.meta.json")).unwrap()).unwrap();
    assert_ne!(meta["hash"], meta2["hash"]);
}

#[test]
fn render_writes_one_raster_per_colour() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c3.json", C3);
    let out = dir.path().join("l2");
    let o = delone(&["render", "--level", "2"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    for j in 1..=3 {
        let (w, h, px) = parse_pgm(&fs::read(out.join(format!("palette_L2_C{j}.pgm"))).unwrap()).unwrap();
        assert_eq!((w, h), (256, 256));
        assert!(px.iter().all(|&v| v == 0 || v == 255));
    }

    let out = dir.path().join("l1");
    let o = delone(&["render", "--level", "1", "--format", "P2"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let values: Vec<u8> = (1..=3)
        .map(|j| {
            let bytes = fs::read(out.join(format!("palette_L1_C{j}.pgm"))).unwrap();
            assert!(bytes.starts_with(b"P2"));
            let (w, h, px) = parse_pgm(&bytes).unwrap();
            assert_eq!((w, h), (1, 1));
            px[0]
        })
        .collect();
    assert_eq!(values, vec![0, 255, 0]);
}

#[test]
fn materialize_cap_is_an_operational_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c3.json", C3);
    let o = delone(&["render", "--level", "2", "--materialize-cap", "0"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
}

#[test]
fn verify_all_passes_on_the_c2_schedule() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c2.json", C2);
    let out = dir.path().join("v");
    let o = delone(&["verify"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("[PASS] goodness L2"));
    assert!(!report.contains("[FAIL]"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(json.is_object());
}

#[test]
fn encoding_needs_palette_mode() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c2.json", C2);
    let o = delone(&["verify", "--which", "encoding"], &cfg, &dir.path().join("v"));
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn injected_palette_fault_names_the_condition() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c2.json", C2);
    let o = delone(&["verify", "--which", "goodness", "--inject-fault", "palette"], &cfg, &dir.path().join("v"));
    assert_eq!(o.status.code(), Some(3), "{}", text(&o));
    assert!(text(&o).contains("condition (B)"), "{}", text(&o));
}

#[test]
fn validate_reports_schedule_violations() {
    let dir = TempDir::new().unwrap();
    let good = config(&dir, "c3.json", C3);
    let o = delone(&["validate"], &good, &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));

    let gap = config(&dir, "gap.json", r#"{"schedule": {"d": 2, "p": [0, 1, 6], "c": [2, 2], "mode": "plain"}}"#);
    let o = delone(&["validate"], &gap, &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("p_n − p_{n−1} ≥ 2"), "{}", text(&o));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let bad = config(&dir, "bad.json", r#"{"schedule": "#);
    let o = delone(&["validate"], &bad, &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let unknown = config(&dir, "unknown.json", &C2.replacen('{', r#"{"colour": 1, "#, 1));
    let o = delone(&["points"], &unknown, &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}
