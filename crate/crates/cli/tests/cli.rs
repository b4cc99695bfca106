use std::path::Path;
use std::process::Command;

const SMALL: &str = "seed = 5\n[grid]\nn = 32\n[solve]\ndt = 0.01\npaths = 2\n[blowup-scan]\npaths = 50\n";

fn run(args: &[&str], out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_osgood-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn missing_config_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["solve", "--config", "missing.cfg"], d.path()), 2);
    let m = manifest(d.path());
    assert_eq!(m["status"], "error");
    assert_eq!(m["exit_code"], 2);
}

#[test]
fn malformed_config_and_bad_flags() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("bad.toml");
    std::fs::write(&p, "[grid]\nsize = 3\n").unwrap();
    assert_eq!(run(&["audit", "--config", p.to_str().unwrap()], d.path()), 2);
    std::fs::write(&p, "[grid\n").unwrap();
    assert_eq!(run(&["audit", "--config", p.to_str().unwrap()], d.path()), 2);
    assert_eq!(run(&["audit", "--bogus"], d.path()), 2);
    assert_eq!(run(&["audit", "--family", "quartic"], d.path()), 2);
}

#[test]
fn audit_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["audit", "--family", "ilog", "--n", "2"], d.path()), 0);
    assert!(d.path().join("audit.json").exists());
    let f = tempfile::tempdir().unwrap();
    assert_eq!(run(&["audit", "--family", "power", "--delta", "1.0"], f.path()), 1);
    let m = manifest(f.path());
    assert_eq!(m["status"], "check-failed");
    assert_eq!(m["outputs"][0], "audit.json");
}

#[test]
fn blowup_scan_flags_every_path() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    assert_eq!(run(&["blowup-scan", "--config", &cfg, "--family", "power", "--delta", "1.0"], d.path()), 0);
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("blowup.json")).unwrap()).unwrap();
    assert_eq!(s["flagged"], 50);
    assert_eq!(s["paths"], 50);
}

#[test]
fn solve_failure_still_writes_manifest() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    assert_eq!(run(&["solve", "--config", &cfg, "--family", "power"], d.path()), 1);
    let m = manifest(d.path());
    assert_eq!(m["status"], "check-failed");
    assert_eq!(m["seed"], 5);
    assert!(d.path().join("solve_summary.csv").exists());
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "bin"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert_eq!(run(&["solve", "--config", &cfg, "--threads", "1"], &a), 0);
    assert_eq!(run(&["solve", "--config", &cfg, "--threads", "3"], &b), 0);
    let (ca, cb) = (csv_bytes(&a), csv_bytes(&b));
    assert!(ca.len() >= 5);
    assert_eq!(ca, cb);
    assert_eq!(manifest(&a)["config_hash"], manifest(&b)["config_hash"]);

    let c = d.path().join("c");
    assert_eq!(run(&["solve", "--config", &cfg, "--seed", "6"], &c), 0);
    assert_ne!(csv_bytes(&c), ca);
    assert_ne!(manifest(&c)["config_hash"], manifest(&a)["config_hash"]);
}

#[test]
fn noise_raster_header() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    assert_eq!(run(&["noise", "--config", &cfg, "--paths", "3"], d.path()), 0);
    let r = osgood_lab::io::read_raster(std::fs::File::open(d.path().join("noise_z.bin")).unwrap()).unwrap();
    assert_eq!((r.grid.d, r.grid.n, r.seed, r.t), (1, 32, 5, 1.0));
    assert_eq!(r.data.len(), 32);
    assert_eq!(r.convention, osgood_lab::io::SPECTRAL_CONVENTION);
}

#[test]
fn weight_and_uniq_run() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["weight"], d.path()), 0);
    assert!(d.path().join("weight.csv").exists());
    let cfg = small_config(d.path());
    assert_eq!(run(&["uniq", "--config", &cfg], d.path()), 0);
    let csv = std::fs::read_to_string(d.path().join("decay.csv")).unwrap();
    assert!(csv.starts_with("t,level_pair,norm,K,nu,nu1,nu2"));
}

#[test]
fn example_config_loads() {
    let d = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/example.toml");
    assert_eq!(run(&["audit", "--config", cfg], d.path()), 0);
    assert_eq!(manifest(d.path())["seed"], 42);
}
