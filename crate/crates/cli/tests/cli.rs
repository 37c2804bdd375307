use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn sharpmp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sharpmp")).current_dir(dir).args(args).output().expect("spawn sharpmp")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = sharpmp(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn key(text: &str, k: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{k}=")))
        .unwrap_or_else(|| panic!("missing {k}"))
        .parse()
        .unwrap()
}

/// constants → solve-f → make-phi at defaults, shared by the tests below.
fn front() -> &'static PathBuf {
    static D: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    &D.get_or_init(|| {
        let tmp = TempDir::new().unwrap();
        let p = tmp.path().to_path_buf();
        ok(&p, &["constants"]);
        ok(&p, &["solve-f"]);
        ok(&p, &["make-phi"]);
        (tmp, p)
    })
    .1
}

/// A small instance (n_max = 1000) built from the shared φ.
fn small_instance() -> &'static PathBuf {
    static D: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    &D.get_or_init(|| {
        let tmp = TempDir::new().unwrap();
        let p = tmp.path().to_path_buf();
        let phi = front().join("phi.csv");
        ok(&p, &["--n-max", "1000", "build", "--phi", phi.to_str().unwrap()]);
        (tmp, p)
    })
    .1
}

#[test]
fn constants_examples() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["constants", "--shrinkage", "1"]);
    let text = fs::read_to_string(d.join("constants.txt")).unwrap();
    assert!((key(&text, "alpha") - 0.182).abs() < 1e-3);
    assert!(text.starts_with("version="));
    assert!((0.5 - key(&text, "beta_star") - key(&text, "alpha")).abs() < 1e-9);

    ok(d, &["constants", "--shrinkage", "0.000001", "--out", "small.txt"]);
    let text = fs::read_to_string(d.join("small.txt")).unwrap();
    assert!((key(&text, "alpha") - 0.305).abs() < 1e-3);

    let out = sharpmp(d, &["constants", "--shrinkage", "2", "--out", "bad.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("bad.txt").exists());
    assert_eq!(sharpmp(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(sharpmp(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn full_pipeline_reproduces_the_rate() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let phi = front().join("phi.csv");
    ok(d, &["build", "--phi", phi.to_str().unwrap()]);
    ok(d, &["verify"]);
    ok(d, &["run"]);
    let out = ok(d, &["rate"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("slope="));
    let rate = fs::read_to_string(d.join("rate.txt")).unwrap();
    let slope = key(&rate, "fit.slope");
    let beta = key(&rate, "beta");
    assert!((slope + (0.5 - beta)).abs() <= 0.005, "slope {slope}, beta {beta}");
    let verify = fs::read_to_string(d.join("verify.txt")).unwrap();
    assert!(key(&verify, "verification.min_margin") > 0.0);
}

#[test]
fn corrupted_instance_fails_verification() {
    let d = small_instance();
    ok(d, &["verify", "--out", "clean.txt"]);
    let text = fs::read_to_string(d.join("instance.txt")).unwrap();
    let seq = text.find("[sequences]").unwrap();
    let mut lines: Vec<String> = text[seq..].lines().map(String::from).collect();
    let row = lines.iter().position(|l| l.starts_with("600,")).unwrap();
    let mut f: Vec<String> = lines[row].split(',').map(String::from).collect();
    f[3] = (f[3].parse::<f64>().unwrap() + 1e-3).to_string();
    lines[row] = f.join(",");
    let corrupted = format!("{}{}\n", &text[..seq], lines.join("\n"));
    fs::write(d.join("corrupted.txt"), corrupted).unwrap();

    let out = sharpmp(d, &["verify", "--instance", "corrupted.txt", "--out", "corrupted_report.txt"]);
    assert_eq!(out.status.code(), Some(3));
    let rep = fs::read_to_string(d.join("corrupted_report.txt")).unwrap();
    assert!(rep.contains("pass=false"));
    assert!(rep.contains("verification.construction.ok=false"));
}

#[test]
fn missing_and_malformed_inputs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(sharpmp(d, &["verify", "--instance", "nope.txt"]).status.code(), Some(1));
    fs::write(d.join("junk.txt"), "beta=0.3\n").unwrap();
    assert_eq!(sharpmp(d, &["verify", "--instance", "junk.txt"]).status.code(), Some(1));
    assert_eq!(sharpmp(d, &["--m", "100", "solve-f"]).status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["solve-f"]);
    ok(d, &["make-phi"]);
    for f in ["f0.csv", "f3.csv", "f.csv", "solve_f.txt", "phi.csv", "phi_conditions.txt"] {
        assert_eq!(fs::read(d.join(f)).unwrap(), fs::read(front().join(f)).unwrap(), "{f}");
    }
    let s = small_instance();
    let phi = front().join("phi.csv");
    ok(d, &["--n-max", "1000", "build", "--phi", phi.to_str().unwrap()]);
    for f in ["instance.txt", "build.txt"] {
        assert_eq!(fs::read(d.join(f)).unwrap(), fs::read(s.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.cfg"), "M=1001\ntau_margin=0.05\nconstants_out=from_file.txt\n").unwrap();
    ok(d, &["--config", "run.cfg", "constants"]);
    let text = fs::read_to_string(d.join("from_file.txt")).unwrap();
    assert!(text.contains("config.M=1001"));
    ok(d, &["--config", "run.cfg", "--m", "501", "constants", "--out", "flag.txt"]);
    assert!(fs::read_to_string(d.join("flag.txt")).unwrap().contains("config.M=501"));
}

#[test]
fn plot_of_the_first_iterates() {
    let d = front();
    let f3 = fs::read_to_string(d.join("f3.csv")).unwrap();
    let min = f3
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('x'))
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(min > 0.0, "f3 min {min}");
    ok(d, &["plot", "f0.csv", "f1.csv", "f2.csv", "f3.csv", "--out", "iterates.svg"]);
    let svg = fs::read_to_string(d.join("iterates.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert!(svg.contains("log_log=false"));
}

#[test]
fn trace_plot_and_comparison() {
    let d = small_instance();
    ok(d, &["run", "--out", "pga.csv"]);
    ok(d, &["run", "--algorithm", "pga_shrink", "--shrinkage", "0.5", "--steps", "300", "--out", "shrink.csv"]);
    ok(d, &["plot", "pga.csv", "shrink.csv", "--out", "rate.svg"]);
    let svg = fs::read_to_string(d.join("rate.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("log_log=true"));
    assert_eq!(sharpmp(d, &["plot", "pga.csv", "instance.txt"]).status.code(), Some(1));

    ok(d, &["compare", "--algorithms", "pga,rga", "--fit-max", "1000"]);
    let table = fs::read_to_string(d.join("comparison.csv")).unwrap();
    assert!(table.contains("algorithm,steps,final_residual,slope,r2\npga,600,"));
    assert!(table.lines().any(|l| l.starts_with("rga,600,")));
    assert_eq!(sharpmp(d, &["run", "--algorithm", "pga_shrink", "--shrinkage", "2"]).status.code(), Some(1));
}
