use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).to_string_lossy().into_owned()
}

fn out_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("clearing-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clearing")).args(args).arg("--out").arg(out).output().unwrap()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

#[test]
fn check_passes_and_fails() {
    let out = out_dir("check");
    let ok = run(&["check", "--model", &fixture("lq_scalar.toml")], &out);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let report = json(out.join("assumptions.json"));
    assert!(report["clauses"].as_array().is_some_and(|c| !c.is_empty()));

    let bad = run(&["check", "--model", &fixture("minor_b_fail.toml")], &out);
    assert_eq!(bad.status.code(), Some(2));
    let text = String::from_utf8_lossy(&bad.stdout).into_owned() + &String::from_utf8_lossy(&bad.stderr);
    assert!(text.contains("Minor-B"), "{text}");

    let manifest = json(out.join("manifest.json"));
    assert_eq!(manifest["exit_code"], 2);
    assert_eq!(manifest["command"], "check");
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn usage_errors_exit_one() {
    let out = out_dir("usage");
    assert_eq!(run(&["solve-n", "--model", "/nonexistent.toml"], &out).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"], &out).status.code(), Some(1));
    assert_eq!(run(&["converge", "--model", &fixture("two_atom.toml"), "--n-list", "x"], &out).status.code(), Some(1));
    let help = Command::new(env!("CARGO_BIN_EXE_clearing")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn closed_form_price() {
    let out = out_dir("closed");
    let o = run(&["solve-n", "--model", &fixture("closed_form.toml"), "--zero-flow"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout.lines().find(|l| l.starts_with("price_t0:")).expect("price line");
    let v: Vec<f64> = serde_json::from_str(line.trim_start_matches("price_t0:").trim()).unwrap();
    assert!((v[0] + 2.0).abs() <= 2e-2, "{v:?}");
    assert!(out.join("price.csv").exists() && out.join("alpha.csv").exists());
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn zero_model_needs_force() {
    let out = out_dir("zero");
    assert_eq!(run(&["solve-n", "--model", &fixture("zero.toml")], &out).status.code(), Some(2));
    let o = run(&["solve-n", "--model", &fixture("zero.toml"), "--force"], &out);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("price_t0: [0.0]"));
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn convergence_and_verify_gates() {
    let out = out_dir("gates");
    let o = run(&["converge", "--model", &fixture("point_mass.toml"), "--n-list", "8,16,32", "--resamples", "4"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(out.join("convergence_summary.json"));
    assert_eq!(summary["degenerate"], true);
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("N,resample,price_gap,w2_g,w2_rT,int_w2_y,int_w2_p,epsilon_N"));
    assert_eq!(csv.lines().count(), 1 + 3 * 4);

    let o = run(&["verify", "--model", &fixture("lq_scalar.toml"), "--directions", "4"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for level in ["minor", "major-n", "major-mfg"] {
        assert!(out.join(format!("perturbation_{level}.csv")).exists());
    }
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn maturity_and_mfg() {
    let out = out_dir("maturity");
    let o = run(&["solve-mfg", "--model", &fixture("maturity.toml")], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let price = std::fs::read_to_string(out.join("price.csv")).unwrap();
    let header: Vec<&str> = price.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "phi_0").unwrap();
    let level = header.iter().position(|h| *h == "level").unwrap();
    let rows: Vec<Vec<&str>> = price.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let last = rows.iter().map(|r| r[level].parse::<usize>().unwrap()).max().unwrap();
    for r in rows.iter().filter(|r| r[level].parse::<usize>().unwrap() == last) {
        assert_eq!(r[col].parse::<f64>().unwrap(), 5.0);
    }
    let o = run(&["lattice-dump", "--model", &fixture("maturity.toml")], &out);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("lattice.csv").exists());
    let _ = std::fs::remove_dir_all(&out);
}
