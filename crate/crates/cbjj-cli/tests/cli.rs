use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cbjj-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn cbjj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbjj")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(str::to_owned).collect()).collect()
}

#[test]
fn kerr_table_with_sidecar() {
    let dir = scratch("kerr");
    let o = cbjj(&["kerr", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.join("kerr_table.csv");
    assert!(String::from_utf8_lossy(&o.stdout).contains("kerr_table.csv"));
    assert!(!rows(&csv).is_empty());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("kerr_table.json")).unwrap()).unwrap();
    assert_eq!(meta["kind"], "kerr_table");
    assert!(meta["config"].is_object());
}

#[test]
fn spectrum_census_and_determinism() {
    let a = scratch("spec-a");
    let b = scratch("spec-b");
    for dir in [&a, &b] {
        let o = cbjj(&["spectrum", "--bias", "0.92", "--bias", "0.94", "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let summary = rows(&a.join("spectrum_summary.csv"));
    assert_eq!(summary.len(), 2);
    assert_eq!(summary[0][2], "2");
    assert_eq!(summary[1][3], "0");
    for f in ["spectrum_levels.csv", "spectrum_display.csv", "spectrum_summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn config_errors_exit_one() {
    let dir = scratch("cfg");
    let out = dir.to_str().unwrap();
    let empty = write_config(&dir, "biases = []\n");
    assert_eq!(code(&cbjj(&["spectrum", "--config", &empty, "--out", out])), 1);
    let unknown = write_config(&dir, "no_such_field = 3\n");
    assert_eq!(code(&cbjj(&["spectrum", "--config", &unknown, "--out", out])), 1);
    assert_eq!(code(&cbjj(&["spectrum", "--bias", "1.2", "--out", out])), 1);
    assert_eq!(code(&cbjj(&["sweep", "eff_vs_nothing", "--out", out])), 1);
    assert_eq!(code(&cbjj(&["spectrum", "--config", "/nonexistent/config.toml"])), 1);
}

#[test]
fn failed_point_gives_partial_exit() {
    let dir = scratch("partial");
    let cfg = write_config(&dir, "biases = [0.92, 0.94]\n\n[dynamics]\nt_final = 0.2\n");
    let o = cbjj(&["dynamics", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = rows(&dir.join("dynamics_summary.csv"));
    assert_eq!(summary[0][1], "ok");
    assert_eq!(summary[1][1], "failed");
    let signal = rows(&dir.join("dynamics_I0.92_signal.csv"));
    assert_eq!(signal[0][3], "0");
}
