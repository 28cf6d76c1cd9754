//! Runs the `vlf` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
description = "small"
k = [16]
[[codes]]
states = 64
[[channels]]
kind = "biawgn"
snr_db = 2.0
[schedule]
kind = "lengths"
[schedule.lengths]
"16" = [30, 3, 3, 5, 7]
[campaign]
min_errors = 2
checkpoint_secs = 0
[bounds]
methods = ["wald", "monte-carlo", "repeat-after-n", "m-transmission"]
walks = 2000
"#;

fn vlf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlf")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn presets_are_listed_and_printable() {
    let out = vlf(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["fig2-bsc", "fig3-awgn", "fig3-awgn-m5", "fig4-snr-sweep", "fig5-nack", "table3", "table4-crc16"] {
        assert!(text.contains(name), "{name} missing");
    }
    let out = vlf(&["presets", "table3"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("[schedule.lengths]"));
    assert!(!vlf(&["presets", "nope"]).status.success());
}

#[test]
fn invalid_configs_fail_with_the_field_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "k = []\n");
    let out = vlf(&["simulate", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("k:"));

    let cfg = write_config(dir.path(), &SMALL.replace("min_errors", "min_erors"));
    let out = vlf(&["simulate", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("min_erors"));
}

#[test]
fn simulate_is_worker_independent_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |sub: &str, extra: &[&str]| {
        let out_dir = dir.path().join(sub);
        let mut args = vec!["simulate", "--config", &cfg, "-q", "--out-dir", out_dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = vlf(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        read(out_dir.join("simulate.csv"))
    };
    let one = run("a", &["--workers", "1"]);
    let two = run("b", &["--workers", "2"]);
    assert_eq!(one, two);

    // Extending a finished run equals a fresh run with the larger target.
    let extended = run("a", &["--min-errors", "4"]);
    let fresh = run("c", &["--min-errors", "4"]);
    assert_eq!(extended, fresh);
    assert_ne!(extended, one);

    let header = one.lines().next().unwrap();
    assert!(header.ends_with("seed,config_hash"));
    let row = one.lines().nth(1).unwrap();
    assert!(row.contains("30;33;36;41;48"));
    let json: serde_json::Value = serde_json::from_str(&read(dir.path().join("a/simulate.json"))).unwrap();
    assert_eq!(json[0]["decode_points"], serde_json::json!([30, 33, 36, 41, 48]));
}

#[test]
fn bounds_rows_cover_each_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = vlf(&["bounds", "--config", &cfg, "-q", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = read(dir.path().join("bounds.csv"));
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let method = headers.iter().position(|h| h == "method").unwrap();
    let rate = headers.iter().position(|h| h == "rate").unwrap();
    let cap = headers.iter().position(|h| h == "capacity").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let methods: Vec<&str> = rows.iter().map(|r| &r[method]).collect();
    assert_eq!(methods, ["wald", "monte-carlo", "repeat-after-n", "m-transmission"]);
    for r in &rows {
        assert!(r[rate].parse::<f64>().unwrap() < r[cap].parse::<f64>().unwrap());
    }
}

#[test]
fn optimize_synthetic_matches_exhaustive_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = vlf(&["optimize", "--preset", "optimize-synthetic", "-q", "--out-dir", d]);
    assert!(out.status.success());
    let csv = read(dir.path().join("optimize.csv"));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.contains(",ok,") && l.contains(",true,")));
    assert!(dir.path().join("models/synthetic_k16.curve.csv").exists());
}

#[test]
fn infeasible_cap_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
        description = "cap"
        k = [16]
        [policy]
        kind = "reliability"
        [optimize]
        m = 5
        cap = 30
        final_below = 1e-3
        [optimize.synthetic]
        rate = 0.2
        offset = 1.0
    "#;
    let cfg = write_config(dir.path(), text);
    let out = vlf(&["optimize", "--config", &cfg, "-q", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("infeasible"));
    assert!(read(dir.path().join("optimize.csv")).contains(",infeasible,"));
}
