use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const IDENTITY_USELESS: &str =
    r#"{"X":2,"Y":2,"Z":2,"W1":[[1,0],[0,1]],"W2":[[0.5,0.5],[0.5,0.5]]}"#;
const BSC_SAME: &str = r#"{"X":2,"Y":2,"Z":2,"W1":[[0.9,0.1],[0.1,0.9]],"W2":[[0.9,0.1],[0.1,0.9]]}"#;
const BSC_PAIR: &str = r#"{"X":2,"Y":2,"Z":2,"W1":[[0.9,0.1],[0.1,0.9]],"W2":[[0.8,0.2],[0.2,0.8]]}"#;

fn abc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn put(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn useless_second_receiver_collapses_region() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "ch.json", IDENTITY_USELESS);
    let out = abc(&["region", "--channel", "ch.json", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(dir.path().join("o/region_summary.json"));
    assert!(s["max_r2"].as_f64().unwrap() <= 1e-3);
    assert!((s["max_r1"].as_f64().unwrap() - std::f64::consts::LN_2).abs() <= 1e-3);
}

#[test]
fn identical_bsc_capacity_in_summary() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "ch.json", BSC_SAME);
    let out = abc(
        &["region", "--channel", "ch.json", "--out", "o", "--grid-gamma", "9", "--grid-mu", "5"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let s = json(dir.path().join("o/region_summary.json"));
    assert!((s["capacity_w1"].as_f64().unwrap() - 0.368064).abs() <= 1e-6);
}

#[test]
fn malformed_channel_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "ch.json", r#"{"X":2,"Y":2,"Z":2,"W1":[[0.7,0.7],[0,1]],"W2":[[1,0],[0,1]]}"#);
    for cmd in ["region", "exponent", "verify", "sweep"] {
        let out = abc(&[cmd, "--channel", "ch.json", "--out", "o", "--rate", "0,0"], dir.path());
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(!dir.path().join("o").exists(), "{cmd}");
    }
}

#[test]
fn empty_rate_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "ch.json", IDENTITY_USELESS);
    let out = abc(&["exponent", "--channel", "ch.json", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn exponent_vanishes_inside_and_not_outside() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "ch.json", IDENTITY_USELESS);
    put(
        dir.path(),
        "cfg.json",
        r#"{"channel":"ch.json","classify":true,"rates":[[0,0]],
            "rate_grid":{"r1":[0.1,0.9],"r2":[0,0.2],"steps":[5,3]}}"#,
    );
    let out = abc(&["exponent", "--config", "cfg.json", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(dir.path().join("o/exponent_summary.json"));
    let pts = s["points"].as_array().unwrap();
    assert_eq!(pts.len(), 16);
    assert_eq!(pts[0]["f_value"].as_f64(), Some(0.0));
    // The region is the segment R2 = 0, R1 ≤ ln 2, so it has no interior.
    let (mut on_segment, mut outside) = (0, 0);
    for p in pts {
        let f = p["f_value"].as_f64().unwrap();
        let r1 = p["r1"].as_f64().unwrap();
        match p["membership"].as_str().unwrap() {
            "outside" => {
                outside += 1;
                assert!(f > 0.0, "{p}");
            }
            _ if r1 <= std::f64::consts::LN_2 - 0.05 => {
                on_segment += 1;
                assert!(f <= 1e-9, "{p}");
            }
            _ => {}
        }
    }
    assert!(on_segment >= 3 && outside >= 10, "{on_segment} {outside}");
    let csv = fs::read_to_string(dir.path().join("o/exponent_surface.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 16);
}

fn desk_codes(dir: &Path) -> Vec<String> {
    let codes = [
        r#"{"n":1,"K":1,"L":1,"encoder":[[0]]}"#,
        r#"{"n":1,"K":2,"L":1,"encoder":[[0],[1]]}"#,
        r#"{"n":1,"K":1,"L":2,"encoder":[[0],[1]]}"#,
        r#"{"n":2,"K":2,"L":2,"encoder":[[0,0],[0,1],[1,0],[1,1]]}"#,
        r#"{"n":2,"K":2,"L":1,"encoder":[[[[0,0],0.5],[[1,1],0.5]],[[[1,0],0.5],[[0,1],0.5]]]}"#,
    ];
    codes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            put(dir, &format!("code{i}.json"), c);
            format!("\"code{i}.json\"")
        })
        .collect()
}

#[test]
fn desk_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "ch.json", BSC_PAIR);
    let codes = desk_codes(dir.path()).join(",");
    put(
        dir.path(),
        "cfg.json",
        &format!(r#"{{"channel":"ch.json","codes":[{codes}],"param_samples":6,"random_laws":5}}"#),
    );
    let out = abc(&["verify", "--config", "cfg.json", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = json(dir.path().join("o/verify_report.json"));
    assert_eq!(r["summary"]["failures"].as_u64(), Some(0));
    assert_eq!(r["summary"]["codes"].as_u64(), Some(5));
    // 6 sampled + 1 optimized tuple, and (1 + 5) laws × 3 etas
    let first = &r["codes"][3];
    assert_eq!(first["exponent_bound"].as_array().unwrap().len(), 7);
    assert_eq!(first["spectrum_bound"].as_array().unwrap().len(), 18);
}

#[test]
fn inflated_exponent_fails_and_oversized_code_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "ch.json", IDENTITY_USELESS);
    let words: Vec<String> = (0..16).map(|i| format!("[{},{}]", (i / 2) % 2, i % 2)).collect();
    put(
        dir.path(),
        "code.json",
        &format!(r#"{{"n":2,"K":4,"L":4,"encoder":[{}]}}"#, words.join(",")),
    );
    let long = |b: usize| format!("[{}]", vec![b.to_string(); 12].join(","));
    put(
        dir.path(),
        "big.json",
        &format!(r#"{{"n":12,"K":2,"L":2,"encoder":[{},{},{},{}]}}"#, long(0), long(1), long(0), long(1)),
    );
    let base = r#""channel":"ch.json","codes":["big.json","code.json"],"param_samples":0"#;
    put(dir.path(), "honest.json", &format!("{{{base}}}"));
    put(dir.path(), "corrupt.json", &format!(r#"{{{base},"exponent_scale":10}}"#));

    let out = abc(&["verify", "--config", "honest.json", "--out", "h"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = json(dir.path().join("h/verify_report.json"));
    assert!(r["codes"][0]["error"].as_str().unwrap().contains("budget"));
    assert_eq!(r["codes"][1]["k"].as_u64(), Some(4));
    assert_eq!(r["summary"]["code_errors"].as_u64(), Some(1));

    let out = abc(&["verify", "--config", "corrupt.json", "--out", "c"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let r = json(dir.path().join("c/verify_report.json"));
    assert!(r["summary"]["failures"].as_u64().unwrap() >= 1);
}

#[test]
fn repeated_runs_are_byte_identical_and_tagged() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "ch.json", BSC_PAIR);
    let args = |o: &'static str, bits: bool| {
        let mut v = vec!["region", "--channel", "ch.json", "--out", o, "--grid-gamma", "9", "--grid-mu", "5", "--seed", "3"];
        if bits {
            v.push("--bits");
        }
        v
    };
    let a = abc(&args("a", false), dir.path());
    let b = abc(&args("b", true), dir.path());
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
    let s = json(dir.path().join("a/region_summary.json"));
    let hash = s["config_hash"].as_str().unwrap().to_string();
    assert_eq!(s["seed"].as_u64(), Some(3));
    for f in ["region_sweep.csv", "region_polygon.csv", "region_summary.json"] {
        let x = fs::read(dir.path().join("a").join(f)).unwrap();
        let y = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
        assert!(String::from_utf8(x).unwrap().contains(&hash), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("a/region_sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), format!("# config_hash={hash} seed=3"));
}

#[test]
fn budget_sweep_reports_each_preset() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "ch.json", BSC_PAIR);
    let out = abc(
        &["sweep", "--channel", "ch.json", "--out", "o", "--grid-gamma", "5", "--grid-mu", "3"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let s = json(dir.path().join("o/sweep_summary.json"));
    let presets = s["presets"].as_array().unwrap();
    assert_eq!(presets.len(), 3);
    for p in presets {
        assert_eq!(p["evaluated"].as_u64(), Some(15));
        assert!(p["max_abs_diff_from_reference"].as_f64().unwrap() < 1e-6);
    }
    for name in ["fast", "default", "thorough"] {
        assert!(dir.path().join(format!("o/sweep_{name}.csv")).exists());
    }
}
