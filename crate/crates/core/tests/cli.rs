use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hypdec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypdec")).args(args).env("HYPDEC_THREADS", "2").output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("hypdec-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn csv_is_byte_identical_across_runs() {
    let d = scratch("det");
    let (a, b) = (d.join("a"), d.join("b"));
    for out in [&a, &b] {
        let o = hypdec(&["decouple", "restriction2d", "--scales", "16,64", "--trials", "3", "--seed", "7", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |p: &Path| std::fs::read(p.join("restriction2d.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert!(a.join("restriction2d.svg").exists());
}

#[test]
fn unknown_config_key_exits_4() {
    let d = scratch("badcfg");
    let cfg = d.join("c.toml");
    std::fs::write(&cfg, "scales = [64]\nnot_a_key = 1\n").unwrap();
    let o = hypdec(&["decouple", "bilinear", "--config", s(&cfg), "--out", s(&d)]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn malformed_flags_exit_4() {
    assert_eq!(hypdec(&["--no-such-flag"]).status.code(), Some(4));
    assert_eq!(hypdec(&["decouple", "bilinear", "--scales", "63"]).status.code(), Some(4));
    assert_eq!(hypdec(&["decouple", "bilinear", "--band", "4:1"]).status.code(), Some(4));
    assert_eq!(hypdec(&["--help"]).status.code(), Some(0));
}

#[test]
fn empty_family_exits_4() {
    let d = scratch("empty");
    let cfg = d.join("c.toml");
    std::fs::write(&cfg, "[incidence]\ncount = 0\n").unwrap();
    let o = hypdec(&["incidence", "furstenberg", "--scales", "32", "--config", s(&cfg), "--out", s(&d)]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bilinear_summary_carries_slopes() {
    let d = scratch("bil");
    let o = hypdec(&["decouple", "bilinear", "--scales", "64,256", "--trials", "1", "--out", s(&d)]);
    assert!(matches!(o.status.code(), Some(0 | 3)), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("bilinear-l2.json")).unwrap()).unwrap();
    assert!(v["conjecture"]["slope"].is_f64());
    let series = v["series"].as_array().unwrap();
    assert_eq!(series.len(), 5);
    assert!(series.iter().all(|s| s["exponent"].is_f64()));
    assert_eq!(v["couplings"]["64"].as_array().unwrap().len(), 4);
}
