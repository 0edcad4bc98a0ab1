use std::fs;
use std::path::Path;
use std::process::Command;

use trajlab_cli::{manifest, run, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trajlab"))
}

fn ok(args: &[&str]) {
    let mut full = vec!["trajlab"];
    full.extend_from_slice(args);
    assert_eq!(run(full), EXIT_OK, "{args:?}");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let st = bin().args(["phase1", "--no-such-flag"]).status().unwrap();
    assert_eq!(st.code(), Some(EXIT_USAGE));
    let st = bin().args(["phase1", "--dataset", "/definitely/missing.json", "--out", s(&out)]).status().unwrap();
    assert_eq!(st.code(), Some(EXIT_USAGE));
    assert!(!out.exists(), "usage errors write nothing");
    let st = bin().args(["phase3", "--layers", "3-1"]).status().unwrap();
    assert_eq!(st.code(), Some(EXIT_USAGE));
    let st = bin().args(["report", "--out", s(&out)]).status().unwrap();
    assert_eq!(st.code(), Some(EXIT_RUNTIME));
    assert!(!out.exists());
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(EXIT_OK));
}

#[test]
fn runtime_failure_leaves_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = tmp.path().join("c.json");
    // planted features too small for the probe
    fs::write(&cfg, r#"{"planted": {"n_prompts": 6, "n_regimes": 2}}"#).unwrap();
    assert_eq!(run(["trajlab", "probe", "--config", s(&cfg), "--out", s(&out)]), EXIT_RUNTIME);
    let dir = out.join("probe");
    assert!(dir.join(manifest::FAILED).exists());
    assert!(!dir.join(manifest::MANIFEST).exists());
}

#[test]
fn fixture_replays_recorded_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    ok(&["phase1", "--fixture", "--out", s(&out)]);
    ok(&["phase3", "--fixture", "--out", s(&out)]);
    let cats = fs::read_to_string(out.join("phase1/categories.csv")).unwrap();
    assert!(cats.lines().any(|l| l.starts_with("total,61,27,6,")), "{cats}");
    let t4 = fs::read_to_string(out.join("phase3/table4.csv")).unwrap();
    assert_eq!(t4.lines().count(), 29);
    // peak corruption and correction layers
    assert!(t4.lines().any(|l| l.starts_with("20,") && l.split(',').nth(3) == Some("0.875000")), "{t4}");
    assert!(t4.lines().any(|l| l.starts_with("24,") && l.split(',').nth(1) == Some("0.333333")), "{t4}");
    let ctl = fs::read_to_string(out.join("phase3/controls.csv")).unwrap();
    assert!(ctl.lines().nth(1).unwrap().contains(",8,24,"), "{ctl}");
    ok(&["report", "--out", s(&out)]);
    let md = fs::read_to_string(out.join("report/summary.md")).unwrap();
    assert!(md.contains("peak ratio 2.6250"), "{md}");
}

#[test]
fn synth_pipeline_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("model");
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"n_prompts": 8, "synth_prompts": 100}"#).unwrap();
    ok(&["synth-build", "--out", s(&model), "--seed", "3"]);
    for f in ["model.tcmw", "vocab.json", "synth.json", "oracle.json", "dataset.json"] {
        assert!(model.join(f).exists(), "{f}");
    }
    manifest::verify(&model).unwrap();

    let mut summaries = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        ok(&["phase1", "--model", s(&model), "--out", s(&out)]);
        ok(&["phase2", "--model", s(&model), "--out", s(&out), "--config", s(&cfg)]);
        ok(&["phase3", "--model", s(&model), "--out", s(&out), "--config", s(&cfg), "--windows", "1;1-4"]);
        ok(&["report", "--out", s(&out)]);
        summaries.push(fs::read_to_string(out.join("report/summary.md")).unwrap());
    }
    assert_eq!(summaries[0], summaries[1]);
    let md = &summaries[0];
    assert!(md.contains("peak ratio 1.0000"), "{md}");
    assert!(md.contains("## Controls"));

    let out = tmp.path().join("a");
    let cats = fs::read_to_string(out.join("phase1/categories.csv")).unwrap();
    let total: Vec<usize> = cats.lines().last().unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(total[0], 100);
    assert!(total[1] >= 99, "{cats}");
    let runs = trajlab::trace::list_bundles(&out.join("phase2/runs")).unwrap();
    assert_eq!(runs.len(), 8 * 12);
    let t4 = fs::read_to_string(out.join("phase3/table4.csv")).unwrap();
    assert_eq!(t4.lines().nth(3).unwrap(), "2,1.000000,0.000000,1.000000,0.000000");
    for phase in ["phase1", "phase2", "phase3", "report"] {
        manifest::verify(&out.join(phase)).unwrap();
    }
}
