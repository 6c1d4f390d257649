use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[corpus]
programs = 5
num_loops = [1, 2]

[dse]
budget = 20

[ensemble]
members = 2
epochs = 2
gnn = { hidden = 8, layers = 1 }

[weaklabel]
l = 4
k = 10
functions = 2

[model]
d_model = 8
layers = 1
heads = 2
ff = 8
max_seq_len = 32
gnn = { hidden = 8, layers = 1 }

[train]
preset = "Ice-H"
steps = 2
batch = 2
seq_len = 10

[eval]
context_size = 6
test_fraction = 0.4
seeds = [1, 2]
"#;

fn hlsbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlsbench")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = hlsbench(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let cfg = cfg.display().to_string();
    (dir, cfg)
}

#[test]
fn synth_writes_kernels_and_manifest() {
    let (dir, cfg) = setup();
    let out = dir.path().join("d");
    run_ok(&["synth", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    let kernels = fs::read_to_string(out.join("kernels.jsonl")).unwrap();
    assert_eq!(kernels.lines().count(), 6);
    assert!(kernels.lines().next().unwrap().contains("\"seed\":3"));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["counts"]["synthesizable"], 5);
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn malformed_config_exits_2_with_json_error() {
    let (dir, _) = setup();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[dse]\nbudget = \"many\"\n").unwrap();
    let out = hlsbench(&["dse", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "malformed_config");
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn missing_upstream_artifact_exits_3() {
    let (dir, cfg) = setup();
    for stage in ["dse", "train-ensemble", "pretrain", "eval", "report"] {
        let out = hlsbench(&[stage, "--config", &cfg, "--out", dir.path().join("empty").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(3), "{stage}");
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"], "missing_artifact", "{stage}");
    }
}

#[test]
fn stages_never_touch_their_input_directory() {
    let (dir, cfg) = setup();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (a_s, b_s) = (a.to_str().unwrap(), b.to_str().unwrap());
    run_ok(&["synth", "--config", &cfg, "--out", a_s]);
    run_ok(&["dse", "--config", &cfg, "--out", a_s]);
    let before = snapshot(&a);
    run_ok(&["train-ensemble", "--config", &cfg, "--input", a_s, "--out", b_s]);
    run_ok(&["dse", "--config", &cfg, "--input", a_s, "--out", b_s]);
    assert_eq!(before, snapshot(&a));
    assert!(b.join("ensemble/ensemble.json").is_file());
    assert!(b.join("designs.jsonl").is_file());
    assert!(!b.join("kernels.jsonl").exists());
}

#[test]
fn full_pipeline_replays_byte_identically() {
    let (dir, cfg) = setup();
    let mut runs = Vec::new();
    for name in ["r1", "r2"] {
        let out = dir.path().join(name);
        let o = out.to_str().unwrap();
        for stage in ["synth", "dse", "train-ensemble", "weaklabel", "pretrain", "eval", "optimize"] {
            run_ok(&[stage, "--config", &cfg, "--seed", "7", "--out", o]);
        }
        let report = run_ok(&["report", "--config", &cfg, "--seed", "7", "--out", o]);
        let text = String::from_utf8(report.stdout).unwrap();
        assert!(text.lines().last().unwrap().starts_with("geomean,"), "{text}");
        let validated = run_ok(&["validate", "--input", o]);
        assert!(String::from_utf8_lossy(&validated.stdout).contains("\"weak_labels\""));
        runs.push(snapshot(&out));
    }
    assert_eq!(runs[0]["manifest.json"], runs[1]["manifest.json"]);
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn validate_reports_corrupted_line() {
    let (dir, cfg) = setup();
    let o = dir.path().join("v");
    let o_s = o.to_str().unwrap();
    run_ok(&["synth", "--config", &cfg, "--out", o_s]);
    run_ok(&["dse", "--config", &cfg, "--out", o_s]);
    let path = o.join("designs.jsonl");
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    lines[2] = lines[2].replacen("\"kernel_id\":\"", "\"kernel_id\":\"ghost-", 1);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = hlsbench(&["validate", "--input", o_s]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "dataset_invalid");
    let details = err["details"].as_array().unwrap();
    assert!(
        details.iter().any(|d| d.as_str().unwrap().starts_with("designs.jsonl:3:")),
        "{details:?}"
    );
}
