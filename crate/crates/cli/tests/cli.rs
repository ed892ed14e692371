use std::path::Path;
use std::process::{Command, Output};

fn bpu(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpu"))
        .args(args)
        .current_dir(cwd)
        .env("BPU_DATA_DIR", cwd.join("no-data"))
        .env_remove("RUST_LOG")
        .output()
        .expect("bpu runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

#[test]
fn perft_of_the_start_position() {
    let dir = tempfile::tempdir().unwrap();
    let o = bpu(&["perft", "--fen", "startpos", "--depth", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "400");
    let o = bpu(&["perft", "--depth", "1", "--divide"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains(": 1")).count(), 20);
    assert_eq!(stdout(&o).lines().last(), Some("20"));
}

#[test]
fn usage_errors_exit_2_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let o = bpu(&["expand", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = bpu(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["expand", "train-vision", "ablate", "train-chess", "solve-puzzles", "perft"] {
        assert!(stdout(&o).contains(cmd), "help lacks {cmd}");
    }
}

#[test]
fn bad_expansion_factor_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = bpu(&["expand", "--surrogate", "0", "--factor", "0", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("1..=5"), "{}", stderr(&o));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn missing_connectome_exits_3_with_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let o = bpu(&["expand", "--factor", "2", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("--connectome"), "{}", stderr(&o));
}

#[test]
fn failed_run_leaves_only_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(bpu(&["synth-connectome", "--seed", "1", "--out", "g"], d).status.success());
    std::fs::write(d.join("labels.csv"), "fen,win_prob\nnot a fen,0.5\n").unwrap();
    let o = bpu(&["train-chess", "--connectome", "g", "--data", "labels.csv", "--out", "run"], d);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(listing(&d.join("run")), vec![".failed".to_string()]);
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bpu.conf"), "# shared\nseed = 4\n\n[expand]\nfactor = 3\nsurrogate = 2\n").unwrap();
    let o = bpu(&["--config", "bpu.conf", "expand", "--seed", "9", "--out", "x"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("x/dcsbm.json")).unwrap()).unwrap();
    assert_eq!(sidecar["factor"], 3);
    assert_eq!(sidecar["seed"], 9);
    assert_eq!(sidecar["source"]["seed"], 2);
    assert_eq!(sidecar["n"], 3 * sidecar["n_original"].as_u64().unwrap());
}

#[test]
fn manifest_reruns_reproduce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(bpu(&["synth-connectome", "--seed", "2", "--out", "g"], d).status.success());
    let o = bpu(&["expand", "--in", "g", "--factor", "2", "--seed", "3", "--out", "x"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("x/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "expand");
    assert_eq!(manifest["seeds"], serde_json::json!([3]));
    assert!(manifest["inputs"].as_object().unwrap().keys().any(|k| k.ends_with("edges.csv")));
    assert!(!d.join("x/.staging").exists());

    let o = bpu(&["rerun", "x/manifest.json"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["nodes.csv", "edges.csv", "polarity.csv"] {
        assert_eq!(std::fs::read(d.join("x").join(name)).unwrap(), std::fs::read(d.join("x-rerun").join(name)).unwrap());
    }

    // Edited inputs are refused rather than silently rerun.
    let edges = d.join("g/edges.csv");
    let mut text = std::fs::read_to_string(&edges).unwrap();
    text.push_str("\n");
    std::fs::write(&edges, text).unwrap();
    let o = bpu(&["rerun", "x/manifest.json", "--out", "again"], d);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("inputs changed"), "{}", stderr(&o));
}

#[test]
fn puzzles_are_scored_with_material_search() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../chess/tests/fixtures/mate_in_one.csv");
    let o = bpu(&["solve-puzzles", "--puzzles", fixtures.to_str().unwrap(), "--limit", "10", "--out", "p"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("accuracy: 100.00% (10/10 solved, 0 skipped)"), "{}", stdout(&o));
    let rows = std::fs::read_to_string(d.join("p/puzzles.csv")).unwrap();
    assert_eq!(rows.lines().count(), 11);
    assert!(rows.lines().skip(1).all(|l| l.contains(",solved,")));
}
