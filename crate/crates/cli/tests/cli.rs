use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rlqite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlqite")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_body(path: &Path) -> (String, Vec<String>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let first = lines.next().unwrap().to_string();
    (first, lines.map(str::to_string).collect())
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[qite]\nbeta = 0.9\ntrotter = 4\n");
    let out = rlqite(&["run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_beta_grid_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = rlqite(&["run", "--beta-grid", "1:0.5:x", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_without_hamiltonian_match_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = rlqite(&["run", "--replay", "table4", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn strict_normalization_failure_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "strict.toml",
        "[model]\nkind = \"sk\"\ncouplings = \"table3\"\n\n\
         [qite]\nbeta = 5.0\nnum_trotter_steps = 6\ndomain_size = 2\nnormalization = \"strict\"\n\n\
         [schedule]\nscheme = \"standard\"\n",
    );
    let out = rlqite(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("operation"), "{err}");
}

#[test]
fn run_writes_tagged_results_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = rlqite(&["run", "--replay", "table2", "--scheme", "standard,replay", "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (first, rows) = csv_body(&out_dir.join("results.csv"));
    assert!(first.starts_with("# rlqite-schema=1 manifest="));
    assert_eq!(rows[0], "beta,scheme,seed,energy,fidelity,p_gs,alg_error,continued_steps");
    assert_eq!(rows.len(), 3);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["manifest"].as_str().unwrap();
    assert!(first.ends_with(hash));
    assert!(manifest["files"].as_array().unwrap().iter().any(|f| f == "results.csv"));

    let (trace_first, trace) = csv_body(&out_dir.join("traces/replay_beta0.9000.csv"));
    assert_eq!(trace_first, first);
    assert_eq!(trace.len(), 1 + 4 * 7);
}

#[test]
fn deterministic_training_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("bandit.toml");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let o = dir.path().join(run);
        let out = rlqite(&["train", "--config", s(&cfg), "--out", s(&o)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(o);
    }
    for f in ["learning_curve.csv", "checkpoint.bin", "train_state.json", "best_schedule.json"] {
        let a = std::fs::read(outputs[0].join(f)).unwrap();
        let b = std::fs::read(outputs[1].join(f)).unwrap();
        assert!(a == b, "{f} differs between reruns");
    }
    let (first, rows) = csv_body(&outputs[0].join("learning_curve.csv"));
    assert!(first.starts_with("# rlqite-schema=1"));
    assert_eq!(rows[0], "iteration,mean_reward,best_E,wall_time_s");
    assert_eq!(rows.len(), 1 + 300);
}

#[test]
fn bandit_training_reaches_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = rlqite(&["train", "--config", s(&configs().join("bandit.toml")), "--out", s(dir.path())]);
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["results"]["greedy_reached_target"], true);
}

#[test]
fn resume_continues_and_hamming_of_identical_checkpoints_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let body = "seed = 1\ndeterministic = true\n\n[model]\nkind = \"tfim\"\nnum_qubits = 2\n\n\
                [qite]\nbeta = 1.0\nnum_trotter_steps = 2\ndomain_size = 2\n\n\
                [train]\nepisode_length = 4\niterations = ITER\nhidden = [16, 16]\ncheckpoint_every = 10\n";
    let short = write_config(dir.path(), "short.toml", &body.replace("ITER", "20"));
    let long = write_config(dir.path(), "long.toml", &body.replace("ITER", "40"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");

    assert!(rlqite(&["train", "--config", s(&short), "--out", s(&a)]).status.success());
    let out = rlqite(&["train", "--resume", "--config", s(&long), "--out", s(&a)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(rlqite(&["train", "--config", s(&long), "--out", s(&b)]).status.success());
    assert_eq!(
        std::fs::read(a.join("checkpoint.bin")).unwrap(),
        std::fs::read(b.join("checkpoint.bin")).unwrap()
    );
    for f in ["best_schedule.json", "greedy_schedule.json", "greedy_protocol.json"] {
        assert!(a.join(f).exists(), "missing {f}");
    }

    let h = dir.path().join("h");
    let out = rlqite(&["hamming", "--config", s(&long), "--out", s(&h), s(&a), s(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = csv_body(&h.join("hamming.csv"));
    assert_eq!(rows, vec!["checkpoint,c0,c1", "c0,0,0", "c1,0,0"]);
}

#[test]
fn resume_without_checkpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rlqite(&["train", "--resume", "--config", s(&configs().join("bandit.toml")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_list_names_bundled_tables() {
    let out = rlqite(&["replay-list"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("table2: 4 steps x 7 terms"), "{text}");
    assert!(text.contains("table4: 6 steps x 15 terms"), "{text}");
}

#[test]
fn scaling_without_training_reports_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "scaling.toml",
        "[model]\nkind = \"tfim\"\n\n[qite]\nnum_trotter_steps = 2\ndomain_size = 2\n\n\
         [scaling]\nsizes = [2, 3]\ntrain = false\n",
    );
    let out_dir = dir.path().join("o");
    let out = rlqite(&["scaling", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = csv_body(&out_dir.join("scaling.csv"));
    assert_eq!(rows[0], "N,beta,E_std,E_RL,E_RL/E_std,F_std,F_RL,E_rand,F_rand");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("2,"));
}

#[test]
fn bundled_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        let dir = tempfile::tempdir().unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let parsed: toml::Value = toml::from_str(&text).unwrap();
        assert!(parsed.get("model").is_some(), "{}", p.display());
        if text.contains("kind = \"bandit\"") || text.contains("[scaling]") || text.contains("[train]") {
            continue;
        }
        // one-point grid keeps this cheap
        let out = rlqite(&["run", "--config", s(&p), "--beta-grid", "0.5:0.5:0.1", "--out", s(dir.path())]);
        assert!(out.status.success(), "{}: {}", p.display(), String::from_utf8_lossy(&out.stderr));
    }
}
