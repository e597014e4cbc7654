use std::fs;
use std::path::Path;

use horizon_cli::config::RunConfig;
use horizon_cli::runner::{run_pool, sweep};
use horizon_cli::{run, RunOptions};
use horizon_core::nn::load_checkpoint;
use horizon_core::Error;
use serde_json::{json, Value};

fn small_lock(extra: Value) -> RunConfig {
    let mut doc = json!({
        "kind": "lock-dqn",
        "name": "small",
        "seeds": [3],
        "env": { "horizon": 8 },
        "dataset": { "size": 2048 },
        "train": { "steps": 200, "eval_every": 50, "batch_size": 32 },
        "learner": { "hidden": [16, 16] },
        "eval": { "buckets": 4, "td_batches": 1, "td_batch_size": 32 },
    });
    horizon_cli::config::deep_merge(&mut doc, extra);
    RunConfig::from_value(doc).unwrap()
}

fn opts(out: &Path) -> RunOptions {
    RunOptions {
        out: Some(out.to_path_buf()),
        workers: 1,
        seed_override: None,
        cache_dir: None,
    }
}

fn csv_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn run_writes_metrics_checkpoint_and_echo_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_lock(json!({ "seeds": [0, 1] }));
    let report = run(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(report.runs.len(), 2);
    for seed in [0, 1] {
        let run = dir.path().join(format!("seed{seed}"));
        let lines = csv_lines(&run.join("metrics.csv"));
        assert!(lines[0].starts_with("run_id,step,success_rate,td_error,q_error"));
        let steps: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(steps, ["0", "50", "100", "150", "200"]);
        let echo: Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
        assert_eq!(echo["run"]["seed"], json!(seed));
        assert_eq!(RunConfig::from_value(echo["config"].clone()).unwrap(), cfg);
        assert!(echo["build"]["git_describe"].is_string());
        let manifest: Value =
            serde_json::from_str(&fs::read_to_string(run.join("checkpoint/manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["step"], json!(200));
        for c in manifest["components"].as_array().unwrap() {
            let ck = load_checkpoint(&run.join("checkpoint").join(c["file"].as_str().unwrap())).unwrap();
            assert_eq!(ck.tensors[0].0, c["name"].as_str().unwrap());
        }
    }
    assert!(dir.path().join("config.resolved.json").exists());
    let summary = csv_lines(&dir.path().join("summary.csv"));
    assert_eq!(summary.len(), 3);
    assert!(summary[0].starts_with("run_id,label,seed,"));
}

#[test]
fn zero_training_steps_give_only_the_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    run(&small_lock(json!({ "train": { "steps": 0 } })), &opts(dir.path())).unwrap();
    let lines = csv_lines(&dir.path().join("seed3/metrics.csv"));
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').nth(1), Some("0"));
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_lock(json!({ "seeds": [0, 1, 2] }));
    run(&cfg, &opts(a.path())).unwrap();
    let mut o = opts(b.path());
    o.workers = 3;
    run(&cfg, &o).unwrap();
    for f in ["seed0/metrics.csv", "seed1/metrics.csv", "seed2/metrics.csv", "summary.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let c0 = fs::read(a.path().join("seed0/metrics.csv")).unwrap();
    let c1 = fs::read(a.path().join("seed1/metrics.csv")).unwrap();
    assert_ne!(c0, c1);
}

#[test]
fn seed_override_replaces_the_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let mut o = opts(dir.path());
    o.seed_override = Some(9);
    let report = run(&small_lock(json!({ "train": { "steps": 0 } })), &o).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert!(dir.path().join("seed9/metrics.csv").exists());
    assert!(!dir.path().join("seed3").exists());
}

#[test]
fn blow_up_exits_numerically_and_keeps_the_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_lock(json!({ "learner": { "lr": 1e30 }, "train": { "steps": 400, "eval_every": 1 } }));
    let err = run(&cfg, &opts(dir.path())).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
    let run_dir = dir.path().join("seed3");
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("checkpoint/manifest.json")).unwrap()).unwrap();
    let step = manifest["step"].as_u64().unwrap();
    assert!(step < 400);
    let ck = load_checkpoint(&run_dir.join("checkpoint/q0.hrlw")).unwrap();
    assert!(ck.tensors[0].1.as_slice().iter().all(|v| v.is_finite()));
    // The metrics file holds every evaluation up to the last good one.
    assert_eq!(csv_lines(&run_dir.join("metrics.csv")).len() as u64, step + 2);
}

#[test]
fn sweep_writes_groups_and_an_aggregate_with_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
kind = "lock-dqn"
name = "tiny-sweep"
seeds = [0, 1]
[dataset]
size = 2048
[train]
steps = 40
eval_every = 20
batch_size = 16
[learner]
hidden = [8]
[eval]
buckets = 2
td_batches = 1
td_batch_size = 16
[sweep]
axis = "H"
values = [4, 8]
[[sweep.variants]]
name = "dqn-1"
set = { "learner.n" = 1 }
[[sweep.variants]]
name = "dqn-n2"
set = { "learner.n" = 2 }
"#;
    let cfg = RunConfig::from_toml_str(text).unwrap();
    let report = sweep(&cfg, &opts(dir.path())).unwrap();
    let groups: Vec<&str> = report.groups.iter().map(|(g, _)| g.as_str()).collect();
    assert_eq!(groups, ["dqn-1_H4", "dqn-1_H8", "dqn-n2_H4", "dqn-n2_H8"]);
    for g in &groups {
        assert!(dir.path().join(g).join("config.resolved.json").exists());
        assert!(dir.path().join(g).join("seed1/metrics.csv").exists());
    }
    let agg = csv_lines(&dir.path().join("aggregate.csv"));
    let header: Vec<&str> = agg[0].split(',').collect();
    assert_eq!(
        header,
        ["group", "variant", "label", "axis", "value", "metric", "seed_0", "seed_1", "mean", "sd", "ci95_low", "ci95_high"]
    );
    for line in &agg[1..] {
        let f: Vec<&str> = line.split(',').collect();
        let (a, b): (f64, f64) = (f[6].parse().unwrap(), f[7].parse().unwrap());
        let mean: f64 = f[8].parse().unwrap();
        let sd: f64 = f[9].parse().unwrap();
        let half = 1.96 * sd / 2f64.sqrt();
        let tol = 1e-7 * (1.0 + mean.abs() + half);
        assert!((mean - (a + b) / 2.0).abs() <= tol, "{line}");
        assert!((sd - (a - b).abs() / 2f64.sqrt()).abs() <= tol, "{line}");
        assert!((f[10].parse::<f64>().unwrap() - (mean - half)).abs() <= tol, "{line}");
        assert!((f[11].parse::<f64>().unwrap() - (mean + half)).abs() <= tol, "{line}");
    }
    assert!(agg.iter().any(|l| l.starts_with("dqn-n2_H8,dqn-n2,dqn,H,8,q_error,")));

    let again = tempfile::tempdir().unwrap();
    sweep(&cfg, &opts(again.path())).unwrap();
    assert_eq!(
        fs::read(dir.path().join("aggregate.csv")).unwrap(),
        fs::read(again.path().join("aggregate.csv")).unwrap()
    );
}

#[test]
fn dataset_cache_is_reused_by_content_hash() {
    let cache = tempfile::tempdir().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_lock(json!({ "train": { "steps": 50 } }));
    let mut o = opts(a.path());
    o.cache_dir = Some(cache.path().to_path_buf());
    run(&cfg, &o).unwrap();
    let entries: Vec<_> = fs::read_dir(cache.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1);
    assert!(entries[0].extension().is_some_and(|e| e == "hrld"));
    let stamp = fs::metadata(&entries[0]).unwrap().modified().unwrap();
    o.out = Some(b.path().to_path_buf());
    run(&cfg, &o).unwrap();
    assert_eq!(fs::read_dir(cache.path()).unwrap().count(), 1);
    assert_eq!(fs::metadata(&entries[0]).unwrap().modified().unwrap(), stamp);
    // Cached and freshly generated data train identically.
    let c = tempfile::tempdir().unwrap();
    run(&cfg, &opts(c.path())).unwrap();
    assert_eq!(
        fs::read(b.path().join("seed3/metrics.csv")).unwrap(),
        fs::read(c.path().join("seed3/metrics.csv")).unwrap()
    );
}

#[test]
fn maze_runs_write_one_directory_per_method_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let doc = json!({
        "kind": "maze-agents",
        "name": "maze-small",
        "seeds": [0],
        "env": { "layout": "corridor-s" },
        "dataset": { "transitions": 400, "traj_len": 101 },
        "train": { "steps": 4, "eval_every": 2 },
        "methods": ["fbc", "hfbc", "sharsa", "double-sharsa"],
        "agent": { "policy_hidden": [8], "value_hidden": [8], "batch_size": 8, "n": 4, "rs_n": 3, "flow_steps": 2 },
        "eval": { "task_sets": ["medium"], "tasks": 1, "episodes_per_task": 1, "td_batches": 1 },
    });
    let cfg = RunConfig::from_value(doc).unwrap();
    let report = run(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(report.runs.len(), 4);
    for m in ["fbc", "hfbc", "sharsa", "double-sharsa"] {
        let run = dir.path().join(format!("{m}-seed0"));
        let lines = csv_lines(&run.join("metrics.csv"));
        assert_eq!(lines.len(), 4, "{m}");
        assert!(lines[0].contains("success_medium"));
        assert!(run.join("checkpoint/manifest.json").exists());
    }
    let sharsa = csv_lines(&dir.path().join("sharsa-seed0/metrics.csv"));
    let fbc = csv_lines(&dir.path().join("fbc-seed0/metrics.csv"));
    // Only value-learning methods report a TD error.
    assert!(!sharsa[1].split(',').nth(3).unwrap().is_empty());
    assert!(fbc[1].split(',').nth(3).unwrap().is_empty());
}

#[test]
fn pool_preserves_job_order() {
    for workers in [1, 2, 5] {
        let out = run_pool(7, workers, |i| i * i);
        assert_eq!(out, (0..7).map(|i| i * i).collect::<Vec<_>>());
    }
}

#[test]
fn grad_check_and_oracle_kinds_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_value(json!({ "kind": "grad-check", "seeds": [0] })).unwrap();
    run(&cfg, &opts(dir.path())).unwrap();
    let lines = csv_lines(&dir.path().join("gradcheck.csv"));
    assert_eq!(lines.len(), 5);
    let cfg = RunConfig::from_value(json!({ "kind": "oracle-dump", "lock": { "horizon": 4, "seed": 0 } })).unwrap();
    let out = tempfile::tempdir().unwrap();
    run(&cfg, &opts(out.path())).unwrap();
    let oracle = csv_lines(&out.path().join("oracle.csv"));
    assert_eq!(oracle[0], "state,action,q");
    assert_eq!(oracle.len(), 7);
    // Per state: the correct digit costs the remaining distance, the other the whole horizon.
    for i in 0..3i64 {
        let mut qs: Vec<i64> = oracle[1..]
            .iter()
            .filter(|l| l.starts_with(&format!("{i},")))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        qs.sort();
        assert_eq!(qs, [-4, -(3 - i)]);
    }
    assert!(out.path().join("config.resolved.json").exists());
}
