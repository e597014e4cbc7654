//! Experiment execution: datasets, training loops, evaluation schedule,
//! artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use horizon_core::agents::{MazeAgent, Method};
use horizon_core::data::{gen_lock_1step, gen_lock_nstep, gen_maze_play, sample_batch, sample_lock_batch, Dataset, LockIndex};
use horizon_core::envs::{LockSpec, MazeSpec};
use horizon_core::eval::{
    eval_maze_success, greedy_reaches_goal, maze_tasks, per_position_error_table, q_error_optimal, q_error_table,
    spearman, td_error, write_atomic, write_csv, MetricsRow,
};
use horizon_core::learners::DqnLearner;
use horizon_core::nn::{grad_check, save_checkpoint, MlpParams};
use horizon_core::oracle::{lock_oracle_q, maze_bfs};
use horizon_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::cache::cached_dataset;
use crate::config::{
    sweep_points, GradCheckConfig, LockDatasetKind, LockDqnConfig, MazeAgentsConfig, OracleDumpConfig, RunConfig,
};
use crate::stats::{final_share, mean, mean_ci};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's output directory.
    pub out: Option<PathBuf>,
    pub workers: usize,
    /// Replaces the config's seed list with this single seed.
    pub seed_override: Option<u64>,
    pub cache_dir: Option<PathBuf>,
}

/// Per-run summary metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    /// Method name for maze runs, `dqn` for lock runs, the loss for grad checks.
    pub label: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub out_dir: PathBuf,
    pub runs: Vec<RunSummary>,
}

impl Report {
    /// Values of `metric` over runs with `label`, in seed order.
    pub fn values(&self, label: &str, metric: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.label == label)
            .filter_map(|r| r.metrics.get(metric).copied())
            .collect()
    }
}

/// Provenance recorded next to every artifact.
pub fn build_info() -> Value {
    json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "git_describe": env!("HORIZON_GIT_DESCRIBE"),
        "profile": if cfg!(debug_assertions) { "debug" } else { "release" },
        "target": format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
    })
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("json serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn echo(cfg: &RunConfig, extra: Value) -> Value {
    json!({ "config": cfg.to_value(), "build": build_info(), "run": extra })
}

/// Run `jobs` closures on `workers` threads; results come back in job order.
pub fn run_pool<T: Send>(jobs: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs {
                    break;
                }
                let r = f(i);
                slots.lock().expect("pool lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("pool lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Evaluation rng for one snapshot, independent of earlier evaluations.
fn eval_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ step.rotate_left(32));
    r.set_stream(1);
    r
}

fn check_row(row: &MetricsRow) -> Result<()> {
    let finite = row.success_rate.is_finite()
        && row.td_error.is_none_or(f64::is_finite)
        && row.q_error.is_none_or(f64::is_finite)
        && row.extra.values().all(|v| v.is_finite());
    if finite {
        Ok(())
    } else {
        Err(Error::NonFinite("evaluation metrics"))
    }
}

/// Running means of named training losses between evaluations.
#[derive(Default)]
struct LossMeans(BTreeMap<String, (f64, usize)>);

impl LossMeans {
    fn add(&mut self, name: &str, v: f64) {
        let e = self.0.entry(name.to_string()).or_default();
        e.0 += v;
        e.1 += 1;
    }

    fn drain_into(&mut self, extra: &mut BTreeMap<String, f64>) {
        for (k, (sum, n)) in std::mem::take(&mut self.0) {
            extra.insert(k, sum / n as f64);
        }
    }
}

fn save_components(dir: &Path, echo: &Value, step: u64, components: &[(String, &MlpParams<f32>)]) -> Result<()> {
    mkdir(dir)?;
    let mut listed = Vec::new();
    for (name, params) in components {
        let file = format!("{name}.hrlw");
        save_checkpoint(&dir.join(&file), echo, &[(name.clone(), *params)])?;
        listed.push(json!({ "name": name, "file": file, "params": params.len() }));
    }
    write_json(&dir.join("manifest.json"), &json!({ "step": step, "components": listed }))
}

// ---------------------------------------------------------------- lock

pub fn lock_dataset_key(cfg: &LockDqnConfig, seed: u64) -> Value {
    let data_seed = cfg.dataset.seed.unwrap_or(seed);
    match cfg.dataset_kind() {
        LockDatasetKind::NStep => json!({
            "generator": "lock-nstep", "horizon": cfg.env.horizon, "env_seed": cfg.env.seed,
            "n": cfg.learner.n, "size": cfg.dataset.size / cfg.learner.n * cfg.learner.n, "seed": data_seed,
        }),
        _ => json!({
            "generator": "lock-1step", "horizon": cfg.env.horizon, "env_seed": cfg.env.seed,
            "size": cfg.dataset.size, "seed": data_seed,
        }),
    }
}

pub fn lock_dataset(cfg: &LockDqnConfig, spec: &LockSpec, seed: u64, cache: Option<&Path>) -> Result<Dataset> {
    let data_seed = cfg.dataset.seed.unwrap_or(seed);
    cached_dataset(cache, &lock_dataset_key(cfg, seed), || match cfg.dataset_kind() {
        LockDatasetKind::NStep => {
            let n = cfg.learner.n;
            gen_lock_nstep(spec, n, cfg.dataset.size / n * n, data_seed)
        }
        _ => gen_lock_1step(spec, cfg.dataset.size, data_seed),
    })
}

/// Train and evaluate one lock learner; writes `metrics.csv`, a checkpoint
/// directory and `config.json` into `dir`.
pub fn run_lock_seed(cfg: &LockDqnConfig, seed: u64, dir: &Path, cache: Option<&Path>) -> Result<Vec<MetricsRow>> {
    mkdir(dir)?;
    let run_id = format!("seed{seed}");
    let full = RunConfig::LockDqn(cfg.clone());
    let echo = echo(&full, json!({ "run_id": run_id, "seed": seed }));
    write_json(&dir.join("config.json"), &echo)?;

    let spec = LockSpec::new(cfg.env.horizon, cfg.env.seed)?;
    let ds = lock_dataset(cfg, &spec, seed, cache)?;
    let index = LockIndex::new(&ds, &spec)?;
    let oracle = lock_oracle_q(&spec);
    let mut learner = DqnLearner::new(&spec, cfg.learner.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut losses = LossMeans::default();
    let csv = dir.join("metrics.csv");
    let steps = cfg.train.steps;
    let mut step = 0u64;
    loop {
        if step % cfg.train.eval_every == 0 || step == steps {
            let table = learner.q_table()?;
            let mut erng = eval_rng(seed, step);
            let td = td_error(&mut learner, &ds, &index, cfg.eval.td_batches, cfg.eval.td_batch_size, &mut erng)?;
            let mut extra = BTreeMap::new();
            extra.insert("q_error_opt".to_string(), q_error_optimal(&spec, &table, &oracle));
            for (k, v) in per_position_error_table(&table, &oracle, cfg.eval.buckets).into_iter().enumerate() {
                extra.insert(format!("pp_{k:03}"), v);
            }
            losses.drain_into(&mut extra);
            let row = MetricsRow {
                run_id: run_id.clone(),
                step,
                success_rate: if greedy_reaches_goal(&spec, &table) { 1.0 } else { 0.0 },
                td_error: Some(td),
                q_error: Some(q_error_table(&table, &oracle)),
                extra,
            };
            check_row(&row)?;
            rows.push(row);
            write_csv(&rows, &csv)?;
            save_lock_checkpoint(&learner, &dir.join("checkpoint"), &echo, step)?;
        }
        if step == steps {
            break;
        }
        let b = sample_lock_batch(&ds, &index, cfg.train.batch_size, cfg.learner.n, cfg.learner.gamma, &mut rng)?;
        let loss = learner.update(&b)?;
        losses.add("train_loss", loss);
        step += 1;
    }
    Ok(rows)
}

fn save_lock_checkpoint(learner: &DqnLearner, dir: &Path, echo: &Value, step: u64) -> Result<()> {
    match learner.networks() {
        Some(nets) => {
            let mut comps = Vec::new();
            for (k, net) in nets.iter().enumerate() {
                comps.push((format!("q{k}"), &net.params));
                if let Some(t) = &net.target {
                    comps.push((format!("q{k}_target"), t));
                }
            }
            save_components(dir, echo, step, &comps)
        }
        None => {
            mkdir(dir)?;
            let mut l = learner.clone();
            let table = l.q_table()?;
            write_json(&dir.join("table.json"), &json!({ "values": table.values }))?;
            write_json(
                &dir.join("manifest.json"),
                &json!({ "step": step, "components": [{ "name": "table", "file": "table.json" }] }),
            )
        }
    }
}

/// Error summaries over the final share of evaluations; success over all.
pub fn summarize_lock(rows: &[MetricsRow], final_fraction: f64) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    if rows.is_empty() {
        return m;
    }
    let tail = final_share(rows, final_fraction);
    m.insert("success_mean".into(), mean(&rows.iter().map(|r| r.success_rate).collect::<Vec<_>>()));
    m.insert("success_final".into(), rows[rows.len() - 1].success_rate);
    m.insert("q_error".into(), mean(&tail.iter().filter_map(|r| r.q_error).collect::<Vec<_>>()));
    m.insert("td_error".into(), mean(&tail.iter().filter_map(|r| r.td_error).collect::<Vec<_>>()));
    let keys: Vec<String> = tail[0].extra.keys().filter(|k| *k != "train_loss").cloned().collect();
    for k in keys {
        let xs: Vec<f64> = tail.iter().filter_map(|r| r.extra.get(&k).copied()).collect();
        m.insert(k, mean(&xs));
    }
    let pp: Vec<f64> = m.iter().filter(|(k, _)| k.starts_with("pp_")).map(|(_, v)| *v).collect();
    if pp.len() > 1 {
        let pos: Vec<f64> = (0..pp.len()).map(|i| i as f64).collect();
        m.insert("pp_spearman".into(), spearman(&pos, &pp));
    }
    m
}

// ---------------------------------------------------------------- maze

pub fn maze_spec(cfg: &MazeAgentsConfig) -> Result<MazeSpec> {
    let mut spec = MazeSpec::new(&cfg.env.layout, cfg.env.seed)?;
    spec.max_episode_steps = cfg.env.max_episode_steps;
    Ok(spec)
}

pub fn maze_dataset_key(cfg: &MazeAgentsConfig, seed: u64) -> Value {
    json!({
        "generator": "maze-play", "layout": cfg.env.layout, "env_seed": cfg.env.seed,
        "num_traj": cfg.dataset.num_traj(), "traj_len": cfg.dataset.traj_len,
        "noise_std": cfg.dataset.noise_std, "seed": cfg.dataset.seed.unwrap_or(seed),
    })
}

pub fn maze_dataset(cfg: &MazeAgentsConfig, spec: &MazeSpec, seed: u64, cache: Option<&Path>) -> Result<Dataset> {
    cached_dataset(cache, &maze_dataset_key(cfg, seed), || {
        gen_maze_play(
            spec,
            cfg.dataset.num_traj(),
            cfg.dataset.traj_len,
            cfg.dataset.noise_std,
            cfg.dataset.seed.unwrap_or(seed),
        )
    })
}

fn high_td_error(agent: &mut MazeAgent, ds: &Dataset, batches: usize, rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
    let MazeAgent::Hier(_, a) = agent else {
        return Ok(None);
    };
    let c = a.cfg.clone();
    let Some(high) = a.high.as_mut() else {
        return Ok(None);
    };
    let mut total = 0.0;
    for _ in 0..batches.max(1) {
        let b = sample_batch(ds, c.batch_size, c.n, c.gamma, &c.value_goals, c.reward_kind(), rng)?;
        total += high.losses(&b)?.1;
    }
    Ok(Some(total / batches.max(1) as f64))
}

/// Train and evaluate one maze agent.
pub fn run_maze_seed(
    cfg: &MazeAgentsConfig,
    method: Method,
    seed: u64,
    dir: &Path,
    cache: Option<&Path>,
) -> Result<Vec<MetricsRow>> {
    mkdir(dir)?;
    let run_id = format!("{}-seed{seed}", method.name());
    let full = RunConfig::MazeAgents(cfg.clone());
    let echo = echo(&full, json!({ "run_id": run_id, "seed": seed, "method": method }));
    write_json(&dir.join("config.json"), &echo)?;

    let spec = maze_spec(cfg)?;
    let ds = maze_dataset(cfg, &spec, seed, cache)?;
    let dist = maze_bfs(&spec);
    let task_sets: Vec<_> = cfg
        .eval
        .task_sets
        .iter()
        .map(|&set| (set, maze_tasks(&spec, &dist, set, cfg.eval.tasks)))
        .collect();
    let mut agent = MazeAgent::new(&spec, method, cfg.agent_for(method)?, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut losses = LossMeans::default();
    let csv = dir.join("metrics.csv");
    let steps = cfg.train.steps;
    let mut step = 0u64;
    loop {
        if step % cfg.train.eval_every == 0 || step == steps {
            let mut erng = eval_rng(seed, step);
            let mut extra = BTreeMap::new();
            let mut first = None;
            for (set, tasks) in &task_sets {
                let rate = {
                    let a = &agent;
                    let mut act = |c: &mut _, s: &[f32], g: &[f32], r: &mut ChaCha8Rng| a.act(c, s, g, r);
                    eval_maze_success(&spec, &mut act, tasks, cfg.eval.episodes_per_task, spec.max_episode_steps, &mut erng)?
                };
                let name = serde_json::to_value(set).expect("task set serializes");
                extra.insert(format!("success_{}", name.as_str().unwrap_or("set")), rate);
                first.get_or_insert(rate);
            }
            let td = high_td_error(&mut agent, &ds, cfg.eval.td_batches, &mut erng)?;
            losses.drain_into(&mut extra);
            let row = MetricsRow {
                run_id: run_id.clone(),
                step,
                success_rate: first.unwrap_or(0.0),
                td_error: td,
                q_error: None,
                extra,
            };
            check_row(&row)?;
            rows.push(row);
            write_csv(&rows, &csv)?;
            save_components(&dir.join("checkpoint"), &echo, step, &agent.tensors())?;
        }
        if step == steps {
            break;
        }
        for (name, v) in agent.train_step(&ds, &mut rng)? {
            if !v.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            losses.add(name, v);
        }
        step += 1;
    }
    Ok(rows)
}

pub fn summarize_maze(rows: &[MetricsRow], final_fraction: f64) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    let Some(last) = rows.last() else {
        return m;
    };
    let keys: Vec<String> = last.extra.keys().filter(|k| k.starts_with("success_")).cloned().collect();
    for k in keys {
        let xs: Vec<f64> = rows.iter().filter_map(|r| r.extra.get(&k).copied()).collect();
        m.insert(format!("{k}_mean"), mean(&xs));
        m.insert(format!("{k}_final"), last.extra[&k]);
    }
    m.insert("success_final".into(), last.success_rate);
    let td: Vec<f64> = final_share(rows, final_fraction).iter().filter_map(|r| r.td_error).collect();
    if !td.is_empty() {
        m.insert("td_error".into(), mean(&td));
    }
    m
}

// ---------------------------------------------------------------- other kinds

fn run_grad_check(cfg: &GradCheckConfig, dir: &Path) -> Result<Vec<RunSummary>> {
    let mut rows = Vec::new();
    let mut out = Vec::new();
    let mut worst = 0.0f64;
    for &desc in &cfg.losses {
        for &seed in &cfg.seeds {
            let err = grad_check(desc, seed)?;
            worst = worst.max(err);
            let mut extra = BTreeMap::new();
            extra.insert("max_rel_error".to_string(), err);
            rows.push(MetricsRow {
                run_id: desc.name().to_string(),
                step: seed,
                success_rate: if err < cfg.tolerance { 1.0 } else { 0.0 },
                td_error: None,
                q_error: None,
                extra: extra.clone(),
            });
            out.push(RunSummary {
                run_id: format!("{}-seed{seed}", desc.name()),
                label: desc.name().to_string(),
                seed,
                metrics: extra,
            });
        }
    }
    write_csv(&rows, &dir.join("gradcheck.csv"))?;
    if !(worst < cfg.tolerance) {
        return Err(Error::NonFinite("gradient check above tolerance"));
    }
    Ok(out)
}

/// Oracle table as CSV text: `state,action,q` for the lock, `from,to,distance`
/// over free cells (as `row:col`) for a maze.
pub fn oracle_csv(cfg: &OracleDumpConfig) -> Result<String> {
    let mut out = String::new();
    if let Some(l) = &cfg.lock {
        let spec = LockSpec::new(l.horizon, l.seed)?;
        let q = lock_oracle_q(&spec);
        out.push_str("state,action,q\n");
        for s in 0..spec.goal_index() {
            for a in 0..2 {
                out.push_str(&format!("{s},{a},{}\n", q.q(s, a)));
            }
        }
    } else if let Some(m) = &cfg.maze {
        let spec = MazeSpec::new(&m.layout, m.seed)?;
        let d = maze_bfs(&spec);
        out.push_str("from,to,distance\n");
        for &a in d.free_cells() {
            for &b in d.free_cells() {
                let dist = d.distance(a, b).map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!("{}:{},{}:{},{dist}\n", a.row, a.col, b.row, b.col));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- entry points

struct Job {
    run_id: String,
    label: String,
    seed: u64,
    dir: PathBuf,
    method: Option<Method>,
}

fn jobs_for(cfg: &RunConfig, root: &Path) -> Vec<Job> {
    let mut jobs = Vec::new();
    match cfg {
        RunConfig::LockDqn(c) => {
            for &seed in &c.seeds {
                let run_id = format!("seed{seed}");
                jobs.push(Job {
                    dir: root.join(&run_id),
                    run_id,
                    label: "dqn".into(),
                    seed,
                    method: None,
                });
            }
        }
        RunConfig::MazeAgents(c) => {
            for &seed in &c.seeds {
                for &m in &c.methods {
                    let run_id = format!("{}-seed{seed}", m.name());
                    jobs.push(Job {
                        dir: root.join(&run_id),
                        run_id,
                        label: m.name().into(),
                        seed,
                        method: Some(m),
                    });
                }
            }
        }
        _ => {}
    }
    jobs
}

fn run_job(cfg: &RunConfig, job: &Job, cache: Option<&Path>) -> Result<RunSummary> {
    let metrics = match cfg {
        RunConfig::LockDqn(c) => summarize_lock(&run_lock_seed(c, job.seed, &job.dir, cache)?, c.eval.final_fraction),
        RunConfig::MazeAgents(c) => {
            let m = job.method.expect("maze jobs carry a method");
            summarize_maze(&run_maze_seed(c, m, job.seed, &job.dir, cache)?, c.eval.final_fraction)
        }
        _ => unreachable!("only training kinds produce jobs"),
    };
    Ok(RunSummary {
        run_id: job.run_id.clone(),
        label: job.label.clone(),
        seed: job.seed,
        metrics,
    })
}

/// `run_id,label,seed,<metrics...>` with the union of metric names as columns.
pub fn render_summary(runs: &[RunSummary]) -> String {
    let keys: std::collections::BTreeSet<&str> =
        runs.iter().flat_map(|r| r.metrics.keys().map(String::as_str)).collect();
    let mut out = String::from("run_id,label,seed");
    for k in &keys {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for r in runs {
        out.push_str(&format!("{},{},{}", r.run_id, r.label, r.seed));
        for k in &keys {
            out.push(',');
            if let Some(v) = r.metrics.get(*k) {
                out.push_str(&horizon_core::eval::format_float(*v));
            }
        }
        out.push('\n');
    }
    out
}

fn effective(cfg: &RunConfig, opts: &RunOptions) -> RunConfig {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed_override {
        cfg.set_seeds(vec![s]);
    }
    cfg
}

fn out_dir(cfg: &RunConfig, opts: &RunOptions) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| cfg.output_dir().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.name()))
}

fn execute_into(cfg: &RunConfig, root: &Path, opts: &RunOptions) -> Result<Vec<RunSummary>> {
    mkdir(root)?;
    write_json(&root.join("config.resolved.json"), &echo(cfg, json!({ "seeds": cfg.seeds() })))?;
    let runs = match cfg {
        RunConfig::GradCheck(c) => run_grad_check(c, root)?,
        RunConfig::OracleDump(c) => {
            write_atomic(&root.join("oracle.csv"), oracle_csv(c)?.as_bytes())?;
            Vec::new()
        }
        _ => {
            let jobs = jobs_for(cfg, root);
            let cache = opts.cache_dir.as_deref();
            let results = run_pool(jobs.len(), opts.workers, |i| run_job(cfg, &jobs[i], cache));
            results.into_iter().collect::<Result<Vec<_>>>()?
        }
    };
    write_atomic(&root.join("summary.csv"), render_summary(&runs).as_bytes())?;
    Ok(runs)
}

/// Run every seed of `cfg` (and every method, for maze experiments).
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<Report> {
    let cfg = effective(cfg, opts);
    let root = out_dir(&cfg, opts);
    let runs = execute_into(&cfg, &root, opts)?;
    Ok(Report { out_dir: root, runs })
}

/// One aggregate line: a metric of one (group, label) across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub group: String,
    pub variant: String,
    pub label: String,
    pub axis: String,
    pub value: f64,
    pub metric: String,
    pub per_seed: Vec<(u64, f64)>,
}

pub fn render_aggregate(rows: &[AggregateRow], seeds: &[u64]) -> String {
    use horizon_core::eval::format_float;
    let mut out = String::from("group,variant,label,axis,value,metric");
    for s in seeds {
        out.push_str(&format!(",seed_{s}"));
    }
    out.push_str(",mean,sd,ci95_low,ci95_high\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{},{}", r.group, r.variant, r.label, r.axis, r.value, r.metric));
        for s in seeds {
            out.push(',');
            if let Some((_, v)) = r.per_seed.iter().find(|(k, _)| k == s) {
                out.push_str(&format_float(*v));
            }
        }
        let xs: Vec<f64> = r.per_seed.iter().map(|(_, v)| *v).collect();
        let ci = mean_ci(&xs);
        for v in [ci.mean, ci.sd, ci.lo, ci.hi] {
            out.push(',');
            out.push_str(&format_float(v));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub out_dir: PathBuf,
    /// `(group, report)` per sweep point.
    pub groups: Vec<(String, Report)>,
    pub aggregate: Vec<AggregateRow>,
}

/// Run the cross product declared in `[sweep]` and write `aggregate.csv`.
pub fn sweep(cfg: &RunConfig, opts: &RunOptions) -> Result<SweepReport> {
    let cfg = effective(cfg, opts);
    let root = out_dir(&cfg, opts);
    mkdir(&root)?;
    write_json(&root.join("config.resolved.json"), &echo(&cfg, json!({ "seeds": cfg.seeds() })))?;
    let points = sweep_points(&cfg)?;
    let point_cfgs: Vec<RunConfig> = points.iter().map(|p| effective(&p.config, opts)).collect();
    // Flatten every (point, job) pair into one pool.
    let mut all = Vec::new();
    for (pi, (p, pc)) in points.iter().zip(&point_cfgs).enumerate() {
        let dir = root.join(&p.group);
        mkdir(&dir)?;
        write_json(&dir.join("config.resolved.json"), &echo(pc, json!({ "seeds": pc.seeds(), "group": p.group })))?;
        for job in jobs_for(pc, &dir) {
            all.push((pi, job));
        }
    }
    let cache = opts.cache_dir.as_deref();
    let results = run_pool(all.len(), opts.workers, |i| run_job(&point_cfgs[all[i].0], &all[i].1, cache));
    let mut per_point: Vec<Vec<RunSummary>> = vec![Vec::new(); points.len()];
    for ((pi, _), r) in all.iter().zip(results) {
        per_point[*pi].push(r?);
    }
    let mut groups = Vec::new();
    let mut aggregate = Vec::new();
    for (p, runs) in points.iter().zip(per_point) {
        let dir = root.join(&p.group);
        write_atomic(&dir.join("summary.csv"), render_summary(&runs).as_bytes())?;
        let mut labels: Vec<&str> = Vec::new();
        for r in &runs {
            if !labels.contains(&r.label.as_str()) {
                labels.push(&r.label);
            }
        }
        for label in labels {
            let of_label: Vec<&RunSummary> = runs.iter().filter(|r| r.label == label).collect();
            let metrics: std::collections::BTreeSet<&String> = of_label.iter().flat_map(|r| r.metrics.keys()).collect();
            for metric in metrics {
                aggregate.push(AggregateRow {
                    group: p.group.clone(),
                    variant: p.variant.clone(),
                    label: label.to_string(),
                    axis: p.axis.name().to_string(),
                    value: p.value,
                    metric: metric.clone(),
                    per_seed: of_label.iter().filter_map(|r| r.metrics.get(metric).map(|v| (r.seed, *v))).collect(),
                });
            }
        }
        groups.push((p.group.clone(), Report { out_dir: dir, runs }));
    }
    write_atomic(&root.join("aggregate.csv"), render_aggregate(&aggregate, cfg.seeds()).as_bytes())?;
    Ok(SweepReport {
        out_dir: root,
        groups,
        aggregate,
    })
}
