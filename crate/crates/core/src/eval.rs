//! Evaluation metrics and CSV output.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::agents::Controller;
use crate::data::{sample_lock_batch, Dataset, LockIndex};
use crate::envs::{LockSpec, MazeSpec, MazeState};
use crate::error::{Error, Result};
use crate::learners::DqnLearner;
use crate::oracle::{LockQTable, MazeDistances};

/// Roll out the greedy policy of `table` from state 0 for at most `2H` steps.
/// Ties go to action 0.
pub fn greedy_reaches_goal(spec: &LockSpec, table: &LockQTable) -> bool {
    let mut s = spec.state(0).expect("state 0 exists");
    for _ in 0..2 * spec.horizon() {
        let q = table.values[s.index];
        let a = if q[1] > q[0] { 1 } else { 0 };
        let tr = spec.step(s, a).expect("non-terminal state");
        if tr.done {
            return true;
        }
        s = tr.state;
    }
    false
}

/// Success rate of the greedy policy; the lock is deterministic, so every
/// episode gives the same outcome.
pub fn eval_lock_success(learner: &mut DqnLearner, episodes: usize) -> Result<f64> {
    let table = learner.q_table()?;
    let spec = learner.spec().clone();
    let wins = (0..episodes.max(1)).filter(|_| greedy_reaches_goal(&spec, &table)).count();
    Ok(wins as f64 / episodes.max(1) as f64)
}

/// Mean `|Q - Q*|` over all non-terminal `(state, action)` pairs.
pub fn q_error_table(table: &LockQTable, oracle: &LockQTable) -> f64 {
    let goal = oracle.horizon - 1;
    let total: f64 = (0..goal)
        .map(|s| (table.values[s][0] - oracle.values[s][0]).abs() + (table.values[s][1] - oracle.values[s][1]).abs())
        .sum();
    total / (2 * goal) as f64
}

/// Mean `|Q - Q*|` over the answer action of each non-terminal state, i.e.
/// along the optimal episode.
pub fn q_error_optimal(spec: &LockSpec, table: &LockQTable, oracle: &LockQTable) -> f64 {
    let goal = spec.goal_index();
    let total: f64 = (0..goal)
        .map(|s| {
            let a = spec.answer(s);
            (table.values[s][a] - oracle.values[s][a]).abs()
        })
        .sum();
    total / goal as f64
}

pub fn q_error(learner: &mut DqnLearner, oracle: &LockQTable) -> Result<f64> {
    Ok(q_error_table(&learner.q_table()?, oracle))
}

/// Bucket non-terminal states by distance to the goal (`H - 1 - i`) into
/// `buckets` equal ranges, nearest first, and average `|Q - Q*|` over both
/// actions in each.
pub fn per_position_error_table(table: &LockQTable, oracle: &LockQTable, buckets: usize) -> Vec<f64> {
    let goal = oracle.horizon - 1;
    let buckets = buckets.clamp(1, goal);
    let mut sums = vec![0.0; buckets];
    let mut counts = vec![0usize; buckets];
    for s in 0..goal {
        let d = goal - s; // 1..=goal
        let k = (d - 1) * buckets / goal;
        sums[k] += (table.values[s][0] - oracle.values[s][0]).abs() + (table.values[s][1] - oracle.values[s][1]).abs();
        counts[k] += 2;
    }
    sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect()
}

pub fn per_position_q_error(learner: &mut DqnLearner, oracle: &LockQTable, buckets: usize) -> Result<Vec<f64>> {
    Ok(per_position_error_table(&learner.q_table()?, oracle, buckets))
}

/// Mean TD loss over freshly drawn batches, without updating.
pub fn td_error(
    learner: &mut DqnLearner,
    ds: &Dataset,
    index: &LockIndex,
    batches: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = learner.config().n;
    let gamma = learner.config().gamma;
    let mut total = 0.0;
    for _ in 0..batches.max(1) {
        let b = sample_lock_batch(ds, index, batch_size, n, gamma, rng)?;
        total += learner.td_loss(&b)?;
    }
    Ok(total / batches.max(1) as f64)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// A start position and a goal position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MazeTask {
    pub start: [f64; 2],
    pub goal: [f64; 2],
}

/// Which cell pairs an evaluation suite draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskSet {
    /// Pairs at the maximal BFS distance.
    Farthest,
    /// Pairs at half the maximal distance (rounded).
    Medium,
    /// Neighbouring cells.
    Adjacent,
}

/// Up to `count` tasks between cell centres, chosen evenly from all ordered
/// pairs at the set's distance.
pub fn maze_tasks(spec: &MazeSpec, dist: &MazeDistances, set: TaskSet, count: usize) -> Vec<MazeTask> {
    let diameter = dist.diameter();
    let want = match set {
        TaskSet::Farthest => diameter,
        TaskSet::Medium => (diameter + 1) / 2,
        TaskSet::Adjacent => 1,
    };
    let free = dist.free_cells();
    let mut pairs = Vec::new();
    for i in 0..free.len() {
        for j in i + 1..free.len() {
            if dist.distance(free[i], free[j]) == Some(want) {
                pairs.push((free[i], free[j]));
                pairs.push((free[j], free[i]));
            }
        }
    }
    if pairs.is_empty() || count == 0 {
        return Vec::new();
    }
    let take = count.min(pairs.len());
    (0..take)
        .map(|k| {
            let (a, b) = pairs[k * pairs.len() / take];
            MazeTask {
                start: spec.cell_center(a),
                goal: spec.cell_center(b),
            }
        })
        .collect()
}

/// Outcome of one rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Episode {
    pub success: bool,
    pub steps: usize,
}

/// Roll out `act` from `task.start` until the goal is reached or `max_steps` pass.
pub fn run_maze_episode(
    spec: &MazeSpec,
    act: &mut dyn FnMut(&mut Controller, &[f32], &[f32], &mut ChaCha8Rng) -> Result<Vec<f32>>,
    task: &MazeTask,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    let mut ctrl = Controller::default();
    let mut s = MazeState { pos: task.start };
    let g = [task.goal[0] as f32, task.goal[1] as f32];
    for t in 0..=max_steps {
        if spec.reached(s.pos, task.goal) {
            return Ok(Episode { success: true, steps: t });
        }
        if t == max_steps {
            break;
        }
        let obs = [s.pos[0] as f32, s.pos[1] as f32];
        let a = act(&mut ctrl, &obs, &g, rng)?;
        if a.len() != 2 || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("maze action"));
        }
        s = spec.step(s, [a[0] as f64, a[1] as f64]);
    }
    Ok(Episode {
        success: false,
        steps: max_steps,
    })
}

/// Mean success over `episodes_per_task` rollouts of each task.
pub fn eval_maze_success(
    spec: &MazeSpec,
    act: &mut dyn FnMut(&mut Controller, &[f32], &[f32], &mut ChaCha8Rng) -> Result<Vec<f32>>,
    tasks: &[MazeTask],
    episodes_per_task: usize,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if tasks.is_empty() || episodes_per_task == 0 {
        return Err(Error::config("eval.tasks", "needs at least one task and one episode"));
    }
    let mut wins = 0usize;
    for task in tasks {
        for _ in 0..episodes_per_task {
            wins += run_maze_episode(spec, act, task, max_steps, rng)?.success as usize;
        }
    }
    Ok(wins as f64 / (tasks.len() * episodes_per_task) as f64)
}

/// One evaluation epoch of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub step: u64,
    pub success_rate: f64,
    /// Empty cell when the run kind has no TD loss.
    pub td_error: Option<f64>,
    /// Empty cell when no oracle Q is available.
    pub q_error: Option<f64>,
    pub extra: BTreeMap<String, f64>,
}

/// Nine significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.is_finite() {
        format!("{v:.8e}")
    } else {
        v.to_string()
    }
}

pub const CSV_BASE_COLUMNS: [&str; 5] = ["run_id", "step", "success_rate", "td_error", "q_error"];

/// Render rows as CSV: base columns, then the sorted union of extra keys.
pub fn render_csv(rows: &[MetricsRow]) -> String {
    let keys: BTreeSet<&str> = rows.iter().flat_map(|r| r.extra.keys().map(String::as_str)).collect();
    let mut out = String::new();
    let header: Vec<&str> = CSV_BASE_COLUMNS.iter().copied().chain(keys.iter().copied()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    for r in rows {
        let mut fields = vec![
            csv_escape(&r.run_id),
            r.step.to_string(),
            format_float(r.success_rate),
            opt(r.td_error),
            opt(r.q_error),
        ];
        fields.extend(keys.iter().map(|k| opt(r.extra.get(*k).copied())));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Write `contents` through a temporary sibling and an atomic rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    write_atomic(path, render_csv(rows).as_bytes())
}
