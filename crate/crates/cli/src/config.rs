//! Run configuration.
//!
//! A config file is TOML. Its keys are merged over the defaults of the
//! experiment kind named by `kind`, so a file only lists what it changes. The
//! merged document is what gets echoed as the resolved config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use horizon_core::agents::{AgentConfig, Method};
use horizon_core::eval::TaskSet;
use horizon_core::learners::DqnConfig;
use horizon_core::nn::LossDescriptor;
use horizon_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LockDqn,
    MazeAgents,
    GradCheck,
    OracleDump,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::LockDqn => "lock-dqn",
            ExperimentKind::MazeAgents => "maze-agents",
            ExperimentKind::GradCheck => "grad-check",
            ExperimentKind::OracleDump => "oracle-dump",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LockDatasetKind {
    /// One-step data for `n = 1`, segment data of length `n` otherwise.
    Auto,
    OneStep,
    NStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockEnv {
    pub horizon: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockData {
    pub kind: LockDatasetKind,
    /// Transition count; segment datasets round down to a multiple of `n`.
    pub size: usize,
    /// Generator seed; the run seed when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockTrain {
    pub steps: u64,
    pub eval_every: u64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockEval {
    /// Share of the last evaluation epochs that error summaries average over.
    pub final_fraction: f64,
    pub buckets: usize,
    pub td_batches: usize,
    pub td_batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockDqnConfig {
    pub kind: ExperimentKind,
    pub name: String,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub env: LockEnv,
    pub dataset: LockData,
    pub train: LockTrain,
    pub learner: DqnConfig,
    pub eval: LockEval,
    pub sweep: Option<SweepSpec>,
}

impl Default for LockDqnConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::LockDqn,
            name: "lock".into(),
            seeds: vec![0],
            output_dir: None,
            env: LockEnv { horizon: 512, seed: 0 },
            dataset: LockData {
                kind: LockDatasetKind::Auto,
                size: 1 << 20,
                seed: None,
            },
            train: LockTrain {
                steps: 300_000,
                eval_every: 10_000,
                batch_size: 64,
            },
            learner: DqnConfig::default(),
            eval: LockEval {
                final_fraction: 0.2,
                buckets: 16,
                td_batches: 4,
                td_batch_size: 256,
            },
            sweep: None,
        }
    }
}

impl LockDqnConfig {
    pub fn dataset_kind(&self) -> LockDatasetKind {
        match self.dataset.kind {
            LockDatasetKind::Auto if self.learner.n == 1 => LockDatasetKind::OneStep,
            LockDatasetKind::Auto => LockDatasetKind::NStep,
            k => k,
        }
    }

    fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        if self.env.horizon < 2 {
            return Err(Error::config("env.horizon", "must be at least 2"));
        }
        if self.train.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.dataset_kind() == LockDatasetKind::NStep && self.dataset.size < self.learner.n {
            return Err(Error::config("dataset.size", "must hold at least one segment of length n"));
        }
        if self.dataset.size == 0 {
            return Err(Error::config("dataset.size", "must be positive"));
        }
        if self.eval.buckets == 0 || self.eval.td_batches == 0 || self.eval.td_batch_size == 0 {
            return Err(Error::config("eval", "buckets and TD batch counts must be positive"));
        }
        check_fraction(self.eval.final_fraction)?;
        check_schedule(self.train.eval_every)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeEnv {
    pub layout: String,
    pub seed: u64,
    pub max_episode_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeData {
    /// Total transitions; must be a multiple of `traj_len - 1`.
    pub transitions: usize,
    /// States per trajectory.
    pub traj_len: usize,
    pub noise_std: f64,
    pub seed: Option<u64>,
}

impl MazeData {
    pub fn num_traj(&self) -> usize {
        self.transitions / (self.traj_len - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeTrain {
    pub steps: u64,
    pub eval_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeEval {
    /// The first set fills the `success_rate` column.
    pub task_sets: Vec<TaskSet>,
    pub tasks: usize,
    pub episodes_per_task: usize,
    pub final_fraction: f64,
    pub td_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeAgentsConfig {
    pub kind: ExperimentKind,
    pub name: String,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub env: MazeEnv,
    pub dataset: MazeData,
    pub train: MazeTrain,
    pub methods: Vec<Method>,
    pub agent: AgentConfig,
    /// Per-method agent fields merged over `agent`, keyed by method name.
    #[serde(default)]
    pub overrides: BTreeMap<String, Value>,
    pub eval: MazeEval,
    pub sweep: Option<SweepSpec>,
}

impl Default for MazeAgentsConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::MazeAgents,
            name: "maze".into(),
            seeds: vec![0],
            output_dir: None,
            env: MazeEnv {
                layout: "rooms-4".into(),
                seed: 0,
                max_episode_steps: 400,
            },
            dataset: MazeData {
                transitions: 200_000,
                traj_len: 1001,
                noise_std: 0.1,
                seed: None,
            },
            train: MazeTrain {
                steps: 150_000,
                eval_every: 50_000,
            },
            methods: vec![Method::Fbc, Method::Hfbc, Method::Sharsa],
            agent: AgentConfig::default(),
            overrides: BTreeMap::new(),
            eval: MazeEval {
                task_sets: vec![TaskSet::Farthest, TaskSet::Medium],
                tasks: 8,
                episodes_per_task: 10,
                final_fraction: 0.2,
                td_batches: 2,
            },
            sweep: None,
        }
    }
}

impl MazeAgentsConfig {
    /// The agent config of `method`: `agent` with the method's overrides applied.
    pub fn agent_for(&self, method: Method) -> Result<AgentConfig> {
        let Some(over) = self.overrides.get(method.name()) else {
            return Ok(self.agent.clone());
        };
        let mut doc = serde_json::to_value(&self.agent).expect("agent config serializes");
        deep_merge(&mut doc, over.clone());
        let prefix = format!("overrides.{}", method.name());
        let cfg: AgentConfig = typed(doc).map_err(|e| match e {
            Error::Config { path, message } => Error::config(format!("{prefix}.{path}"), message),
            other => other,
        })?;
        cfg.validate().map_err(|e| match e {
            Error::Config { path, message } => {
                Error::config(format!("{prefix}.{}", path.strip_prefix("agent.").unwrap_or(&path)), message)
            }
            other => other,
        })?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        for (name, over) in &self.overrides {
            let method: Method = serde_json::from_value(Value::String(name.clone()))
                .map_err(|_| Error::config(format!("overrides.{name}"), "not a method name"))?;
            if !over.is_object() {
                return Err(Error::config(format!("overrides.{name}"), "must be a table of agent fields"));
            }
            self.agent_for(method)?;
        }
        if !horizon_core::envs::LAYOUT_IDS.contains(&self.env.layout.as_str()) {
            return Err(Error::config(
                "env.layout",
                format!("unknown layout `{}`; expected one of {:?}", self.env.layout, horizon_core::envs::LAYOUT_IDS),
            ));
        }
        if self.env.max_episode_steps == 0 {
            return Err(Error::config("env.max_episode_steps", "must be positive"));
        }
        if self.dataset.traj_len < 2 {
            return Err(Error::config("dataset.traj_len", "must be at least 2"));
        }
        if self.dataset.transitions == 0 || self.dataset.transitions % (self.dataset.traj_len - 1) != 0 {
            return Err(Error::config(
                "dataset.transitions",
                format!("must be a positive multiple of traj_len - 1 = {}", self.dataset.traj_len - 1),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "list at least one method"));
        }
        if self.methods.contains(&Method::DoubleSharsa) && self.agent.q_heads == 0 {
            return Err(Error::config("agent.q_heads", "must be at least 1"));
        }
        if self.eval.task_sets.is_empty() || self.eval.tasks == 0 || self.eval.episodes_per_task == 0 {
            return Err(Error::config("eval", "needs a task set, tasks and episodes"));
        }
        check_fraction(self.eval.final_fraction)?;
        check_schedule(self.train.eval_every)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckConfig {
    pub kind: ExperimentKind,
    pub name: String,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub losses: Vec<LossDescriptor>,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::GradCheck,
            name: "grad-check".into(),
            seeds: vec![0, 1, 2],
            output_dir: None,
            losses: LossDescriptor::ALL.to_vec(),
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleDumpConfig {
    pub kind: ExperimentKind,
    pub name: String,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub lock: Option<LockEnv>,
    pub maze: Option<MazeEnv>,
}

impl Default for OracleDumpConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::OracleDump,
            name: "oracle".into(),
            seeds: vec![0],
            output_dir: None,
            lock: None,
            maze: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "H")]
    Horizon,
    #[serde(rename = "n")]
    N,
    #[serde(rename = "dataset_size")]
    DatasetSize,
    #[serde(rename = "mlp_width")]
    MlpWidth,
    #[serde(rename = "lr")]
    Lr,
    #[serde(rename = "tau")]
    Tau,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Horizon => "H",
            SweepAxis::N => "n",
            SweepAxis::DatasetSize => "dataset_size",
            SweepAxis::MlpWidth => "mlp_width",
            SweepAxis::Lr => "lr",
            SweepAxis::Tau => "tau",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, SweepAxis::Horizon | SweepAxis::N | SweepAxis::DatasetSize | SweepAxis::MlpWidth)
    }
}

/// Named set of overrides, written as dotted key paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub set: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub variants: Vec<Variant>,
}

fn check_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::config("eval.final_fraction", "must lie in (0, 1]"));
    }
    Ok(())
}

fn check_schedule(eval_every: u64) -> Result<()> {
    if eval_every == 0 {
        return Err(Error::config("train.eval_every", "must be positive"));
    }
    Ok(())
}

/// A validated configuration of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    LockDqn(LockDqnConfig),
    MazeAgents(MazeAgentsConfig),
    GradCheck(GradCheckConfig),
    OracleDump(OracleDumpConfig),
}

fn defaults(kind: ExperimentKind) -> Value {
    let v = match kind {
        ExperimentKind::LockDqn => serde_json::to_value(LockDqnConfig::default()),
        ExperimentKind::MazeAgents => serde_json::to_value(MazeAgentsConfig::default()),
        ExperimentKind::GradCheck => serde_json::to_value(GradCheckConfig::default()),
        ExperimentKind::OracleDump => serde_json::to_value(OracleDumpConfig::default()),
    };
    v.expect("defaults serialize")
}

/// Objects merge key by key; anything else in `over` replaces `base`.
pub fn deep_merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => deep_merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Replace the value at a dotted path; every segment must already exist.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(path, format!("`{}` is not a table", parts[..i].join("."))))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| Error::config(path, "no such key"))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        cur = slot;
    }
    Err(Error::config(path, "empty path"))
}

fn typed<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })
}

impl RunConfig {
    /// Merge `doc` over the defaults of its `kind` and validate.
    pub fn from_value(doc: Value) -> Result<Self> {
        let kind_value = doc
            .get("kind")
            .cloned()
            .ok_or_else(|| Error::config("kind", "missing; expected one of lock-dqn, maze-agents, grad-check, oracle-dump"))?;
        let kind: ExperimentKind = typed(kind_value).map_err(|e| match e {
            Error::Config { message, .. } => Error::config("kind", message),
            other => other,
        })?;
        let mut merged = defaults(kind);
        deep_merge(&mut merged, doc);
        let cfg = match kind {
            ExperimentKind::LockDqn => RunConfig::LockDqn(typed(merged)?),
            ExperimentKind::MazeAgents => RunConfig::MazeAgents(typed(merged)?),
            ExperimentKind::GradCheck => RunConfig::GradCheck(typed(merged)?),
            ExperimentKind::OracleDump => RunConfig::OracleDump(typed(merged)?),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: toml::Value = toml::from_str(text).map_err(|e| Error::config("<toml>", e.message().to_string()))?;
        let doc = serde_json::to_value(doc).map_err(|e| Error::config("<toml>", e.to_string()))?;
        Self::from_value(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            RunConfig::LockDqn(c) => serde_json::to_value(c),
            RunConfig::MazeAgents(c) => serde_json::to_value(c),
            RunConfig::GradCheck(c) => serde_json::to_value(c),
            RunConfig::OracleDump(c) => serde_json::to_value(c),
        };
        v.expect("configs serialize")
    }

    /// Copy with dotted-path overrides applied and revalidated.
    pub fn with_overrides(&self, sets: &[(&str, Value)]) -> Result<Self> {
        let mut doc = self.to_value();
        for (path, value) in sets {
            set_path(&mut doc, path, value.clone())?;
        }
        Self::from_value(doc)
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            RunConfig::LockDqn(_) => ExperimentKind::LockDqn,
            RunConfig::MazeAgents(_) => ExperimentKind::MazeAgents,
            RunConfig::GradCheck(_) => ExperimentKind::GradCheck,
            RunConfig::OracleDump(_) => ExperimentKind::OracleDump,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            RunConfig::LockDqn(c) => &c.name,
            RunConfig::MazeAgents(c) => &c.name,
            RunConfig::GradCheck(c) => &c.name,
            RunConfig::OracleDump(c) => &c.name,
        }
    }

    pub fn seeds(&self) -> &[u64] {
        match self {
            RunConfig::LockDqn(c) => &c.seeds,
            RunConfig::MazeAgents(c) => &c.seeds,
            RunConfig::GradCheck(c) => &c.seeds,
            RunConfig::OracleDump(c) => &c.seeds,
        }
    }

    pub fn set_seeds(&mut self, seeds: Vec<u64>) {
        match self {
            RunConfig::LockDqn(c) => c.seeds = seeds,
            RunConfig::MazeAgents(c) => c.seeds = seeds,
            RunConfig::GradCheck(c) => c.seeds = seeds,
            RunConfig::OracleDump(c) => c.seeds = seeds,
        }
    }

    pub fn output_dir(&self) -> Option<&Path> {
        match self {
            RunConfig::LockDqn(c) => c.output_dir.as_deref(),
            RunConfig::MazeAgents(c) => c.output_dir.as_deref(),
            RunConfig::GradCheck(c) => c.output_dir.as_deref(),
            RunConfig::OracleDump(c) => c.output_dir.as_deref(),
        }
    }

    pub fn sweep(&self) -> Option<&SweepSpec> {
        match self {
            RunConfig::LockDqn(c) => c.sweep.as_ref(),
            RunConfig::MazeAgents(c) => c.sweep.as_ref(),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.seeds().is_empty() {
            return Err(Error::config("seeds", "list at least one seed"));
        }
        match self {
            RunConfig::LockDqn(c) => c.validate()?,
            RunConfig::MazeAgents(c) => c.validate()?,
            RunConfig::GradCheck(c) => {
                if c.losses.is_empty() {
                    return Err(Error::config("losses", "list at least one loss"));
                }
                if !(c.tolerance > 0.0) {
                    return Err(Error::config("tolerance", "must be positive"));
                }
            }
            RunConfig::OracleDump(c) => {
                if c.lock.is_some() == c.maze.is_some() {
                    return Err(Error::config("lock", "give exactly one of [lock] or [maze]"));
                }
                if let Some(m) = &c.maze {
                    if !horizon_core::envs::LAYOUT_IDS.contains(&m.layout.as_str()) {
                        return Err(Error::config("maze.layout", format!("unknown layout `{}`", m.layout)));
                    }
                }
            }
        }
        if let Some(s) = self.sweep() {
            if s.values.is_empty() {
                return Err(Error::config("sweep.values", "list at least one value"));
            }
            if s.axis == SweepAxis::Horizon && self.kind() != ExperimentKind::LockDqn {
                return Err(Error::config("sweep.axis", "H applies to lock experiments only"));
            }
            if s.axis.is_integer() && s.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
                return Err(Error::config("sweep.values", format!("axis {} takes positive integers", s.axis.name())));
            }
            let mut names: Vec<&str> = s.variants.iter().map(|v| v.name.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            if names.len() != s.variants.len() {
                return Err(Error::config("sweep.variants", "variant names must be unique"));
            }
        }
        Ok(())
    }
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub group: String,
    pub variant: String,
    pub axis: SweepAxis,
    pub value: f64,
    pub config: RunConfig,
}

fn axis_sets(kind: ExperimentKind, axis: SweepAxis, value: f64, doc: &Value) -> Vec<(String, Value)> {
    let int = json!(value as u64);
    let lock = kind == ExperimentKind::LockDqn;
    let widths = |path: &str| -> Value {
        let layers = doc.pointer(path).and_then(Value::as_array).map_or(2, |a| a.len().max(1));
        json!(vec![value as u64; layers])
    };
    match (axis, lock) {
        (SweepAxis::Horizon, _) => vec![("env.horizon".into(), int)],
        (SweepAxis::N, true) => vec![("learner.n".into(), int)],
        (SweepAxis::N, false) => vec![("agent.n".into(), int)],
        (SweepAxis::DatasetSize, true) => vec![("dataset.size".into(), int)],
        (SweepAxis::DatasetSize, false) => vec![("dataset.transitions".into(), int)],
        (SweepAxis::MlpWidth, true) => vec![("learner.hidden".into(), widths("/learner/hidden"))],
        (SweepAxis::MlpWidth, false) => vec![
            ("agent.policy_hidden".into(), widths("/agent/policy_hidden")),
            ("agent.value_hidden".into(), widths("/agent/value_hidden")),
        ],
        (SweepAxis::Lr, true) => vec![("learner.lr".into(), json!(value))],
        (SweepAxis::Lr, false) => vec![("agent.lr".into(), json!(value))],
        (SweepAxis::Tau, true) => vec![("learner.tau".into(), json!(value))],
        (SweepAxis::Tau, false) => vec![("agent.tau".into(), json!(value))],
    }
}

/// Cross product of variants and axis values, in declaration order.
pub fn sweep_points(cfg: &RunConfig) -> Result<Vec<SweepPoint>> {
    let spec = cfg
        .sweep()
        .ok_or_else(|| Error::config("sweep", "missing [sweep] section"))?
        .clone();
    let mut base = cfg.to_value();
    base["sweep"] = Value::Null;
    let variants = if spec.variants.is_empty() {
        vec![Variant {
            name: "base".into(),
            set: BTreeMap::new(),
        }]
    } else {
        spec.variants.clone()
    };
    let mut out = Vec::new();
    for variant in &variants {
        for &value in &spec.values {
            let mut doc = base.clone();
            for (path, v) in &variant.set {
                set_path(&mut doc, path, v.clone()).map_err(|e| match e {
                    Error::Config { path, message } => {
                        Error::config(format!("sweep.variants.{}.set.{path}", variant.name), message)
                    }
                    other => other,
                })?;
            }
            for (path, v) in axis_sets(cfg.kind(), spec.axis, value, &doc) {
                set_path(&mut doc, &path, v)?;
            }
            let config = RunConfig::from_value(doc)?;
            out.push(SweepPoint {
                group: format!("{}_{}{}", variant.name, spec.axis.name(), value),
                variant: variant.name.clone(),
                axis: spec.axis,
                value,
                config,
            });
        }
    }
    Ok(out)
}
