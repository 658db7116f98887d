//! Pipeline configuration and the stage commands behind the `relsym` binary.
//!
//! Configuration files are plain `key = value` lines; `#` starts a comment.
//! Every key may be omitted, in which case the selected profile's value is used.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::induce::{induce_operators, read_operators, write_operators, LiftedOperator, OperatorIoError};
use crate::neural::{
    evaluate_mse, load_checkpoint, save_checkpoint, train, write_metrics, Aggregation, AttentionKind, Batch, CheckpointError,
    GsConfig, GsMode, ModelConfig, RelationalNet, TrainConfig, TrainError,
};
use crate::pddl::{emit_domain, emit_problem, parse_domain, parse_plan_output, parse_problem, PddlError};
use crate::plan::{
    ground_pruned, make_problem_pairs, report_table, search, solve_pair, validate_plan, write_plan, PairResult, Plan, PlanStatus,
    ProblemPair,
};
use crate::sim::{collect_dataset, contact_graph, read_dataset, split_dataset, write_dataset, DatasetError, Transition, WorldState};
use crate::symbols::{
    read_symbolic, symbolize_dataset, symbolize_state, write_symbolic, GroundAtom, SymbolicIoError, SymbolicState, SymbolicTransition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Constants of the original experiments.
    Paper,
    /// Reduced sizes that train in minutes on one core.
    Desk,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Profile::Paper, Profile::Desk].into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Inclusive object-count range of training scenes.
    pub objects: (usize, usize),
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub min_support: usize,
    pub timeout_s: f64,
    pub tolerance_cm: f64,
    /// Problem pairs per object count, split evenly over `eval_actions`.
    pub eval_pairs: usize,
    pub eval_objects: Vec<usize>,
    pub eval_actions: Vec<usize>,
    pub out_dir: PathBuf,
    /// Shell command with `{domain}`, `{problem}` and `{plan}` placeholders;
    /// when set, `plan` uses it instead of the built-in search.
    pub planner_command: Option<String>,
}

impl PipelineConfig {
    pub fn profile(p: Profile) -> Self {
        let paper = PipelineConfig {
            seed: 0,
            n_train: 160_000,
            n_val: 20_000,
            n_test: 20_000,
            objects: (2, 4),
            model: ModelConfig::default(),
            train: TrainConfig::paper(),
            min_support: 50,
            timeout_s: 10.0,
            tolerance_cm: 5.0,
            eval_pairs: 100,
            eval_objects: vec![2, 3, 4],
            eval_actions: vec![1, 2, 3],
            out_dir: PathBuf::from("out"),
            planner_command: None,
        };
        match p {
            Profile::Paper => paper,
            Profile::Desk => PipelineConfig {
                n_train: 20_000,
                n_val: 2_500,
                n_test: 2_500,
                model: ModelConfig { hidden: 64, ..ModelConfig::default() },
                train: TrainConfig { epochs: 200, log_every: 20, ..TrainConfig::paper() },
                ..paper
            },
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }

    /// Sets one key; the error names the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigFileError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigFileError> {
            value.parse().map_err(|_| ConfigFileError::BadValue { key: key.into(), value: value.into() })
        }
        fn list(key: &str, value: &str) -> Result<Vec<usize>, ConfigFileError> {
            value.split(',').map(|v| num(key, v.trim())).collect()
        }
        match key {
            "seed" => {
                self.seed = num(key, value)?;
                self.train.seed = self.seed;
            }
            "n_train" => self.n_train = num(key, value)?,
            "n_val" => self.n_val = num(key, value)?,
            "n_test" => self.n_test = num(key, value)?,
            "objects_min" => self.objects.0 = num(key, value)?,
            "objects_max" => self.objects.1 = num(key, value)?,
            "hidden" => self.model.hidden = num(key, value)?,
            "unary_bits" => self.model.d_k = num(key, value)?,
            "heads" => self.model.heads = num(key, value)?,
            "d_att" => self.model.d_att = num(key, value)?,
            "d_z" => self.model.d_z = num(key, value)?,
            "attention" => {
                self.model.attention = AttentionKind::from_name(value).ok_or_else(|| ConfigFileError::BadValue { key: key.into(), value: value.into() })?
            }
            "aggregation" => {
                self.model.aggregation = Aggregation::from_name(value).ok_or_else(|| ConfigFileError::BadValue { key: key.into(), value: value.into() })?
            }
            "epochs" => self.train.epochs = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "grad_clip_norm" => self.train.grad_clip_norm = num(key, value)?,
            "pre_gs_norm" => {
                self.train.pre_gs_norm = num(key, value)?;
                self.model.pre_gs_norm = self.train.pre_gs_norm;
            }
            "temperature" => self.train.gs = GsConfig { temperature: num(key, value)?, mode: GsMode::SampledHard },
            "log_every" => self.train.log_every = num(key, value)?,
            "min_support" => self.min_support = num(key, value)?,
            "timeout_s" => self.timeout_s = num(key, value)?,
            "tolerance_cm" => self.tolerance_cm = num(key, value)?,
            "eval_pairs" => self.eval_pairs = num(key, value)?,
            "eval_objects" => self.eval_objects = list(key, value)?,
            "eval_actions" => self.eval_actions = list(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "planner_command" => self.planner_command = (!value.is_empty()).then(|| value.to_string()),
            _ => return Err(ConfigFileError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigFileError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigFileError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim()).map_err(|e| ConfigFileError::AtLine { line: i + 1, source: Box::new(e) })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigFileError> {
        let invalid = |m: &str| Err(ConfigFileError::Invalid(m.into()));
        if self.n_train == 0 {
            return invalid("n_train must be positive");
        }
        if self.objects.0 < 2 || self.objects.0 > self.objects.1 {
            return invalid("objects_min must be at least 2 and not above objects_max");
        }
        if self.min_support == 0 {
            return invalid("min_support must be positive");
        }
        if !(self.timeout_s > 0.0) || !(self.tolerance_cm > 0.0) {
            return invalid("timeout_s and tolerance_cm must be positive");
        }
        if self.eval_objects.iter().any(|&n| n < 2) {
            return invalid("eval_objects entries must be at least 2");
        }
        self.model.validate().map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigFileError::Invalid(e.to_string()))
    }

    /// Full configuration as `key = value` lines, readable by [`Self::apply_text`].
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("seed", self.seed.to_string());
        kv("n_train", self.n_train.to_string());
        kv("n_val", self.n_val.to_string());
        kv("n_test", self.n_test.to_string());
        kv("objects_min", self.objects.0.to_string());
        kv("objects_max", self.objects.1.to_string());
        kv("hidden", self.model.hidden.to_string());
        kv("unary_bits", self.model.d_k.to_string());
        kv("heads", self.model.heads.to_string());
        kv("d_att", self.model.d_att.to_string());
        kv("d_z", self.model.d_z.to_string());
        kv("attention", self.model.attention.name().into());
        kv("aggregation", self.model.aggregation.name().into());
        kv("epochs", self.train.epochs.to_string());
        kv("batch_size", self.train.batch_size.to_string());
        kv("learning_rate", self.train.learning_rate.to_string());
        kv("grad_clip_norm", self.train.grad_clip_norm.to_string());
        kv("pre_gs_norm", self.train.pre_gs_norm.to_string());
        kv("temperature", self.train.gs.temperature.to_string());
        kv("log_every", self.train.log_every.to_string());
        kv("min_support", self.min_support.to_string());
        kv("timeout_s", self.timeout_s.to_string());
        kv("tolerance_cm", self.tolerance_cm.to_string());
        kv("eval_pairs", self.eval_pairs.to_string());
        kv("eval_objects", join(&self.eval_objects));
        kv("eval_actions", join(&self.eval_actions));
        kv("out_dir", self.out_dir.display().to_string());
        kv("planner_command", self.planner_command.clone().unwrap_or_default());
        s
    }
}

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for config key {key:?}")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<ConfigFileError> },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("missing input file {0}")]
    MissingInput(PathBuf),
    #[error(transparent)]
    Config(#[from] ConfigFileError),
    #[error("{path}: {source}")]
    Dataset { path: PathBuf, source: DatasetError },
    #[error("{path}: {source}")]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error("{path}: {source}")]
    Symbolic { path: PathBuf, source: SymbolicIoError },
    #[error("{path}: {source}")]
    Operators { path: PathBuf, source: OperatorIoError },
    #[error("{path}: {source}")]
    Pddl { path: PathBuf, source: PddlError },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("dataset has {have} records, configuration needs {need}")]
    DatasetSize { have: usize, need: usize },
    #[error("{0}")]
    Stage(String),
}

/// Artifact locations; [`Paths::in_dir`] gives the default layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub metrics: PathBuf,
    pub symbolic: PathBuf,
    pub operators: PathBuf,
    pub domain: PathBuf,
    pub problem: PathBuf,
    /// Initial and goal scenes behind `problem`, for replay.
    pub scenes: PathBuf,
    pub plan: PathBuf,
    pub report: PathBuf,
    pub results: PathBuf,
}

impl Paths {
    pub fn in_dir(dir: &Path) -> Self {
        Paths {
            dataset: dir.join("dataset.jsonl"),
            model: dir.join("model.ckpt"),
            metrics: dir.join("metrics.jsonl"),
            symbolic: dir.join("symbolic.jsonl"),
            operators: dir.join("operators.txt"),
            domain: dir.join("domain.pddl"),
            problem: dir.join("problem.pddl"),
            scenes: dir.join("problem_scenes.json"),
            plan: dir.join("plan.txt"),
            report: dir.join("eval_report.tsv"),
            results: dir.join("eval_results.jsonl"),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn open(path: &Path) -> Result<BufReader<fs::File>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingInput(path.to_path_buf()));
    }
    fs::File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn load_dataset(path: &Path) -> Result<Vec<Transition>, PipelineError> {
    read_dataset(open(path)?).map_err(|source| PipelineError::Dataset { path: path.into(), source })
}

pub fn load_model(path: &Path) -> Result<RelationalNet<f32>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingInput(path.to_path_buf()));
    }
    load_checkpoint(path).map_err(|source| PipelineError::Checkpoint { path: path.into(), source })
}

pub fn load_operators(path: &Path) -> Result<Vec<LiftedOperator>, PipelineError> {
    read_operators(open(path)?).map_err(|source| PipelineError::Operators { path: path.into(), source })
}

/// Train, validation and test slices of a dataset.
pub fn split(cfg: &PipelineConfig, data: &[Transition]) -> Result<(Vec<Transition>, Vec<Transition>, Vec<Transition>), PipelineError> {
    let need = cfg.n_train + cfg.n_val + cfg.n_test;
    split_dataset(data, cfg.n_train, cfg.n_val, cfg.n_test).ok_or(PipelineError::DatasetSize { have: data.len(), need })
}

pub fn cmd_collect(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    let n = cfg.n_train + cfg.n_val + cfg.n_test;
    let data = collect_dataset(n, cfg.seed, cfg.objects);
    let mut w = create(out)?;
    write_dataset(&data, &mut w).map_err(io_err(out))?;
    let noops = data.iter().filter(|t| t.is_noop()).count();
    Ok(format!("collect: {n} transitions ({noops} without effect) -> {}", out.display()))
}

pub fn cmd_train(cfg: &PipelineConfig, dataset: &Path, model: &Path, metrics: &Path) -> Result<String, PipelineError> {
    let data = load_dataset(dataset)?;
    let (tr, va, te) = split(cfg, &data)?;
    let t0 = Instant::now();
    let report = train(&tr, &va, cfg.model, &cfg.train)?;
    save_checkpoint(&report.model, model).map_err(|source| PipelineError::Checkpoint { path: model.into(), source })?;
    let mut w = create(metrics)?;
    write_metrics(&report.metrics, &mut w).map_err(io_err(metrics))?;
    let test = if te.is_empty() { f64::NAN } else { evaluate_mse(&report.model, &Batch::from_transitions(&te)) };
    let last = report.metrics.last().expect("epoch 0 is always recorded");
    Ok(format!(
        "train: {} epochs in {:.1}s, val mse {:.4}, test mse {test:.4} -> {}",
        last.epoch,
        t0.elapsed().as_secs_f64(),
        last.val_mse,
        model.display()
    ))
}

pub fn cmd_symbolize(dataset: &Path, model: &Path, out: &Path) -> Result<String, PipelineError> {
    let data = load_dataset(dataset)?;
    let net = load_model(model)?;
    let sym = symbolize_dataset(&net, &data);
    let mut w = create(out)?;
    write_symbolic(&sym, net.config.d_k, net.config.heads, &mut w).map_err(io_err(out))?;
    Ok(format!("symbolize: {} transitions -> {}", sym.len(), out.display()))
}

fn load_symbolic(path: &Path) -> Result<Vec<SymbolicTransition>, PipelineError> {
    read_symbolic(open(path)?)
        .map(|(records, _, _)| records)
        .map_err(|source| PipelineError::Symbolic { path: path.into(), source })
}

/// Induces operators from the training slice of the symbolic dataset.
pub fn cmd_induce(cfg: &PipelineConfig, symbolic: &Path, out: &Path) -> Result<String, PipelineError> {
    let records = load_symbolic(symbolic)?;
    let train = &records[..cfg.n_train.min(records.len())];
    let ops = induce_operators(train, cfg.min_support);
    let mut w = create(out)?;
    write_operators(&ops, &mut w).map_err(io_err(out))?;
    let empty = ops.iter().filter(|o| o.effect.is_empty()).count();
    Ok(format!(
        "induce: {} operators ({empty} without effect) from {} transitions, min_support {} -> {}",
        ops.len(),
        train.len(),
        cfg.min_support,
        out.display()
    ))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Scenes {
    init: WorldState,
    goal: WorldState,
}

/// Writes the domain, plus one demonstration problem (and its scenes) drawn
/// with the evaluation settings.
pub fn cmd_emit(cfg: &PipelineConfig, operators: &Path, model: &Path, paths: &Paths) -> Result<String, PipelineError> {
    let ops = load_operators(operators)?;
    let domain = emit_domain(&ops).map_err(|source| PipelineError::Pddl { path: paths.domain.clone(), source })?;
    write_text(&paths.domain, &domain)?;
    let net = load_model(model)?;
    let n = cfg.eval_objects.iter().copied().max().unwrap_or(cfg.objects.1);
    let k = cfg.eval_actions.iter().copied().max().unwrap_or(1);
    let pair = &make_problem_pairs(1, n, k, cfg.seed)[0];
    let ids = pair.init.ids();
    let feats = |w: &WorldState| ids.iter().map(|i| w.objects[i]).collect::<Vec<_>>();
    let init = symbolize_state(&net, &ids, &feats(&pair.init));
    let goal = symbolize_state(&net, &ids, &feats(&pair.goal));
    let problem = emit_problem(&init, &goal, &contact_graph(&pair.goal))
        .map_err(|source| PipelineError::Pddl { path: paths.problem.clone(), source })?;
    write_text(&paths.problem, &problem)?;
    let scenes = serde_json::to_string_pretty(&Scenes { init: pair.init.clone(), goal: pair.goal.clone() })
        .map_err(|e| PipelineError::Stage(e.to_string()))?;
    write_text(&paths.scenes, &(scenes + "\n"))?;
    Ok(format!(
        "emit: {} action schemas -> {}; {n}-object problem -> {}",
        ops.len(),
        paths.domain.display(),
        paths.problem.display()
    ))
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingInput(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(io_err(path))
}

/// Runs the external planner template and maps its output onto grounded actions.
fn external_plan(
    template: &str,
    paths: &Paths,
    ops: &[LiftedOperator],
    init: &SymbolicState,
    goal: &std::collections::BTreeSet<GroundAtom>,
    timeout: Duration,
) -> Result<Plan, PipelineError> {
    let _ = fs::remove_file(&paths.plan);
    let cmd = template
        .replace("{domain}", &paths.domain.display().to_string())
        .replace("{problem}", &paths.problem.display().to_string())
        .replace("{plan}", &paths.plan.display().to_string());
    let mut child = Command::new("sh").arg("-c").arg(&cmd).spawn().map_err(|e| PipelineError::Stage(format!("cannot start planner: {e}")))?;
    let start = Instant::now();
    let timed_out = loop {
        if child.try_wait().map_err(|e| PipelineError::Stage(e.to_string()))?.is_some() {
            break false;
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            break true;
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    let empty = |status| Plan { steps: Vec::new(), trace: Vec::new(), status, expanded: 0 };
    if timed_out {
        return Ok(empty(PlanStatus::Timeout));
    }
    let Ok(text) = fs::read_to_string(&paths.plan) else {
        return Ok(empty(PlanStatus::Unsolvable));
    };
    let actions = ground_pruned(ops, init);
    let mut steps = Vec::new();
    for (name, args) in parse_plan_output(&text) {
        let found = actions.iter().find(|a| {
            a.name == name && a.theta.objects.iter().map(|o| o.to_string()).eq(args.iter().cloned())
        });
        match found {
            Some(a) => steps.push(a.clone()),
            None => return Err(PipelineError::Stage(format!("planner returned unknown step ({name} {})", args.join(" ")))),
        }
    }
    let mut trace = vec![init.clone()];
    for s in &steps {
        let last = trace.last().expect("non-empty");
        if !s.applicable(last) {
            return Err(PipelineError::Stage(format!("planner step {s} is not applicable")));
        }
        trace.push(s.apply(last));
    }
    let plan = Plan { steps, trace, status: PlanStatus::Found, expanded: 0 };
    if !plan.is_valid(init, goal) {
        return Err(PipelineError::Stage("planner output does not reach the goal".into()));
    }
    Ok(plan)
}

/// Plans for `paths.problem` under `paths.domain`; an unsolvable problem is
/// a result, not an error.
pub fn cmd_plan(cfg: &PipelineConfig, paths: &Paths) -> Result<String, PipelineError> {
    let ops = parse_domain(&read_text(&paths.domain)?).map_err(|source| PipelineError::Pddl { path: paths.domain.clone(), source })?;
    let (bits, heads) = ops.first().map_or((cfg.model.d_k, cfg.model.heads), |o| (o.key.unary_bits(), o.key.heads()));
    let (init, goal) =
        parse_problem(&read_text(&paths.problem)?, bits, heads).map_err(|source| PipelineError::Pddl { path: paths.problem.clone(), source })?;
    let plan = match &cfg.planner_command {
        Some(template) => external_plan(template, paths, &ops, &init, &goal, cfg.timeout())?,
        None => search(&init, &goal, &ground_pruned(&ops, &init), cfg.timeout()),
    };
    if cfg.planner_command.is_none() || plan.status != PlanStatus::Found {
        let mut w = create(&paths.plan)?;
        write_plan(&plan, &mut w).map_err(io_err(&paths.plan))?;
    }
    let mut summary = format!("plan: {} with {} steps -> {}", plan.status.name(), plan.steps.len(), paths.plan.display());
    if plan.status == PlanStatus::Found && paths.scenes.exists() {
        let scenes: Scenes = serde_json::from_str(&read_text(&paths.scenes)?).map_err(|e| PipelineError::Stage(format!("{}: {e}", paths.scenes.display())))?;
        match validate_plan(&scenes.init, &plan.actions(), &scenes.goal, cfg.tolerance_cm) {
            Ok(v) => write!(summary, "; replay {} (max error {:.2} cm)", if v.success { "ok" } else { "failed" }, v.max_error).expect("string write"),
            Err(e) => write!(summary, "; replay invalid: {e}").expect("string write"),
        }
    }
    Ok(summary)
}

/// Problem pairs for one object count: `eval_pairs` in total, split evenly
/// over the scramble lengths. Seeds differ per (object count, length) cell.
pub fn eval_pairs(cfg: &PipelineConfig, n_objects: usize) -> Vec<ProblemPair> {
    let cells = cfg.eval_actions.len().max(1);
    let mut out = Vec::with_capacity(cfg.eval_pairs);
    for (j, &k) in cfg.eval_actions.iter().enumerate() {
        let count = cfg.eval_pairs / cells + usize::from(j < cfg.eval_pairs % cells);
        let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(1000 + 100 * n_objects as u64 + k as u64);
        out.extend(make_problem_pairs(count, n_objects, k, seed));
    }
    out
}

/// Runs the evaluation grid.
pub fn evaluate(cfg: &PipelineConfig, net: &RelationalNet<f32>, ops: &[LiftedOperator]) -> Vec<PairResult> {
    let mut out = Vec::new();
    for &n in &cfg.eval_objects {
        for pair in eval_pairs(cfg, n) {
            out.push(solve_pair(net, ops, &pair, cfg.timeout(), cfg.tolerance_cm).1);
        }
        log::info!("eval: {n} objects done");
    }
    out
}

pub fn cmd_eval(cfg: &PipelineConfig, operators: &Path, model: &Path, paths: &Paths) -> Result<String, PipelineError> {
    let ops = load_operators(operators)?;
    let net = load_model(model)?;
    let results = evaluate(cfg, &net, &ops);
    let table = report_table(&results);
    write_text(&paths.report, &table)?;
    let mut w = create(&paths.results)?;
    for r in &results {
        let line = serde_json::to_string(r).map_err(|e| PipelineError::Stage(e.to_string()))?;
        writeln!(w, "{line}").map_err(io_err(&paths.results))?;
    }
    w.flush().map_err(io_err(&paths.results))?;
    let ok = results.iter().filter(|r| r.success).count();
    Ok(format!("eval: {ok}/{} problem pairs solved -> {}", results.len(), paths.report.display()))
}

/// Every stage in order; returns the stage summaries.
pub fn cmd_pipeline(cfg: &PipelineConfig, paths: &Paths) -> Result<Vec<String>, PipelineError> {
    cfg.validate()?;
    let mut out = vec![cmd_collect(cfg, &paths.dataset)?];
    out.push(cmd_train(cfg, &paths.dataset, &paths.model, &paths.metrics)?);
    out.push(cmd_symbolize(&paths.dataset, &paths.model, &paths.symbolic)?);
    out.push(cmd_induce(cfg, &paths.symbolic, &paths.operators)?);
    out.push(cmd_emit(cfg, &paths.operators, &paths.model, paths)?);
    out.push(cmd_plan(cfg, paths)?);
    out.push(cmd_eval(cfg, &paths.operators, &paths.model, paths)?);
    Ok(out)
}

/// Reads a configuration: profile defaults, then the file, then `overrides`.
pub fn load_config(profile: Profile, file: Option<&Path>, overrides: &[(String, String)]) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::profile(profile);
    if let Some(path) = file {
        let text = read_text(path)?;
        cfg.apply_text(&text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_carry_paper_constants() {
        let p = PipelineConfig::profile(Profile::Paper);
        assert_eq!((p.n_train, p.n_val, p.n_test), (160_000, 20_000, 20_000));
        assert_eq!(p.min_support, 50);
        assert_eq!(p.timeout_s, 10.0);
        assert_eq!(p.tolerance_cm, 5.0);
        assert_eq!(p.train.epochs, 4000);
        assert_eq!(p.model.hidden, 128);
        let d = PipelineConfig::profile(Profile::Desk);
        assert_eq!((d.n_train, d.train.epochs, d.model.hidden), (20_000, 200, 64));
        assert_eq!(d.min_support, 50);
        assert_eq!(d.eval_pairs, 100);
        p.validate().unwrap();
        d.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = PipelineConfig::profile(Profile::Desk);
        cfg.apply_text("# comment\nseed = 7\neval_objects = 2, 8\nplanner_command = fd {domain} {problem} {plan}\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.eval_objects, vec![2, 8]);
        let mut back = PipelineConfig::profile(Profile::Paper);
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn eval_pairs_split_over_lengths() {
        let cfg = PipelineConfig { eval_pairs: 10, ..PipelineConfig::profile(Profile::Desk) };
        let pairs = eval_pairs(&cfg, 3);
        assert_eq!(pairs.len(), 10);
        let lens: Vec<usize> = pairs.iter().map(|p| p.actions.len()).collect();
        assert_eq!(lens, vec![1, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
        assert_eq!(pairs, eval_pairs(&cfg, 3));
    }

    #[test]
    fn bad_keys_are_named() {
        let mut cfg = PipelineConfig::profile(Profile::Desk);
        let e = cfg.apply_text("epochs = 3\nlearnig_rate = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("learnig_rate"), "{e}");
        assert!(e.to_string().starts_with("line 2"), "{e}");
        let e = cfg.set("epochs", "many").unwrap_err();
        assert!(e.to_string().contains("epochs"));
        cfg.objects = (3, 2);
        assert!(cfg.validate().is_err());
    }
}
