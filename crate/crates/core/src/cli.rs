//! Command implementations behind the `lsgan` binary.
//!
//! Exit codes are a stable contract: 0 success, 2 configuration or input error, 3 numeric
//! failure (non-finite objective, solver breakdown, failed self-test).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::diffnet::{self, Activation, MlpSpec};
use crate::error::{Error, Result};
use crate::evalkit::{self, MreConfig};
use crate::nonparam::{self, InstanceFile, NonparamInstance};
use crate::objectives::CostSlope;
use crate::synthdata::{self, Split, SynthSpec};
use crate::trainer::{self, Checkpoint, Mode, TrainConfig, TrainData, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const CONFIG_VERSION: u32 = 1;

fn default_split() -> [f64; 3] {
    [0.5, 0.25, 0.25]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub spec: SynthSpec,
    /// Total sample count before splitting.
    pub samples: usize,
    /// Train / validation / test fractions.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    /// In clsgan mode, keep only this many labels per class in the training split.
    #[serde(default)]
    pub labels_per_class: Option<usize>,
}

fn default_bins() -> usize {
    100
}
fn default_tv_samples() -> usize {
    10_000
}
fn default_pairs() -> usize {
    1000
}
fn default_m_small() -> usize {
    32
}
fn default_m_large() -> usize {
    3200
}
fn default_trials() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub mre: MreConfig,
    #[serde(default = "default_bins")]
    pub tv_bins: usize,
    #[serde(default = "default_tv_samples")]
    pub tv_samples: usize,
    #[serde(default = "default_pairs")]
    pub lipschitz_pairs: usize,
    #[serde(default = "default_m_small")]
    pub gap_m_small: usize,
    #[serde(default = "default_m_large")]
    pub gap_m_large: usize,
    #[serde(default = "default_trials")]
    pub gap_trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        serde_json::from_value(json!({})).expect("all fields have defaults")
    }
}

fn default_sweep_penalty_weight() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub nu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub penalty: Vec<bool>,
    /// Gradient-penalty weight used by rows with the penalty switched on.
    #[serde(default = "default_sweep_penalty_weight")]
    pub penalty_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub mode: Mode,
    pub data: DataConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.data.spec.validate()?;
        if self.data.samples == 0 {
            return Err(Error::config("data.samples must be positive"));
        }
        if self.mode == Mode::Clsgan && self.data.spec.num_classes().is_none() {
            return Err(Error::config("clsgan mode needs a labeled data family"));
        }
        self.train.validate()?;
        if let Some(s) = &self.sweep {
            if s.nu.is_empty() || s.lambda.is_empty() || s.penalty.is_empty() {
                return Err(Error::config("sweep lists must be nonempty"));
            }
            for &nu in &s.nu {
                CostSlope::new(nu)?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Data prepared for one experiment: the full split dataset plus the training view.
pub struct PreparedData {
    pub dataset: synthdata::Dataset,
    pub train: TrainData,
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let seed = cfg.train.seed;
    let raw = synthdata::sample(&cfg.data.spec, cfg.data.samples, seed)?;
    let dataset = synthdata::make_splits(&raw, cfg.data.split, seed)?;
    let train = match cfg.mode {
        Mode::Lsgan | Mode::Glsgan => TrainData::Unconditional {
            samples: dataset.split_samples(Split::Train),
        },
        Mode::Clsgan => {
            let num_classes = cfg.data.spec.num_classes().expect("validated");
            match cfg.data.labels_per_class {
                Some(k) => {
                    let budget = synthdata::label_budget(&dataset, k, seed)?;
                    TrainData::Conditional {
                        labeled: budget.labeled,
                        unlabeled: budget.unlabeled.samples,
                        num_classes,
                    }
                }
                None => TrainData::Conditional {
                    labeled: dataset.split_labeled(Split::Train),
                    unlabeled: vec![],
                    num_classes,
                },
            }
        }
    };
    Ok(PreparedData { dataset, train })
}

/// Failure of a command, mapped onto an exit code.
#[derive(Debug)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError {
            code: if e.is_numeric() { EXIT_NUMERIC } else { EXIT_CONFIG },
            message: e.to_string(),
        }
    }
}

type CmdResult<T> = std::result::Result<T, CommandError>;

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        eprintln!("{}", msg.as_ref());
    }
}

/// Trains and writes `checkpoint.json`, `metrics.csv` and `resolved-config.json` to `out`.
/// On a numeric abort the last good checkpoint and the partial log are still written.
pub fn run_train(cfg: &ExperimentConfig, out: &Path, quiet: bool) -> CmdResult<Checkpoint> {
    cfg.validate()?;
    ensure_dir(out)?;
    write(&out.join("resolved-config.json"), &cfg.to_json())?;
    let data = prepare_data(cfg)?;
    let ck_path = out.join("checkpoint.json");
    let mut on_ck = |ck: &Checkpoint| ck.save(&ck_path);
    match trainer::train_with(&cfg.train, &data.train, cfg.mode, &mut on_ck) {
        Ok(outcome) => {
            outcome.checkpoint.save(&ck_path)?;
            write(&out.join("metrics.csv"), &trainer::metrics_csv(&outcome.log))?;
            say(quiet, format!("trained {} steps -> {}", outcome.checkpoint.step, out.display()));
            Ok(outcome.checkpoint)
        }
        Err(TrainError::Setup(e)) => Err(e.into()),
        Err(TrainError::NonFinite {
            step,
            message,
            last_checkpoint,
            log,
        }) => {
            last_checkpoint.save(&ck_path)?;
            write(&out.join("metrics.csv"), &trainer::metrics_csv(&log))?;
            Err(CommandError {
                code: EXIT_NUMERIC,
                message: format!("non-finite objective at step {step}: {message}"),
            })
        }
    }
}

/// Evaluates `checkpoint` and writes `report.json` (plus `mre.csv` for unconditional
/// models). Returns the report.
pub fn run_eval(cfg: &ExperimentConfig, checkpoint: &Checkpoint, out: &Path, quiet: bool) -> CmdResult<Value> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let (outputs, conds) = match &data.train {
        TrainData::Unconditional { .. } => (1, 0),
        TrainData::Conditional { num_classes, .. } => (*num_classes, *num_classes),
    };
    let dim = cfg.data.spec.dim();
    if checkpoint.theta.spec() != &cfg.train.loss_spec(dim, outputs)?
        || checkpoint.phi.spec() != &cfg.train.generator_spec(dim, conds)?
    {
        return Err(Error::config("checkpoint network shapes do not match the configuration").into());
    }
    ensure_dir(out)?;
    let seed = cfg.train.seed;
    let ev = &cfg.eval;
    let mut report = Map::new();
    report.insert("mode".into(), json!(cfg.mode));
    report.insert("step".into(), json!(checkpoint.step));
    match cfg.mode {
        Mode::Lsgan | Mode::Glsgan => {
            let test = data.dataset.split_samples(Split::Test);
            if test.is_empty() {
                return Err(Error::config("test split is empty").into());
            }
            let m = evalkit::mre(&checkpoint.phi, &test, &ev.mre, seed)?;
            write(&out.join("mre.csv"), &m.per_sample_csv())?;
            report.insert(
                "mre".into(),
                json!({
                    "mean": m.mean,
                    "samples": m.errors.len(),
                    "restarts": m.restarts,
                    "steps": m.steps,
                    "accepted_steps": m.accepted_steps,
                }),
            );

            let gens = trainer::generate_samples(&checkpoint.phi, cfg.train.noise_dim, ev.tv_samples, seed)?;
            let reals = synthdata::sample(&cfg.data.spec, ev.tv_samples, seed.wrapping_add(1))?.samples;
            let tv = evalkit::tv_distance(&reals, &gens, ev.tv_bins, &cfg.data.spec.bounding_box())?;
            report.insert("tv".into(), serde_json::to_value(tv).expect("json"));

            let lip = evalkit::lipschitz_estimate(
                &checkpoint.theta,
                &cfg.train.objective.margin,
                ev.lipschitz_pairs,
                &cfg.data.spec.bounding_box(),
                seed,
            )?;
            report.insert("lipschitz".into(), serde_json::to_value(lip).expect("json"));

            let gap = evalkit::objective_gap(
                &checkpoint.theta,
                &checkpoint.phi,
                &cfg.train.objective,
                &cfg.data.spec,
                ev.gap_m_small,
                ev.gap_m_large,
                ev.gap_trials,
                seed,
            )?;
            report.insert(
                "objective_gap".into(),
                json!({
                    "value": gap,
                    "m_small": ev.gap_m_small,
                    "m_large": ev.gap_m_large,
                    "trials": ev.gap_trials,
                }),
            );
        }
        Mode::Clsgan => {
            let test = data.dataset.split_labeled(Split::Test);
            let nc = cfg.data.spec.num_classes().expect("validated");
            let acc = evalkit::accuracy(&checkpoint.theta, &test, nc)?;
            report.insert("accuracy".into(), json!({ "value": acc, "samples": test.len() }));
        }
    }
    let report = Value::Object(report);
    write(
        &out.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("json"),
    )?;
    say(quiet, format!("wrote {}", out.join("report.json").display()));
    Ok(report)
}

/// One configuration per element of `ν × λ × penalty`, in that nesting order.
pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64, bool, ExperimentConfig)>> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("config has no sweep section"))?;
    if cfg.mode == Mode::Clsgan {
        return Err(Error::config("sweeps compare unconditional models; mode must be lsgan or glsgan"));
    }
    let mut rows = Vec::new();
    for &nu in &sweep.nu {
        for &lambda in &sweep.lambda {
            for &penalty in &sweep.penalty {
                let mut c = cfg.clone();
                c.sweep = None;
                c.train.objective.cost = CostSlope::new(nu)?;
                c.train.objective.lambda = lambda;
                c.train.objective.penalty_weight = if penalty { sweep.penalty_weight } else { 0.0 };
                if nu != 0.0 {
                    c.mode = Mode::Glsgan;
                }
                rows.push((nu, lambda, penalty, c));
            }
        }
    }
    Ok(rows)
}

/// Runs every sweep row in `out/row-NNN/` and writes `out/sweep.csv`.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path, quiet: bool) -> CmdResult<String> {
    cfg.validate()?;
    let rows = sweep_rows(cfg)?;
    ensure_dir(out)?;
    let results: Vec<CmdResult<(f64, f64)>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, (_, _, _, c))| {
            let dir = out.join(format!("row-{i:03}"));
            let ck = run_train(c, &dir, true)?;
            let report = run_eval(c, &ck, &dir, true)?;
            Ok((report["mre"]["mean"].as_f64().unwrap_or(f64::NAN), report["tv"]["tv"].as_f64().unwrap_or(f64::NAN)))
        })
        .collect();
    let mut table = String::from("nu,lambda,penalty,test_mre,tv\n");
    for ((nu, lambda, penalty, _), r) in rows.iter().zip(results) {
        let (mre, tv) = r?;
        let _ = writeln!(table, "{nu:?},{lambda:?},{penalty},{mre:?},{tv:?}");
    }
    write(&out.join("sweep.csv"), &table)?;
    say(quiet, format!("{} sweep rows -> {}", rows.len(), out.display()));
    Ok(table)
}

fn grid_points(instance: &NonparamInstance) -> Vec<Vec<f64>> {
    let d = instance.dim();
    let per_axis: usize = match d {
        1 => 101,
        2 => 21,
        3 => 9,
        _ => 5,
    };
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in instance.points() {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    for k in 0..d {
        let pad = 0.25 * (hi[k] - lo[k]).max(1.0);
        lo[k] -= pad;
        hi[k] += pad;
    }
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|k| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    lo[k] + (hi[k] - lo[k]) * i as f64 / (per_axis - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Solves a non-parametric instance and writes `solution.json`, `bounds.csv` (both bound
/// functions on a grid) and `verify.json`.
pub fn run_nonparam(instance_path: &Path, out: &Path, quiet: bool) -> CmdResult<nonparam::NonparamSolution> {
    let text = std::fs::read_to_string(instance_path).map_err(|e| Error::io(instance_path, e))?;
    let file: InstanceFile = serde_json::from_str(&text).map_err(|e| Error::parse(instance_path, e))?;
    let instance = NonparamInstance::from_file(&file)?;
    let solution = nonparam::solve_lp(&instance)?;
    ensure_dir(out)?;
    write(
        &out.join("solution.json"),
        &serde_json::to_string_pretty(&solution).expect("json"),
    )?;

    let mut csv = String::new();
    for k in 0..instance.dim() {
        let _ = write!(csv, "x{},", k + 1);
    }
    csv.push_str("lower,upper\n");
    for x in grid_points(&instance) {
        for v in &x {
            let _ = write!(csv, "{v:?},");
        }
        let lo = nonparam::lower_bound_fn(&solution, &instance, &x);
        let up = nonparam::upper_bound_fn(&solution, &instance, &x);
        let _ = writeln!(csv, "{lo:?},{up:?}");
    }
    write(&out.join("bounds.csv"), &csv)?;

    let mid = |x: &[f64]| {
        0.5 * (nonparam::lower_bound_fn(&solution, &instance, x) + nonparam::upper_bound_fn(&solution, &instance, x))
    };
    let report = nonparam::verify_bounds(&solution, &instance, &mid, 200, 0);
    let verify = json!({
        "candidate": "midpoint of lower and upper bound",
        "report": report,
        "objective_gap": report.objective_gap(),
        "lp_feasibility_violation": instance.max_violation(&solution.l),
    });
    write(
        &out.join("verify.json"),
        &serde_json::to_string_pretty(&verify).expect("json"),
    )?;
    say(quiet, format!("objective {} -> {}", solution.objective_value, out.display()));
    Ok(solution)
}

/// Quick oracle checks; returns `(name, passed, detail)` per check.
pub fn selftest_checks() -> Vec<(&'static str, bool, String)> {
    let mut checks = Vec::new();

    // Analytic vs central-difference gradients.
    let mut worst: f64 = 0.0;
    for (k, (sizes, act)) in [
        (vec![2, 8, 1], Activation::LeakyRelu),
        (vec![3, 6, 6, 1], Activation::Tanh),
        (vec![2, 5, 3], Activation::LeakyRelu),
    ]
    .into_iter()
    .enumerate()
    {
        let spec = MlpSpec::new(sizes, act, Activation::Identity).expect("spec");
        let p = diffnet::init_params(&spec, k as u64).expect("init");
        let p = p.with_values(p.values().iter().map(|v| v * 25.0).collect()).expect("scale");
        let x: Vec<f64> = (0..spec.input_dim()).map(|i| 0.3 - 0.4 * i as f64).collect();
        match diffnet::finite_diff_check(&p, &x, 1e-6) {
            Ok(r) => worst = worst.max(r.max_rel_error_params).max(r.max_rel_error_input),
            Err(_) => worst = f64::INFINITY,
        }
    }
    checks.push(("gradients match finite differences", worst < 1e-4, format!("max rel error {worst:.2e}")));

    // Penalty-I θ-gradient vs central differences of the penalty value.
    let spec = MlpSpec::new(vec![2, 6, 1], Activation::Tanh, Activation::Identity).expect("spec");
    let p = diffnet::init_params(&spec, 7).expect("init");
    let p = p.with_values(p.values().iter().map(|v| v * 30.0).collect()).expect("scale");
    let x = [0.4, -0.2];
    let (_, g) = diffnet::input_penalty(&p, &x).expect("penalty");
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let h = 1e-5;
        let mut a = p.values().to_vec();
        a[i] += h;
        let mut b = p.values().to_vec();
        b[i] -= h;
        let fa = diffnet::input_penalty(&p.with_values(a).expect("p"), &x).expect("pen").0;
        let fb = diffnet::input_penalty(&p.with_values(b).expect("p"), &x).expect("pen").0;
        worst = worst.max(diffnet::relative_error(g[i], (fa - fb) / (2.0 * h)));
    }
    checks.push(("penalty gradient matches finite differences", worst < 1e-4, format!("max rel error {worst:.2e}")));

    // Histogram TV of N(0,1) vs N(1,1) against 2Φ(0.5) − 1.
    let n = |mu: f64, seed| {
        let spec = SynthSpec::GaussianMixture {
            components: vec![synthdata::Component {
                mean: vec![mu],
                variance: vec![1.0],
                weight: 1.0,
            }],
        };
        synthdata::sample(&spec, 100_000, seed).map(|d| d.samples)
    };
    let tv = match (n(0.0, 1), n(1.0, 2), synthdata::BoundingBox::new(vec![-6.0], vec![7.0])) {
        (Ok(p), Ok(q), Ok(b)) => evalkit::tv_distance(&p, &q, 100, &b).map(|r| r.tv).unwrap_or(f64::NAN),
        _ => f64::NAN,
    };
    let exact = 0.382_924_922_548_026;
    checks.push(("histogram TV of unit normals", (tv - exact).abs() < 0.01, format!("estimate {tv:.4}")));

    // Canonical two-point instance.
    let ok = NonparamInstance::new(vec![vec![0.0], vec![2.0]], 0.5, 1.0, Default::default())
        .and_then(|inst| nonparam::solve_lp(&inst))
        .map(|s| (s.objective_value - 1.0).abs() < 1e-9 && s.l[0].abs() < 1e-9 && (s.l[1] - 1.0).abs() < 1e-9)
        .unwrap_or(false);
    checks.push(("non-parametric two-point optimum", ok, "kappa 0.5, lambda 1".into()));
    checks
}

#[derive(Parser)]
#[command(name = "lsgan", version, about = "Loss-sensitive GAN experiments at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model.
    Train(Common),
    /// Evaluate a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate every combination of the sweep lists.
    Sweep(Common),
    /// Solve a non-parametric instance.
    Nonparam {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the built-in oracle checks.
    Selftest {
        #[arg(long)]
        quiet: bool,
    },
}

fn load_config(common: &Common) -> CmdResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> CmdResult<()> {
    match cli.command {
        Command::Train(c) => run_train(&load_config(&c)?, &c.out, c.quiet).map(|_| ()),
        Command::Eval { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let ck = Checkpoint::load(&checkpoint)?;
            run_eval(&cfg, &ck, &common.out, common.quiet).map(|_| ())
        }
        Command::Sweep(c) => run_sweep(&load_config(&c)?, &c.out, c.quiet).map(|_| ()),
        Command::Nonparam { instance, out, quiet } => run_nonparam(&instance, &out, quiet).map(|_| ()),
        Command::Selftest { quiet } => {
            let checks = selftest_checks();
            let mut all = true;
            for (name, ok, detail) in &checks {
                all &= ok;
                if !quiet || !ok {
                    println!("[{}] {name} ({detail})", if *ok { "PASS" } else { "FAIL" });
                }
            }
            if all {
                Ok(())
            } else {
                Err(CommandError {
                    code: EXIT_NUMERIC,
                    message: "self-test failed".into(),
                })
            }
        }
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
