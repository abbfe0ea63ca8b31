//! The `gsplit` command line. Every subcommand validates its inputs before
//! creating any output, and writes each file atomically.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{preset_graph, LabelKind, Prepared, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{accuracy, cross_validate, FoldPlan};
use crate::experiments::{compare_with_fista, CompareConfig, Comparison};
use crate::glm::GlmFamily;
use crate::io::{export_path_jsonl, out_file, read_path_jsonl, save_matrix_csv, save_vector_csv, write_json};
use crate::parallel::{configure_threads, Execution};
use crate::projection::{decompose, support_of, DecomposeRule, Decomposition};
use crate::simgen::{simulate, LabelModel, Preset};
use crate::solver::{entry_order, Solver, StopReason};

#[derive(Debug, Parser)]
#[command(name = "gsplit", version, about = "Split LBI regularization paths for sparse structured GLMs")]
pub struct Cli {
    /// Worker threads for fold-level parallelism.
    #[arg(long, global = true, env = "GSPLIT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a simulated dataset: X.csv, y.csv, beta_star.csv, graph.json.
    Simulate(SimulateArgs),
    /// Run one path; write path.jsonl and summary.json.
    FitPath(ConfigArgs),
    /// Cross-validate the hyper-parameter grid; write cv_report.json.
    Cv(ConfigArgs),
    /// Split a recorded point into lesion and procedural bias.
    Decompose(DecomposeArgs),
    /// Race the path against a warm-started FISTA grid; write benchmark.json.
    CompareFista(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub labels: Option<LabelKind>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long)]
    pub t: usize,
    /// `top_k:K`, `top_k_neg:K` or `threshold:TAU`.
    #[arg(long)]
    pub rule: RuleArg,
    /// Output file (default: decomposition.json next to the path file).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub struct RuleArg(pub DecomposeRule);

impl FromStr for RuleArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, value) = s
            .split_once(':')
            .ok_or_else(|| format!("expected NAME:VALUE, got {s:?}"))?;
        let count = || value.parse::<usize>().map_err(|e| format!("bad count {value:?}: {e}"));
        let rule = match name {
            "top_k" => DecomposeRule::TopK { k: count()? },
            "top_k_neg" => DecomposeRule::TopKNegative { k: count()? },
            "threshold" => DecomposeRule::Threshold {
                tau: value
                    .parse()
                    .map_err(|e| format!("bad threshold {value:?}: {e}"))?,
            },
            _ => return Err(format!("unknown rule {name:?}")),
        };
        Ok(RuleArg(rule))
    }
}

/// Process exit status for an error: 2 for numeric failure, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged { .. } | Error::Numeric(_) | Error::NoConvergence { .. } => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        configure_threads(n);
    }
    match cli.command {
        Command::Simulate(a) => simulate_cmd(&a),
        Command::FitPath(a) => fit_path_cmd(&a.config),
        Command::Cv(a) => cv_cmd(&a.config),
        Command::Decompose(a) => decompose_cmd(&a),
        Command::CompareFista(a) => compare_cmd(&a.config),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let mut spec = a.preset.spec(a.seed);
    match a.labels {
        Some(LabelKind::Logit) => spec.label_model = LabelModel::Logit,
        Some(LabelKind::Linear) => spec.label_model = LabelModel::Linear { sigma: 1.0 },
        None => {}
    }
    let beta = a.preset.beta_star();
    let data = simulate(&spec, &beta, 0)?;
    create_dir(&a.out)?;
    save_matrix_csv(&out_file(&a.out, "X.csv"), data.x())?;
    save_vector_csv(&out_file(&a.out, "y.csv"), data.y().view())?;
    save_vector_csv(&out_file(&a.out, "beta_star.csv"), beta.view())?;
    write_json(&out_file(&a.out, "graph.json"), &preset_graph(a.preset))
}

fn load(config: &Path) -> Result<(RunConfig, Prepared)> {
    let cfg = RunConfig::load(config)?;
    let prepared = cfg.prepare()?;
    Ok((cfg, prepared))
}

#[derive(Debug, Serialize)]
struct Entry {
    feature: usize,
    t: usize,
}

#[derive(Debug, Serialize)]
struct PointSummary {
    t: usize,
    beta0: f64,
    lesion_set: Vec<usize>,
    decomposition: Decomposition,
}

#[derive(Debug, Serialize)]
struct Selected {
    t: usize,
    pre_acc: f64,
    les_acc: f64,
    lesion_set: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct Summary {
    alpha: f64,
    iterations: usize,
    stop_reason: StopReason,
    recorded_points: usize,
    entry_order: Vec<Entry>,
    #[serde(rename = "final")]
    final_point: PointSummary,
    /// Point with the best held-out `beta_pre` accuracy, when held-out data exist.
    best_validation: Option<Selected>,
}

fn default_rule(p: usize) -> DecomposeRule {
    DecomposeRule::TopKNegative { k: p.min(50) }
}

fn fit_path_cmd(config: &Path) -> Result<()> {
    let (cfg, prep) = load(config)?;
    let stop = cfg.stop_rule(&prep);
    let solver = Solver::new(&prep.data, cfg.family, &prep.op, &cfg.hyper)?;
    let path = solver.run_path(&stop)?;

    let last = path.points.last().expect("a path records its first point");
    let rule = cfg.decompose.unwrap_or_else(|| default_rule(prep.data.n_features()));
    let final_point = PointSummary {
        t: last.t,
        beta0: last.beta0,
        lesion_set: support_of(&last.beta_les),
        decomposition: decompose(last.beta_pre.view(), last.beta_les.view(), rule)?,
    };
    let best_validation = prep.valid.as_ref().map(|v| {
        let mut best: Option<Selected> = None;
        for p in &path.points {
            let pre_acc = accuracy(v, p.beta0, p.beta_pre.view());
            if best.as_ref().map_or(true, |b| pre_acc > b.pre_acc) {
                best = Some(Selected {
                    t: p.t,
                    pre_acc,
                    les_acc: accuracy(v, p.beta0, p.beta_les.view()),
                    lesion_set: support_of(&p.beta_les),
                });
            }
        }
        best.expect("nonempty path")
    });
    let summary = Summary {
        alpha: path.alpha,
        iterations: path.iterations(),
        stop_reason: path.stop_reason,
        recorded_points: path.points.len(),
        entry_order: entry_order(&path)
            .into_iter()
            .map(|(feature, t)| Entry { feature, t })
            .collect(),
        final_point,
        best_validation,
    };
    create_dir(&cfg.output_dir)?;
    export_path_jsonl(&path, &out_file(&cfg.output_dir, "path.jsonl"))?;
    write_json(&out_file(&cfg.output_dir, "summary.json"), &summary)
}

fn cv_cmd(config: &Path) -> Result<()> {
    let (cfg, prep) = load(config)?;
    let cv = cfg
        .cv
        .as_ref()
        .ok_or_else(|| Error::Config("the cv subcommand needs a \"cv\" section".into()))?;
    let plan = FoldPlan::stratified(prep.data.y().view(), cv.folds, cv.seed)?;
    let report = cross_validate(
        &prep.data,
        cfg.family,
        &prep.op,
        &cfg.grid(),
        &plan,
        Execution::default(),
    )?;
    create_dir(&cfg.output_dir)?;
    write_json(&out_file(&cfg.output_dir, "cv_report.json"), &report)
}

fn decompose_cmd(a: &DecomposeArgs) -> Result<()> {
    let records = read_path_jsonl(&a.path)?;
    let record = records.iter().find(|r| r.t == a.t).ok_or_else(|| {
        Error::Config(format!(
            "t = {} is not a recorded point of {}",
            a.t,
            a.path.display()
        ))
    })?;
    let point = record.to_point()?;
    let d = decompose(point.beta_pre.view(), point.beta_les.view(), a.rule.0)
        .map_err(|e| Error::Config(e.to_string()))?;
    let out = a.out.clone().unwrap_or_else(|| {
        out_file(a.path.parent().unwrap_or(Path::new("")), "decomposition.json")
    });
    write_json(&out, &d)
}

#[derive(Debug, Serialize)]
struct MethodResult {
    /// Iterations until the estimate first had exactly the target support.
    iters_to_target: Option<usize>,
    /// Iterations until the support first contained the target.
    iters_to_cover: Option<usize>,
    total_iters: usize,
}

#[derive(Debug, Serialize)]
struct Timing {
    lbi: Duration,
    fista: Option<Duration>,
}

#[derive(Debug, Serialize)]
struct Benchmark {
    target_support: Vec<usize>,
    lbi: MethodResult,
    fista: MethodResult,
    fista_max_kkt: f64,
    fista_supports: Vec<Vec<usize>>,
    lbi_wins: bool,
    lbi_wins_cover: bool,
    /// Wall-clock figures; vary between runs, so kept apart from the rest.
    timing: Timing,
}

fn compare_cmd(config: &Path) -> Result<()> {
    let (cfg, prep) = load(config)?;
    if cfg.family != GlmFamily::Logistic {
        return Err(Error::Config("compare-fista needs the logistic family".into()));
    }
    let target = prep.target_support.clone().ok_or_else(|| {
        Error::Config("compare-fista needs a preset or data.target_support".into())
    })?;
    let cc = CompareConfig {
        kappa: cfg.hyper.kappa,
        nu: cfg.hyper.nu,
        max_iters: cfg.hyper.max_iters,
        n_lambda: cfg.fista.n_lambda,
        min_ratio: cfg.fista.min_ratio,
        fista_max_iters: cfg.fista.max_iters,
    };
    let c: Comparison = compare_with_fista(&prep.data, &prep.op, &target, &cc)?;
    let bench = Benchmark {
        lbi_wins: c.lbi_wins(),
        lbi_wins_cover: c.lbi_wins_cover(),
        target_support: target,
        lbi: MethodResult {
            iters_to_target: c.lbi_iters,
            iters_to_cover: c.lbi_cover_iters,
            total_iters: c.lbi_total_iters,
        },
        fista: MethodResult {
            iters_to_target: c.fista_iters,
            iters_to_cover: c.fista_cover_iters,
            total_iters: c.fista_total_iters,
        },
        fista_max_kkt: c.fista_max_kkt,
        fista_supports: c.fista_supports,
        timing: Timing {
            lbi: c.lbi_time,
            fista: c.fista_time,
        },
    };
    create_dir(&cfg.output_dir)?;
    write_json(&out_file(&cfg.output_dir, "benchmark.json"), &bench)
}
