//! Simulation harnesses: the sparse 80-feature support-recovery study, the
//! 9x9 lesion/bias image, and the single-path versus lambda-grid timing
//! comparison. Each trial is a pure function of its seed, so batches of seeds
//! are mapped in parallel.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baseline::{Fista, FistaOptions, LambdaGrid};
use crate::error::Result;
use crate::eval::{accuracy, support_auc};
use crate::glm::{Dataset, GlmFamily};
use crate::lattice::{SplitOperator, VoxelGraph};
use crate::parallel::{self, Execution};
use crate::projection::{decompose, support_of, DecomposeRule};
use crate::simgen::{preset_grid_signal, preset_table1_signal, simulate, LabelModel, Preset};
use crate::solver::{Hyperparams, RegularizationPath, Solver, StepPolicy, StopRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1Config {
    pub nu: f64,
    pub kappa: f64,
    pub max_iters: usize,
    pub record_every: usize,
}

impl Table1Config {
    pub fn new(nu: f64) -> Self {
        Self {
            nu,
            kappa: 10.0,
            max_iters: 3000,
            record_every: 5,
        }
    }

    fn hyper(&self) -> Hyperparams {
        let mut h = Hyperparams::new(self.kappa, self.nu, self.max_iters);
        h.record_every = self.record_every;
        h
    }
}

/// Best support AUC of `|beta_les|` over the recorded path, for the linear
/// 80-feature design with `D = I`.
pub fn table1_trial(seed: u64, cfg: &Table1Config) -> Result<f64> {
    let beta = preset_table1_signal();
    let data = simulate(&Preset::Table1.spec(seed), &beta, 0)?;
    let op = SplitOperator::identity(beta.len())?;
    let path = Solver::new(&data, GlmFamily::Squared, &op, &cfg.hyper())?
        .run_path(&StopRule::FixedIters)?;
    best_path_auc(&path, &support_of(&beta))
}

pub fn best_path_auc(path: &RegularizationPath, truth: &[usize]) -> Result<f64> {
    let mut best = 0.0f64;
    for pt in &path.points {
        best = best.max(support_auc(pt.beta_les.view(), truth)?);
    }
    Ok(best)
}

pub fn table1_mean_auc(seeds: &[u64], cfg: &Table1Config, exec: Execution) -> Result<f64> {
    let aucs = parallel::try_map(seeds, exec, |&s| table1_trial(s, cfg))?;
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub kappa: f64,
    pub nu: f64,
    pub rho: f64,
    pub max_iters: usize,
    pub record_every: usize,
    pub nonneg: bool,
    /// Size of the held-out replicate used to pick the path point.
    pub n_valid: usize,
    pub step_policy: StepPolicy,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            kappa: 80.0,
            nu: 2.0,
            rho: 0.75,
            max_iters: 100_000,
            record_every: 200,
            nonneg: true,
            n_valid: 4000,
            step_policy: StepPolicy::Experiment,
        }
    }
}

impl GridConfig {
    pub fn hyper(&self) -> Hyperparams {
        let mut h = Hyperparams::new(self.kappa, self.nu, self.max_iters);
        h.record_every = self.record_every;
        h.nonneg = self.nonneg;
        h.step_policy = self.step_policy;
        h
    }

    pub fn operator(&self) -> Result<SplitOperator> {
        SplitOperator::new(VoxelGraph::full(&[9, 9])?, self.rho)
    }
}

/// A 9x9 image run: path on the training replicate, accuracies of both
/// estimators on an independent held-out replicate.
#[derive(Debug, Clone)]
pub struct GridTrial {
    pub path: RegularizationPath,
    pub train: Dataset,
    pub pre_acc: Vec<f64>,
    pub les_acc: Vec<f64>,
    /// Index of the recorded point with the best `beta_pre` held-out accuracy
    /// (earliest on ties).
    pub best: usize,
}

impl GridTrial {
    /// `(centre pixels recovered, false positives)` of `supp(beta_les)` at the
    /// selected point.
    pub fn lesion_recovery(&self) -> (usize, usize) {
        let sig = preset_grid_signal();
        let s = support_of(&self.path.points[self.best].beta_les);
        let hits = s.iter().filter(|i| sig.lesion_set.contains(i)).count();
        (hits, s.len() - hits)
    }

    /// Whether the four most negative off-lesion coordinates of `beta_pre` at
    /// the selected point are exactly the corners.
    pub fn corners_recovered(&self) -> Result<bool> {
        let pt = &self.path.points[self.best];
        let d = decompose(
            pt.beta_pre.view(),
            pt.beta_les.view(),
            DecomposeRule::TopKNegative { k: 4 },
        )?;
        Ok(d.procedural_bias == preset_grid_signal().bias_set)
    }

    pub fn max_dist(&self) -> f64 {
        self.path
            .points
            .iter()
            .map(|p| p.diagnostics.dist_pre_les)
            .fold(0.0, f64::max)
    }
}

pub fn grid_trial(seed: u64, cfg: &GridConfig) -> Result<GridTrial> {
    let sig = preset_grid_signal();
    let spec = Preset::Grid9.spec(seed);
    let train = simulate(&spec, &sig.beta_star, 0)?;
    let mut vspec = spec;
    vspec.n = cfg.n_valid;
    let valid = simulate(&vspec, &sig.beta_star, 1)?;
    let op = cfg.operator()?;
    let path = Solver::new(&train, GlmFamily::Logistic, &op, &cfg.hyper())?
        .run_path(&StopRule::FixedIters)?;
    let pre_acc: Vec<f64> = path
        .points
        .iter()
        .map(|p| accuracy(&valid, p.beta0, p.beta_pre.view()))
        .collect();
    let les_acc = path
        .points
        .iter()
        .map(|p| accuracy(&valid, p.beta0, p.beta_les.view()))
        .collect();
    let mut best = 0;
    for (i, &a) in pre_acc.iter().enumerate() {
        if a > pre_acc[best] {
            best = i;
        }
    }
    Ok(GridTrial {
        path,
        train,
        pre_acc,
        les_acc,
        best,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub kappa: f64,
    pub nu: f64,
    pub max_iters: usize,
    pub n_lambda: usize,
    pub min_ratio: f64,
    /// Per-lambda iteration cap of the FISTA grid.
    pub fista_max_iters: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            kappa: 10.0,
            nu: 1.0,
            max_iters: 5000,
            n_lambda: 20,
            min_ratio: 1e-3,
            fista_max_iters: FistaOptions::default().max_iters,
        }
    }
}

/// Iterations (and time) each method needs to first select exactly a target
/// support, and, less strictly, a support containing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub lbi_iters: Option<usize>,
    pub lbi_cover_iters: Option<usize>,
    pub lbi_time: Duration,
    pub lbi_total_iters: usize,
    pub fista_iters: Option<usize>,
    pub fista_cover_iters: Option<usize>,
    pub fista_time: Option<Duration>,
    pub fista_total_iters: usize,
    pub fista_max_kkt: f64,
    pub fista_supports: Vec<Vec<usize>>,
}

fn first_wins(a: Option<usize>, b: Option<usize>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    }
}

fn covers(support: &[usize], target: &[usize]) -> bool {
    target.iter().all(|i| support.binary_search(i).is_ok())
}

impl Comparison {
    /// The single path selected the exact target first (the grid may never
    /// select it).
    pub fn lbi_wins(&self) -> bool {
        first_wins(self.lbi_iters, self.fista_iters)
    }

    /// Same race, finishing when the support first contains the target.
    pub fn lbi_wins_cover(&self) -> bool {
        first_wins(self.lbi_cover_iters, self.fista_cover_iters)
    }
}

/// Runs one Bregman path and a warm-started FISTA grid on `data` and reports
/// when each first selects `target`. The path stops at the exact target or
/// after `max_iters` steps.
pub fn compare_with_fista(
    data: &Dataset,
    op: &SplitOperator,
    target: &[usize],
    cfg: &CompareConfig,
) -> Result<Comparison> {
    let mut hyper = Hyperparams::new(cfg.kappa, cfg.nu, cfg.max_iters);
    hyper.record_every = 1;
    let start = Instant::now();
    let solver = Solver::new(data, GlmFamily::Logistic, op, &hyper)?;
    let mut state = crate::solver::ModelState::zeros(op);
    let (mut lbi_iters, mut lbi_cover_iters) = (None, None);
    while state.t < cfg.max_iters {
        state = solver.step(&state)?;
        let pt = solver.record(&state)?;
        let s = support_of(&pt.beta_les);
        if lbi_cover_iters.is_none() && covers(&s, target) {
            lbi_cover_iters = Some(state.t);
        }
        if s == target {
            lbi_iters = Some(state.t);
            break;
        }
    }
    let lbi_time = start.elapsed();

    let grid = LambdaGrid::log_spaced(data, cfg.n_lambda, cfg.min_ratio, true)?;
    let options = FistaOptions {
        max_iters: cfg.fista_max_iters,
        ..FistaOptions::default()
    };
    let fista = Fista::new(data, options)?;
    let path = fista.path(&grid)?;
    let hit = path.iter().find(|p| p.support == target);
    Ok(Comparison {
        lbi_iters,
        lbi_cover_iters,
        lbi_time,
        lbi_total_iters: state.t,
        fista_iters: hit.map(|p| p.cumulative_iters),
        fista_cover_iters: path
            .iter()
            .find(|p| covers(&p.support, target))
            .map(|p| p.cumulative_iters),
        fista_time: hit.map(|p| p.cumulative_elapsed),
        fista_total_iters: path.last().map_or(0, |p| p.cumulative_iters),
        fista_max_kkt: path.iter().map(|p| p.result.kkt_residual).fold(0.0, f64::max),
        fista_supports: path.iter().map(|p| p.support.clone()).collect(),
    })
}

/// The 80-feature design with logit labels.
pub fn table1_logit_data(seed: u64) -> Result<Dataset> {
    let mut spec = Preset::Table1.spec(seed);
    spec.label_model = LabelModel::Logit;
    simulate(&spec, &preset_table1_signal(), 0)
}

pub fn fista_trial(seed: u64, cfg: &CompareConfig) -> Result<Comparison> {
    let data = table1_logit_data(seed)?;
    let op = SplitOperator::identity(data.n_features())?;
    compare_with_fista(&data, &op, &Preset::Table1.true_support(), cfg)
}
