//! `cfg.json`: everything a CLI run needs. Parsed strictly (unknown keys are
//! rejected) and fully validated, data files included, before any output is
//! written.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::FistaOptions;
use crate::error::{Error, Result};
use crate::eval::{FoldPlan, GridPoint};
use crate::glm::{Dataset, GlmFamily};
use crate::io::{load_matrix_csv, load_vector_csv, read_json, GraphSpec};
use crate::lattice::SplitOperator;
use crate::projection::DecomposeRule;
use crate::simgen::{simulate, LabelModel, Preset};
use crate::solver::{Hyperparams, StopRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Linear,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Preset(PresetSource),
    Files(FileSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetSource {
    pub preset: Preset,
    pub seed: u64,
    /// Override the preset's label model.
    #[serde(default)]
    pub labels: Option<LabelKind>,
    /// Size of the generated held-out replicate (defaults to the training N).
    #[serde(default)]
    pub n_valid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub x: PathBuf,
    pub y: PathBuf,
    #[serde(default)]
    pub header: bool,
    /// `graph.json`; without it the features get no graph (D = I).
    #[serde(default)]
    pub graph: Option<PathBuf>,
    #[serde(default)]
    pub valid_x: Option<PathBuf>,
    #[serde(default)]
    pub valid_y: Option<PathBuf>,
    /// Reference support for `compare-fista`.
    #[serde(default)]
    pub target_support: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopConfig {
    #[default]
    FixedIters,
    ValidationPlateau {
        patience: usize,
    },
    SupportSizeCap {
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    /// Candidates; empty means the single point given by `rho` + `hyper`.
    #[serde(default)]
    pub grid: Vec<GridPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FistaConfig {
    #[serde(default = "default_n_lambda")]
    pub n_lambda: usize,
    #[serde(default = "default_min_ratio")]
    pub min_ratio: f64,
    #[serde(default = "default_fista_iters")]
    pub max_iters: usize,
}

fn default_n_lambda() -> usize {
    20
}

fn default_min_ratio() -> f64 {
    1e-3
}

fn default_fista_iters() -> usize {
    FistaOptions::default().max_iters
}

impl Default for FistaConfig {
    fn default() -> Self {
        Self {
            n_lambda: default_n_lambda(),
            min_ratio: default_min_ratio(),
            max_iters: default_fista_iters(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub family: GlmFamily,
    /// Lattice for the features; overrides the data source's own graph.
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub hyper: Hyperparams,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default)]
    pub cv: Option<CvConfig>,
    #[serde(default)]
    pub fista: FistaConfig,
    #[serde(default)]
    pub decompose: Option<DecomposeRule>,
    pub output_dir: PathBuf,
}

fn default_rho() -> f64 {
    1.0
}

/// Validated inputs ready for computation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub valid: Option<Dataset>,
    pub op: SplitOperator,
    pub target_support: Option<Vec<usize>>,
}

impl RunConfig {
    /// Reads and validates the config. Relative paths inside it are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path).map_err(|e| Error::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Files(f) = &mut self.data {
            fix(&mut f.x);
            fix(&mut f.y);
            for p in [&mut f.graph, &mut f.valid_x, &mut f.valid_y].into_iter().flatten() {
                fix(p);
            }
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.hyper.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return bad(format!("rho must be >= 0, got {}", self.rho));
        }
        match self.stop {
            StopConfig::ValidationPlateau { patience: 0 } => {
                return bad("validation_plateau patience must be positive".into())
            }
            StopConfig::ValidationPlateau { .. } => {
                if let DataSource::Files(f) = &self.data {
                    if f.valid_x.is_none() || f.valid_y.is_none() {
                        return bad("validation_plateau needs valid_x and valid_y".into());
                    }
                }
            }
            _ => {}
        }
        if let Some(cv) = &self.cv {
            if cv.folds < 2 {
                return bad(format!("cv.folds must be >= 2, got {}", cv.folds));
            }
            for g in &cv.grid {
                g.hyper.validate().map_err(|e| Error::Config(e.to_string()))?;
                if !(g.rho >= 0.0) || !g.rho.is_finite() {
                    return bad(format!("grid rho must be >= 0, got {}", g.rho));
                }
            }
        }
        if self.fista.n_lambda == 0
            || !(self.fista.min_ratio > 0.0 && self.fista.min_ratio < 1.0)
            || self.fista.max_iters == 0
        {
            return bad("fista needs n_lambda >= 1, 0 < min_ratio < 1, max_iters >= 1".into());
        }
        if let DataSource::Preset(p) = &self.data {
            if p.n_valid == Some(0) {
                return bad("n_valid must be positive".into());
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is empty".into());
        }
        Ok(())
    }

    /// Loads (or generates) the data and builds the operator. Any failure here
    /// is a configuration problem.
    pub fn prepare(&self) -> Result<Prepared> {
        self.prepare_inner().map_err(|e| match e {
            e @ Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    fn prepare_inner(&self) -> Result<Prepared> {
        let (data, valid, graph, target) = match &self.data {
            DataSource::Preset(src) => {
                let mut spec = src.preset.spec(src.seed);
                match src.labels {
                    Some(LabelKind::Logit) => spec.label_model = LabelModel::Logit,
                    Some(LabelKind::Linear) => {
                        spec.label_model = LabelModel::Linear { sigma: 1.0 }
                    }
                    None => {}
                }
                let beta = src.preset.beta_star();
                let data = simulate(&spec, &beta, 0)?;
                let mut vspec = spec;
                vspec.n = src.n_valid.unwrap_or(spec.n);
                let valid = simulate(&vspec, &beta, 1)?;
                (
                    data,
                    Some(valid),
                    preset_graph(src.preset),
                    Some(src.preset.true_support()),
                )
            }
            DataSource::Files(f) => {
                let x = load_matrix_csv(&f.x, f.header)?;
                let y = load_vector_csv(&f.y, f.header)?;
                let data = Dataset::new(x, y)?;
                let valid = match (&f.valid_x, &f.valid_y) {
                    (Some(vx), Some(vy)) => Some(Dataset::new(
                        load_matrix_csv(vx, f.header)?,
                        load_vector_csv(vy, f.header)?,
                    )?),
                    (None, None) => None,
                    _ => return Err(Error::Config("give both valid_x and valid_y".into())),
                };
                let graph = match &f.graph {
                    Some(g) => read_json::<GraphSpec>(g)?,
                    None => GraphSpec {
                        dims: vec![data.n_features()],
                        mask: None,
                        connectivity: crate::lattice::Connectivity::None,
                    },
                };
                (data, valid, graph, f.target_support.clone())
            }
        };
        let graph = self.graph.clone().unwrap_or(graph);
        let op = SplitOperator::new(graph.build()?, self.rho)?;
        if op.n_nodes() != data.n_features() {
            return Err(Error::Config(format!(
                "graph has {} active voxels but X has {} columns",
                op.n_nodes(),
                data.n_features()
            )));
        }
        if let Some(v) = &valid {
            if v.n_features() != data.n_features() {
                return Err(Error::Config("validation X has the wrong width".into()));
            }
        }
        if self.family == GlmFamily::Logistic && !data.is_binary() {
            return Err(Error::Config(
                "logistic family needs +1/-1 labels in y".into(),
            ));
        }
        if let Some(t) = &target {
            if t.iter().any(|&i| i >= data.n_features()) {
                return Err(Error::Config("target_support index out of range".into()));
            }
        }
        if let Some(cv) = &self.cv {
            FoldPlan::stratified(data.y().view(), cv.folds, cv.seed)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(Prepared {
            data,
            valid,
            op,
            target_support: target,
        })
    }

    pub fn stop_rule(&self, prepared: &Prepared) -> StopRule {
        match self.stop {
            StopConfig::FixedIters => StopRule::FixedIters,
            StopConfig::SupportSizeCap { k } => StopRule::SupportSizeCap { k },
            StopConfig::ValidationPlateau { patience } => StopRule::ValidationAccuracyPlateau {
                patience,
                validation: prepared
                    .valid
                    .clone()
                    .expect("validated: plateau rule has validation data"),
            },
        }
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        match &self.cv {
            Some(cv) if !cv.grid.is_empty() => cv.grid.clone(),
            _ => vec![GridPoint {
                rho: self.rho,
                hyper: self.hyper.clone(),
            }],
        }
    }
}

pub fn preset_graph(preset: Preset) -> GraphSpec {
    GraphSpec {
        dims: preset.dims(),
        mask: None,
        connectivity: match preset {
            Preset::Grid9 => crate::lattice::Connectivity::Axis,
            Preset::Table1 => crate::lattice::Connectivity::None,
        },
    }
}
