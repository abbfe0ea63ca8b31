//! The split linearized Bregman iteration.
//!
//! Each step moves the dense predictor `(beta0, beta_pre)` by gradient descent
//! on the split loss, accumulates the dual variable `v` for `gamma`, and maps
//! `v` back through the shrinkage to get a sparse `gamma`. Every recorded step
//! also projects `beta_pre` onto the support of `gamma` to produce `beta_les`.

use ndarray::{s, Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::glm::{augmented_grads, augmented_loss, Dataset, GlmFamily, LinearPredictor};
use crate::lattice::{operator_norms, SplitOperator};
use crate::projection::{project_lesion, Support};

/// Step size: either fixed or derived from operator norms before iteration 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    #[default]
    #[serde(with = "auto_tag")]
    Auto,
    Fixed(f64),
}

mod auto_tag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("expected \"auto\" or a number, got {s:?}")))
        }
    }
}

/// Which stability bound the automatic step size uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPolicy {
    /// `nu / (kappa (1 + nu Lx^2 + nu Ld^2))`.
    #[default]
    Experiment,
    /// `nu / (kappa (1 + nu Lh + Ld^2))` with `Lh` the loss curvature bound.
    Hessian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub kappa: f64,
    pub nu: f64,
    #[serde(default)]
    pub alpha: StepSize,
    #[serde(default)]
    pub step_policy: StepPolicy,
    pub max_iters: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub nonneg: bool,
}

fn default_record_every() -> usize {
    1
}

impl Hyperparams {
    pub fn new(kappa: f64, nu: f64, max_iters: usize) -> Self {
        Self {
            kappa,
            nu,
            alpha: StepSize::Auto,
            step_policy: StepPolicy::Experiment,
            max_iters,
            record_every: 1,
            nonneg: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Parameter(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::Parameter(format!("nu must be positive, got {}", self.nu)));
        }
        if let StepSize::Fixed(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Parameter(format!("alpha must be positive, got {a}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Parameter("record_every must be positive".into()));
        }
        Ok(())
    }
}

/// Step size from precomputed norms. `lambda_x` is the spectral norm of the
/// raw design; it is rescaled by `1/N` because losses are sample averages.
pub fn step_size_from_norms(
    kappa: f64,
    nu: f64,
    lambda_x: f64,
    lambda_d: f64,
    n_samples: usize,
    family: GlmFamily,
    policy: StepPolicy,
) -> f64 {
    let lx_sq = lambda_x * lambda_x;
    let ld_sq = lambda_d * lambda_d;
    let denom = match policy {
        StepPolicy::Experiment => 1.0 + nu * lx_sq / n_samples as f64 + nu * ld_sq,
        StepPolicy::Hessian => 1.0 + nu * family.curvature_bound(lx_sq, n_samples) + ld_sq,
    };
    nu / (kappa * denom)
}

pub fn default_step_size(
    hyper: &Hyperparams,
    op: &SplitOperator,
    data: &Dataset,
    family: GlmFamily,
) -> Result<f64> {
    hyper.validate()?;
    let (lx, ld) = operator_norms(op, data.x())?;
    Ok(step_size_from_norms(
        hyper.kappa,
        hyper.nu,
        lx,
        ld,
        data.n_samples(),
        family,
        hyper.step_policy,
    ))
}

/// `kappa * shrink(v)`: soft-thresholding at 1, one-sided on the node block
/// when `nonneg`.
pub fn shrink(v: ArrayView1<f64>, n_nodes: usize, kappa: f64, nonneg: bool) -> Array1<f64> {
    let mut out = Array1::zeros(v.len());
    shrink_into(v, n_nodes, kappa, nonneg, out.view_mut());
    out
}

fn shrink_into(
    v: ArrayView1<f64>,
    n_nodes: usize,
    kappa: f64,
    nonneg: bool,
    mut out: ndarray::ArrayViewMut1<f64>,
) {
    for (i, (&z, o)) in v.iter().zip(out.iter_mut()).enumerate() {
        *o = if nonneg && i < n_nodes {
            kappa * (z - 1.0).max(0.0)
        } else {
            let mag = (z.abs() - 1.0).max(0.0);
            if mag > 0.0 {
                kappa * z.signum() * mag
            } else {
                0.0
            }
        };
    }
}

/// Coupled iterate at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub t: usize,
    pub beta0: f64,
    pub beta_pre: Array1<f64>,
    pub v: Array1<f64>,
    pub gamma: Array1<f64>,
}

impl ModelState {
    /// The null model: everything exactly zero.
    pub fn zeros(op: &SplitOperator) -> Self {
        Self {
            t: 0,
            beta0: 0.0,
            beta_pre: Array1::zeros(op.n_nodes()),
            v: Array1::zeros(op.n_rows()),
            gamma: Array1::zeros(op.n_rows()),
        }
    }

    pub fn predictor(&self) -> LinearPredictor {
        LinearPredictor::new(self.beta0, self.beta_pre.clone())
    }

    pub fn support(&self) -> Support {
        Support::from_gamma(self.gamma.view(), self.beta_pre.len())
    }

    pub fn gamma_nodes(&self) -> ArrayView1<'_, f64> {
        self.gamma.slice(s![..self.beta_pre.len()])
    }
}

/// When to stop a path before `max_iters`.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum StopRule {
    #[default]
    FixedIters,
    /// Stop once `beta_pre` accuracy on `validation` has not improved for
    /// `patience` consecutive recorded points.
    ValidationAccuracyPlateau { patience: usize, validation: Dataset },
    /// Stop once `|supp(gamma_V)| >= k`.
    SupportSizeCap { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathDiagnostics {
    pub loss: f64,
    pub aug_loss: f64,
    pub dist_pre_les: f64,
    pub support_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub t: usize,
    pub beta0: f64,
    pub beta_pre: Array1<f64>,
    pub beta_les: Array1<f64>,
    pub support: Support,
    pub diagnostics: PathDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    ValidationPlateau,
    SupportSizeCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationPath {
    /// Step size actually used; regularization time of a point is `t * alpha`.
    pub alpha: f64,
    pub points: Vec<PathPoint>,
    pub stop_reason: StopReason,
}

impl RegularizationPath {
    pub fn point_at(&self, t: usize) -> Option<&PathPoint> {
        self.points
            .binary_search_by_key(&t, |p| p.t)
            .ok()
            .map(|i| &self.points[i])
    }

    /// Total iterations taken.
    pub fn iterations(&self) -> usize {
        self.points.last().map_or(0, |p| p.t)
    }
}

/// A configured run: data, family, operator and hyper-parameters with the step
/// size resolved once up front.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    data: &'a Dataset,
    family: GlmFamily,
    op: &'a SplitOperator,
    hyper: Hyperparams,
    alpha: f64,
}

impl<'a> Solver<'a> {
    pub fn new(
        data: &'a Dataset,
        family: GlmFamily,
        op: &'a SplitOperator,
        hyper: &Hyperparams,
    ) -> Result<Self> {
        hyper.validate()?;
        if data.n_features() != op.n_nodes() {
            return Err(Error::Dimension(format!(
                "X has {} columns but the graph has {} nodes",
                data.n_features(),
                op.n_nodes()
            )));
        }
        if family == GlmFamily::Logistic && !data.is_binary() {
            return Err(Error::Domain("logistic family needs +1/-1 labels".into()));
        }
        let alpha = match hyper.alpha {
            StepSize::Fixed(a) => a,
            StepSize::Auto => default_step_size(hyper, op, data, family)?,
        };
        Ok(Self {
            data,
            family,
            op,
            hyper: hyper.clone(),
            alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    /// One simultaneous update of every block from the old state.
    pub fn step(&self, state: &ModelState) -> Result<ModelState> {
        let h = &self.hyper;
        let diverged = |beta: &Array1<f64>, v: &Array1<f64>| Error::Diverged {
            step: state.t + 1,
            beta_norm: beta.dot(beta).sqrt(),
            v_norm: v.dot(v).sqrt(),
        };
        // finite but huge coefficients overflow the margins first
        let g = augmented_grads(
            &state.predictor(),
            state.gamma.view(),
            self.op,
            h.nu,
            self.data,
            self.family,
        )
        .map_err(|e| match e {
            Error::Numeric(_) => diverged(&state.beta_pre, &state.v),
            e => e,
        })?;
        let ak = self.alpha * h.kappa;
        let beta0 = state.beta0 - ak * g.g0;
        let beta_pre = &state.beta_pre - &(&g.g_beta * ak);
        let v = &state.v - &(&g.g_gamma * self.alpha);

        let finite = beta0.is_finite()
            && beta_pre.iter().all(|x| x.is_finite())
            && v.iter().all(|x| x.is_finite());
        if !finite {
            return Err(diverged(&beta_pre, &v));
        }
        let gamma = shrink(v.view(), self.op.n_nodes(), h.kappa, h.nonneg);
        debug_assert!(!h.nonneg || gamma.iter().take(self.op.n_nodes()).all(|&x| x >= 0.0));
        Ok(ModelState {
            t: state.t + 1,
            beta0,
            beta_pre,
            v,
            gamma,
        })
    }

    /// Path point for `state`: projection plus diagnostics.
    pub fn record(&self, state: &ModelState) -> Result<PathPoint> {
        let support = state.support();
        let beta_les = project_lesion(state.beta_pre.view(), &support, self.op, self.hyper.nonneg)?;
        let pred = state.predictor();
        let overflow = |e: Error| match e {
            Error::Numeric(_) => Error::Diverged {
                step: state.t,
                beta_norm: state.beta_pre.dot(&state.beta_pre).sqrt(),
                v_norm: state.v.dot(&state.v).sqrt(),
            },
            e => e,
        };
        let loss = self.family.loss(&pred, self.data).map_err(overflow)?;
        let aug_loss = augmented_loss(
            &pred,
            state.gamma.view(),
            self.op,
            self.hyper.nu,
            self.data,
            self.family,
        )
        .map_err(overflow)?;
        let diff = &state.beta_pre - &beta_les;
        let support_size = support.s_v.len() + support.s_g.len();
        Ok(PathPoint {
            t: state.t,
            beta0: state.beta0,
            beta_pre: state.beta_pre.clone(),
            beta_les,
            support,
            diagnostics: PathDiagnostics {
                loss,
                aug_loss,
                dist_pre_les: diff.dot(&diff).sqrt(),
                support_size,
            },
        })
    }

    pub fn run_path(&self, stop: &StopRule) -> Result<RegularizationPath> {
        if let StopRule::ValidationAccuracyPlateau { validation, .. } = stop {
            if validation.n_features() != self.op.n_nodes() {
                return Err(Error::Dimension(
                    "validation set has the wrong number of features".into(),
                ));
            }
        }
        let mut state = ModelState::zeros(self.op);
        let mut points = vec![self.record(&state)?];
        let mut monitor = StopMonitor::default();
        if let Some(reason) = monitor.check(stop, &points[0]) {
            return Ok(RegularizationPath {
                alpha: self.alpha,
                points,
                stop_reason: reason,
            });
        }
        let mut stop_reason = StopReason::MaxIters;
        while state.t < self.hyper.max_iters {
            state = self.step(&state)?;
            if state.t % self.hyper.record_every == 0 || state.t == self.hyper.max_iters {
                let point = self.record(&state)?;
                let fired = monitor.check(stop, &point);
                points.push(point);
                if let Some(reason) = fired {
                    stop_reason = reason;
                    break;
                }
            }
        }
        Ok(RegularizationPath {
            alpha: self.alpha,
            points,
            stop_reason,
        })
    }
}

#[derive(Default)]
struct StopMonitor {
    best: Option<f64>,
    stale: usize,
}

impl StopMonitor {
    fn check(&mut self, rule: &StopRule, point: &PathPoint) -> Option<StopReason> {
        match rule {
            StopRule::FixedIters => None,
            StopRule::SupportSizeCap { k } => {
                (point.support.s_v.len() >= *k).then_some(StopReason::SupportSizeCap)
            }
            StopRule::ValidationAccuracyPlateau {
                patience,
                validation,
            } => {
                let acc = accuracy(validation, point.beta0, point.beta_pre.view());
                match self.best {
                    Some(b) if acc <= b => self.stale += 1,
                    _ => {
                        self.best = Some(acc);
                        self.stale = 0;
                    }
                }
                (self.stale >= *patience).then_some(StopReason::ValidationPlateau)
            }
        }
    }
}

/// Single update with a freshly resolved step size. Prefer [`Solver`] for
/// repeated steps.
pub fn step(
    state: &ModelState,
    data: &Dataset,
    family: GlmFamily,
    op: &SplitOperator,
    hyper: &Hyperparams,
) -> Result<ModelState> {
    Solver::new(data, family, op, hyper)?.step(state)
}

pub fn run_path(
    data: &Dataset,
    family: GlmFamily,
    op: &SplitOperator,
    hyper: &Hyperparams,
    stop: &StopRule,
) -> Result<RegularizationPath> {
    Solver::new(data, family, op, hyper)?.run_path(stop)
}

/// First step at which each node enters `supp(gamma_V)`, sorted by entry step
/// then index.
pub fn entry_order(path: &RegularizationPath) -> Vec<(usize, usize)> {
    let mut seen = std::collections::BTreeMap::new();
    for point in &path.points {
        for &i in &point.support.s_v {
            seen.entry(i).or_insert(point.t);
        }
    }
    let mut out: Vec<(usize, usize)> = seen.into_iter().collect();
    out.sort_by_key(|&(i, t)| (t, i));
    out
}
