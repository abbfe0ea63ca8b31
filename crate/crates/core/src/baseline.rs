//! l1-penalised logistic regression by FISTA over a decreasing lambda grid,
//! the grid-search baseline the single Bregman path is compared against.

use std::time::{Duration, Instant};

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{logistic_grad, logistic_loss, sigmoid, Dataset, LinearPredictor};
use crate::lattice::{power_iteration, POWER_MAX_ITERS, POWER_TOL};

/// Strictly decreasing positive penalty levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
    pub warm_start: bool,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>, warm_start: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("empty lambda grid".into()));
        }
        if values.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Parameter("lambda values must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Parameter("lambda grid must be strictly decreasing".into()));
        }
        Ok(Self { values, warm_start })
    }

    /// `n` log-spaced values from `lambda_max(data)` down to `min_ratio` of it.
    pub fn log_spaced(data: &Dataset, n: usize, min_ratio: f64, warm_start: bool) -> Result<Self> {
        if n == 0 || !(min_ratio > 0.0 && min_ratio < 1.0) {
            return Err(Error::Parameter(format!(
                "need n >= 1 and 0 < min_ratio < 1, got {n}, {min_ratio}"
            )));
        }
        let top = lambda_max(data)?;
        let values = if n == 1 {
            vec![top]
        } else {
            (0..n)
                .map(|k| top * min_ratio.powf(k as f64 / (n - 1) as f64))
                .collect()
        };
        Self::new(values, warm_start)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Smallest lambda whose solution is `beta = 0`: the largest absolute gradient
/// coordinate at the intercept-only fit.
pub fn lambda_max(data: &Dataset) -> Result<f64> {
    let mut pred = LinearPredictor::zeros(data.n_features());
    pred.beta0 = fit_intercept(data, pred.beta.view(), 0.0)?;
    let (_, g) = logistic_grad(&pred, data)?;
    Ok(g.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Exact minimiser over the intercept with `beta` held fixed, by safeguarded
/// Newton steps.
fn fit_intercept(data: &Dataset, beta: ArrayView1<f64>, start: f64) -> Result<f64> {
    let xb = data.x().dot(&beta);
    let y = data.y();
    let n = data.n_samples() as f64;
    let objective = |b: f64| {
        xb.iter()
            .zip(y.iter())
            .map(|(&m, &yi)| crate::glm::log1p_exp_neg((m + b) * yi))
            .sum::<f64>()
            / n
    };
    let mut b = start;
    let mut f = objective(b);
    for _ in 0..100 {
        let (mut g, mut h) = (0.0, 0.0);
        for (&m, &yi) in xb.iter().zip(y.iter()) {
            let s = sigmoid(m + b);
            g += -yi * sigmoid(-(m + b) * yi);
            h += s * (1.0 - s);
        }
        g /= n;
        h /= n;
        if g.abs() < 1e-14 || h < 1e-300 {
            break;
        }
        let mut delta = g / h;
        let mut accepted = false;
        for _ in 0..60 {
            let fb = objective(b - delta);
            if fb <= f {
                b -= delta;
                f = fb;
                accepted = true;
                break;
            }
            delta /= 2.0;
        }
        if !accepted || delta.abs() < 1e-15 * (1.0 + b.abs()) {
            break;
        }
    }
    if !b.is_finite() {
        return Err(Error::Numeric("intercept fit diverged".into()));
    }
    Ok(b)
}

fn soft_threshold(z: f64, level: f64) -> f64 {
    if z > level {
        z - level
    } else if z < -level {
        z + level
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FistaMode {
    #[default]
    Accelerated,
    /// Plain proximal gradient (ISTA); monotone objective.
    ProximalGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FistaOptions {
    pub max_iters: usize,
    pub mode: FistaMode,
    /// `|beta_{k+1} - beta_k|_1 / p` threshold.
    pub step_tol: f64,
    /// `|grad l(beta_k)|_inf` threshold.
    pub grad_tol: f64,
}

impl Default for FistaOptions {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            mode: FistaMode::Accelerated,
            step_tol: 1e-8,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FistaResult {
    pub beta: Array1<f64>,
    pub beta0: f64,
    pub iters: usize,
    pub elapsed: Duration,
    pub objective: f64,
    /// Largest violation of the optimality conditions at the returned point.
    pub kkt_residual: f64,
    /// Objective after every iteration (only filled when tracing).
    pub trace: Vec<f64>,
}

/// Step-size constant `L = Lambda_X^2 / (4N)` for the averaged logistic loss.
pub fn lipschitz(data: &Dataset) -> Result<f64> {
    let x = data.x();
    let top = power_iteration(x.ncols(), |v| x.t().dot(&x.dot(v)), POWER_TOL, POWER_MAX_ITERS)?;
    // small margin over the power-iteration estimate
    Ok(top * (1.0 + 1e-6) / (4.0 * data.n_samples() as f64))
}

pub fn objective(data: &Dataset, pred: &LinearPredictor, lambda: f64) -> Result<f64> {
    Ok(logistic_loss(pred, data)? + lambda * pred.beta.iter().map(|v| v.abs()).sum::<f64>())
}

/// Max violation of the l1 optimality conditions (intercept included).
pub fn kkt_residual(data: &Dataset, pred: &LinearPredictor, lambda: f64) -> Result<f64> {
    let (g0, g) = logistic_grad(pred, data)?;
    let mut worst = g0.abs();
    for (&b, &gj) in pred.beta.iter().zip(g.iter()) {
        let r = if b == 0.0 {
            (gj.abs() - lambda).max(0.0)
        } else {
            (gj + lambda * b.signum()).abs()
        };
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Reusable FISTA runner with the curvature constant computed once.
#[derive(Debug, Clone)]
pub struct Fista<'a> {
    data: &'a Dataset,
    lipschitz: f64,
    pub options: FistaOptions,
    pub trace: bool,
}

impl<'a> Fista<'a> {
    pub fn new(data: &'a Dataset, options: FistaOptions) -> Result<Self> {
        if !data.is_binary() {
            return Err(Error::Domain("FISTA baseline needs +1/-1 labels".into()));
        }
        Ok(Self {
            data,
            lipschitz: lipschitz(data)?,
            options,
            trace: false,
        })
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn solve(&self, lambda: f64, init: &LinearPredictor) -> Result<FistaResult> {
        if !(lambda >= 0.0) {
            return Err(Error::Parameter(format!("lambda must be >= 0, got {lambda}")));
        }
        let p = self.data.n_features();
        if init.beta.len() != p {
            return Err(Error::Dimension(format!(
                "init has length {}, expected {p}",
                init.beta.len()
            )));
        }
        let start = Instant::now();
        let step = 1.0 / self.lipschitz;
        let opts = &self.options;

        let mut x = init.beta.clone();
        let mut beta0 = fit_intercept(self.data, x.view(), init.beta0)?;
        let mut y = x.clone();
        let mut theta = 1.0f64;
        let mut trace = Vec::new();
        let mut iters = 0;

        while iters < opts.max_iters {
            iters += 1;
            let (_, g) = logistic_grad(&LinearPredictor::new(beta0, y.clone()), self.data)?;
            let x_new: Array1<f64> = y
                .iter()
                .zip(g.iter())
                .map(|(&yj, &gj)| soft_threshold(yj - step * gj, lambda * step))
                .collect();
            beta0 = fit_intercept(self.data, x_new.view(), beta0)?;

            let change = (&x_new - &x).iter().map(|v| v.abs()).sum::<f64>() / p as f64;
            match opts.mode {
                FistaMode::Accelerated => {
                    let theta_new = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
                    let w = (theta - 1.0) / theta_new;
                    y = &x_new + &((&x_new - &x) * w);
                    theta = theta_new;
                }
                FistaMode::ProximalGradient => y = x_new.clone(),
            }
            x = x_new;

            let pred = LinearPredictor::new(beta0, x.clone());
            if self.trace {
                trace.push(objective(self.data, &pred, lambda)?);
            }
            if change < opts.step_tol {
                break;
            }
            let (_, gx) = logistic_grad(&pred, self.data)?;
            if gx.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.grad_tol {
                break;
            }
        }
        let pred = LinearPredictor::new(beta0, x);
        Ok(FistaResult {
            objective: objective(self.data, &pred, lambda)?,
            kkt_residual: kkt_residual(self.data, &pred, lambda)?,
            beta: pred.beta,
            beta0,
            iters,
            elapsed: start.elapsed(),
            trace,
        })
    }

    pub fn path(&self, grid: &LambdaGrid) -> Result<Vec<FistaPathPoint>> {
        let p = self.data.n_features();
        let mut init = LinearPredictor::zeros(p);
        let mut out = Vec::with_capacity(grid.values.len());
        let (mut total_iters, mut total_time) = (0usize, Duration::ZERO);
        for &lambda in &grid.values {
            let res = self.solve(lambda, &init)?;
            total_iters += res.iters;
            total_time += res.elapsed;
            if grid.warm_start {
                init = LinearPredictor::new(res.beta0, res.beta.clone());
            }
            out.push(FistaPathPoint {
                lambda,
                support: (0..p).filter(|&j| res.beta[j] != 0.0).collect(),
                result: res,
                cumulative_iters: total_iters,
                cumulative_elapsed: total_time,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FistaPathPoint {
    pub lambda: f64,
    pub result: FistaResult,
    pub support: Vec<usize>,
    pub cumulative_iters: usize,
    pub cumulative_elapsed: Duration,
}

pub fn fista_l1_logistic(
    data: &Dataset,
    lambda: f64,
    init: &LinearPredictor,
    max_iters: usize,
) -> Result<FistaResult> {
    let opts = FistaOptions {
        max_iters,
        ..FistaOptions::default()
    };
    Fista::new(data, opts)?.solve(lambda, init)
}

pub fn fista_path(data: &Dataset, grid: &LambdaGrid) -> Result<Vec<FistaPathPoint>> {
    Fista::new(data, FistaOptions::default())?.path(grid)
}
