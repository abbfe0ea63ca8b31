//! Losses and gradients for the logistic and squared-error GLM families, plus
//! the split loss that couples the dense predictor to the sparse variable
//! `gamma` through `(1/2nu) |D beta - gamma|^2`.
//!
//! All losses are averaged over the sample count.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SplitOperator;

/// Design matrix (one sample per row) with its response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 || p == 0 {
            return Err(Error::Dimension(format!("empty design matrix ({n}x{p})")));
        }
        if y.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels for {} samples",
                y.len(),
                n
            )));
        }
        if let Some((i, _)) = x
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, row)| row.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Numeric(format!("row {i} of X is not finite")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("response contains non-finite values".into()));
        }
        Ok(Self { x, y })
    }

    /// Like [`Dataset::new`] but additionally requires labels in {-1, +1}.
    pub fn classification(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let data = Self::new(x, y)?;
        data.check_labels()?;
        Ok(data)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_binary(&self) -> bool {
        self.y.iter().all(|&v| v == 1.0 || v == -1.0)
    }

    fn check_labels(&self) -> Result<()> {
        match self.y.iter().position(|&v| v != 1.0 && v != -1.0) {
            Some(i) => Err(Error::Domain(format!(
                "label {} at sample {i} is not +1/-1",
                self.y[i]
            ))),
            None => Ok(()),
        }
    }

    /// Rows selected by `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(ndarray::Axis(0), idx),
            y: self.y.select(ndarray::Axis(0), idx),
        }
    }

    /// Linear predictor `X beta + beta0` for every sample.
    pub fn margins(&self, pred: &LinearPredictor) -> Result<Array1<f64>> {
        if pred.beta.len() != self.n_features() {
            return Err(Error::Dimension(format!(
                "beta has length {} but X has {} columns",
                pred.beta.len(),
                self.n_features()
            )));
        }
        let mut mu = self.x.dot(&pred.beta);
        mu += pred.beta0;
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("linear predictor is not finite".into()));
        }
        Ok(mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmFamily {
    Logistic,
    Squared,
}

impl GlmFamily {
    pub fn loss(self, pred: &LinearPredictor, data: &Dataset) -> Result<f64> {
        match self {
            GlmFamily::Logistic => logistic_loss(pred, data),
            GlmFamily::Squared => squared_loss_grad(pred, data).map(|(l, _)| l),
        }
    }

    /// Gradient with respect to `(beta0, beta)`.
    pub fn grad(self, pred: &LinearPredictor, data: &Dataset) -> Result<(f64, Array1<f64>)> {
        match self {
            GlmFamily::Logistic => logistic_grad(pred, data),
            GlmFamily::Squared => squared_loss_grad(pred, data).map(|(_, g)| g),
        }
    }

    /// Upper bound on the largest Hessian eigenvalue of the averaged loss given
    /// the squared spectral norm of X.
    pub fn curvature_bound(self, lambda_x_sq: f64, n_samples: usize) -> f64 {
        let n = n_samples as f64;
        match self {
            GlmFamily::Logistic => lambda_x_sq / (4.0 * n),
            GlmFamily::Squared => lambda_x_sq / n,
        }
    }
}

/// Intercept plus coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub beta0: f64,
    pub beta: Array1<f64>,
}

impl LinearPredictor {
    pub fn new(beta0: f64, beta: Array1<f64>) -> Self {
        Self { beta0, beta }
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            beta0: 0.0,
            beta: Array1::zeros(p),
        }
    }
}

/// `log(1 + exp(-u))` without overflow.
pub fn log1p_exp_neg(u: f64) -> f64 {
    if u > 0.0 {
        (-u).exp().ln_1p()
    } else {
        -u + u.exp().ln_1p()
    }
}

/// Logistic sigmoid `1 / (1 + exp(-z))`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logistic_loss(pred: &LinearPredictor, data: &Dataset) -> Result<f64> {
    data.check_labels()?;
    let mu = data.margins(pred)?;
    let total: f64 = mu
        .iter()
        .zip(data.y.iter())
        .map(|(&m, &y)| log1p_exp_neg(m * y))
        .sum();
    Ok(total / data.n_samples() as f64)
}

pub fn logistic_grad(pred: &LinearPredictor, data: &Dataset) -> Result<(f64, Array1<f64>)> {
    data.check_labels()?;
    let mu = data.margins(pred)?;
    let n = data.n_samples() as f64;
    let r: Array1<f64> = mu
        .iter()
        .zip(data.y.iter())
        .map(|(&m, &y)| -y * sigmoid(-m * y))
        .collect();
    let g = data.x.t().dot(&r) / n;
    Ok((r.sum() / n, g))
}

/// Returns `(loss, (g0, g))` for `(1/2N) |X beta + beta0 - y|^2`.
pub fn squared_loss_grad(
    pred: &LinearPredictor,
    data: &Dataset,
) -> Result<(f64, (f64, Array1<f64>))> {
    let mu = data.margins(pred)?;
    let n = data.n_samples() as f64;
    let r = mu - &data.y;
    let loss = r.dot(&r) / (2.0 * n);
    let g = data.x.t().dot(&r) / n;
    Ok((loss, (r.sum() / n, g)))
}

/// Gradient blocks of the split loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGrads {
    pub g0: f64,
    pub g_beta: Array1<f64>,
    pub g_gamma: Array1<f64>,
}

fn check_split_args(
    pred: &LinearPredictor,
    gamma: ArrayView1<f64>,
    op: &SplitOperator,
    nu: f64,
) -> Result<()> {
    if !(nu > 0.0) {
        return Err(Error::Parameter(format!("nu must be positive, got {nu}")));
    }
    if pred.beta.len() != op.n_nodes() {
        return Err(Error::Dimension(format!(
            "beta has length {} but operator has {} nodes",
            pred.beta.len(),
            op.n_nodes()
        )));
    }
    if gamma.len() != op.n_rows() {
        return Err(Error::Dimension(format!(
            "gamma has length {} but operator has {} rows",
            gamma.len(),
            op.n_rows()
        )));
    }
    Ok(())
}

/// `L(beta0, beta) + (1/2nu) |D beta - gamma|^2`.
pub fn augmented_loss(
    pred: &LinearPredictor,
    gamma: ArrayView1<f64>,
    op: &SplitOperator,
    nu: f64,
    data: &Dataset,
    family: GlmFamily,
) -> Result<f64> {
    check_split_args(pred, gamma, op, nu)?;
    let loss = family.loss(pred, data)?;
    let resid = op.apply(pred.beta.view())? - gamma;
    Ok(loss + resid.dot(&resid) / (2.0 * nu))
}

pub fn augmented_grads(
    pred: &LinearPredictor,
    gamma: ArrayView1<f64>,
    op: &SplitOperator,
    nu: f64,
    data: &Dataset,
    family: GlmFamily,
) -> Result<AugmentedGrads> {
    check_split_args(pred, gamma, op, nu)?;
    let (g0, mut g_beta) = family.grad(pred, data)?;
    // gamma - D beta, scaled
    let mut g_gamma = op.apply(pred.beta.view())?;
    g_gamma.zip_mut_with(&gamma, |d, &g| *d = (g - *d) / nu);
    g_beta -= &op.apply_transpose(g_gamma.view())?;
    Ok(AugmentedGrads {
        g0,
        g_beta,
        g_gamma,
    })
}
