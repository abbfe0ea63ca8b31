//! Seeded synthetic datasets: the 9x9 lesion/bias image and the sparse
//! 80-feature regression design.
//!
//! Randomness comes from `rand_chacha::ChaCha20Rng` (0.3 series) seeded with
//! `seed_from_u64(seed)`. Replicate `r` draws its design from stream `2r + 1`
//! and its labels from stream `2r + 2`, so the training set (replicate 0) and
//! a held-out set (replicate 1) never share random numbers. Normals come from
//! `rand_distr::StandardNormal`, drawn in row-major order.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{sigmoid, Dataset};

/// Ground truth on a 2-d grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSignal {
    pub dims: [usize; 2],
    pub beta_star: Array1<f64>,
    pub lesion_set: Vec<usize>,
    pub bias_set: Vec<usize>,
}

/// 9x9 image: centred 5x5 block at +3 (rows/cols 2..=6), the four corners at
/// -3, everything else 0. Raster order.
pub fn preset_grid_signal() -> GridSignal {
    let side = 9;
    let mut beta = Array1::zeros(side * side);
    let mut lesion = Vec::new();
    for r in 2..=6 {
        for c in 2..=6 {
            lesion.push(r * side + c);
        }
    }
    let bias = vec![0, side - 1, side * (side - 1), side * side - 1];
    for &i in &lesion {
        beta[i] = 3.0;
    }
    for &i in &bias {
        beta[i] = -3.0;
    }
    GridSignal {
        dims: [side, side],
        beta_star: beta,
        lesion_set: lesion,
        bias_set: bias,
    }
}

/// 80 coefficients: +2 on the first four, -2 on the next four, zero after.
pub fn preset_table1_signal() -> Array1<f64> {
    (0..80)
        .map(|i| match i {
            0..=3 => 2.0,
            4..=7 => -2.0,
            _ => 0.0,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LabelModel {
    /// `P(y = +1) = sigmoid(<x, beta*>)`.
    Logit,
    /// `y = <x, beta*> + N(0, sigma^2)`.
    Linear { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub label_model: LabelModel,
}

impl SimSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::Parameter(format!(
                "simulation needs N, p >= 1, got {}x{}",
                self.n, self.p
            )));
        }
        if let LabelModel::Linear { sigma } = self.label_model {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::Parameter(format!("noise sigma must be >= 0, got {sigma}")));
            }
        }
        Ok(())
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// i.i.d. standard normal `N x p` design for replicate `rep`.
pub fn gen_design(spec: &SimSpec, rep: u64) -> Result<Array2<f64>> {
    spec.validate()?;
    let mut rng = stream(spec.seed, 2 * rep + 1);
    Ok(Array2::from_shape_simple_fn((spec.n, spec.p), || {
        rng.sample(StandardNormal)
    }))
}

pub fn gen_labels(
    x: &Array2<f64>,
    beta_star: &Array1<f64>,
    spec: &SimSpec,
    rep: u64,
) -> Result<Array1<f64>> {
    spec.validate()?;
    if x.ncols() != beta_star.len() {
        return Err(Error::Dimension(format!(
            "X has {} columns, beta* has {} entries",
            x.ncols(),
            beta_star.len()
        )));
    }
    let mut rng = stream(spec.seed, 2 * rep + 2);
    let mu = x.dot(beta_star);
    Ok(match spec.label_model {
        LabelModel::Logit => mu.mapv(|m| {
            let u: f64 = rng.gen();
            if u < sigmoid(m) {
                1.0
            } else {
                -1.0
            }
        }),
        LabelModel::Linear { sigma } => mu.mapv(|m| {
            let e: f64 = rng.sample(StandardNormal);
            m + sigma * e
        }),
    })
}

/// Design plus labels for replicate `rep` (0 = training, 1 = held out, ...).
pub fn simulate(spec: &SimSpec, beta_star: &Array1<f64>, rep: u64) -> Result<Dataset> {
    let x = gen_design(spec, rep)?;
    let y = gen_labels(&x, beta_star, spec, rep)?;
    Dataset::new(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 9x9 image, N = 400, logit labels.
    Grid9,
    /// 80 features, N = 100, linear labels with unit noise.
    Table1,
}

impl Preset {
    pub fn spec(self, seed: u64) -> SimSpec {
        match self {
            Preset::Grid9 => SimSpec {
                n: 400,
                p: 81,
                seed,
                label_model: LabelModel::Logit,
            },
            Preset::Table1 => SimSpec {
                n: 100,
                p: 80,
                seed,
                label_model: LabelModel::Linear { sigma: 1.0 },
            },
        }
    }

    pub fn beta_star(self) -> Array1<f64> {
        match self {
            Preset::Grid9 => preset_grid_signal().beta_star,
            Preset::Table1 => preset_table1_signal(),
        }
    }

    /// Lattice shape the features live on. Table1 has no graph (D = I).
    pub fn dims(self) -> Vec<usize> {
        match self {
            Preset::Grid9 => vec![9, 9],
            Preset::Table1 => vec![80],
        }
    }

    pub fn true_support(self) -> Vec<usize> {
        let b = self.beta_star();
        (0..b.len()).filter(|&i| b[i] != 0.0).collect()
    }
}
