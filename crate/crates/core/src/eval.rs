//! Classification metrics, support-recovery AUC, the multi-set Dice
//! coefficient and K-fold cross-validation along the path.

use std::collections::BTreeSet;

use ndarray::ArrayView1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Dataset, GlmFamily};
use crate::lattice::SplitOperator;
use crate::parallel::{self, Execution};
use crate::projection::support_of;
use crate::solver::{Hyperparams, RegularizationPath, Solver, StopRule};

/// `sign(mu)` with ties sent to +1.
pub fn predict_label(mu: f64) -> f64 {
    if mu >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Fraction of samples whose label matches `sign(X beta + beta0)`.
pub fn accuracy(data: &Dataset, beta0: f64, beta: ArrayView1<f64>) -> f64 {
    let mu = data.x().dot(&beta);
    let hits = mu
        .iter()
        .zip(data.y().iter())
        .filter(|(&m, &y)| predict_label(m + beta0) == y)
        .count();
    hits as f64 / data.n_samples() as f64
}

/// Accuracy, sensitivity (recall on class -1) and specificity (recall on class
/// +1). A rate whose class is absent is NaN with its `*_defined` flag false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
    pub sen_defined: bool,
    pub spe_defined: bool,
}

pub fn classify_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension(format!(
            "{} labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Dimension("no samples".into()));
    }
    if let Some(v) = y_true
        .iter()
        .chain(y_pred.iter())
        .find(|&&v| v != 1.0 && v != -1.0)
    {
        return Err(Error::Domain(format!("label {v} is not +1/-1")));
    }
    let (mut neg, mut pos, mut tn, mut tp) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t < 0.0 {
            neg += 1;
            tn += (p == t) as usize;
        } else {
            pos += 1;
            tp += (p == t) as usize;
        }
    }
    let rate = |hit: usize, total: usize| {
        if total == 0 {
            f64::NAN
        } else {
            hit as f64 / total as f64
        }
    };
    Ok(Metrics {
        acc: (tn + tp) as f64 / y_true.len() as f64,
        sen: rate(tn, neg),
        spe: rate(tp, pos),
        sen_defined: neg > 0,
        spe_defined: pos > 0,
    })
}

/// Metrics of the predictor `(beta0, beta)` on `data`.
pub fn evaluate(data: &Dataset, beta0: f64, beta: ArrayView1<f64>) -> Result<Metrics> {
    let mu = data.x().dot(&beta);
    let pred: Vec<f64> = mu.iter().map(|&m| predict_label(m + beta0)).collect();
    classify_metrics(data.y().as_slice().expect("contiguous"), &pred)
}

/// Mann-Whitney AUC of `|scores|` separating `true_support` from the rest,
/// with tied scores given their mid-rank.
pub fn support_auc(scores: ArrayView1<f64>, true_support: &[usize]) -> Result<f64> {
    let p = scores.len();
    let mut is_true = vec![false; p];
    for &i in true_support {
        *is_true
            .get_mut(i)
            .ok_or(Error::NodeOutOfRange { index: i, count: p })? = true;
    }
    let n_pos = is_true.iter().filter(|&&b| b).count();
    let n_neg = p - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Parameter(
            "true support must be a nonempty proper subset".into(),
        ));
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| scores[a].abs().total_cmp(&scores[b].abs()));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < p {
        let mut j = i;
        while j + 1 < p && scores[order[j + 1]].abs() == scores[order[i]].abs() {
            j += 1;
        }
        // ranks i+1 ..= j+1
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| is_true[k]).count() as f64 * mid;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mdc {
    pub value: f64,
    /// Every support was empty; `value` is 0 by convention.
    pub all_empty: bool,
}

/// Multi-set Dice coefficient `K |intersection| / sum |S_k|`.
pub fn mdc(supports: &[Vec<usize>]) -> Result<Mdc> {
    if supports.len() < 2 {
        return Err(Error::Parameter(format!(
            "mDC needs at least 2 supports, got {}",
            supports.len()
        )));
    }
    let sets: Vec<BTreeSet<usize>> = supports.iter().map(|s| s.iter().copied().collect()).collect();
    let total: usize = sets.iter().map(BTreeSet::len).sum();
    if total == 0 {
        return Ok(Mdc {
            value: 0.0,
            all_empty: true,
        });
    }
    let common = sets[0]
        .iter()
        .filter(|i| sets[1..].iter().all(|s| s.contains(i)))
        .count();
    Ok(Mdc {
        value: (sets.len() * common) as f64 / total as f64,
        all_empty: false,
    })
}

/// Stratified assignment of samples to folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// Shuffles each class with a seeded ChaCha8 stream and deals its members
    /// round-robin, continuing the deal across classes so fold sizes differ by
    /// at most one. Every fold must see both classes.
    pub fn stratified(y: ArrayView1<f64>, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Parameter(format!("need at least 2 folds, got {k}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut assignments = vec![0usize; y.len()];
        let mut next = 0usize;
        for class in [-1.0, 1.0] {
            let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
            if members.len() < k {
                return Err(Error::Parameter(format!(
                    "class {class:+} has {} samples, fewer than {k} folds",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            for i in members {
                assignments[i] = next % k;
                next += 1;
            }
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::Domain("fold planning needs +1/-1 labels".into()));
        }
        Ok(Self {
            k,
            seed,
            assignments,
        })
    }

    /// `(train, validation)` sample indices for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != f)
    }
}

/// One candidate of the search grid. `rho` rebuilds the split operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub rho: f64,
    #[serde(flatten)]
    pub hyper: Hyperparams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: usize,
    pub pre_acc: f64,
    pub les_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    /// `beta_pre` metrics on the validation fold at the selected step.
    pub metrics: Metrics,
    /// Step maximising this fold's `beta_les` validation accuracy.
    pub les_best_t: usize,
    /// `supp(beta_les)` at `les_best_t`.
    pub les_support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub best_index: usize,
    pub best: GridPoint,
    pub best_t: usize,
    pub best_mean_acc: f64,
    pub folds: Vec<FoldOutcome>,
    pub mdc: Mdc,
    /// Mean validation accuracy of both estimators along the selected path.
    pub curve: Vec<CurvePoint>,
}

struct FoldRun {
    ts: Vec<usize>,
    pre: Vec<f64>,
    les: Vec<f64>,
    path: RegularizationPath,
    valid: Dataset,
}

fn run_fold(
    data: &Dataset,
    family: GlmFamily,
    op: &SplitOperator,
    grid: &GridPoint,
    plan: &FoldPlan,
    fold: usize,
) -> Result<FoldRun> {
    let (train, valid) = plan.split(fold);
    let train = data.subset(&train);
    let valid = data.subset(&valid);
    let op = op.with_rho(grid.rho)?;
    let path = Solver::new(&train, family, &op, &grid.hyper)?.run_path(&StopRule::FixedIters)?;
    let ts = path.points.iter().map(|p| p.t).collect();
    let pre = path
        .points
        .iter()
        .map(|p| accuracy(&valid, p.beta0, p.beta_pre.view()))
        .collect();
    let les = path
        .points
        .iter()
        .map(|p| accuracy(&valid, p.beta0, p.beta_les.view()))
        .collect();
    Ok(FoldRun {
        ts,
        pre,
        les,
        path,
        valid,
    })
}

/// Runs every grid point on every training fold and picks the `(grid point,
/// t)` with the highest mean `beta_pre` validation accuracy. Ties go to the
/// smaller `t`, then the smaller `rho`, then the earlier grid entry.
pub fn cross_validate(
    data: &Dataset,
    family: GlmFamily,
    op: &SplitOperator,
    grid: &[GridPoint],
    plan: &FoldPlan,
    exec: Execution,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(Error::Parameter("empty hyper-parameter grid".into()));
    }
    if plan.assignments.len() != data.n_samples() {
        return Err(Error::Dimension("fold plan does not match the data".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..plan.k).map(move |f| (g, f)))
        .collect();
    let runs = parallel::try_map(&jobs, exec, |&(g, f)| {
        run_fold(data, family, op, &grid[g], plan, f)
    })?;
    let runs: Vec<&[FoldRun]> = runs.chunks(plan.k).collect();

    // (mean acc, t, rho, grid index, point index)
    let mut best: Option<(f64, usize, f64, usize, usize)> = None;
    for (g, folds) in runs.iter().enumerate() {
        let len = folds.iter().map(|r| r.ts.len()).min().unwrap_or(0);
        for j in 0..len {
            let mean = folds.iter().map(|r| r.pre[j]).sum::<f64>() / plan.k as f64;
            let cand = (mean, folds[0].ts[j], grid[g].rho, g, j);
            let better = match best {
                None => true,
                Some(b) => {
                    cand.0 > b.0
                        || (cand.0 == b.0 && (cand.1, cand.2) < (b.1, b.2))
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    let (best_mean_acc, best_t, _, g, j) = best.expect("grid and folds are nonempty");
    let folds = runs[g];
    let len = folds.iter().map(|r| r.ts.len()).min().unwrap_or(0);

    let mut outcomes = Vec::with_capacity(plan.k);
    for run in folds {
        let point = &run.path.points[j];
        let metrics = evaluate(&run.valid, point.beta0, point.beta_pre.view())?;
        let mut lj = 0;
        for k in 1..len {
            if run.les[k] > run.les[lj] {
                lj = k;
            }
        }
        let les = &run.path.points[lj].beta_les;
        outcomes.push(FoldOutcome {
            metrics,
            les_best_t: run.ts[lj],
            les_support: support_of(les),
        });
    }
    let supports: Vec<Vec<usize>> = outcomes.iter().map(|o| o.les_support.clone()).collect();
    let mdc = mdc(&supports)?;
    let curve = (0..len)
        .map(|k| CurvePoint {
            t: folds[0].ts[k],
            pre_acc: folds.iter().map(|r| r.pre[k]).sum::<f64>() / plan.k as f64,
            les_acc: folds.iter().map(|r| r.les[k]).sum::<f64>() / plan.k as f64,
        })
        .collect();
    Ok(CvReport {
        best_index: g,
        best: grid[g].clone(),
        best_t,
        best_mean_acc,
        folds: outcomes,
        mdc,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn metric_examples() {
        let y = [1.0, -1.0, 1.0, -1.0];
        let m = classify_metrics(&y, &y).unwrap();
        assert_eq!((m.acc, m.sen, m.spe), (1.0, 1.0, 1.0));
        let m = classify_metrics(&y, &[1.0; 4]).unwrap();
        assert_eq!((m.acc, m.sen, m.spe), (0.5, 0.0, 1.0));
    }

    #[test]
    fn metric_missing_class_flagged() {
        let m = classify_metrics(&[1.0, 1.0], &[1.0, -1.0]).unwrap();
        assert!(m.sen.is_nan() && !m.sen_defined);
        assert!(m.spe_defined);
        assert!(classify_metrics(&[1.0], &[0.0]).is_err());
        assert!(classify_metrics(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn ties_predict_positive() {
        assert_eq!(predict_label(0.0), 1.0);
        assert_eq!(predict_label(-0.0), 1.0);
        assert_eq!(predict_label(-1e-300), -1.0);
    }

    #[test]
    fn auc_examples() {
        let truth = [1, 3];
        let s = array![0.0, 1.0, 0.0, -1.0, 0.0];
        assert_eq!(support_auc(s.view(), &truth).unwrap(), 1.0);
        let s = array![2.0, 2.0, 2.0, 2.0, 2.0];
        assert_eq!(support_auc(s.view(), &truth).unwrap(), 0.5);
        let s = array![5.0, 1.0, 4.0, 0.5, 3.0];
        assert_eq!(support_auc(s.view(), &truth).unwrap(), 0.0);
        assert!(support_auc(s.view(), &[]).is_err());
        assert!(support_auc(s.view(), &[0, 1, 2, 3, 4]).is_err());
        assert!(support_auc(s.view(), &[7]).is_err());
    }

    #[test]
    fn mdc_examples() {
        let a = vec![1, 2, 3];
        assert_eq!(mdc(&[a.clone(), a.clone()]).unwrap().value, 1.0);
        assert_eq!(mdc(&[vec![1, 2], vec![2, 3]]).unwrap().value, 0.5);
        assert_eq!(mdc(&[vec![1], vec![2], vec![3]]).unwrap().value, 0.0);
        let e = mdc(&[vec![], vec![]]).unwrap();
        assert!(e.all_empty && e.value == 0.0);
        assert!(mdc(&[a]).is_err());
    }

    #[test]
    fn folds_are_stratified() {
        let y: ndarray::Array1<f64> = (0..23).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let plan = FoldPlan::stratified(y.view(), 4, 9).unwrap();
        let neg = y.iter().filter(|&&v| v < 0.0).count();
        let pos = y.len() - neg;
        for f in 0..4 {
            let (train, valid) = plan.split(f);
            assert_eq!(train.len() + valid.len(), 23);
            let vn = valid.iter().filter(|&&i| y[i] < 0.0).count();
            let vp = valid.len() - vn;
            assert!((vn as f64 - neg as f64 / 4.0).abs() <= 1.0);
            assert!((vp as f64 - pos as f64 / 4.0).abs() <= 1.0);
        }
        assert_eq!(plan, FoldPlan::stratified(y.view(), 4, 9).unwrap());
        assert!(FoldPlan::stratified(y.view(), 9, 9).is_err());
        assert!(FoldPlan::stratified(y.view(), 1, 9).is_err());
    }
}
