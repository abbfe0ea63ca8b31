//! Projection of the dense estimator onto the structural-sparsity pattern of
//! `gamma`, and the lesion / procedural-bias / null split of `beta_pre`.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{connected_components, SplitOperator};

/// Nonzero pattern of `gamma = [gamma_V ; gamma_G]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    /// Node indices with `gamma_V != 0`.
    pub s_v: Vec<usize>,
    /// Edge indices with `gamma_G != 0`.
    pub s_g: Vec<usize>,
}

impl Support {
    /// Exact nonzero test; `gamma` comes out of the shrinkage with true zeros.
    pub fn from_gamma(gamma: ArrayView1<f64>, n_nodes: usize) -> Self {
        let mut s_v = Vec::new();
        let mut s_g = Vec::new();
        for (i, &g) in gamma.iter().enumerate() {
            if g != 0.0 {
                if i < n_nodes {
                    s_v.push(i);
                } else {
                    s_g.push(i - n_nodes);
                }
            }
        }
        Self { s_v, s_g }
    }

    pub fn is_empty(&self) -> bool {
        self.s_v.is_empty() && self.s_g.is_empty()
    }
}

/// Closest point to `beta_pre` that vanishes on every row of `D` outside the
/// support (and is nonnegative when `nonneg`).
///
/// Rows outside the support split into two families: identity rows pin a node
/// to zero, edge rows tie two nodes together. The tied nodes form connected
/// components; a component holding any pinned node is zero, every other one
/// takes the mean of `beta_pre` over the component (clamped at zero under the
/// cone constraint).
pub fn project_lesion(
    beta_pre: ArrayView1<f64>,
    support: &Support,
    op: &SplitOperator,
    nonneg: bool,
) -> Result<Array1<f64>> {
    let p = op.n_nodes();
    if beta_pre.len() != p {
        return Err(Error::Dimension(format!(
            "beta_pre has length {} but the graph has {p} nodes",
            beta_pre.len()
        )));
    }
    let mut in_sv = vec![false; p];
    for &i in &support.s_v {
        *in_sv.get_mut(i).ok_or(Error::NodeOutOfRange { index: i, count: p })? = true;
    }
    let active = op.active_edges();
    let mut in_sg = vec![false; op.n_edges()];
    for &e in &support.s_g {
        *in_sg.get_mut(e).ok_or_else(|| {
            Error::Dimension(format!("edge index {e} out of range for {} edges", op.n_edges()))
        })? = true;
    }
    let tied: Vec<(usize, usize)> = active
        .iter()
        .enumerate()
        .filter(|(k, _)| !in_sg[*k])
        .map(|(_, &e)| e)
        .collect();

    let mut out = Array1::zeros(p);
    for comp in connected_components(p, &tied)? {
        if comp.iter().any(|&i| !in_sv[i]) {
            continue;
        }
        let mean = comp.iter().map(|&i| beta_pre[i]).sum::<f64>() / comp.len() as f64;
        let value = if nonneg { mean.max(0.0) } else { mean };
        for &i in &comp {
            out[i] = value;
        }
    }
    Ok(out)
}

/// How to pick procedural-bias coordinates out of the off-lesion residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DecomposeRule {
    /// `|r_i| >= tau`.
    Threshold { tau: f64 },
    /// The `k` largest `|r_i|` among nonzero residuals.
    TopK { k: usize },
    /// The `k` most negative `r_i` (only strictly negative entries qualify).
    TopKNegative { k: usize },
}

/// Partition of the feature indices into lesion, procedural-bias and null sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub lesion: Vec<usize>,
    pub procedural_bias: Vec<usize>,
    pub null_set: Vec<usize>,
    pub rule: DecomposeRule,
}

/// Indices of the nonzero entries.
pub fn support_of(v: &Array1<f64>) -> Vec<usize> {
    (0..v.len()).filter(|&i| v[i] != 0.0).collect()
}

pub fn decompose(
    beta_pre: ArrayView1<f64>,
    beta_les: ArrayView1<f64>,
    rule: DecomposeRule,
) -> Result<Decomposition> {
    let p = beta_pre.len();
    if beta_les.len() != p {
        return Err(Error::Dimension(format!(
            "beta_pre has length {p}, beta_les has length {}",
            beta_les.len()
        )));
    }
    let lesion: Vec<usize> = (0..p).filter(|&i| beta_les[i] != 0.0).collect();
    let rest: Vec<usize> = (0..p).filter(|&i| beta_les[i] == 0.0).collect();

    let mut bias: Vec<usize> = match rule {
        DecomposeRule::Threshold { tau } => {
            if tau.is_nan() || tau < 0.0 {
                return Err(Error::Parameter(format!("threshold must be >= 0, got {tau}")));
            }
            rest.iter().copied().filter(|&i| beta_pre[i].abs() >= tau).collect()
        }
        DecomposeRule::TopK { k } | DecomposeRule::TopKNegative { k } => {
            if k > p {
                return Err(Error::Parameter(format!("k = {k} exceeds p = {p}")));
            }
            let negative = matches!(rule, DecomposeRule::TopKNegative { .. });
            let mut cand: Vec<usize> = rest
                .iter()
                .copied()
                .filter(|&i| if negative { beta_pre[i] < 0.0 } else { beta_pre[i] != 0.0 })
                .collect();
            let key = |i: usize| {
                if negative {
                    beta_pre[i]
                } else {
                    -beta_pre[i].abs()
                }
            };
            // stable: ties keep ascending index order
            cand.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
            cand.truncate(k);
            cand
        }
    };
    bias.sort_unstable();
    let mut is_bias = vec![false; p];
    for &i in &bias {
        is_bias[i] = true;
    }
    let null_set = rest.into_iter().filter(|&i| !is_bias[i]).collect();
    Ok(Decomposition {
        lesion,
        procedural_bias: bias,
        null_set,
        rule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::VoxelGraph;
    use ndarray::array;

    fn grid_op(rho: f64) -> SplitOperator {
        SplitOperator::new(VoxelGraph::full(&[2, 3]).unwrap(), rho).unwrap()
    }

    #[test]
    fn empty_support_gives_zero() {
        let op = grid_op(1.0);
        let b = array![1.0, -2.0, 3.0, 0.5, 0.1, -0.7];
        let out = project_lesion(b.view(), &Support::default(), &op, false).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_support_is_identity_or_clamp() {
        let op = grid_op(1.0);
        let b = array![1.0, -2.0, 3.0, 0.5, 0.1, -0.7];
        let full = Support {
            s_v: (0..6).collect(),
            s_g: (0..op.n_edges()).collect(),
        };
        assert_eq!(project_lesion(b.view(), &full, &op, false).unwrap(), b);
        assert_eq!(
            project_lesion(b.view(), &full, &op, true).unwrap(),
            b.mapv(|v| v.max(0.0))
        );
    }

    #[test]
    fn tied_component_averages() {
        // path 0-1-2, all nodes selected, no edges selected: one component
        let op = SplitOperator::new(VoxelGraph::full(&[3]).unwrap(), 1.0).unwrap();
        let b = array![1.0, 2.0, 6.0];
        let s = Support {
            s_v: vec![0, 1, 2],
            s_g: vec![],
        };
        assert_eq!(project_lesion(b.view(), &s, &op, false).unwrap(), array![3.0, 3.0, 3.0]);
        // cut edge (1,2): components {0,1} and {2}; node 2 unselected
        let s = Support {
            s_v: vec![0, 1],
            s_g: vec![1],
        };
        assert_eq!(project_lesion(b.view(), &s, &op, false).unwrap(), array![1.5, 1.5, 0.0]);
        // node 1 unselected pins the whole tied component {0,1}
        let s = Support {
            s_v: vec![0, 2],
            s_g: vec![1],
        };
        assert_eq!(project_lesion(b.view(), &s, &op, false).unwrap(), array![0.0, 0.0, 6.0]);
    }

    #[test]
    fn zero_rho_drops_edge_constraints() {
        let op = grid_op(0.0);
        let b = array![1.0, -2.0, 3.0, 0.5, 0.1, -0.7];
        let s = Support {
            s_v: vec![0, 2],
            s_g: vec![],
        };
        let out = project_lesion(b.view(), &s, &op, false).unwrap();
        assert_eq!(out, array![1.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bad_support_indices() {
        let op = grid_op(1.0);
        let b = Array1::zeros(6);
        let s = Support {
            s_v: vec![6],
            s_g: vec![],
        };
        assert!(project_lesion(b.view(), &s, &op, false).is_err());
        let s = Support {
            s_v: vec![],
            s_g: vec![99],
        };
        assert!(project_lesion(b.view(), &s, &op, false).is_err());
    }

    #[test]
    fn support_from_gamma() {
        let g = array![0.0, 1.0, 0.0, -2.0, 0.0];
        let s = Support::from_gamma(g.view(), 3);
        assert_eq!(s.s_v, vec![1]);
        assert_eq!(s.s_g, vec![0]);
    }

    #[test]
    fn decompose_rules() {
        let pre = array![3.0, -1.0, 0.5, -2.0, 0.0];
        let les = array![3.0, 0.0, 0.0, 0.0, 0.0];

        let d = decompose(pre.view(), pre.view(), DecomposeRule::TopK { k: 2 }).unwrap();
        assert_eq!(d.lesion, vec![0, 1, 2, 3]);
        assert_eq!(d.procedural_bias, Vec::<usize>::new());
        assert_eq!(d.null_set, vec![4]);

        let d = decompose(pre.view(), les.view(), DecomposeRule::Threshold { tau: f64::INFINITY })
            .unwrap();
        assert!(d.procedural_bias.is_empty());
        assert_eq!(d.null_set, vec![1, 2, 3, 4]);

        let d = decompose(pre.view(), les.view(), DecomposeRule::Threshold { tau: 0.9 }).unwrap();
        assert_eq!(d.procedural_bias, vec![1, 3]);

        let d = decompose(pre.view(), les.view(), DecomposeRule::TopK { k: 2 }).unwrap();
        assert_eq!(d.procedural_bias, vec![1, 3]);

        let d = decompose(pre.view(), les.view(), DecomposeRule::TopKNegative { k: 1 }).unwrap();
        assert_eq!(d.procedural_bias, vec![3]);
        let d = decompose(pre.view(), les.view(), DecomposeRule::TopKNegative { k: 4 }).unwrap();
        assert_eq!(d.procedural_bias, vec![1, 3]);
        assert_eq!(d.null_set, vec![2, 4]);

        assert!(decompose(pre.view(), les.view(), DecomposeRule::TopK { k: 6 }).is_err());
        assert!(decompose(pre.view(), les.slice(ndarray::s![..2]), DecomposeRule::TopK { k: 1 })
            .is_err());
    }
}
