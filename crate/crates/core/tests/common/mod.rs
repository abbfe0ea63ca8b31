//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use gsplit::lattice::{SplitOperator, VoxelGraph};
use gsplit::projection::Support;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha20Rng, n: usize, p: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.gen_range(-scale..scale))
}

pub fn uniform_vector(rng: &mut ChaCha20Rng, n: usize, scale: f64) -> Array1<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn sign_labels(rng: &mut ChaCha20Rng, n: usize) -> Array1<f64> {
    (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

/// Union-find with path halving; components as sorted lists, sorted by
/// first element.
pub fn union_find_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

/// `kappa * argmin_u { (u - v)^2 / 2 + |u| }` (with `u >= 0` when `nonneg`).
/// The objective is convex, so its minimiser is where the right derivative
/// first turns nonnegative: a grid scan brackets that point and bisection
/// refines it.
pub fn shrink_oracle(v: f64, kappa: f64, nonneg: bool) -> f64 {
    let right_derivative = |u: f64| (u - v) + if u >= 0.0 { 1.0 } else { -1.0 };
    let lo_bound = if nonneg { 0.0 } else { -v.abs() - 2.0 };
    let hi_bound = v.abs() + 2.0;
    if right_derivative(lo_bound) >= 0.0 {
        return kappa * lo_bound;
    }
    let steps = 400;
    let h = (hi_bound - lo_bound) / steps as f64;
    let k = (1..=steps)
        .find(|&k| right_derivative(lo_bound + k as f64 * h) >= 0.0)
        .expect("derivative is positive at the upper bound");
    let mut lo = lo_bound + (k - 1) as f64 * h;
    let mut hi = lo_bound + k as f64 * h;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if right_derivative(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    kappa * hi
}

/// Projection onto `{beta : beta_i = 0 off s_v, beta_i = beta_j on tied active
/// edges, beta >= 0 if nonneg}` by enumerating which nonnegativity
/// constraints are active and solving each equality-constrained least
/// squares problem through a nullspace projector.
pub fn qp_projection_oracle(
    beta_pre: &Array1<f64>,
    support: &Support,
    op: &SplitOperator,
    nonneg: bool,
) -> Array1<f64> {
    let p = beta_pre.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for i in 0..p {
        if !support.s_v.contains(&i) {
            let mut r = vec![0.0; p];
            r[i] = 1.0;
            rows.push(r);
        }
    }
    for (k, &(a, b)) in op.active_edges().iter().enumerate() {
        if !support.s_g.contains(&k) {
            let mut r = vec![0.0; p];
            r[a] = 1.0;
            r[b] = -1.0;
            rows.push(r);
        }
    }
    let b = DVector::from_iterator(p, beta_pre.iter().copied());
    let subsets: u32 = if nonneg { 1 << p } else { 1 };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0..subsets {
        let mut all = rows.clone();
        for i in 0..p {
            if mask & (1 << i) != 0 {
                let mut r = vec![0.0; p];
                r[i] = 1.0;
                all.push(r);
            }
        }
        let x = if all.is_empty() {
            b.clone()
        } else {
            // orthonormal basis of the row space of C by modified
            // Gram-Schmidt (two passes), then subtract b's component in it
            let mut basis: Vec<DVector<f64>> = Vec::new();
            for row in &all {
                let mut q = DVector::from_column_slice(row);
                for _ in 0..2 {
                    for e in &basis {
                        let proj = e.dot(&q);
                        q -= e * proj;
                    }
                }
                let norm = q.norm();
                if norm > 1e-9 {
                    basis.push(q / norm);
                }
            }
            let mut x = b.clone();
            for e in &basis {
                let proj = e.dot(&x);
                x -= e * proj;
            }
            let c = DMatrix::from_fn(all.len(), p, |r, j| all[r][j]);
            let resid = (&c * &x).amax();
            assert!(resid < 1e-9, "oracle constraint residual {resid}");
            x
        };
        if nonneg && x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let obj = (&x - &b).norm_squared();
        if best.as_ref().map_or(true, |(o, _)| obj < *o - 1e-15) {
            best = Some((obj, x));
        }
    }
    let x = best.expect("zero is always feasible").1;
    x.iter().map(|&v| if nonneg { v.max(0.0) } else { v }).collect()
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(f: impl Fn(&Array1<f64>) -> f64, x: &Array1<f64>, h: f64) -> Array1<f64> {
    (0..x.len())
        .map(|j| {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += h;
            b[j] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let d = a - b;
    let num = d.dot(&d).sqrt();
    let den = a.dot(a).sqrt().max(b.dot(b).sqrt()).max(1e-8);
    num / den
}

/// Random graph (p <= 12, up to 20 edges), support pattern and `beta_pre`.
pub fn random_projection_instance(
    r: &mut ChaCha20Rng,
) -> (Array1<f64>, Support, SplitOperator, bool) {
    let p: usize = r.gen_range(1..=12);
    let mut edges = Vec::new();
    for _ in 0..r.gen_range(0..=20usize) {
        let (a, b) = (r.gen_range(0..p), r.gen_range(0..p));
        if a != b {
            edges.push((a, b));
        }
    }
    let graph = VoxelGraph::from_edges(p, &edges).unwrap();
    let rho = if r.gen_bool(0.1) { 0.0 } else { r.gen_range(0.1..2.0) };
    let op = SplitOperator::new(graph, rho).unwrap();
    let s_v = (0..p).filter(|_| r.gen_bool(0.6)).collect();
    let s_g = (0..op.n_edges()).filter(|_| r.gen_bool(0.4)).collect();
    let beta = uniform_vector(r, p, 2.0);
    (beta, Support { s_v, s_g }, op, r.gen_bool(0.5))
}
