//! Gaussian k-NN affinity graphs and transductive label propagation.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    pub alpha: f64,
    pub k_nn: usize,
    /// Prototypes per class.
    pub n_proto: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.99,
            k_nn: 10,
            n_proto: 10,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.k_nn == 0 || self.n_proto == 0 {
            return Err(Error::Config("k_nn and n_proto must be >= 1".into()));
        }
        Ok(())
    }
}

fn pairwise_sq_dists(nodes: ArrayView2<f64>) -> Array2<f64> {
    let n = nodes.nrows();
    let gram = nodes.dot(&nodes.t());
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]]).max(0.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Symmetric k-NN affinity `exp(-|xi - xj|^2 / 2 sigma^2)`, where `sigma^2` is the
/// mean squared distance to each node's k-th neighbour. An edge exists when
/// either endpoint lists the other among its `k` nearest.
pub fn build_knn_graph(nodes: ArrayView2<f64>, k_nn: usize) -> Result<Array2<f64>> {
    let n = nodes.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "k-NN graph needs at least two nodes".into(),
        ));
    }
    if k_nn == 0 {
        return Err(Error::InvalidArgument("k_nn must be >= 1".into()));
    }
    if nodes.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-NN graph nodes".into()));
    }
    let k = k_nn.min(n - 1);
    let d = pairwise_sq_dists(nodes);

    let mut neighbours = Vec::with_capacity(n);
    let mut kth_sum = 0.0;
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        // stable sort keeps the lowest index first among equal distances
        order.sort_by(|&a, &b| d[[i, a]].total_cmp(&d[[i, b]]));
        order.truncate(k);
        kth_sum += d[[i, order[k - 1]]];
        neighbours.push(order);
    }
    let sigma2 = kth_sum / n as f64;

    let weight = |d2: f64| -> f64 {
        if sigma2 > 0.0 {
            (-d2 / (2.0 * sigma2)).exp()
        } else if d2 == 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let mut a = Array2::zeros((n, n));
    for (i, nb) in neighbours.iter().enumerate() {
        for &j in nb {
            let w = weight(d[[i, j]]);
            a[[i, j]] = w;
            a[[j, i]] = w;
        }
    }
    Ok(a)
}

/// `D^-1/2 A D^-1/2`; rows with zero degree stay zero.
pub fn normalized_affinity(a: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let inv_sqrt: Vec<f64> = a
        .rows()
        .into_iter()
        .map(|r| {
            let s = r.sum();
            if s > 0.0 {
                1.0 / s.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] * inv_sqrt[i] * inv_sqrt[j])
}

fn check_inputs(a: ArrayView2<f64>, seeds: ArrayView2<f64>, alpha: f64) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() != seeds.nrows() {
        return Err(Error::InvalidArgument(format!(
            "affinity {:?} and seed labels {:?} disagree",
            a.dim(),
            seeds.dim()
        )));
    }
    if !(alpha < 1.0) {
        return Err(Error::Singular(format!(
            "alpha = {alpha} makes I - alpha S singular"
        )));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    Ok(())
}

/// Closed form `F = (I - alpha S)^-1 Y`.
pub fn label_propagate(
    a: ArrayView2<f64>,
    seeds: ArrayView2<f64>,
    alpha: f64,
) -> Result<Array2<f64>> {
    check_inputs(a, seeds, alpha)?;
    let n = a.nrows();
    let s = normalized_affinity(a);
    let system = DMatrix::from_fn(n, n, |i, j| {
        (if i == j { 1.0 } else { 0.0 }) - alpha * s[[i, j]]
    });
    let rhs = DMatrix::from_fn(n, seeds.ncols(), |i, j| seeds[[i, j]]);
    // S has spectrum in [-1, 1], so I - alpha S is SPD for alpha < 1
    let solution = match system.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("label propagation system".into()))?,
    };
    Ok(Array2::from_shape_fn((n, seeds.ncols()), |(i, j)| {
        solution[(i, j)]
    }))
}

/// Fixed-point iteration `F <- alpha S F + Y` until the update's max-norm
/// falls below `tol`.
pub fn label_propagate_iterative(
    a: ArrayView2<f64>,
    seeds: ArrayView2<f64>,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Array2<f64>> {
    check_inputs(a, seeds, alpha)?;
    let s = normalized_affinity(a) * alpha;
    let mut f = seeds.to_owned();
    for _ in 0..max_iter {
        let next = s.dot(&f) + seeds;
        let delta = (&next - &f).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        f = next;
        if delta < tol {
            return Ok(f);
        }
    }
    Err(Error::Numerical(format!(
        "label propagation did not converge in {max_iter} iterations"
    )))
}

/// Argmax per row; ties and all-zero rows go to the lowest column (background).
pub fn predict_rows(scores: ArrayView2<f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (c, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
