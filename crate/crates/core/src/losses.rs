//! Training objectives: cross-entropy, shot-level and component-level
//! clean-noise separation, and their weighted sum.
//!
//! Every loss returns its value together with the gradient with respect to
//! its inputs so callers can chain into the network's backward pass.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{l2_normalize, l2_normalize_backward, mean_rows};
use crate::sampling::fps_partition;
use crate::scalar::Scalar;
use crate::types::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Contrastive temperature.
    pub tau: f64,
    /// Weight of the component-level term.
    pub lambda: f64,
    /// Components per shot.
    pub components: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            lambda: 0.1,
            components: 4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.components == 0 {
            return Err(Error::Config("components per shot must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean softmax cross-entropy over rows of `logits` (`points x classes`).
pub fn cross_entropy<T: Scalar>(logits: ArrayView2<T>, labels: &[usize]) -> Result<(T, Array2<T>)> {
    let (n, classes) = logits.dim();
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {n} logit rows",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cross-entropy over zero points".into(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes,
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let scale = T::one() / T::of(n as f64);
    let mut total = T::zero();
    let mut grad = Array2::<T>::zeros((n, classes));
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let max = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[labels[i]];
        for (c, &v) in row.iter().enumerate() {
            grad[[i, c]] = (v - lse).exp() * scale;
        }
        grad[[i, labels[i]]] -= scale;
    }
    Ok((total * scale, grad))
}

/// Supervised contrastive loss over rows of `z` (assumed unit norm).
///
/// For anchor `a`, positives are the other rows with the same class and the
/// denominator runs over every row except `a`. Anchors without positives
/// contribute zero but still count in the `1/n` average.
pub fn supervised_contrastive<T: Scalar>(
    z: ArrayView2<T>,
    classes: &[ClassId],
    tau: f64,
) -> (T, Array2<T>) {
    let n = z.nrows();
    let inv_tau = T::of(1.0 / tau);
    let sims = z.dot(&z.t());
    let mut coef = Array2::<T>::zeros((n, n));
    let mut total = T::zero();
    let inv_n = T::one() / T::of(n as f64);

    for a in 0..n {
        let positives: Vec<usize> = (0..n)
            .filter(|&b| b != a && classes[b] == classes[a])
            .collect();
        if positives.is_empty() {
            continue;
        }
        let logits: Vec<T> = (0..n).map(|b| sims[[a, b]] * inv_tau).collect();
        let max = (0..n)
            .filter(|&b| b != a)
            .fold(T::neg_infinity(), |m, b| m.max(logits[b]));
        let sum: T = (0..n)
            .filter(|&b| b != a)
            .map(|b| (logits[b] - max).exp())
            .sum();
        let lse = max + sum.ln();
        let inv_p = T::one() / T::of(positives.len() as f64);
        let pos_mean: T = positives.iter().map(|&p| logits[p]).sum::<T>() * inv_p;
        total += lse - pos_mean;

        for b in (0..n).filter(|&b| b != a) {
            coef[[a, b]] += (logits[b] - lse).exp() * inv_tau * inv_n;
        }
        for &p in &positives {
            coef[[a, p]] -= inv_p * inv_tau * inv_n;
        }
    }
    // d(z_a . z_b) feeds both endpoints
    let sym = &coef + &coef.t();
    let grad = sym.dot(&z);
    (total * inv_n, grad)
}

/// Shot-level clean-noise separation over the `K` shot vectors of one way.
pub fn cns_loss<T: Scalar>(
    shot_vectors: ArrayView2<T>,
    true_classes: &[ClassId],
    tau: f64,
) -> Result<(T, Array2<T>)> {
    let k = shot_vectors.nrows();
    if k < 2 {
        return Err(Error::ContrastUndefined(k));
    }
    if true_classes.len() != k {
        return Err(Error::InvalidArgument(format!(
            "{} classes for {k} shots",
            true_classes.len()
        )));
    }
    Ok(supervised_contrastive(shot_vectors, true_classes, tau))
}

/// Component partition of each shot's foreground rows: FPS with
/// `min(R, rows)` seeds and nearest-seed grouping in projection space.
pub fn component_partitions<T: Scalar>(
    shots: &[ArrayView2<T>],
    components: usize,
) -> Result<Vec<Vec<Vec<usize>>>> {
    shots
        .iter()
        .map(|rows| {
            if rows.nrows() == 0 {
                return Err(Error::EmptyForeground);
            }
            fps_partition(*rows, components)
        })
        .collect()
}

/// Value of the component-level loss and the gradient for each shot's rows.
#[derive(Debug, Clone)]
pub struct CcnsOutput<T> {
    pub loss: T,
    pub grads: Vec<Array2<T>>,
    pub partitions: Vec<Vec<Vec<usize>>>,
}

/// Component-level clean-noise separation for one way.
pub fn ccns_loss<T: Scalar>(
    shots: &[ArrayView2<T>],
    true_classes: &[ClassId],
    components: usize,
    tau: f64,
) -> Result<CcnsOutput<T>> {
    if shots.len() < 2 {
        return Err(Error::ContrastUndefined(shots.len()));
    }
    let partitions = component_partitions(shots, components)?;
    let (loss, grads) = ccns_loss_with_partition(shots, &partitions, true_classes, tau)?;
    Ok(CcnsOutput {
        loss,
        grads,
        partitions,
    })
}

/// Component-level loss for a fixed partition; the discrete selection is
/// treated as constant so the result is smooth in the rows.
pub fn ccns_loss_with_partition<T: Scalar>(
    shots: &[ArrayView2<T>],
    partitions: &[Vec<Vec<usize>>],
    true_classes: &[ClassId],
    tau: f64,
) -> Result<(T, Vec<Array2<T>>)> {
    if shots.len() < 2 {
        return Err(Error::ContrastUndefined(shots.len()));
    }
    if true_classes.len() != shots.len() || partitions.len() != shots.len() {
        return Err(Error::InvalidArgument(
            "shots, partitions and classes disagree in length".into(),
        ));
    }
    let dim = shots[0].ncols();
    let total: usize = partitions.iter().map(Vec::len).sum();
    let mut units = Array2::<T>::zeros((total, dim));
    let mut norms = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut owner = Vec::with_capacity(total);
    let mut r = 0;
    for (k, (rows, parts)) in shots.iter().zip(partitions).enumerate() {
        for members in parts {
            let mean = mean_rows(*rows, members)?;
            let (u, norm) = l2_normalize(mean.view());
            units.row_mut(r).assign(&u);
            norms.push(norm);
            labels.push(true_classes[k]);
            owner.push((k, members));
            r += 1;
        }
    }

    let (loss, d_units) = supervised_contrastive(units.view(), &labels, tau);

    let mut grads: Vec<Array2<T>> = shots.iter().map(|s| Array2::zeros(s.dim())).collect();
    for (c, (k, members)) in owner.into_iter().enumerate() {
        let d_mean: Array1<T> = l2_normalize_backward(units.row(c), norms[c], d_units.row(c));
        let share = d_mean.mapv(|v| v / T::of(members.len() as f64));
        for &i in members {
            let mut row = grads[k].row_mut(i);
            row += &share;
        }
    }
    Ok((loss, grads))
}

/// `ce + lambda * ccns`.
pub fn combined_loss<T: Scalar>(ce: T, ccns: T, lambda: f64) -> T {
    ce + T::of(lambda) * ccns
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn ce_uniform_logits() {
        let (l, _) = cross_entropy(array![[0.0, 0.0, 0.0]].view(), &[1]).unwrap();
        assert_abs_diff_eq!(l, 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn ce_two_class_fixture() {
        let (l, g) = cross_entropy(array![[1.0, 0.0]].view(), &[0]).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert_abs_diff_eq!(l, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.31326, epsilon = 1e-5);
        assert_abs_diff_eq!(g.sum(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ce_large_margin_vanishes() {
        let m: f64 = 40.0;
        let (l, _) = cross_entropy(array![[m, 0.0, 0.0]].view(), &[0]).unwrap();
        assert_abs_diff_eq!(l, (1.0 + 2.0 * (-m).exp()).ln(), epsilon = 1e-15);
        assert!(l < 1e-15);
    }

    #[test]
    fn ce_rejects_bad_labels() {
        assert!(matches!(
            cross_entropy(array![[0.0, 0.0]].view(), &[2]),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn cns_fixtures() {
        let (l, _) = cns_loss(array![[1.0, 0.0], [1.0, 0.0]].view(), &[1, 1], 0.3).unwrap();
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-15);

        let z = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let (l, _) = cns_loss(z.view(), &[1, 1, 2], 1.0).unwrap();
        let per_anchor = (1.0 + (-1f64).exp()).ln();
        assert_abs_diff_eq!(l, 2.0 * per_anchor / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.20884, epsilon = 1e-5);

        assert!(matches!(
            cns_loss(array![[1.0, 0.0]].view(), &[1], 1.0),
            Err(Error::ContrastUndefined(1))
        ));
    }

    #[test]
    fn cns_identical_same_class_ignores_tau() {
        // every logit ties, so each anchor scores ln(K - 1): zero only for a pair
        for k in [2usize, 3, 4, 6] {
            let z = Array2::from_shape_fn((k, 3), |(_, j)| if j == 1 { 1.0 } else { 0.0 });
            for tau in [0.05, 0.1, 1.0, 7.0] {
                let (l, g) = cns_loss(z.view(), &vec![3; k], tau).unwrap();
                assert_abs_diff_eq!(l, ((k - 1) as f64).ln(), epsilon = 1e-12);
                assert!(g.iter().all(|v| v.abs() < 1e-9));
            }
        }
    }

    #[test]
    fn ccns_fixtures() {
        let a = array![[1.0, 0.0]];
        let b = array![[0.0, 1.0]];
        let out = ccns_loss(&[a.view(), a.view(), b.view()], &[1, 1, 2], 1, 1.0).unwrap();
        assert_abs_diff_eq!(out.loss, 0.20884, epsilon = 1e-5);

        let single = array![[0.6, 0.8]];
        let out = ccns_loss(&[single.view(), single.view()], &[5, 5], 4, 0.1).unwrap();
        assert_abs_diff_eq!(out.loss, 0.0, epsilon = 1e-12);
        assert_eq!(out.partitions, vec![vec![vec![0]], vec![vec![0]]]);

        assert!(ccns_loss(&[a.view()], &[1], 4, 0.1).is_err());
    }

    #[test]
    fn combined_arithmetic() {
        assert_abs_diff_eq!(combined_loss(1.0, 0.5, 0.1), 1.05, epsilon = 1e-15);
        assert_eq!(combined_loss(1.25, 9.0, 0.0), 1.25);
        assert_abs_diff_eq!(
            combined_loss(1.0986, 0.20884, 0.1),
            1.119484,
            epsilon = 1e-12
        );
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig {
            tau: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LossConfig {
            components: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
