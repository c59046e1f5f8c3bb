//! Differentiable prototype classifier used for the training-time
//! cross-entropy. Label propagation is not differentiated; instead each
//! class scores a query point by a log-sum-exp over its prototypes of the
//! negative squared distance (temperature 1).

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct PrototypeHead<T> {
    /// `P x D` prototype matrix.
    pub prototypes: Array2<T>,
    /// Class column of each prototype.
    pub classes: Vec<usize>,
    pub num_classes: usize,
}

/// Forward state needed by [`PrototypeHead::backward`].
#[derive(Debug, Clone)]
pub struct HeadForward<T> {
    pub logits: Array2<T>,
    /// Within-class softmax weight of each prototype for each query row.
    weights: Array2<T>,
}

impl<T: Scalar> PrototypeHead<T> {
    pub fn new(prototypes: Array2<T>, classes: Vec<usize>, num_classes: usize) -> Result<Self> {
        if classes.len() != prototypes.nrows() {
            return Err(Error::InvalidArgument(
                "one class per prototype required".into(),
            ));
        }
        for c in 0..num_classes {
            if !classes.contains(&c) {
                return Err(Error::InvalidArgument(format!(
                    "class {c} has no prototype"
                )));
            }
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: c,
                classes: num_classes,
            });
        }
        Ok(Self {
            prototypes,
            classes,
            num_classes,
        })
    }

    fn sq_dists(&self, queries: ArrayView2<T>) -> Array2<T> {
        let qn: Array1<T> = queries.map_axis(Axis(1), |r| r.dot(&r));
        let pn: Array1<T> = self.prototypes.map_axis(Axis(1), |r| r.dot(&r));
        let mut d = queries.dot(&self.prototypes.t()) * T::of(-2.0);
        for ((i, j), v) in d.indexed_iter_mut() {
            *v = (*v + qn[i] + pn[j]).max(T::zero());
        }
        d
    }

    pub fn forward(&self, queries: ArrayView2<T>) -> HeadForward<T> {
        let d = self.sq_dists(queries);
        let n = queries.nrows();
        let mut logits = Array2::<T>::zeros((n, self.num_classes));
        let mut weights = Array2::<T>::zeros(d.dim());
        for i in 0..n {
            for c in 0..self.num_classes {
                let mut max = T::neg_infinity();
                for (p, &pc) in self.classes.iter().enumerate() {
                    if pc == c {
                        max = max.max(-d[[i, p]]);
                    }
                }
                let mut sum = T::zero();
                for (p, &pc) in self.classes.iter().enumerate() {
                    if pc == c {
                        sum += (-d[[i, p]] - max).exp();
                    }
                }
                let lse = max + sum.ln();
                logits[[i, c]] = lse;
                for (p, &pc) in self.classes.iter().enumerate() {
                    if pc == c {
                        weights[[i, p]] = (-d[[i, p]] - lse).exp();
                    }
                }
            }
        }
        HeadForward { logits, weights }
    }

    /// Gradients with respect to the query rows and the prototypes.
    pub fn backward(
        &self,
        queries: ArrayView2<T>,
        fwd: &HeadForward<T>,
        d_logits: ArrayView2<T>,
    ) -> (Array2<T>, Array2<T>) {
        let mut g = fwd.weights.clone();
        for ((i, p), v) in g.indexed_iter_mut() {
            *v *= d_logits[[i, self.classes[p]]];
        }
        let two = T::of(2.0);
        let row_sum = g.sum_axis(Axis(1));
        let col_sum = g.sum_axis(Axis(0));
        let mut d_q = g.dot(&self.prototypes);
        for ((i, j), v) in d_q.indexed_iter_mut() {
            *v = two * (*v - row_sum[i] * queries[[i, j]]);
        }
        let mut d_p = g.t().dot(&queries);
        for ((p, j), v) in d_p.indexed_iter_mut() {
            *v = two * (*v - col_sum[p] * self.prototypes[[p, j]]);
        }
        (d_q, d_p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn single_prototype_logit_is_negative_distance() {
        let head = PrototypeHead::new(array![[0.0, 0.0], [1.0, 1.0]], vec![0, 1], 2).unwrap();
        let f = head.forward(array![[0.9, 0.9]].view());
        assert_abs_diff_eq!(f.logits[[0, 0]], -1.62, epsilon = 1e-12);
        assert_abs_diff_eq!(f.logits[[0, 1]], -0.02, epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let protos = array![[0.1, -0.3], [0.5, 0.2], [-0.4, 0.8]];
        let classes = vec![0, 1, 1];
        let q = array![[0.3, 0.1], [-0.2, 0.5]];
        let upstream = array![[0.7, -1.3], [0.2, 0.9]];
        let value = |p: &Array2<f64>, q: &Array2<f64>| -> f64 {
            let h = PrototypeHead::new(p.clone(), classes.clone(), 2).unwrap();
            (&h.forward(q.view()).logits * &upstream).sum()
        };
        let head = PrototypeHead::new(protos.clone(), classes.clone(), 2).unwrap();
        let fwd = head.forward(q.view());
        let (dq, dp) = head.backward(q.view(), &fwd, upstream.view());
        let h = 1e-6;
        for idx in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let (mut a, mut b) = (q.clone(), q.clone());
            a[idx] += h;
            b[idx] -= h;
            assert_abs_diff_eq!(
                dq[idx],
                (value(&protos, &a) - value(&protos, &b)) / (2.0 * h),
                epsilon = 1e-7
            );
        }
        for idx in [(0, 0), (1, 1), (2, 0)] {
            let (mut a, mut b) = (protos.clone(), protos.clone());
            a[idx] += h;
            b[idx] -= h;
            assert_abs_diff_eq!(
                dp[idx],
                (value(&a, &q) - value(&b, &q)) / (2.0 * h),
                epsilon = 1e-7
            );
        }
    }

    #[test]
    fn missing_class_is_rejected() {
        assert!(PrototypeHead::new(array![[0.0]], vec![0], 2).is_err());
    }
}
