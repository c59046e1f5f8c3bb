use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::NORM_GUARD;
use crate::scalar::Scalar;
use crate::types::{PointCloud, INPUT_DIM};

/// Layer widths of the point embedding network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub projection_dim: usize,
    /// Width of the temporary pretraining classifier, if attached.
    pub classifier_classes: Option<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_dim: INPUT_DIM,
            hidden: 64,
            feature_dim: 64,
            projection_dim: 128,
            classifier_classes: None,
        }
    }
}

/// Affine map `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// He-uniform weights, zero bias.
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| {
            T::of(rng.random_range(-bound..bound))
        });
        Self {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Accumulates the parameter gradient for input `x` and output gradient `dy`,
    /// returning the input gradient.
    fn backward(&self, x: ArrayView2<T>, dy: ArrayView2<T>, grad: &mut Linear<T>) -> Array2<T> {
        ndarray::linalg::general_mat_mul(T::one(), &x.t(), &dy, T::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

/// Role of each layer slot; the order is also the serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Trunk1 = 0,
    Trunk2 = 1,
    Head = 2,
    Projection = 3,
    Classifier = 4,
}

impl Layer {
    pub const NAMES: [&'static str; 5] = ["trunk1", "trunk2", "head", "projection", "classifier"];

    pub fn from_index(i: usize) -> Layer {
        match i {
            0 => Layer::Trunk1,
            1 => Layer::Trunk2,
            2 => Layer::Head,
            3 => Layer::Projection,
            _ => Layer::Classifier,
        }
    }

    /// Backbone layers produce the per-point features; the rest are heads.
    pub fn is_backbone(self) -> bool {
        matches!(self, Layer::Trunk1 | Layer::Trunk2 | Layer::Head)
    }
}

/// All trainable tensors, in [`Layer`] order. Also used for gradients and
/// optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub layers: Vec<Linear<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros_like(other: &Params<T>) -> Self {
        Self {
            layers: other
                .layers
                .iter()
                .map(|l| Linear::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Linear::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visits every parameter slice with its layer.
    pub fn slices(&self) -> impl Iterator<Item = (Layer, &[T])> {
        self.layers.iter().enumerate().flat_map(|(i, l)| {
            [
                (
                    Layer::from_index(i),
                    l.weight.as_slice().expect("standard layout"),
                ),
                (
                    Layer::from_index(i),
                    l.bias.as_slice().expect("standard layout"),
                ),
            ]
        })
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = (Layer, &mut [T])> {
        self.layers.iter_mut().enumerate().flat_map(|(i, l)| {
            [
                (
                    Layer::from_index(i),
                    l.weight.as_slice_mut().expect("standard layout"),
                ),
                (
                    Layer::from_index(i),
                    l.bias.as_slice_mut().expect("standard layout"),
                ),
            ]
        })
    }

    pub fn flatten(&self) -> Vec<T> {
        self.slices().flat_map(|(_, s)| s.iter().copied()).collect()
    }

    pub fn get(&self, mut flat: usize) -> T {
        for (_, s) in self.slices() {
            if flat < s.len() {
                return s[flat];
            }
            flat -= s.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut flat: usize, v: T) {
        for (_, s) in self.slices_mut() {
            if flat < s.len() {
                s[flat] = v;
                return;
            }
            flat -= s.len();
        }
        panic!("parameter index out of range")
    }

    pub fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, k: T) {
        for l in &mut self.layers {
            l.weight.mapv_inplace(|v| v * k);
            l.bias.mapv_inplace(|v| v * k);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slices().all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    weight: l.weight.mapv(|v| U::of(v.as_f64())),
                    bias: l.bias.mapv(|v| U::of(v.as_f64())),
                })
                .collect(),
        }
    }
}

/// Pointwise MLP with a max-pooled global branch, a feature head, an
/// L2-normalized projection head, and an optional classifier head.
///
/// ```text
/// x (m x 9) -> relu(affine) -> relu(affine) = h (m x H)
/// g = max over points of h;  c = [h, g]      (m x 2H)
/// features   = relu(affine(c))               (m x D)
/// projection = normalize(affine(features))   (m x P)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNet<T> {
    pub config: NetConfig,
    pub params: Params<T>,
    pub seed: u64,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub input: Array2<T>,
    pub h1: Array2<T>,
    pub h2: Array2<T>,
    /// Row achieving the pooled maximum, per channel (first on ties).
    pub pool_argmax: Vec<usize>,
    pub concat: Array2<T>,
    pub features: Array2<T>,
    pub projection_norms: Array1<T>,
    pub projection: Array2<T>,
    pub logits: Option<Array2<T>>,
}

impl<T: Scalar> Forward<T> {
    pub fn pooled(&self) -> Array1<T> {
        self.concat.row(0).slice(s![self.h2.ncols()..]).to_owned()
    }
}

fn relu<T: Scalar>(x: Array2<T>) -> Array2<T> {
    x.mapv_into(|v| if v > T::zero() { v } else { T::zero() })
}

/// Zeroes `grad` wherever the ReLU output was not positive.
fn relu_backward<T: Scalar>(out: &Array2<T>, mut grad: Array2<T>) -> Array2<T> {
    Zip::from(&mut grad).and(out).for_each(|g, &o| {
        if o <= T::zero() {
            *g = T::zero();
        }
    });
    grad
}

impl<T: Scalar> EmbeddingNet<T> {
    pub fn new(config: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = vec![
            Linear::init(config.input_dim, config.hidden, &mut rng),
            Linear::init(config.hidden, config.hidden, &mut rng),
            Linear::init(2 * config.hidden, config.feature_dim, &mut rng),
            Linear::init(config.feature_dim, config.projection_dim, &mut rng),
        ];
        if let Some(c) = config.classifier_classes {
            layers.push(Linear::init(config.feature_dim, c, &mut rng));
        }
        Self {
            config,
            params: Params { layers },
            seed,
        }
    }

    pub fn layer(&self, l: Layer) -> &Linear<T> {
        &self.params.layers[l as usize]
    }

    pub fn layer_mut(&mut self, l: Layer) -> &mut Linear<T> {
        &mut self.params.layers[l as usize]
    }

    pub fn has_classifier(&self) -> bool {
        self.params.layers.len() > Layer::Classifier as usize
    }

    /// Attaches a freshly initialized classifier head with `classes` outputs.
    pub fn attach_classifier(&mut self, classes: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.params.layers.truncate(Layer::Classifier as usize);
        self.params
            .layers
            .push(Linear::init(self.config.feature_dim, classes, &mut rng));
        self.config.classifier_classes = Some(classes);
    }

    pub fn detach_classifier(&mut self) {
        self.params.layers.truncate(Layer::Classifier as usize);
        self.config.classifier_classes = None;
    }

    pub fn forward_cloud(&self, cloud: &PointCloud) -> Result<Forward<T>> {
        self.forward(cloud.input_features::<T>())
    }

    pub fn forward(&self, input: Array2<T>) -> Result<Forward<T>> {
        if input.ncols() != self.config.input_dim || input.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "network expects m x {} input, got {:?}",
                self.config.input_dim,
                input.dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let hidden = self.config.hidden;
        let m = input.nrows();

        let h1 = relu(self.layer(Layer::Trunk1).apply(input.view()));
        let h2 = relu(self.layer(Layer::Trunk2).apply(h1.view()));

        let mut pool_argmax = vec![0usize; hidden];
        let mut pooled = Array1::<T>::zeros(hidden);
        for j in 0..hidden {
            let col = h2.column(j);
            let mut best = 0;
            for i in 1..m {
                if col[i] > col[best] {
                    best = i;
                }
            }
            pool_argmax[j] = best;
            pooled[j] = col[best];
        }

        let mut concat = Array2::<T>::zeros((m, 2 * hidden));
        concat.slice_mut(s![.., ..hidden]).assign(&h2);
        concat
            .slice_mut(s![.., hidden..])
            .assign(&pooled.broadcast((m, hidden)).unwrap());

        let features = relu(self.layer(Layer::Head).apply(concat.view()));
        let raw = self.layer(Layer::Projection).apply(features.view());

        let mut projection = raw;
        let mut projection_norms = Array1::<T>::zeros(m);
        for (i, mut row) in projection.axis_iter_mut(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            projection_norms[i] = norm;
            if norm.as_f64() < NORM_GUARD {
                row.fill(T::zero());
                row[0] = T::one();
            } else {
                row.mapv_inplace(|v| v / norm);
            }
        }

        let logits = self
            .has_classifier()
            .then(|| self.layer(Layer::Classifier).apply(features.view()));

        Ok(Forward {
            input,
            h1,
            h2,
            pool_argmax,
            concat,
            features,
            projection_norms,
            projection,
            logits,
        })
    }

    /// Reverse-mode pass for one cloud. Upstream gradients are optional per
    /// output; parameter gradients are accumulated into `grads`.
    pub fn backward(
        &self,
        fwd: &Forward<T>,
        d_features: Option<ArrayView2<T>>,
        d_projection: Option<ArrayView2<T>>,
        d_logits: Option<ArrayView2<T>>,
        grads: &mut Params<T>,
    ) {
        let m = fwd.features.nrows();
        let hidden = self.config.hidden;
        let mut d_feat = match d_features {
            Some(d) => d.to_owned(),
            None => Array2::zeros(fwd.features.dim()),
        };

        if let Some(dz) = d_projection {
            let mut d_raw = Array2::<T>::zeros(dz.dim());
            for i in 0..m {
                let norm = fwd.projection_norms[i];
                if norm.as_f64() < NORM_GUARD {
                    continue;
                }
                let z = fwd.projection.row(i);
                let g = dz.row(i);
                let proj = z.dot(&g);
                let mut out = d_raw.row_mut(i);
                Zip::from(&mut out).and(&z).and(&g).for_each(|o, &zi, &gi| {
                    *o = (gi - zi * proj) / norm;
                });
            }
            let back = self.layer(Layer::Projection).backward(
                fwd.features.view(),
                d_raw.view(),
                &mut grads.layers[Layer::Projection as usize],
            );
            d_feat += &back;
        }

        if let (Some(dl), true) = (d_logits, self.has_classifier()) {
            let back = self.layer(Layer::Classifier).backward(
                fwd.features.view(),
                dl,
                &mut grads.layers[Layer::Classifier as usize],
            );
            d_feat += &back;
        }

        let d_pre3 = relu_backward(&fwd.features, d_feat);
        let d_concat = self.layer(Layer::Head).backward(
            fwd.concat.view(),
            d_pre3.view(),
            &mut grads.layers[Layer::Head as usize],
        );

        let mut d_h2 = d_concat.slice(s![.., ..hidden]).to_owned();
        let d_pooled = d_concat.slice(s![.., hidden..]).sum_axis(Axis(0));
        for (j, &row) in fwd.pool_argmax.iter().enumerate() {
            d_h2[[row, j]] += d_pooled[j];
        }

        let d_pre2 = relu_backward(&fwd.h2, d_h2);
        let d_h1 = self.layer(Layer::Trunk2).backward(
            fwd.h1.view(),
            d_pre2.view(),
            &mut grads.layers[Layer::Trunk2 as usize],
        );
        let d_pre1 = relu_backward(&fwd.h1, d_h1);
        self.layer(Layer::Trunk1).backward(
            fwd.input.view(),
            d_pre1.view(),
            &mut grads.layers[Layer::Trunk1 as usize],
        );
    }

    pub fn zero_grads(&self) -> Params<T> {
        Params::zeros_like(&self.params)
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingNet<U> {
        EmbeddingNet {
            config: self.config,
            params: self.params.cast(),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small() -> NetConfig {
        NetConfig {
            input_dim: INPUT_DIM,
            hidden: 8,
            feature_dim: 6,
            projection_dim: 5,
            classifier_classes: None,
        }
    }

    fn input(m: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, INPUT_DIM), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn projection_rows_are_unit() {
        let net = EmbeddingNet::<f64>::new(small(), 1);
        let f = net.forward(input(20, 2)).unwrap();
        for row in f.projection.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_projection_hits_guard() {
        let mut net = EmbeddingNet::<f64>::new(small(), 1);
        let p = net.layer_mut(Layer::Projection);
        p.weight.fill(0.0);
        p.bias.fill(0.0);
        let f = net.forward(input(4, 3)).unwrap();
        for row in f.projection.rows() {
            assert_eq!(row.to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let net = EmbeddingNet::<f64>::new(small(), 5);
        let x = input(10, 6);
        let perm = [3, 1, 4, 0, 9, 2, 6, 5, 8, 7];
        let xp = Array2::from_shape_fn(x.dim(), |(i, j)| x[[perm[i], j]]);
        let a = net.forward(x).unwrap();
        let b = net.forward(xp).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(a.features.row(p), b.features.row(i));
        }
    }

    #[test]
    fn duplicating_points_keeps_pooled_vector() {
        let net = EmbeddingNet::<f64>::new(small(), 5);
        let x = input(7, 8);
        let doubled = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let a = net.forward(x).unwrap();
        let b = net.forward(doubled).unwrap();
        assert_eq!(a.pooled(), b.pooled());
    }

    #[test]
    fn deterministic_and_rejects_nan() {
        let a = EmbeddingNet::<f32>::new(NetConfig::default(), 42);
        let b = EmbeddingNet::<f32>::new(NetConfig::default(), 42);
        assert_eq!(a, b);
        let mut x = input(3, 1).mapv(|v| v as f32);
        assert_eq!(
            a.forward(x.clone()).unwrap().features,
            b.forward(x.clone()).unwrap().features
        );
        x[[0, 0]] = f32::NAN;
        assert!(matches!(a.forward(x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn linear_backward_of_sum() {
        let lin = Linear {
            weight: array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            bias: array![0.5, -0.5],
        };
        let x = array![[1.0, -2.0, 0.5]];
        let mut g = Linear::zeros(3, 2);
        lin.backward(x.view(), Array2::ones((1, 2)).view(), &mut g);
        assert_eq!(g.bias, array![1.0, 1.0]);
        assert_eq!(g.weight, array![[1.0, 1.0], [-2.0, -2.0], [0.5, 0.5]]);
    }

    #[test]
    fn default_parameter_count() {
        let net = EmbeddingNet::<f32>::new(NetConfig::default(), 0);
        assert_eq!(
            net.params.len(),
            (9 * 64 + 64) + (64 * 64 + 64) + (128 * 64 + 64) + (64 * 128 + 128)
        );
    }
}
