use crate::embed::net::{Layer, Params};
use crate::scalar::Scalar;

/// Adam with bias correction. Moments mirror the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Params<T>,
    second: Params<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &Params<T>) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Params::zeros_like(params),
            second: Params::zeros_like(params),
        }
    }

    /// One update with a single learning rate for every layer.
    pub fn step(&mut self, params: &mut Params<T>, grads: &Params<T>, lr: f64) {
        self.step_by_layer(params, grads, |_| lr);
    }

    /// One update with a per-layer learning rate.
    pub fn step_by_layer(
        &mut self,
        params: &mut Params<T>,
        grads: &Params<T>,
        lr: impl Fn(Layer) -> f64,
    ) {
        if self.first.layers.len() != params.layers.len() {
            // head attached or detached since construction
            self.first = Params::zeros_like(params);
            self.second = Params::zeros_like(params);
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let moments = self.first.slices_mut().zip(self.second.slices_mut());
        for (((layer, p), (_, g)), ((_, m), (_, v))) in
            params.slices_mut().zip(grads.slices()).zip(moments)
        {
            let rate = lr(layer);
            for i in 0..p.len() {
                let gi = g[i].as_f64();
                let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
                let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
                m[i] = T::of(mi);
                v[i] = T::of(vi);
                let update = rate * (mi / c1) / ((vi / c2).sqrt() + self.eps);
                p[i] = T::of(p[i].as_f64() - update);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::net::Linear;
    use ndarray::array;

    fn scalar_params(v: f64) -> Params<f64> {
        Params {
            layers: vec![Linear {
                weight: array![[v]],
                bias: array![0.0],
            }],
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_params(1.0);
        let mut g = scalar_params(1.0);
        g.layers[0].bias[0] = 0.0;
        let mut adam = Adam::new(&p);
        adam.step(&mut p, &g, 0.001);
        // m_hat = 1, v_hat = 1, update = lr / (1 + eps)
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((p.layers[0].weight[[0, 0]] - expected).abs() < 1e-15);
        // zero gradient leaves the bias untouched
        assert_eq!(p.layers[0].bias[0], 0.0);
    }

    #[test]
    fn repeated_steps_move_against_gradient() {
        let mut p = scalar_params(0.0);
        let g = scalar_params(-3.0);
        let mut adam = Adam::new(&p);
        let mut last = 0.0;
        for _ in 0..2 {
            adam.step(&mut p, &g, 0.01);
            let now = p.layers[0].weight[[0, 0]];
            assert!(now > last);
            last = now;
        }
    }
}
