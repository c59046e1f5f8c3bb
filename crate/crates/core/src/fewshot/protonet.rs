use ndarray::ArrayView2;

use crate::fewshot::prototypes::Prototype;

/// Nearest-prototype labels (squared Euclidean distance); ties go to the
/// lower class id.
pub fn protonet_predict(prototypes: &[Prototype], queries: ArrayView2<f64>) -> Vec<usize> {
    queries
        .rows()
        .into_iter()
        .map(|q| {
            let mut best_class = 0;
            let mut best = f64::INFINITY;
            for p in prototypes {
                let d: f64 = q
                    .iter()
                    .zip(p.vector.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best || (d == best && p.class < best_class) {
                    best = d;
                    best_class = p.class;
                }
            }
            best_class
        })
        .collect()
}
