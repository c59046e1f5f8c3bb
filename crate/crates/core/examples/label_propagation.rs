//! Transductive labelling: two seeded prototypes and a cloud of unlabelled
//! points, solved in closed form and by fixed-point iteration.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use robust_fewshot::fewshot::{
    build_knn_graph, label_propagate, label_propagate_iterative, predict_rows,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 0.4)?;
    let n = 60;
    // rows 0 and 1 are prototypes at (-2, 0) and (2, 0)
    let mut nodes = Array2::zeros((n, 2));
    nodes[[0, 0]] = -2.0;
    nodes[[1, 0]] = 2.0;
    let mut truth = vec![0, 1];
    for i in 2..n {
        let class = i % 2;
        nodes[[i, 0]] = if class == 0 { -2.0 } else { 2.0 } + noise.sample(&mut rng);
        nodes[[i, 1]] = noise.sample(&mut rng);
        truth.push(class);
    }
    let mut seeds = Array2::zeros((n, 2));
    seeds[[0, 0]] = 1.0;
    seeds[[1, 1]] = 1.0;

    let graph = build_knn_graph(nodes.view(), 8)?;
    let closed = label_propagate(graph.view(), seeds.view(), 0.99)?;
    let iterative = label_propagate_iterative(graph.view(), seeds.view(), 0.99, 1e-12, 100_000)?;
    let gap = (&closed - &iterative)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let pred = predict_rows(closed.view());
    let correct = pred
        .iter()
        .zip(&truth)
        .skip(2)
        .filter(|(p, t)| p == t)
        .count();
    println!(
        "{correct}/{} unlabelled points correct; closed form vs iteration max gap {gap:.2e}",
        n - 2
    );
    Ok(())
}
