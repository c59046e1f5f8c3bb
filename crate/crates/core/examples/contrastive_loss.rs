//! Shot-level and component-level clean/noise separation losses on a toy
//! way with one noisy shot.

use ndarray::{array, Array2};
use robust_fewshot::geometry::normalize_rows;
use robust_fewshot::losses::{ccns_loss, cns_loss};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // three shots of class 4; the last actually shows class 7
    let classes = [4, 4, 7];
    let shots: Vec<Array2<f64>> = vec![
        array![[1.0, 0.1], [0.9, 0.2], [1.0, 0.0]],
        array![[0.8, 0.3], [1.0, 0.1], [0.9, 0.0]],
        array![[0.1, 1.0], [0.2, 0.9], [0.0, 1.0]],
    ];
    let views: Vec<_> = shots.iter().map(|s| s.view()).collect();

    // shot level works on unit-norm shot means; one component per shot is the same thing
    let means = Array2::from_shape_fn((3, 2), |(k, j)| shots[k].column(j).mean().unwrap());
    let (cns, _) = cns_loss(normalize_rows(means.view()).view(), &classes, 0.1)?;
    println!("shot level: {cns:.5}");
    for r in [1, 2, 3] {
        let out = ccns_loss(&views, &classes, r, 0.1)?;
        let pull: f64 = out.grads[2].iter().map(|g| g * g).sum::<f64>().sqrt();
        println!(
            "R = {r}: loss {:.5}, gradient norm on the noisy shot {pull:.4}",
            out.loss
        );
    }
    Ok(())
}
