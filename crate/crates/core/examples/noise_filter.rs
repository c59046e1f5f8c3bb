//! Degree-based filtering of one support set whose features are a shared
//! direction plus noise, with two shots pointing elsewhere.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use robust_fewshot::mdns::{mdns_filter, MdnsConfig, ShotInput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.3)?;
    let (points, dim) = (40, 16);
    let coords: Vec<[f32; 3]> = (0..points)
        .map(|i| [(i % 8) as f32 / 8.0, (i / 8) as f32 / 5.0, 0.0])
        .collect();
    let mask = vec![true; points];
    let feats: Vec<Array2<f64>> = (0..5)
        .map(|k| {
            // shots 3 and 4 carry another object
            let axis = if k < 3 { 0 } else { 1 };
            Array2::from_shape_fn((points, dim), |(_, j)| {
                f64::from(u8::from(j == axis)) + noise.sample(&mut rng)
            })
        })
        .collect();
    let shots: Vec<ShotInput<'_>> = feats
        .iter()
        .map(|f| ShotInput {
            coords: &coords,
            mask: &mask,
            features: f.view(),
        })
        .collect();
    let result = mdns_filter(&shots, &MdnsConfig::default())?;
    for s in &result.scales {
        println!(
            "scale {} gamma {}: shot votes {:?}",
            s.scale, s.gamma, s.shot_indicators
        );
    }
    println!(
        "retained {:?} (fallback: {})",
        result.retained, result.fallback_used
    );
    Ok(())
}
