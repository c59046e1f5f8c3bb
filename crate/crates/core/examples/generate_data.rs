//! Synthetic scenes and noisy episodes.
//!
//! ```text
//! cargo run --release --example generate_data -- [out_dir]
//! ```

use robust_fewshot::synth::{test_episode, DatasetConfig, EpisodeSampler, SyntheticDataset};
use robust_fewshot::NoiseConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = DatasetConfig {
        train_scenes: 120,
        test_scenes: 60,
        ..DatasetConfig::default()
    };
    let ds = SyntheticDataset::generate(&config)?;
    let names = ds.class_names();
    println!(
        "{} train scenes (base only), {} test scenes",
        ds.train.len(),
        ds.test.len()
    );
    for (c, name) in names.iter().enumerate() {
        let train = ds
            .train
            .iter()
            .filter(|s| s.class_count(c as u32) > 0)
            .count();
        let test = ds
            .test
            .iter()
            .filter(|s| s.class_count(c as u32) > 0)
            .count();
        println!("  {c:>2} {name:<8} train {train:>4}  test {test:>4}");
    }

    // 40% in-episode noise: two of five shots per way show the other class
    let sampler = EpisodeSampler::testing(&ds);
    let ep = test_episode(&sampler, 1, 0, 2, 5, 1, NoiseConfig::in_episode(0.4)?)?;
    for (way, shots) in ep.support.iter().enumerate() {
        let truth: Vec<&str> = shots
            .iter()
            .map(|s| names[s.true_class as usize].as_str())
            .collect();
        println!(
            "way {way} declared {}: true classes {truth:?}",
            names[ep.classes[way] as usize]
        );
    }

    if let Some(dir) = std::env::args().nth(1) {
        let manifest = ds.write(dir.as_ref())?;
        println!(
            "wrote {} + {} clouds to {dir}",
            manifest.train_scenes, manifest.test_scenes
        );
    }
    Ok(())
}
