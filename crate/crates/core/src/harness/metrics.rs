use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean IoU over foreground labels `1..=n_way`, pooling every query point of
/// an episode. Classes absent from both prediction and ground truth are
/// skipped; if all are absent the episode scores 1.
pub fn compute_miou(pred: &[usize], gt: &[usize], n_way: usize) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            pred.len(),
            gt.len()
        )));
    }
    let mut sum = 0.0;
    let mut counted = 0;
    for c in 1..=n_way {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &g) in pred.iter().zip(gt) {
            match (p == c, g == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let union = tp + fp + fn_;
        if union > 0 {
            sum += tp as f64 / union as f64;
            counted += 1;
        }
    }
    Ok(if counted == 0 {
        1.0
    } else {
        sum / counted as f64
    })
}

/// Clean-shot fraction of one way's shot set; `None` for an empty set.
pub fn way_clean_ratio(clean_flags: &[bool]) -> Option<f64> {
    (!clean_flags.is_empty())
        .then(|| clean_flags.iter().filter(|&&c| c).count() as f64 / clean_flags.len() as f64)
}

/// Episode clean ratio: the mean over ways of each way's clean fraction.
pub fn episode_clean_ratio(ways: &[Vec<bool>]) -> f64 {
    let ratios: Vec<f64> = ways.iter().filter_map(|w| way_clean_ratio(w)).collect();
    if ratios.is_empty() {
        return 0.0;
    }
    ratios.iter().sum::<f64>() / ratios.len() as f64
}

/// Clean ratio over episodes: per-episode ratios averaged.
pub fn clean_ratio(episodes: &[Vec<Vec<bool>>]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    episodes.iter().map(|e| episode_clean_ratio(e)).sum::<f64>() / episodes.len() as f64
}

pub const PURITY_BINS: usize = 10;

/// Prototype purities in ten bins `[0, 0.1), ..., [0.9, 1]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PurityHistogram {
    pub bins: [usize; PURITY_BINS],
}

impl PurityHistogram {
    pub fn from_purities(purities: impl IntoIterator<Item = f64>) -> Self {
        let mut h = Self::default();
        for p in purities {
            h.add(p);
        }
        h
    }

    pub fn add(&mut self, purity: f64) {
        let bin =
            ((purity * PURITY_BINS as f64).floor() as isize).clamp(0, PURITY_BINS as isize - 1);
        self.bins[bin as usize] += 1;
    }

    pub fn merge(&mut self, other: &PurityHistogram) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
    }

    pub fn total(&self) -> usize {
        self.bins.iter().sum()
    }

    /// Fraction of prototypes with purity in `[0.1, 0.9)`.
    pub fn mid_range_mass(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.bins[1..PURITY_BINS - 1].iter().sum::<usize>() as f64 / total as f64
    }

    /// Fraction of prototypes in the bin holding `purity`.
    pub fn mass_at(&self, purity: f64) -> f64 {
        let mut probe = Self::default();
        probe.add(purity);
        let bin = probe
            .bins
            .iter()
            .position(|&b| b == 1)
            .expect("one bin set");
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.bins[bin] as f64 / total as f64
        }
    }
}
