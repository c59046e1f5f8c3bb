//! Farthest point sampling and nearest-seed assignment in feature space.

use ndarray::{ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How the first farthest-point seed is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpsStart {
    /// The vector farthest from the centroid (lowest index on ties).
    #[default]
    FarthestFromCentroid,
    /// A uniformly drawn index from a seeded generator.
    Seeded(u64),
}

fn sq_dist<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Greedy maximin sampling of `count` row indices of `vectors`.
pub fn farthest_point_sampling<T: Scalar>(
    vectors: ArrayView2<T>,
    count: usize,
) -> Result<Vec<usize>> {
    farthest_point_sampling_from(vectors, count, FpsStart::FarthestFromCentroid)
}

pub fn farthest_point_sampling_from<T: Scalar>(
    vectors: ArrayView2<T>,
    count: usize,
    start: FpsStart,
) -> Result<Vec<usize>> {
    let n = vectors.nrows();
    if count == 0 {
        return Err(Error::InvalidArgument(
            "farthest point sampling needs count >= 1".into(),
        ));
    }
    if count > n {
        return Err(Error::InsufficientPoints {
            requested: count,
            available: n,
        });
    }
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("farthest point sampling input".into()));
    }

    let first = match start {
        FpsStart::FarthestFromCentroid => {
            let centroid = vectors.mean_axis(ndarray::Axis(0)).expect("n >= 1");
            argmax_first((0..n).map(|i| sq_dist(vectors.row(i), centroid.view())))
        }
        FpsStart::Seeded(seed) => ChaCha8Rng::seed_from_u64(seed).random_range(0..n),
    };

    let mut selected = vec![first];
    let mut taken = vec![false; n];
    taken[first] = true;
    let mut min_dist: Vec<T> = (0..n)
        .map(|i| sq_dist(vectors.row(i), vectors.row(first)))
        .collect();

    while selected.len() < count {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if min_dist[i] <= min_dist[b] => {}
                _ => best = Some(i),
            }
        }
        let next = best.expect("count <= n leaves an unselected index");
        taken[next] = true;
        selected.push(next);
        for i in 0..n {
            let d = sq_dist(vectors.row(i), vectors.row(next));
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    Ok(selected)
}

fn argmax_first<T: Scalar>(values: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_v = T::neg_infinity();
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Assigns each row to its nearest seed. Returns the seed *position* per row;
/// ties go to the lowest position.
pub fn assign_to_seeds<T: Scalar>(vectors: ArrayView2<T>, seeds: &[usize]) -> Result<Vec<usize>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "assignment needs at least one seed".into(),
        ));
    }
    if let Some(&s) = seeds.iter().find(|&&s| s >= vectors.nrows()) {
        return Err(Error::InvalidArgument(format!(
            "seed index {s} out of range for {} rows",
            vectors.nrows()
        )));
    }
    Ok(vectors
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_d = T::infinity();
            for (pos, &s) in seeds.iter().enumerate() {
                let d = sq_dist(row, vectors.row(s));
                if d < best_d {
                    best = pos;
                    best_d = d;
                }
            }
            best
        })
        .collect())
}

/// Member lists of each component, dropping components that ended up empty
/// (possible only when seeds coincide).
pub fn group_members(assignment: &[usize], components: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); components];
    for (i, &c) in assignment.iter().enumerate() {
        groups[c].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// FPS with `min(count, rows)` seeds followed by nearest-seed grouping.
pub fn fps_partition<T: Scalar>(vectors: ArrayView2<T>, count: usize) -> Result<Vec<Vec<usize>>> {
    let seeds = farthest_point_sampling(vectors, count.min(vectors.nrows()))?;
    let assignment = assign_to_seeds(vectors, &seeds)?;
    Ok(group_members(&assignment, seeds.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn fps_one_dimensional_fixture() {
        let v = array![[0.0], [1.0], [10.0]];
        assert_eq!(farthest_point_sampling(v.view(), 2).unwrap(), vec![2, 0]);
    }

    #[test]
    fn fps_exhaustion_is_permutation() {
        let v = array![[0.3, 1.0], [2.0, -1.0], [0.0, 0.0], [5.0, 5.0]];
        let mut idx = farthest_point_sampling(v.view(), 4).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn fps_identical_vectors_tie_break() {
        let v = Array2::<f64>::ones((5, 3));
        assert_eq!(farthest_point_sampling(v.view(), 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn fps_errors() {
        let v = array![[0.0], [1.0]];
        assert!(matches!(
            farthest_point_sampling(v.view(), 3),
            Err(Error::InsufficientPoints { .. })
        ));
        assert!(farthest_point_sampling(v.view(), 0).is_err());
        let bad = array![[f64::NAN], [1.0]];
        assert!(farthest_point_sampling(bad.view(), 1).is_err());
    }

    #[test]
    fn fps_seeded_start_is_reproducible() {
        let v = array![[0.0], [1.0], [10.0], [4.0]];
        let a = farthest_point_sampling_from(v.view(), 3, FpsStart::Seeded(9)).unwrap();
        let b = farthest_point_sampling_from(v.view(), 3, FpsStart::Seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn assign_fixture() {
        let v = array![[0.0], [1.0], [10.0]];
        assert_eq!(assign_to_seeds(v.view(), &[2, 0]).unwrap(), vec![1, 1, 0]);
    }

    #[test]
    fn assign_all_seeds_identity() {
        let v = array![[0.0, 1.0], [3.0, 1.0], [-2.0, 7.0]];
        assert_eq!(
            assign_to_seeds(v.view(), &[2, 0, 1]).unwrap(),
            vec![1, 2, 0]
        );
    }

    #[test]
    fn assign_identical_vectors_go_to_first_seed() {
        let v = Array2::<f64>::zeros((4, 2));
        assert_eq!(assign_to_seeds(v.view(), &[0, 1]).unwrap(), vec![0; 4]);
        assert!(assign_to_seeds(v.view(), &[]).is_err());
        assert_eq!(group_members(&[0, 0, 0, 0], 2), vec![vec![0, 1, 2, 3]]);
    }
}
