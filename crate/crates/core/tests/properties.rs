use ndarray::Array2;
use proptest::prelude::*;
use robust_fewshot::fewshot::{build_knn_graph, label_propagate};
use robust_fewshot::geometry::normalize_rows;
use robust_fewshot::harness::compute_miou;
use robust_fewshot::losses::supervised_contrastive;
use robust_fewshot::mdns::{mdns_filter, MdnsConfig, ShotInput};
use robust_fewshot::sampling::{assign_to_seeds, farthest_point_sampling};

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fps_picks_distinct_rows(m in matrix(40, 6), frac in 0.0f64..1.0) {
        let count = 1 + ((m.nrows() - 1) as f64 * frac) as usize;
        let picked = farthest_point_sampling(m.view(), count).unwrap();
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        // duplicated rows can only be picked once the distinct ones run out
        prop_assert_eq!(picked.len(), count);
        prop_assert_eq!(sorted.len(), count);
    }

    #[test]
    fn every_seed_owns_itself(m in matrix(40, 6)) {
        // distinct rows, so no seed can tie with another at distance zero
        let mut m = m;
        for (i, mut row) in m.rows_mut().into_iter().enumerate() {
            row[0] += 100.0 * i as f64;
        }
        let count = m.nrows().min(5);
        let seeds = farthest_point_sampling(m.view(), count).unwrap();
        let assign = assign_to_seeds(m.view(), &seeds).unwrap();
        for (pos, &s) in seeds.iter().enumerate() {
            prop_assert_eq!(assign[s], pos);
        }
    }

    #[test]
    fn knn_graph_is_symmetric_with_empty_diagonal(m in matrix(30, 4), k in 1usize..8) {
        prop_assume!(m.nrows() >= 2);
        let g = build_knn_graph(m.view(), k).unwrap();
        for i in 0..g.nrows() {
            prop_assert_eq!(g[[i, i]], 0.0);
            for j in 0..g.ncols() {
                prop_assert_eq!(g[[i, j]], g[[j, i]]);
                prop_assert!((0.0..=1.0).contains(&g[[i, j]]));
            }
        }
    }

    #[test]
    fn propagation_keeps_scores_non_negative(m in matrix(30, 4), alpha in 0.05f64..0.99) {
        prop_assume!(m.nrows() >= 2);
        let g = build_knn_graph(m.view(), 3).unwrap();
        let mut y = Array2::zeros((m.nrows(), 2));
        y[[0, 0]] = 1.0;
        y[[m.nrows() - 1, 1]] = 1.0;
        let f = label_propagate(g.view(), y.view(), alpha).unwrap();
        prop_assert!(f.iter().all(|&v| v >= -1e-12 && v.is_finite()));
    }

    #[test]
    fn contrastive_loss_is_non_negative(m in matrix(8, 5), classes in prop::collection::vec(0u32..3, 8), tau in 0.05f64..2.0) {
        let z = normalize_rows(m.view());
        let (loss, grad) = supervised_contrastive(z.view(), &classes[..z.nrows()], tau);
        prop_assert!(loss >= -1e-12);
        prop_assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn miou_is_a_fraction(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..100)) {
        let (pred, gt): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let v = compute_miou(&pred, &gt, 2).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(compute_miou(&gt, &gt, 2).unwrap(), 1.0);
    }

    #[test]
    fn filter_always_keeps_a_shot(
        feats in prop::collection::vec(matrix(1, 4), 1..6),
        coords in prop::collection::vec((0.0f32..1.0, 0.0f32..1.0, 0.0f32..1.0), 6),
    ) {
        let points = 6;
        let shots_feats: Vec<Array2<f64>> = feats
            .iter()
            .map(|f| Array2::from_shape_fn((points, f.ncols()), |(i, j)| f[[0, j]] + i as f64 * 0.01))
            .collect();
        let dims: Vec<usize> = shots_feats.iter().map(|f| f.ncols()).collect();
        prop_assume!(dims.iter().all(|&d| d == dims[0]));
        let c: Vec<[f32; 3]> = coords.iter().map(|&(x, y, z)| [x, y, z]).collect();
        let mask = vec![true; points];
        let shots: Vec<ShotInput<'_>> = shots_feats
            .iter()
            .map(|f| ShotInput { coords: &c, mask: &mask, features: f.view() })
            .collect();
        let r = mdns_filter(&shots, &MdnsConfig::default()).unwrap();
        prop_assert!(!r.retained.is_empty());
        prop_assert!(r.retained.iter().all(|&k| k < shots.len()));
        prop_assert_eq!(r.fallback_used, r.final_indicators.iter().all(|&b| !b));
    }
}
