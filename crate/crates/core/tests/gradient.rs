mod common;

#[test]
fn objective_gradient_matches_finite_differences() {
    for seed in 0..4 {
        for r in [1, 4] {
            let g = common::gradient_check(seed, r);
            assert!(g.max_rel_err < 1e-4, "seed {seed}, R = {r}: {g:?}");
            assert_eq!(g.parameters, 360);
        }
    }
}

#[test]
fn stepping_against_the_gradient_lowers_the_loss() {
    use robust_fewshot::harness::episode_objective;
    use robust_fewshot::losses::LossConfig;
    let ep = common::tiny_episode(3);
    let mut net = common::tiny_net(3);
    let loss = LossConfig {
        tau: 0.1,
        lambda: 0.1,
        components: 4,
    };
    let base = episode_objective(&net, &ep, &loss, 3, None).unwrap();
    let g = base.grads.flatten();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    for (i, gi) in g.iter().enumerate() {
        let t = net.params.get(i);
        net.params.set(i, t - 1e-5 * gi / norm);
    }
    let after = episode_objective(&net, &ep, &loss, 3, Some(&base.partitions)).unwrap();
    assert!(after.loss < base.loss, "{} -> {}", base.loss, after.loss);
}
