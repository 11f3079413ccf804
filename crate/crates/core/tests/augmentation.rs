//! Sampling statistics and degenerate cases of the guided augmentation.

mod common;

use common::*;
use graphclust::augment::{
    edge_importance, edge_removal_probs, sample_view, AugmentConfig, AugmentationPlan, RemovalMode,
};
use graphclust::diff::Matrix;
use graphclust::{Error, GraphBundle};
use rand::Rng;

/// Graph with exactly `m` distinct edges over `n` nodes.
fn dense_graph(n: usize, m: usize, d: usize) -> GraphBundle {
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .take(m)
        .collect();
    assert_eq!(edges.len(), m);
    GraphBundle::new("dense", 2, edges, Matrix::filled(n, d, 1.0), None).unwrap()
}

#[test]
fn uniform_importance_removes_the_overall_rate() {
    let bundle = dense_graph(160, 10_000, 1);
    let n = bundle.n();
    let cfg = AugmentConfig {
        p_e: 0.3,
        p_tau: 1.0,
        ..AugmentConfig::default()
    };
    let entropy = vec![0.4; n];
    let labels = vec![0; n];
    let plan = AugmentationPlan::build(&bundle, &entropy, &labels, &cfg).unwrap();
    assert!(plan.edge_remove_prob.iter().all(|&p| p == 0.3));
    for seed in 0..5 {
        let view = sample_view(&bundle, &plan, &labels, seed).unwrap();
        let removed = 1.0 - view.edges.len() as f64 / 10_000.0;
        assert!((removed - 0.3).abs() <= 0.02, "seed {seed}: removed {removed}");
    }
}

#[test]
fn removal_probability_is_monotone_in_importance_and_capped() {
    for seed in 0..1000 {
        let mut r = rng(seed);
        let m = r.gen_range(1..40);
        let u: Vec<f64> = (0..m).map(|_| r.gen_range(0.0..3.0)).collect();
        let p_e = r.gen_range(0.0..0.99);
        let p_tau = r.gen_range(0.01..=1.0);
        let p = edge_removal_probs(&u, p_e, p_tau, RemovalMode::Semantic);
        for a in 0..m {
            assert!((0.0..=p_tau).contains(&p[a]), "seed {seed}");
            for b in 0..m {
                if u[a] < u[b] {
                    assert!(p[a] <= p[b], "seed {seed}: u {} < {} but p {} > {}", u[a], u[b], p[a], p[b]);
                }
            }
        }
        let lit = edge_removal_probs(&u, p_e, p_tau, RemovalMode::Literal);
        assert!(lit.iter().all(|&x| (0.0..=p_tau).contains(&x)));
    }
}

#[test]
fn confident_intra_class_edges_survive_more_often() {
    // two cliques joined by a bridge layer of inter-class edges
    let n = 40;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    let bundle = GraphBundle::new("cliques", 2, edges, Matrix::filled(n, 3, 1.0), Some(labels.clone())).unwrap();
    let entropy = vec![0.1; n];
    let cfg = AugmentConfig {
        p_e: 0.3,
        ..AugmentConfig::default()
    };
    let plan = AugmentationPlan::build(&bundle, &entropy, &labels, &cfg).unwrap();
    let (mut intra, mut inter) = (0usize, 0usize);
    let (mut intra_kept, mut inter_kept) = (0usize, 0usize);
    for seed in 0..20 {
        let view = sample_view(&bundle, &plan, &labels, seed).unwrap();
        for &(u, v) in bundle.edges() {
            let kept = view.edges.binary_search(&(u, v)).is_ok();
            if labels[u] == labels[v] {
                intra += 1;
                intra_kept += kept as usize;
            } else {
                inter += 1;
                inter_kept += kept as usize;
            }
        }
    }
    let (ri, re) = (intra_kept as f64 / intra as f64, inter_kept as f64 / inter as f64);
    assert!(ri > re + 0.2, "intra kept {ri}, inter kept {re}");
}

#[test]
fn importance_scores_follow_entropy_and_label_agreement() {
    let u = edge_importance(&[0.2, 0.3, 0.9], &[0, 0, 1], &[(0, 1), (1, 2)], 0.5);
    assert!((u[0] - 0.06).abs() < 1e-12);
    assert!((u[1] - (0.27 + 0.5)).abs() < 1e-12);
}

#[test]
fn feature_masking_rate_and_class_weighting() {
    let n = 300;
    let d = 40;
    let mut r = rng(1);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    // class 0 uses the first half of the vocabulary heavily
    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let heavy = (j < d / 2) == (labels[i] == 0);
            if r.gen_bool(if heavy { 0.8 } else { 0.2 }) {
                x.set(i, j, 1.0);
            }
        }
    }
    let bundle = GraphBundle::new("feat", 2, vec![(0, 1)], x.clone(), None).unwrap();
    let cfg = AugmentConfig {
        p_e: 0.0,
        p_f: 0.3,
        ..AugmentConfig::default()
    };
    let plan = AugmentationPlan::build(&bundle, &vec![0.5; n], &labels, &cfg).unwrap();
    let light = plan.feature_mask_prob.get(0, d - 1);
    let heavy = plan.feature_mask_prob.get(0, 0);
    assert!(heavy < light, "heavy {heavy} light {light}");
    assert!(plan.feature_mask_prob.data().iter().all(|&p| (0.0..=cfg.p_tau).contains(&p)));

    let random = AugmentationPlan::build(&bundle, &vec![0.5; n], &labels, &AugmentConfig { random: true, ..cfg }).unwrap();
    assert!(random.feature_mask_prob.data().iter().all(|&p| p == 0.3));
    let view = sample_view(&bundle, &random, &labels, 9).unwrap();
    let before = x.data().iter().filter(|&&v| v != 0.0).count() as f64;
    let after = view.features.data().iter().filter(|&&v| v != 0.0).count() as f64;
    let masked = 1.0 - after / before;
    assert!((masked - 0.3).abs() < 0.02, "masked {masked}");
}

#[test]
fn random_mode_is_constant_everywhere() {
    let mut r = rng(4);
    let bundle = random_bundle(&mut r, 30, 4, 3);
    let entropy: Vec<f64> = (0..30).map(|_| r.gen_range(0.0..1.0)).collect();
    let labels = random_labels(&mut r, 30, 3);
    let cfg = AugmentConfig {
        random: true,
        ..AugmentConfig::default()
    };
    let plan = AugmentationPlan::build(&bundle, &entropy, &labels, &cfg).unwrap();
    assert!(plan.edge_remove_prob.iter().all(|&p| p == cfg.p_e));
    assert!(plan.feature_mask_prob.data().iter().all(|&p| p == cfg.p_f));
}

#[test]
fn sampling_is_deterministic_in_seed() {
    let mut r = rng(5);
    let bundle = random_bundle(&mut r, 30, 4, 3);
    let labels = random_labels(&mut r, 30, 3);
    let plan = AugmentationPlan::build(&bundle, &vec![0.3; 30], &labels, &AugmentConfig::default()).unwrap();
    let a = sample_view(&bundle, &plan, &labels, 11).unwrap();
    let b = sample_view(&bundle, &plan, &labels, 11).unwrap();
    let c = sample_view(&bundle, &plan, &labels, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn removing_every_edge_is_reported() {
    let bundle = GraphBundle::new("pair", 1, vec![(0, 1)], Matrix::identity(2), None).unwrap();
    let cfg = AugmentConfig {
        p_e: 0.99,
        p_tau: 1.0,
        ..AugmentConfig::default()
    };
    let labels = [0, 0];
    let plan = AugmentationPlan::build(&bundle, &[0.0, 0.0], &labels, &cfg).unwrap();
    let outcomes: Vec<_> = (0..50).map(|s| sample_view(&bundle, &plan, &labels, s)).collect();
    let err = outcomes.into_iter().find_map(Result::err).expect("some seed removes the only edge");
    assert!(matches!(err, Error::EmptyAugmentedGraph { .. }));
    assert!(err.is_numerical());
}
