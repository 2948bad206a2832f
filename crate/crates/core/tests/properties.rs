use ndarray::Array2;
use proptest::prelude::*;

use fsm_irl::bench::{biased_split_with, BiasLevel, SplitSizes};
use fsm_irl::hsic::{apply_weights, hsic_biased, hsic_scaled, project_to_simplex, SampleWeights};
use fsm_irl::kernel::{gram, KernelSpec};
use fsm_irl::metrics::score;
use fsm_irl::sampler::{sample_neighbors, sampling_profile, AttentionProjection, SignatureTable};
use fsm_irl::{Graph, KnownLabels, Role};

prop_compose! {
    fn graph_parts(max_n: usize)(n in 2..max_n)(
        n in Just(n),
        labels in prop::collection::vec(0u32..3, n),
        features in prop::collection::vec(-2.0f64..2.0, n * 2),
        edges in prop::collection::vec((0..n, 0..n), 0..3 * n),
        known in prop::collection::vec(any::<bool>(), n),
    ) -> (usize, Vec<u32>, Vec<f64>, Vec<(usize, usize)>, Vec<bool>) {
        (n, labels, features, edges, known)
    }
}

fn build(n: usize, labels: &[u32], features: &[f64], edges: &[(usize, usize)]) -> Graph {
    Graph::new(Array2::from_shape_vec((n, 2), features.to_vec()).unwrap(), labels.to_vec(), 3, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_is_symmetric_sorted_and_loop_free((n, labels, x, edges, _) in graph_parts(20)) {
        let g = build(n, &labels, &x, &edges);
        let mut degree_sum = 0;
        for v in 0..n {
            let nbrs = g.neighbors(v).unwrap();
            degree_sum += nbrs.len();
            prop_assert!(nbrs.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(!nbrs.contains(&v));
            for &u in nbrs {
                prop_assert!(g.neighbors(u).unwrap().contains(&v));
            }
            if !nbrs.is_empty() {
                let h = g.label_homogeneity(v).unwrap();
                prop_assert!((0.0..=1.0).contains(&h));
            }
        }
        prop_assert_eq!(degree_sum, 2 * g.num_edges());
    }

    #[test]
    fn edge_deletion_is_nested((n, labels, x, edges, _) in graph_parts(20), f1 in 0.0f64..1.0, f2 in 0.0f64..1.0, seed in any::<u64>()) {
        let g = build(n, &labels, &x, &edges);
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let kept_lo = g.delete_edges(lo, seed).unwrap().edge_list();
        let kept_hi = g.delete_edges(hi, seed).unwrap().edge_list();
        prop_assert!(kept_hi.iter().all(|e| kept_lo.contains(e)));
    }

    #[test]
    fn sampling_profiles_are_distributions((n, labels, x, edges, known) in graph_parts(16), seed in any::<u64>()) {
        let g = build(n, &labels, &x, &edges);
        let source = KnownLabels::new((0..n).map(|v| known[v].then_some(labels[v])).collect());
        let table = SignatureTable::build(&g, &source);
        let proj = AttentionProjection::kaiming_uniform(2, seed);
        for v in 0..n {
            let p = sampling_profile(&g, v, &source, &table, &proj).unwrap();
            prop_assert_eq!(&p.neighbors[..], g.neighbors(v).unwrap());
            if p.is_empty() {
                continue;
            }
            prop_assert!(p.weights.iter().all(|&w| w >= 0.0 && w.is_finite()));
            prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let draws = sample_neighbors(&p, 5, seed);
            prop_assert_eq!(draws.len(), 5);
            prop_assert!(draws.iter().all(|u| p.neighbors.contains(u)));
        }
    }

    #[test]
    fn hsic_is_symmetric_nonnegative_and_rescaled(
        xs in prop::collection::vec(-3.0f64..3.0, 2..12),
        ys_seed in prop::collection::vec(-3.0f64..3.0, 12),
        bandwidth in 0.2f64..3.0,
    ) {
        let n = xs.len();
        let a: Vec<[f64; 1]> = xs.iter().map(|&v| [v]).collect();
        let b: Vec<[f64; 1]> = ys_seed[..n].iter().map(|&v| [v]).collect();
        for spec in [KernelSpec::Kronecker, KernelSpec::gaussian(bandwidth).unwrap()] {
            let (kx, ky) = (gram(&spec, &a).unwrap(), gram(&spec, &b).unwrap());
            let h = hsic_biased(&kx, &ky).unwrap();
            prop_assert_eq!(h, hsic_biased(&ky, &kx).unwrap());
            prop_assert!(h >= -1e-10);
            let ratio = (n * n) as f64 / ((n - 1) * (n - 1)) as f64;
            prop_assert!((hsic_scaled(&kx, &ky).unwrap() - h * ratio).abs() <= 1e-12 * ratio.max(h.abs()));
        }
    }

    #[test]
    fn projection_is_feasible_and_idempotent(w in prop::collection::vec(-2.0f64..6.0, 1..40)) {
        let n = w.len() as f64;
        if let Some(p) = project_to_simplex(&w) {
            prop_assert!(p.iter().all(|&x| (0.0..=n).contains(&x)));
            prop_assert!((p.iter().sum::<f64>() - n).abs() < 1e-9 * n);
            let again = project_to_simplex(&p).unwrap();
            for (a, b) in p.iter().zip(&again) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!(SampleWeights::new(p).is_ok());
        } else {
            prop_assert!(w.iter().all(|&x| x <= 0.0));
        }
    }

    #[test]
    fn weighted_loss_matches_a_loop(
        pairs in prop::collection::vec((0.0f64..3.0, 0.0f64..5.0), 1..30),
    ) {
        let (raw, losses): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let Some(w) = project_to_simplex(&raw) else { return Ok(()); };
        let weights = SampleWeights::new(w.clone()).unwrap();
        let mut acc = 0.0;
        for k in 0..w.len() {
            acc += w[k] * losses[k];
        }
        prop_assert!((apply_weights(&weights, &losses).unwrap() - acc / w.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_bounded_and_order_free(
        rows in prop::collection::vec((0u32..4, 0u32..4), 1..60),
        rotate in 0usize..60,
    ) {
        let (pred, truth): (Vec<u32>, Vec<u32>) = rows.iter().copied().unzip();
        let m = score(&pred, &truth, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.accuracy));
        prop_assert!((0.0..=1.0).contains(&m.macro_f1));
        let correct = rows.iter().filter(|(p, t)| p == t).count();
        prop_assert_eq!(m.accuracy, correct as f64 / rows.len() as f64);
        let k = rotate % rows.len();
        let (mut p2, mut t2) = (pred.clone(), truth.clone());
        p2.rotate_left(k);
        t2.rotate_left(k);
        let m2 = score(&p2, &t2, 4).unwrap();
        prop_assert_eq!(m.accuracy, m2.accuracy);
        prop_assert!((m.macro_f1 - m2.macro_f1).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn biased_splits_are_disjoint_with_exact_counts(seed in any::<u64>(), level in 0usize..4, per_class in 1usize..6) {
        // Three 12-node classes on a ring with chords, so every node has
        // neighbors and homogeneity varies.
        let n = 36;
        let labels: Vec<u32> = (0..n).map(|v| (v % 3) as u32).collect();
        let mut edges: Vec<(usize, usize)> = (0..n).map(|v| (v, (v + 1) % n)).collect();
        edges.extend((0..n).map(|v| (v, (v + 3) % n)));
        edges.extend((0..n).step_by(4).map(|v| (v, (v + 7) % n)));
        let g = Graph::new(Array2::zeros((n, 1)), labels, 3, &edges).unwrap();
        let level = [BiasLevel::None, BiasLevel::Small, BiasLevel::Medium, BiasLevel::Big][level];
        let sizes = SplitSizes { per_class_train: per_class, validation: 5, test: 10 };
        let split = biased_split_with(&g, level, sizes, seed).unwrap();
        let train = split.nodes(Role::Train);
        for class in 0..3u32 {
            prop_assert_eq!(train.iter().filter(|&&v| g.label(v) == class).count(), per_class);
        }
        prop_assert_eq!(split.nodes(Role::Validation).len(), 5);
        prop_assert_eq!(split.nodes(Role::Test).len(), 10);
        let total: usize = [Role::Train, Role::Validation, Role::Test, Role::Unused]
            .iter()
            .map(|&r| split.nodes(r).len())
            .sum();
        prop_assert_eq!(total, n);
    }
}
