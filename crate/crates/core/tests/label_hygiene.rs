//! Labels outside the training split must not influence training-time
//! sampling or inference, and the test-variant graph never reaches training.

use fsm_irl::bench::{generate_synthetic_geo, SyntheticGeoConfig};
use fsm_irl::sampler::{AttentionProjection, ProfileSet};
use fsm_irl::train::{train, TrainConfig};
use fsm_irl::{Graph, KnownLabels, Role, SplitAssignment};

fn data() -> (Graph, SplitAssignment) {
    let config = SyntheticGeoConfig {
        blocks: 3,
        nodes_per_block: 30,
        p_in: 0.4,
        p_out: 0.05,
        feature_dim: 4,
        ..SyntheticGeoConfig::default()
    };
    let d = generate_synthetic_geo(&config, 2).unwrap();
    (d.graph, d.split)
}

/// Same graph with every test-node label rotated to another class.
fn relabel_test_nodes(g: &Graph, split: &SplitAssignment) -> Graph {
    let c = g.num_classes() as u32;
    let labels: Vec<u32> = (0..g.num_nodes())
        .map(|v| {
            let y = g.label(v);
            if split.role(v) == Role::Test {
                (y + 1) % c
            } else {
                y
            }
        })
        .collect();
    Graph::new(g.features().clone(), labels, g.num_classes(), &g.edge_list()).unwrap()
}

fn config() -> TrainConfig {
    TrainConfig {
        epochs: 4,
        batch_size: 16,
        hidden: 8,
        sample_size: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn test_labels_do_not_affect_training_or_prediction() {
    let (g, split) = data();
    let g2 = relabel_test_nodes(&g, &split);
    let (m1, h1) = train(&g, &split, &config()).unwrap();
    let (m2, h2) = train(&g2, &split, &config()).unwrap();
    assert_eq!(m1.params, m2.params);
    assert_eq!(h1.train_losses(), h2.train_losses());
    let test = split.nodes(Role::Test);
    assert_eq!(m1.predict(&g, &test).unwrap(), m2.predict(&g2, &test).unwrap());
}

#[test]
fn training_profiles_read_only_training_labels() {
    let (g, split) = data();
    let g2 = relabel_test_nodes(&g, &split);
    let proj = AttentionProjection::kaiming_uniform(g.num_features(), 0);
    let p1 = ProfileSet::causal_attention(&g, &KnownLabels::from_split(&g, &split, Role::Train), &proj).unwrap();
    let p2 = ProfileSet::causal_attention(&g2, &KnownLabels::from_split(&g2, &split, Role::Train), &proj).unwrap();
    assert_eq!(p1.to_json(), p2.to_json());
}

#[test]
fn inference_profiles_ignore_every_label() {
    let (g, _) = data();
    let c = g.num_classes() as u32;
    let shuffled: Vec<u32> = (0..g.num_nodes()).map(|v| (g.label(v) + v as u32) % c).collect();
    let g2 = Graph::new(g.features().clone(), shuffled, g.num_classes(), &g.edge_list()).unwrap();
    let proj = AttentionProjection::kaiming_uniform(g.num_features(), 3);
    let none = KnownLabels::none(g.num_nodes());
    let p1 = ProfileSet::causal_attention(&g, &none, &proj).unwrap();
    let p2 = ProfileSet::causal_attention(&g2, &none, &proj).unwrap();
    assert_eq!(p1.to_json(), p2.to_json());
}
