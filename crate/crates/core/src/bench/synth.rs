use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Role, SplitAssignment};
use crate::rng::{self, tag};

/// Block-model stand-in for a geographic network: dense, noisy
/// neighborhoods plus one confounder feature whose link to the label can
/// change between the training and evaluation nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticGeoConfig {
    /// Number of blocks, one class each.
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Informative features, not counting the confounder column.
    pub feature_dim: usize,
    /// Expected distance between two class means, in noise units.
    pub separation: f64,
    /// Confounder-signal correlation on training nodes.
    pub rho_train: f64,
    /// Confounder-signal correlation on validation and test nodes.
    pub rho_test: f64,
    /// Position of the re-wired evaluation graph between the original
    /// within/between neighbor mix (0) and the swapped mix (1). 0 disables
    /// the re-wired variant.
    pub structural_mix: f64,
    pub train_fraction: f64,
    pub validation_fraction: f64,
}

impl Default for SyntheticGeoConfig {
    fn default() -> Self {
        SyntheticGeoConfig {
            blocks: 6,
            nodes_per_block: 130,
            p_in: 0.3,
            p_out: 0.033,
            feature_dim: 16,
            separation: 2.0,
            rho_train: 0.9,
            rho_test: 0.0,
            structural_mix: 0.5,
            train_fraction: 0.7,
            validation_fraction: 0.2,
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

impl SyntheticGeoConfig {
    pub fn num_nodes(&self) -> usize {
        self.blocks * self.nodes_per_block
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks < 2 || self.nodes_per_block < 2 {
            return Err(Error::Config("need at least 2 blocks of at least 2 nodes".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Config("separation must be finite and nonnegative".into()));
        }
        probability("p_in", self.p_in)?;
        probability("p_out", self.p_out)?;
        probability("structural_mix", self.structural_mix)?;
        for (name, r) in [("rho_train", self.rho_train), ("rho_test", self.rho_test)] {
            if !(-1.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} = {r} outside [-1, 1]")));
            }
        }
        let (tf, vf) = (self.train_fraction, self.validation_fraction);
        if !(tf > 0.0 && vf >= 0.0 && tf + vf < 1.0) {
            return Err(Error::Config(
                "split fractions must leave a non-empty training and test set".into(),
            ));
        }
        if self.structural_mix > 0.0 {
            let (p_in, p_out) = self.rewired_probabilities();
            probability("re-wired p_in", p_in)?;
            probability("re-wired p_out", p_out)?;
        }
        Ok(())
    }

    /// Edge probabilities of the re-wired variant. The expected degree is
    /// unchanged; the expected number of same-block neighbors moves from
    /// `S` toward `D - S` by `structural_mix`.
    pub fn rewired_probabilities(&self) -> (f64, f64) {
        let within = (self.nodes_per_block - 1) as f64;
        let between = (self.num_nodes() - self.nodes_per_block) as f64;
        let same = within * self.p_in;
        let degree = same + between * self.p_out;
        let m = self.structural_mix;
        let target = (1.0 - m) * same + m * (degree - same);
        (target / within, (degree - target) / between)
    }

    /// Same generator with the evaluation nodes drawn like the training
    /// nodes and no re-wiring.
    pub fn in_distribution(&self) -> Self {
        SyntheticGeoConfig {
            rho_test: self.rho_train,
            structural_mix: 0.0,
            ..self.clone()
        }
    }

    /// Class-dependent confounder signal: a linear map of the class index
    /// with zero mean and unit variance under uniform classes.
    pub fn signal(&self, class: u32) -> f64 {
        let c = self.blocks as f64;
        let sd = ((c * c - 1.0) / 12.0).sqrt();
        (class as f64 - (c - 1.0) / 2.0) / sd
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticGeo {
    /// Graph the model is trained on.
    pub graph: Graph,
    pub split: SplitAssignment,
    /// Re-wired copy used only for evaluation; same features and labels.
    pub test_variant: Option<Graph>,
}

impl SyntheticGeo {
    /// Graph the evaluation runs on.
    pub fn eval_graph(&self) -> &Graph {
        self.test_variant.as_ref().unwrap_or(&self.graph)
    }
}

/// Index of the confounder column in generated feature matrices.
pub fn confounder_column(config: &SyntheticGeoConfig) -> usize {
    config.feature_dim
}

fn block_edges(config: &SyntheticGeoConfig, p_in: f64, p_out: f64, rng: &mut rng::Rng) -> Vec<(NodeId, NodeId)> {
    let n = config.num_nodes();
    let block = |v: NodeId| v / config.nodes_per_block;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block(u) == block(v) { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Generates the training graph, its split and the optional re-wired
/// evaluation variant.
///
/// Every random ingredient has its own stream, so configurations that
/// differ only in `rho_test` or `structural_mix` share edges, class means,
/// noise and split.
pub fn generate_synthetic_geo(config: &SyntheticGeoConfig, seed: u64) -> Result<SyntheticGeo> {
    config.validate()?;
    let n = config.num_nodes();
    let d = config.feature_dim;
    let stream = |k: u64| rng::derived_rng(seed, &[tag::SYNTH, k]);
    let labels: Vec<u32> = (0..n).map(|v| (v / config.nodes_per_block) as u32).collect();

    let edges = block_edges(config, config.p_in, config.p_out, &mut stream(0));

    let mut roles = vec![Role::Test; n];
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(&mut stream(1));
    let n_train = ((config.train_fraction * n as f64).round() as usize).max(1);
    let n_val = (config.validation_fraction * n as f64).round() as usize;
    for (rank, &v) in order.iter().enumerate() {
        if rank < n_train {
            roles[v] = Role::Train;
        } else if rank < n_train + n_val {
            roles[v] = Role::Validation;
        }
    }
    let split = SplitAssignment::new(roles);

    // Class means with expected pairwise distance `separation`.
    let mut r = stream(2);
    let scale = config.separation / (2.0 * d as f64).sqrt();
    let means = Array2::from_shape_fn((config.blocks, d), |_| scale * r.sample::<f64, _>(StandardNormal));
    let mut r = stream(3);
    let mut x = Array2::<f64>::zeros((n, d + 1));
    for v in 0..n {
        for j in 0..d {
            x[[v, j]] = means[[labels[v] as usize, j]] + r.sample::<f64, _>(StandardNormal);
        }
    }
    let mut r = stream(4);
    for v in 0..n {
        let rho = if split.role(v) == Role::Train {
            config.rho_train
        } else {
            config.rho_test
        };
        let noise: f64 = r.sample(StandardNormal);
        x[[v, d]] = rho * config.signal(labels[v]) + (1.0 - rho * rho).sqrt() * noise;
    }

    let graph = Graph::new(x, labels, config.blocks, &edges)?;
    let test_variant = if config.structural_mix > 0.0 {
        let (p_in, p_out) = config.rewired_probabilities();
        Some(graph.with_edges(&block_edges(config, p_in, p_out, &mut stream(5)))?)
    } else {
        None
    };
    Ok(SyntheticGeo {
        graph,
        split,
        test_variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticGeoConfig {
        SyntheticGeoConfig {
            blocks: 3,
            nodes_per_block: 40,
            p_in: 0.3,
            p_out: 0.05,
            feature_dim: 4,
            ..SyntheticGeoConfig::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic_geo(&small(), 9).unwrap();
        let b = generate_synthetic_geo(&small(), 9).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.split, b.split);
        assert_eq!(a.test_variant, b.test_variant);
        let c = generate_synthetic_geo(&small(), 10).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn zero_p_out_gives_disjoint_blocks() {
        let cfg = SyntheticGeoConfig {
            p_out: 0.0,
            structural_mix: 0.0,
            ..small()
        };
        let s = generate_synthetic_geo(&cfg, 1).unwrap();
        assert!(s.test_variant.is_none());
        for (u, v) in s.graph.edge_list() {
            assert_eq!(s.graph.label(u), s.graph.label(v));
        }
        assert!(s.graph.num_edges() > 0);
    }

    #[test]
    fn labels_are_uniform_and_split_fractions_hold() {
        let cfg = small();
        let s = generate_synthetic_geo(&cfg, 2).unwrap();
        for c in 0..3u32 {
            assert_eq!(s.graph.labels().iter().filter(|&&y| y == c).count(), 40);
        }
        assert_eq!(s.split.nodes(Role::Train).len(), 84);
        assert_eq!(s.split.nodes(Role::Validation).len(), 24);
        assert_eq!(s.split.nodes(Role::Test).len(), 12);
        assert_eq!(s.graph.num_features(), 5);
    }

    #[test]
    fn rewiring_keeps_degree_and_lowers_homophily() {
        let cfg = SyntheticGeoConfig {
            structural_mix: 1.0,
            ..SyntheticGeoConfig::default()
        };
        let (p_in, p_out) = cfg.rewired_probabilities();
        let deg = |a: f64, b: f64| 129.0 * a + 650.0 * b;
        assert!((deg(p_in, p_out) - deg(cfg.p_in, cfg.p_out)).abs() < 1e-9);
        assert!((129.0 * p_in - 650.0 * cfg.p_out).abs() < 1e-9);
        let s = generate_synthetic_geo(&cfg, 4).unwrap();
        let variant = s.test_variant.unwrap();
        let same = |g: &Graph| {
            let e = g.edge_list();
            e.iter().filter(|&&(u, v)| g.label(u) == g.label(v)).count() as f64 / e.len() as f64
        };
        assert!(same(&variant) < same(&s.graph) - 0.2);
        assert_eq!(variant.features(), s.graph.features());
        let mean_degree = 2.0 * s.graph.num_edges() as f64 / 780.0;
        assert!((mean_degree - 60.0).abs() < 3.0, "{mean_degree}");
    }

    #[test]
    fn in_distribution_variant_shares_everything_but_eval_confounder() {
        let cfg = small();
        let shifted = generate_synthetic_geo(&cfg, 5).unwrap();
        let id = generate_synthetic_geo(&cfg.in_distribution(), 5).unwrap();
        assert_eq!(shifted.graph.edge_list(), id.graph.edge_list());
        assert_eq!(shifted.split, id.split);
        let col = confounder_column(&cfg);
        for v in 0..cfg.num_nodes() {
            let same_row = shifted.graph.feature_row(v)[..col] == id.graph.feature_row(v)[..col];
            assert!(same_row);
            if shifted.split.role(v) == Role::Train {
                assert_eq!(shifted.graph.feature_row(v)[col], id.graph.feature_row(v)[col]);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SyntheticGeoConfig { p_in: 1.5, ..small() },
            SyntheticGeoConfig { rho_test: -2.0, ..small() },
            SyntheticGeoConfig { blocks: 1, ..small() },
            SyntheticGeoConfig { train_fraction: 0.9, validation_fraction: 0.1, ..small() },
            SyntheticGeoConfig { p_in: 0.0, p_out: 1.0, structural_mix: 1.0, ..small() },
        ] {
            assert!(matches!(generate_synthetic_geo(&cfg, 0), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
