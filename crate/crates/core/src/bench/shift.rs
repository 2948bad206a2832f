use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synth::SyntheticGeoConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Role, SplitAssignment};
use crate::rng::{self, tag};
use crate::sampler::draw_weighted;

/// Strength of the feature-distribution bias between train and test nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasLevel {
    None,
    Small,
    Medium,
    Big,
}

impl BiasLevel {
    pub const ALL: [BiasLevel; 4] = [BiasLevel::None, BiasLevel::Small, BiasLevel::Medium, BiasLevel::Big];

    /// Softmax temperature over homogeneity; `None` means uniform.
    pub fn temperature(self) -> Option<f64> {
        match self {
            BiasLevel::None => None,
            BiasLevel::Small => Some(0.5),
            BiasLevel::Medium => Some(0.2),
            BiasLevel::Big => Some(0.05),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BiasLevel::None => "none",
            BiasLevel::Small => "small",
            BiasLevel::Medium => "medium",
            BiasLevel::Big => "big",
        }
    }
}

impl fmt::Display for BiasLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BiasLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown bias level {s:?} (none, small, medium, big)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftKind {
    None,
    FeatureBias { level: BiasLevel },
    Structural { edge_fraction: f64 },
    Synthetic(SyntheticGeoConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    #[serde(flatten)]
    pub kind: ShiftKind,
    #[serde(default)]
    pub seed: u64,
}

impl ShiftSpec {
    pub fn none(seed: u64) -> Self {
        ShiftSpec { kind: ShiftKind::None, seed }
    }

    pub fn feature_bias(level: BiasLevel, seed: u64) -> Self {
        ShiftSpec { kind: ShiftKind::FeatureBias { level }, seed }
    }

    pub fn structural(edge_fraction: f64, seed: u64) -> Result<Self> {
        let spec = ShiftSpec { kind: ShiftKind::Structural { edge_fraction }, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn synthetic(config: SyntheticGeoConfig, seed: u64) -> Result<Self> {
        let spec = ShiftSpec { kind: ShiftKind::Synthetic(config), seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ShiftKind::Structural { edge_fraction } if !(0.0..=1.0).contains(edge_fraction) => Err(
                Error::Config(format!("edge_fraction {edge_fraction} outside [0, 1]")),
            ),
            ShiftKind::Synthetic(c) => c.validate(),
            _ => Ok(()),
        }
    }

    /// Whether the recipe starts from a user-supplied graph.
    pub fn needs_base_graph(&self) -> bool {
        !matches!(self.kind, ShiftKind::Synthetic(_))
    }
}

/// Split sizes for citation-style benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSizes {
    pub per_class_train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            per_class_train: 20,
            validation: 500,
            test: 1000,
        }
    }
}

/// `biased_split_with` using the default validation and test sizes.
pub fn biased_split(g: &Graph, level: BiasLevel, per_class_train: usize, seed: u64) -> Result<SplitAssignment> {
    let sizes = SplitSizes {
        per_class_train,
        ..SplitSizes::default()
    };
    biased_split_with(g, level, sizes, seed)
}

fn tail_weights(h: &[f64], temperature: Option<f64>, sign: f64) -> Vec<f64> {
    match temperature {
        None => vec![1.0; h.len()],
        Some(t) => {
            // Shift by the extreme score so the largest weight is exactly 1.
            let top = h.iter().map(|&x| sign * x).fold(f64::NEG_INFINITY, f64::max);
            h.iter().map(|&x| ((sign * x - top) / t).exp()).collect()
        }
    }
}

/// Homogeneity-biased split over nodes with at least one neighbor.
///
/// Training nodes are drawn per class without replacement with probability
/// proportional to `exp(-homogeneity / tau)`, test nodes from the remaining
/// candidates with `exp(+homogeneity / tau)`, and validation nodes uniformly
/// from what is left. `tau` is infinite (uniform) for [`BiasLevel::None`].
/// Test and validation sets shrink when too few nodes remain.
pub fn biased_split_with(g: &Graph, level: BiasLevel, sizes: SplitSizes, seed: u64) -> Result<SplitAssignment> {
    let n = g.num_nodes();
    let mut homogeneity = vec![f64::NAN; n];
    let mut by_class: Vec<Vec<NodeId>> = vec![Vec::new(); g.num_classes()];
    for v in 0..n {
        if g.degree(v) > 0 {
            homogeneity[v] = g.label_homogeneity(v)?;
            by_class[g.label(v) as usize].push(v);
        }
    }
    if let Some((c, have)) = by_class
        .iter()
        .enumerate()
        .map(|(c, nodes)| (c, nodes.len()))
        .find(|&(_, len)| len < sizes.per_class_train)
    {
        return Err(Error::Validation(format!(
            "class {c} has {have} candidate nodes with degree >= 1, {} required",
            sizes.per_class_train
        )));
    }

    let tau = level.temperature();
    let mut split = SplitAssignment::all_unused(n);
    let mut rng = rng::derived_rng(seed, &[tag::SPLIT]);
    for nodes in &by_class {
        let h: Vec<f64> = nodes.iter().map(|&v| homogeneity[v]).collect();
        let w = tail_weights(&h, tau, -1.0);
        for i in draw_weighted(&w, sizes.per_class_train, false, &mut rng) {
            split.set(nodes[i], Role::Train);
        }
    }

    let rest: Vec<NodeId> = (0..n)
        .filter(|&v| g.degree(v) > 0 && split.role(v) == Role::Unused)
        .collect();
    let h: Vec<f64> = rest.iter().map(|&v| homogeneity[v]).collect();
    let w = tail_weights(&h, tau, 1.0);
    for i in draw_weighted(&w, sizes.test.min(rest.len()), false, &mut rng) {
        split.set(rest[i], Role::Test);
    }

    let rest: Vec<NodeId> = (0..n).filter(|&v| split.role(v) == Role::Unused).collect();
    let w = vec![1.0; rest.len()];
    for i in draw_weighted(&w, sizes.validation.min(rest.len()), false, &mut rng) {
        split.set(rest[i], Role::Validation);
    }
    Ok(split)
}

/// Mean label homogeneity of the nodes holding `role`.
pub fn mean_homogeneity(g: &Graph, split: &SplitAssignment, role: Role) -> Result<f64> {
    let nodes = split.nodes(role);
    if nodes.is_empty() {
        return Err(Error::Validation(format!("no {role} nodes")));
    }
    let mut sum = 0.0;
    for &v in &nodes {
        sum += g.label_homogeneity(v)?;
    }
    Ok(sum / nodes.len() as f64)
}
