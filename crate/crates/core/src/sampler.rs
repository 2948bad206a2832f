//! Causal-attention neighbor sampling.
//!
//! For a target node `v` with known label, each neighbor `u` sharing that
//! label gets the causal weight `1 / (N * p(u | U))`, where `U` is `u`'s own
//! neighborhood. Both densities are Kronecker-delta kernel density estimates
//! over the population of known-label nodes: `u` enters through its label and
//! `U` through a discrete [`NeighborhoodSignature`]. Every other neighbor is
//! weighted by a softmax over single-head attention scores with a fixed
//! projection. The two branches receive probability mass proportional to
//! their neighbor counts.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSource, NodeId};
use crate::kernel::discrete_kde;
use crate::rng::{self, tag, Rng};

/// Discrete summary of a node's neighborhood: the label histogram of its
/// known-label neighbors rounded to quarters, and `floor(log2(degree))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeighborhoodSignature {
    /// Per-class neighbor share in quarters, each in `0..=4`.
    pub quarters: Vec<u8>,
    pub degree_bucket: u32,
}

impl NeighborhoodSignature {
    /// Histogram as proportions in `{0, 0.25, 0.5, 0.75, 1}`.
    pub fn histogram(&self) -> Vec<f64> {
        self.quarters.iter().map(|&q| q as f64 / 4.0).collect()
    }
}

/// Signature of `v`'s neighborhood under the labels visible in `labels`.
///
/// Returns `Ok(None)` (the empty-signature marker) when no neighbor of `v`
/// has a known label.
pub fn signature(
    g: &Graph,
    v: NodeId,
    labels: &dyn LabelSource,
) -> Result<Option<NeighborhoodSignature>> {
    let nbrs = g.neighbors(v)?;
    if nbrs.is_empty() {
        return Err(Error::IsolatedNode(v));
    }
    let mut counts = vec![0usize; g.num_classes()];
    let mut known = 0usize;
    for &u in nbrs {
        if let Some(y) = labels.known_label(u) {
            counts[y as usize] += 1;
            known += 1;
        }
    }
    if known == 0 {
        return Ok(None);
    }
    // round(4 * c / k) with ties rounded up, in integers.
    let quarters = counts
        .iter()
        .map(|&c| ((8 * c + known) / (2 * known)) as u8)
        .collect();
    Ok(Some(NeighborhoodSignature {
        quarters,
        degree_bucket: nbrs.len().ilog2(),
    }))
}

/// Signatures of every node plus the counts needed for the causal weight.
///
/// The population is the set of known-label nodes. `joint` counts
/// (label, signature) pairs and `marginal` counts signatures within that
/// population; nodes with an empty or undefined signature never match.
#[derive(Debug, Clone)]
pub struct SignatureTable {
    signatures: Vec<Option<NeighborhoodSignature>>,
    population: usize,
    marginal: HashMap<NeighborhoodSignature, usize>,
    joint: HashMap<(u32, NeighborhoodSignature), usize>,
}

impl SignatureTable {
    pub fn build(g: &Graph, labels: &dyn LabelSource) -> Self {
        let signatures: Vec<Option<NeighborhoodSignature>> = (0..g.num_nodes())
            .into_par_iter()
            .map(|v| {
                if g.degree(v) == 0 {
                    None
                } else {
                    signature(g, v, labels).expect("node in range with degree >= 1")
                }
            })
            .collect();
        let mut population = 0;
        let mut marginal = HashMap::new();
        let mut joint = HashMap::new();
        for (v, sig) in signatures.iter().enumerate() {
            let Some(y) = labels.known_label(v) else {
                continue;
            };
            population += 1;
            if let Some(sig) = sig {
                *marginal.entry(sig.clone()).or_insert(0) += 1;
                *joint.entry((y, sig.clone())).or_insert(0) += 1;
            }
        }
        SignatureTable {
            signatures,
            population,
            marginal,
            joint,
        }
    }

    pub fn signature(&self, v: NodeId) -> Option<&NeighborhoodSignature> {
        self.signatures[v].as_ref()
    }

    /// Number of known-label nodes.
    pub fn population(&self) -> usize {
        self.population
    }

    /// Kronecker KDE of the signature marginal, `p(U)`.
    pub fn density_signature(&self, sig: &NeighborhoodSignature) -> f64 {
        self.marginal.get(sig).copied().unwrap_or(0) as f64 / self.population.max(1) as f64
    }

    /// Kronecker KDE of the joint, `p(y, U)`.
    pub fn density_joint(&self, label: u32, sig: &NeighborhoodSignature) -> f64 {
        self.joint.get(&(label, sig.clone())).copied().unwrap_or(0) as f64
            / self.population.max(1) as f64
    }
}

/// Causal weight `1 / (N * p(u | U))` of a known-label neighbor `u`.
///
/// `p(u | U) = p(u, U) / p(U)` where both are Kronecker KDEs over the
/// known-label population; in counts this is
/// `#sig_match / (N * #(label and sig)_match)`.
pub fn causal_weight(
    g: &Graph,
    neighbor: NodeId,
    labels: &dyn LabelSource,
    table: &SignatureTable,
) -> Result<f64> {
    g.check_node(neighbor)?;
    let label = labels.known_label(neighbor).ok_or_else(|| {
        Error::Validation(format!("causal weight of node {neighbor} without a known label"))
    })?;
    let sig = table.signature(neighbor).ok_or_else(|| {
        Error::Validation(format!("causal weight of node {neighbor} with an empty signature"))
    })?;
    let n_pop = table.population();
    let count_sig = table.marginal.get(sig).copied().unwrap_or(0);
    let count_joint = table.joint.get(&(label, sig.clone())).copied().unwrap_or(0);
    if count_sig == 0 || count_joint == 0 {
        return Err(Error::Numeric(format!(
            "zero conditional density for node {neighbor}"
        )));
    }
    Ok(count_sig as f64 / (n_pop as f64 * count_joint as f64))
}

/// Slow path of [`causal_weight`] that evaluates the two density estimates
/// with [`discrete_kde`] over an explicit population list.
pub fn causal_weight_kde(
    neighbor: NodeId,
    labels: &dyn LabelSource,
    table: &SignatureTable,
) -> Option<f64> {
    let label = labels.known_label(neighbor)?;
    let sig = table.signature(neighbor)?.clone();
    let population: Vec<(u32, Option<NeighborhoodSignature>)> = (0..labels.num_nodes())
        .filter_map(|n| labels.known_label(n).map(|y| (y, table.signature(n).cloned())))
        .collect();
    let sigs: Vec<Option<NeighborhoodSignature>> =
        population.iter().map(|(_, s)| s.clone()).collect();
    let p_u = discrete_kde(&Some(sig.clone()), &sigs);
    let p_joint = discrete_kde(&(label, Some(sig)), &population);
    let p_cond = p_joint / p_u;
    Some(1.0 / (population.len() as f64 * p_cond))
}

/// Fixed single-head attention projection over `[x_target; x_neighbor]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionProjection {
    weights: Vec<f64>,
}

impl AttentionProjection {
    /// Kaiming-uniform draw, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))` with
    /// `fan_in = 2 * feature_dim`.
    pub fn kaiming_uniform(feature_dim: usize, seed: u64) -> Self {
        let fan_in = (2 * feature_dim).max(1);
        let bound = (6.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let mut rng = rng::derived_rng(seed, &[tag::ATTENTION_INIT]);
        AttentionProjection {
            weights: (0..2 * feature_dim).map(|_| dist.sample(&mut rng)).collect(),
        }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.len() % 2 != 0 || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation(
                "attention projection needs an even number of finite weights".into(),
            ));
        }
        Ok(AttentionProjection { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len() / 2
    }

    fn score(&self, x_target: &[f64], x_neighbor: &[f64]) -> f64 {
        let d = self.feature_dim();
        let t: f64 = self.weights[..d].iter().zip(x_target).map(|(w, x)| w * x).sum();
        let n: f64 = self.weights[d..].iter().zip(x_neighbor).map(|(w, x)| w * x).sum();
        t + n
    }

    /// Projection scaled by a constant.
    pub fn scaled(&self, factor: f64) -> Self {
        AttentionProjection {
            weights: self.weights.iter().map(|w| w * factor).collect(),
        }
    }
}

/// Softmax over `proj . [x_target; x_i]` across the given neighbors.
pub fn attention_weight(
    proj: &AttentionProjection,
    x_target: &[f64],
    x_neighbors: &[&[f64]],
) -> Result<Vec<f64>> {
    let d = proj.feature_dim();
    if x_target.len() != d || x_neighbors.iter().any(|x| x.len() != d) {
        return Err(Error::Shape(format!(
            "attention projection expects feature dimension {d}"
        )));
    }
    if x_neighbors.is_empty() {
        return Err(Error::Validation(
            "attention weights over an empty neighbor set".into(),
        ));
    }
    let scores: Vec<f64> = x_neighbors
        .iter()
        .map(|x| proj.score(x_target, x))
        .collect();
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite attention score for neighbor #{i}")));
    }
    Ok(softmax(&scores))
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Causal,
    Attention,
    Uniform,
}

/// Sampling distribution over one node's neighbors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingProfile {
    pub target: NodeId,
    pub neighbors: Vec<NodeId>,
    pub weights: Vec<f64>,
    pub branches: Vec<Branch>,
}

impl SamplingProfile {
    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn uniform(g: &Graph, v: NodeId) -> Self {
        let neighbors = g.neighbors_unchecked(v).to_vec();
        let k = neighbors.len();
        SamplingProfile {
            target: v,
            weights: vec![1.0 / k as f64; k],
            branches: vec![Branch::Uniform; k],
            neighbors,
        }
    }
}

/// Causal-attention sampling distribution for `v`.
///
/// Neighbors whose known label equals `v`'s known label take the causal
/// branch; all others, and every neighbor when `v`'s label is unknown, take
/// the attention branch. Within each branch weights are normalized to the
/// branch's share of the degree.
pub fn sampling_profile(
    g: &Graph,
    v: NodeId,
    labels: &dyn LabelSource,
    table: &SignatureTable,
    proj: &AttentionProjection,
) -> Result<SamplingProfile> {
    let nbrs = g.neighbors(v)?;
    let deg = nbrs.len();
    if deg == 0 {
        return Ok(SamplingProfile {
            target: v,
            neighbors: Vec::new(),
            weights: Vec::new(),
            branches: Vec::new(),
        });
    }
    let own = labels.known_label(v);
    let branches: Vec<Branch> = nbrs
        .iter()
        .map(|&u| match (own, labels.known_label(u)) {
            (Some(a), Some(b)) if a == b => Branch::Causal,
            _ => Branch::Attention,
        })
        .collect();

    let mut weights = vec![0.0; deg];
    let causal_idx: Vec<usize> = (0..deg).filter(|&i| branches[i] == Branch::Causal).collect();
    let attn_idx: Vec<usize> = (0..deg).filter(|&i| branches[i] == Branch::Attention).collect();

    if !causal_idx.is_empty() {
        let raw = causal_idx
            .iter()
            .map(|&i| causal_weight(g, nbrs[i], labels, table))
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = raw.iter().sum();
        let mass = causal_idx.len() as f64 / deg as f64;
        for (&i, w) in causal_idx.iter().zip(raw) {
            weights[i] = w / total * mass;
        }
    }
    if !attn_idx.is_empty() {
        let xs: Vec<&[f64]> = attn_idx.iter().map(|&i| g.feature_row(nbrs[i])).collect();
        let att = attention_weight(proj, g.feature_row(v), &xs).map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!("{m} of node {v}")),
            other => other,
        })?;
        let mass = attn_idx.len() as f64 / deg as f64;
        for (&i, w) in attn_idx.iter().zip(att) {
            weights[i] = w * mass;
        }
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok(SamplingProfile {
        target: v,
        neighbors: nbrs.to_vec(),
        weights,
        branches,
    })
}

/// Draws `k` indices from `weights`: with replacement when `replace`,
/// otherwise by successive draws renormalized over the remaining mass.
/// Zero-weight entries are never drawn, so fewer than `k` indices come back
/// when the positive-weight entries run out.
pub fn draw_weighted(weights: &[f64], k: usize, replace: bool, rng: &mut Rng) -> Vec<usize> {
    let mut remaining: Vec<f64> = weights.iter().map(|&w| w.max(0.0)).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = remaining.iter().sum();
        if total <= 0.0 {
            break;
        }
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in remaining.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if u < acc {
                break;
            }
        }
        let i = pick.expect("positive total implies a positive entry");
        out.push(i);
        if !replace {
            remaining[i] = 0.0;
        }
    }
    out
}

/// Draws `s` neighbors from a profile: with replacement when the degree is
/// below `s`, without replacement otherwise.
pub fn sample_neighbors(profile: &SamplingProfile, s: usize, seed: u64) -> Vec<NodeId> {
    if s == 0 {
        log::warn!("neighbor sample of size 0 requested for node {}", profile.target);
        return Vec::new();
    }
    if profile.is_empty() {
        return Vec::new();
    }
    let replace = profile.neighbors.len() < s;
    let mut rng = rng::rng_from(seed);
    draw_weighted(&profile.weights, s, replace, &mut rng)
        .into_iter()
        .map(|i| profile.neighbors[i])
        .collect()
}

/// Profiles for every node of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    profiles: Vec<SamplingProfile>,
}

impl ProfileSet {
    pub fn uniform(g: &Graph) -> Self {
        ProfileSet {
            profiles: (0..g.num_nodes()).map(|v| SamplingProfile::uniform(g, v)).collect(),
        }
    }

    /// Causal-attention profiles for all nodes, computed in parallel.
    pub fn causal_attention(
        g: &Graph,
        labels: &dyn LabelSource,
        proj: &AttentionProjection,
    ) -> Result<Self> {
        let table = SignatureTable::build(g, labels);
        let profiles = (0..g.num_nodes())
            .into_par_iter()
            .map(|v| sampling_profile(g, v, labels, &table, proj))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProfileSet { profiles })
    }

    pub fn get(&self, v: NodeId) -> &SamplingProfile {
        &self.profiles[v]
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Diagnostic dump: node id -> list of (neighbor, weight, branch).
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Entry {
            neighbor: NodeId,
            weight: f64,
            branch: Branch,
        }
        let map: BTreeMap<NodeId, Vec<Entry>> = self
            .profiles
            .iter()
            .map(|p| {
                let entries = p
                    .neighbors
                    .iter()
                    .zip(&p.weights)
                    .zip(&p.branches)
                    .map(|((&neighbor, &weight), &branch)| Entry {
                        neighbor,
                        weight,
                        branch,
                    })
                    .collect();
                (p.target, entries)
            })
            .collect();
        serde_json::to_value(map).expect("profile map serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Neighbor sampling strategy used by the encoder.
#[derive(Debug, Clone)]
pub enum NeighborSampler {
    Uniform,
    Profiles(ProfileSet),
}

impl NeighborSampler {
    /// Draws `s` neighbors of `v`; the stream is keyed by `(seed, layer, v)`.
    pub fn draw(&self, g: &Graph, v: NodeId, s: usize, seed: u64, layer: u64) -> Vec<NodeId> {
        let stream = rng::derive_seed(seed, &[layer, v as u64]);
        match self {
            NeighborSampler::Uniform => {
                if g.degree(v) == 0 {
                    return Vec::new();
                }
                sample_neighbors(&SamplingProfile::uniform(g, v), s, stream)
            }
            NeighborSampler::Profiles(set) => sample_neighbors(set.get(v), s, stream),
        }
    }
}

pub(crate) const LAYER_OUTER: u64 = tag::SAMPLE_OUTER;
pub(crate) const LAYER_INNER: u64 = tag::SAMPLE_INNER;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::KnownLabels;
    use ndarray::Array2;

    fn star(labels: Vec<u32>, classes: usize) -> Graph {
        let n = labels.len();
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Graph::new(Array2::zeros((n, 2)), labels, classes, &edges).unwrap()
    }

    fn all_known(g: &Graph) -> KnownLabels {
        KnownLabels::new(g.labels().iter().map(|&y| Some(y)).collect())
    }

    #[test]
    fn signature_examples() {
        let g = star(vec![0, 0, 0, 0, 0], 2);
        let sig = signature(&g, 0, &all_known(&g)).unwrap().unwrap();
        assert_eq!(sig.histogram(), vec![1.0, 0.0]);
        assert_eq!(sig.degree_bucket, 2);

        let g = star(vec![1, 0, 0, 0, 1], 2);
        let sig = signature(&g, 0, &all_known(&g)).unwrap().unwrap();
        assert_eq!(sig.histogram(), vec![0.75, 0.25]);
        assert_eq!(sig.degree_bucket, 2);

        let none = KnownLabels::none(5);
        assert_eq!(signature(&g, 0, &none).unwrap(), None);
        let iso = Graph::new(Array2::zeros((2, 1)), vec![0, 0], 1, &[]).unwrap();
        assert!(matches!(signature(&iso, 0, &KnownLabels::none(2)), Err(Error::IsolatedNode(0))));
    }

    #[test]
    fn signature_rounds_half_up() {
        // 1 of 8 known neighbors in class 1: 0.125 -> 0.25; 7/8 -> 0.875 -> 1.
        let mut labels = vec![0u32; 9];
        labels[1] = 1;
        let g = star(labels, 2);
        let sig = signature(&g, 0, &all_known(&g)).unwrap().unwrap();
        assert_eq!(sig.quarters, vec![4, 1]);
        assert_eq!(sig.degree_bucket, 3);
    }

    #[test]
    fn causal_weight_single_class_single_signature() {
        // Complete graph on 4 nodes, one label: every node has the same
        // signature, so p(v|U) = 1 and w = 1 / N.
        let edges = vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let g = Graph::new(Array2::zeros((4, 1)), vec![0; 4], 1, &edges).unwrap();
        let known = all_known(&g);
        let table = SignatureTable::build(&g, &known);
        for v in 0..4 {
            assert_eq!(causal_weight(&g, v, &known, &table).unwrap(), 0.25);
            assert_eq!(causal_weight_kde(v, &known, &table).unwrap(), 0.25);
        }
    }

    #[test]
    fn causal_weight_half_conditional() {
        // Hub 1 (label 1) links 0, 2 (label 0) and 4, 6 (label 1): those four
        // share the signature "one label-1 neighbor, degree 1", and two of
        // them carry label 0. Pairs (3,5), (7,8) and isolated 9 fill the
        // population up to N = 10.
        let labels = vec![0, 1, 0, 0, 1, 0, 1, 0, 0, 1];
        let edges = vec![(1, 0), (1, 2), (1, 4), (1, 6), (3, 5), (7, 8)];
        let g = Graph::new(Array2::zeros((10, 1)), labels, 2, &edges).unwrap();
        let known = all_known(&g);
        let table = SignatureTable::build(&g, &known);
        assert_eq!(table.population(), 10);
        let sig = table.signature(0).unwrap();
        assert_eq!(table.density_signature(sig), 0.4);
        assert_eq!(table.density_joint(0, sig), 0.2);
        assert_eq!(causal_weight(&g, 0, &known, &table).unwrap(), 0.2);
        assert_eq!(causal_weight_kde(0, &known, &table).unwrap(), 0.2);
        // Unique (label, signature) holder in a size-1 class: p = 1, w = 1/N.
        assert_eq!(causal_weight(&g, 1, &known, &table).unwrap(), 0.1);
    }

    #[test]
    fn attention_examples() {
        let proj = AttentionProjection::kaiming_uniform(3, 1);
        let w = attention_weight(&proj, &[1.0, 2.0, 3.0], &[&[0.5, 0.5, 0.5], &[0.5, 0.5, 0.5]]).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        let w = attention_weight(&proj, &[1.0, 2.0, 3.0], &[&[9.0, -1.0, 0.0]]).unwrap();
        assert_eq!(w, vec![1.0]);
        assert!(attention_weight(&proj, &[1.0], &[&[1.0]]).is_err());
        let bad = AttentionProjection::from_weights(vec![f64::MAX, f64::MAX]).unwrap();
        assert!(matches!(
            attention_weight(&bad, &[f64::MAX], &[&[f64::MAX]]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn attention_matches_scalar_oracle() {
        let proj = AttentionProjection::kaiming_uniform(4, 77);
        let mut rng = rng::rng_from(3);
        let xt: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let got = attention_weight(&proj, &xt, &refs).unwrap();
        let w = proj.weights();
        let mut exps = Vec::new();
        for x in &xs {
            let mut s = 0.0;
            for k in 0..4 {
                s += w[k] * xt[k];
            }
            for k in 0..4 {
                s += w[4 + k] * x[k];
            }
            exps.push(s.exp());
        }
        let z: f64 = exps.iter().sum();
        for (g, e) in got.iter().zip(&exps) {
            assert!((g - e / z).abs() < 1e-12);
        }
    }

    #[test]
    fn kaiming_bounds_and_determinism() {
        let a = AttentionProjection::kaiming_uniform(50, 4);
        assert_eq!(a, AttentionProjection::kaiming_uniform(50, 4));
        let bound = (6.0f64 / 100.0).sqrt();
        assert!(a.weights().iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn profile_branch_extremes() {
        let mut x = Array2::zeros((5, 2));
        for v in 0..5 {
            x[[v, 0]] = v as f64;
            x[[v, 1]] = -(v as f64) * 0.5;
        }
        let edges: Vec<_> = (1..5).map(|i| (0, i)).collect();
        let proj = AttentionProjection::kaiming_uniform(2, 9);

        let g = Graph::new(x.clone(), vec![0; 5], 2, &edges).unwrap();
        let known = all_known(&g);
        let table = SignatureTable::build(&g, &known);
        let p = sampling_profile(&g, 0, &known, &table, &proj).unwrap();
        assert!(p.branches.iter().all(|&b| b == Branch::Causal));
        let raw: Vec<f64> = (1..5).map(|u| causal_weight(&g, u, &known, &table).unwrap()).collect();
        let z: f64 = raw.iter().sum();
        for (w, r) in p.weights.iter().zip(&raw) {
            assert!((w - r / z).abs() < 1e-15);
        }

        let g = Graph::new(x, vec![0, 1, 1, 1, 1], 2, &edges).unwrap();
        let known = all_known(&g);
        let table = SignatureTable::build(&g, &known);
        let p = sampling_profile(&g, 0, &known, &table, &proj).unwrap();
        assert!(p.branches.iter().all(|&b| b == Branch::Attention));
        let xs: Vec<&[f64]> = (1..5).map(|u| g.feature_row(u)).collect();
        let att = attention_weight(&proj, g.feature_row(0), &xs).unwrap();
        for (w, a) in p.weights.iter().zip(&att) {
            assert!((w - a).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_profile_splits_mass_by_branch_size() {
        let mut x = Array2::zeros((5, 2));
        for v in 0..5 {
            x[[v, 0]] = (v as f64).sin();
            x[[v, 1]] = (v as f64).cos();
        }
        // target 0 (label 0) with neighbors 1,2 (label 0) and 3,4 (label 1);
        // extra edges make the causal weights unequal.
        let edges = vec![(0, 1), (0, 2), (0, 3), (0, 4), (1, 3), (2, 4), (1, 4)];
        let g = Graph::new(x, vec![0, 0, 0, 1, 1], 2, &edges).unwrap();
        let known = all_known(&g);
        let table = SignatureTable::build(&g, &known);
        let proj = AttentionProjection::kaiming_uniform(2, 5);
        let p = sampling_profile(&g, 0, &known, &table, &proj).unwrap();
        assert_eq!(
            p.branches,
            vec![Branch::Causal, Branch::Causal, Branch::Attention, Branch::Attention]
        );
        let c: Vec<f64> = [1, 2].iter().map(|&u| causal_weight(&g, u, &known, &table).unwrap()).collect();
        let a = attention_weight(&proj, g.feature_row(0), &[g.feature_row(3), g.feature_row(4)]).unwrap();
        let cz: f64 = c.iter().sum();
        let expect = [0.5 * c[0] / cz, 0.5 * c[1] / cz, 0.5 * a[0], 0.5 * a[1]];
        for (w, e) in p.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-12);
        }
        assert!((p.weights[0] + p.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_target_label_routes_everything_to_attention() {
        let g = star(vec![0, 0, 0, 1], 2);
        let known = KnownLabels::new(vec![None, Some(0), Some(0), Some(1)]);
        let table = SignatureTable::build(&g, &known);
        let p = sampling_profile(&g, 0, &known, &table, &AttentionProjection::kaiming_uniform(2, 0)).unwrap();
        assert!(p.branches.iter().all(|&b| b == Branch::Attention));
        let iso = Graph::new(Array2::zeros((2, 2)), vec![0, 0], 1, &[]).unwrap();
        let t = SignatureTable::build(&iso, &KnownLabels::none(2));
        let p = sampling_profile(&iso, 0, &KnownLabels::none(2), &t, &AttentionProjection::kaiming_uniform(2, 0)).unwrap();
        assert!(p.is_empty());
    }

    fn profile(weights: Vec<f64>) -> SamplingProfile {
        let k = weights.len();
        SamplingProfile {
            target: 0,
            neighbors: (10..10 + k).collect(),
            weights,
            branches: vec![Branch::Attention; k],
        }
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(sample_neighbors(&profile(vec![1.0]), 3, 1), vec![10, 10, 10]);
        assert!(sample_neighbors(&profile(vec![1.0]), 0, 1).is_empty());
        let p = profile(vec![0.5, 0.0, 0.5]);
        for seed in 0..10_000 {
            assert!(!sample_neighbors(&p, 2, seed).contains(&11));
        }
        let p = profile(vec![0.8, 0.2]);
        let hits = (0..100_000u64)
            .filter(|&seed| sample_neighbors(&p, 1, seed) == vec![10])
            .count();
        let freq = hits as f64 / 1e5;
        assert!((freq - 0.8).abs() < 0.01, "{freq}");
    }

    #[test]
    fn without_replacement_draws_distinct() {
        let p = profile(vec![0.1, 0.2, 0.3, 0.4]);
        for seed in 0..200 {
            let mut got = sample_neighbors(&p, 4, seed);
            got.sort_unstable();
            assert_eq!(got, vec![10, 11, 12, 13]);
            assert_eq!(sample_neighbors(&p, 2, seed), sample_neighbors(&p, 2, seed));
        }
    }

    #[test]
    fn profile_json_has_triples() {
        let g = star(vec![0, 0, 1], 2);
        let set = ProfileSet::uniform(&g);
        let j = set.to_json();
        assert_eq!(j["0"][1]["neighbor"], 2);
        assert_eq!(j["0"][1]["branch"], "uniform");
    }
}
