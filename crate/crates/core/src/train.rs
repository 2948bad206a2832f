//! Training loop, inference and checkpoints.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{self, Batch, EncoderParams, SampleSpec};
use crate::error::{Error, Result};
use crate::graph::{write_with, Graph, KnownLabels, LabelSource, NodeId, Role, SplitAssignment};
use crate::hsic::{self, HsicConfig};
use crate::metrics::{self, Metrics};
use crate::rng::{self, tag};
use crate::sampler::{AttentionProjection, NeighborSampler, ProfileSet};

pub const CHECKPOINT_VERSION: u32 = 1;
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Coefficient of `|params|^2` in the loss.
    pub l2: f64,
    /// Neighbors sampled per node and layer.
    pub sample_size: usize,
    pub hidden: usize,
    /// Loss weights are recomputed at every epoch divisible by this period.
    pub weight_update_period: usize,
    pub seed: u64,
    pub use_ca_sampling: bool,
    pub use_hsic_weights: bool,
    pub hsic: HsicConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 20,
            learning_rate: 0.01,
            l2: 1e-3,
            sample_size: 10,
            hidden: 128,
            weight_update_period: 100,
            seed: 0,
            use_ca_sampling: true,
            use_hsic_weights: true,
            hsic: HsicConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.sample_size == 0 {
            return fail("sample_size must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0) {
            return fail("l2 must be nonnegative");
        }
        if self.hidden == 0 {
            return fail("hidden must be positive");
        }
        if self.weight_update_period == 0 {
            return fail("weight_update_period must be positive");
        }
        Ok(())
    }

    /// Model family name of the ablation switches.
    pub fn model_name(&self) -> &'static str {
        model_name(self.use_ca_sampling, self.use_hsic_weights)
    }
}

pub fn model_name(ca: bool, hsic: bool) -> &'static str {
    match (ca, hsic) {
        (false, false) => "GraphSAGE",
        (true, false) => "CA-GraphSAGE",
        (false, true) => "HSIC-GraphSAGE",
        (true, true) => "FSM-IRL",
    }
}

/// Short hex digest of a value's JSON serialization.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightUpdate {
    pub epoch: usize,
    /// Mean over chunks of the held-out dependence before and after.
    pub initial: f64,
    pub optimized: f64,
    pub diverged_chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub weight_updates: Vec<WeightUpdate>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

impl History {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// CSV with header `epoch,train_loss,val_acc,val_macro_f1`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
        write_with(path, |w| {
            use std::io::Write;
            writeln!(w, "epoch,train_loss,val_acc,val_macro_f1")?;
            for e in &self.epochs {
                writeln!(
                    w,
                    "{},{:.6},{},{}",
                    e.epoch,
                    e.train_loss,
                    opt(e.val_accuracy),
                    opt(e.val_macro_f1)
                )?;
            }
            Ok(())
        })
    }
}

/// Parameters plus everything inference needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: EncoderParams,
    /// Attention projection when causal-attention sampling is on.
    pub projection: Option<AttentionProjection>,
    pub config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    input_dim: usize,
    hidden: usize,
    num_classes: usize,
    config_hash: String,
    seed: u64,
    model: TrainedModel,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            input_dim: self.params.input_dim(),
            hidden: self.params.hidden(),
            num_classes: self.params.num_classes(),
            config_hash: config_hash(&self.config),
            seed: self.config.seed,
            model: self.clone(),
        };
        let text = serde_json::to_string(&ck)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let p = &ck.model.params;
        if p.input_dim() != ck.input_dim || p.hidden() != ck.hidden || p.num_classes() != ck.num_classes {
            return Err(Error::Validation("checkpoint dimensions disagree with parameters".into()));
        }
        if !p.is_finite() {
            return Err(Error::Validation("checkpoint holds non-finite parameters".into()));
        }
        Ok(ck.model)
    }

    /// Sampler for label-free inference on `g`: attention-only profiles with
    /// causal-attention sampling, uniform draws otherwise.
    pub fn inference_sampler(&self, g: &Graph) -> Result<NeighborSampler> {
        inference_sampler(g, self.projection.as_ref())
    }

    /// Argmax predictions. Reads features and structure only.
    pub fn predict(&self, g: &Graph, nodes: &[NodeId]) -> Result<Vec<u32>> {
        let sampler = self.inference_sampler(g)?;
        predict_with(g, nodes, &self.params, &sampler, &self.config)
    }

    /// Layer-two embeddings of `nodes` under label-free inference.
    pub fn embed(&self, g: &Graph, nodes: &[NodeId]) -> Result<Array2<f64>> {
        let sampler = self.inference_sampler(g)?;
        let spec = SampleSpec {
            sampler: &sampler,
            size: self.config.sample_size,
            seed: rng::derive_seed(self.config.seed, &[tag::EVAL]),
        };
        let parts = nodes
            .chunks(EVAL_CHUNK)
            .map(|c| encoder::forward(g, c, &self.params, spec).map(|f| f.embeddings))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
    }
}

fn inference_sampler(g: &Graph, projection: Option<&AttentionProjection>) -> Result<NeighborSampler> {
    Ok(match projection {
        Some(p) => NeighborSampler::Profiles(ProfileSet::causal_attention(
            g,
            &KnownLabels::none(g.num_nodes()),
            p,
        )?),
        None => NeighborSampler::Uniform,
    })
}

fn predict_with(
    g: &Graph,
    nodes: &[NodeId],
    params: &EncoderParams,
    sampler: &NeighborSampler,
    config: &TrainConfig,
) -> Result<Vec<u32>> {
    let spec = SampleSpec {
        sampler,
        size: config.sample_size,
        seed: rng::derive_seed(config.seed, &[tag::EVAL]),
    };
    let mut out = Vec::with_capacity(nodes.len());
    for chunk in nodes.chunks(EVAL_CHUNK) {
        out.extend(encoder::forward(g, chunk, params, spec)?.predictions());
    }
    Ok(out)
}

fn score_nodes(predictions: &[u32], nodes: &[NodeId], labels: &dyn LabelSource, classes: usize) -> Result<Metrics> {
    let truth = nodes
        .iter()
        .map(|&v| {
            labels
                .known_label(v)
                .ok_or_else(|| Error::Validation(format!("node {v} has no evaluation label")))
        })
        .collect::<Result<Vec<_>>>()?;
    metrics::score(predictions, &truth, classes)
}

/// Accuracy and macro-F1 of `model` on `nodes`. Predictions are made
/// without label access; `labels` is read only for scoring.
pub fn evaluate(
    model: &TrainedModel,
    g: &Graph,
    nodes: &[NodeId],
    labels: &dyn LabelSource,
) -> Result<Metrics> {
    if nodes.is_empty() {
        return Err(Error::Validation("evaluation over an empty node set".into()));
    }
    let predictions = model.predict(g, nodes)?;
    score_nodes(&predictions, nodes, labels, model.params.num_classes())
}

struct Adam {
    m: EncoderParams,
    v: EncoderParams,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &EncoderParams, lr: f64) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let blocks = params
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .zip(self.m.blocks_mut())
            .zip(self.v.blocks_mut());
        for (((p, g), m), v) in blocks {
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains on the split's training nodes of `g` and keeps the parameters with
/// the best validation accuracy (the last ones when there is no validation
/// split).
pub fn train(g: &Graph, split: &SplitAssignment, config: &TrainConfig) -> Result<(TrainedModel, History)> {
    config.validate()?;
    if split.len() != g.num_nodes() {
        return Err(Error::Shape(format!(
            "split covers {} nodes, graph has {}",
            split.len(),
            g.num_nodes()
        )));
    }
    let train_nodes = split.nodes(Role::Train);
    if train_nodes.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let val_nodes = split.nodes(Role::Validation);
    let train_labels = KnownLabels::from_split(g, split, Role::Train);
    let val_labels = KnownLabels::from_split(g, split, Role::Validation);

    let mut params = encoder::init_params(g.num_features(), config.hidden, g.num_classes(), config.seed)?;
    let projection = config
        .use_ca_sampling
        .then(|| AttentionProjection::kaiming_uniform(g.num_features(), config.seed));
    let model_of = |params: EncoderParams| TrainedModel {
        params,
        projection: projection.clone(),
        config: config.clone(),
    };
    let mut history = History::default();
    if config.epochs == 0 {
        return Ok((model_of(params), history));
    }

    let train_sampler = match &projection {
        Some(p) => NeighborSampler::Profiles(ProfileSet::causal_attention(g, &train_labels, p)?),
        None => NeighborSampler::Uniform,
    };
    let val_sampler = inference_sampler(g, projection.as_ref())?;

    let mut loss_weights = vec![1.0; g.num_nodes()];
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut best: Option<(f64, usize, EncoderParams)> = None;
    let label_of = |v: NodeId| train_labels.known_label(v).expect("training node has a label");

    for epoch in 0..config.epochs {
        let mut order = train_nodes.clone();
        order.shuffle(&mut rng::derived_rng(config.seed, &[tag::SHUFFLE, epoch as u64]));
        let epoch_seed = rng::derive_seed(config.seed, &[tag::EPOCH, epoch as u64]);
        let spec = SampleSpec {
            sampler: &train_sampler,
            size: config.sample_size,
            seed: epoch_seed,
        };

        if config.use_hsic_weights && epoch % config.weight_update_period == 0 {
            let update = update_loss_weights(g, &order, &params, spec, config, epoch, &mut loss_weights)?;
            history.weight_updates.push(update);
        }

        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let labels: Vec<u32> = chunk.iter().map(|&v| label_of(v)).collect();
            let weights: Vec<f64> = chunk.iter().map(|&v| loss_weights[v]).collect();
            let batch_spec = SampleSpec {
                seed: rng::derive_seed(epoch_seed, &[b as u64]),
                ..spec
            };
            let (loss, grads) = match encoder::loss_and_grads(
                g,
                Batch { nodes: chunk, labels: &labels, weights: &weights },
                &params,
                batch_spec,
                config.l2,
            ) {
                Ok(r) => r,
                Err(Error::Numeric(detail)) => {
                    return Err(Error::Diverged {
                        epoch,
                        detail,
                        history: history.train_losses(),
                    })
                }
                Err(e) => return Err(e),
            };
            loss_sum += loss * chunk.len() as f64;
            adam.step(&mut params, &grads);
        }
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "non-finite parameters after update".into(),
                history: history.train_losses(),
            });
        }

        let mut record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_nodes.len() as f64,
            val_accuracy: None,
            val_macro_f1: None,
        };
        if !val_nodes.is_empty() {
            let pred = predict_with(g, &val_nodes, &params, &val_sampler, config)?;
            let m = score_nodes(&pred, &val_nodes, &val_labels, g.num_classes())?;
            record.val_accuracy = Some(m.accuracy);
            record.val_macro_f1 = Some(m.macro_f1);
            if best.as_ref().is_none_or(|(acc, _, _)| m.accuracy > *acc) {
                best = Some((m.accuracy, epoch, params.clone()));
            }
        }
        log::debug!(
            "epoch {epoch}: loss {:.4} val_acc {:?}",
            record.train_loss,
            record.val_accuracy
        );
        history.epochs.push(record);
    }

    let (final_params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, config.epochs - 1),
    };
    history.best_epoch = Some(best_epoch);
    Ok((model_of(final_params), history))
}

/// Recomputes loss weights chunk by chunk over the epoch's batch order.
fn update_loss_weights(
    g: &Graph,
    order: &[NodeId],
    params: &EncoderParams,
    spec: SampleSpec<'_>,
    config: &TrainConfig,
    epoch: usize,
    loss_weights: &mut [f64],
) -> Result<WeightUpdate> {
    let mut initial = 0.0;
    let mut optimized = 0.0;
    let mut chunks = 0usize;
    let mut diverged_chunks = 0;
    for (c, chunk) in order.chunks(config.batch_size).enumerate() {
        if chunk.len() < 4 {
            chunk.iter().for_each(|&v| loss_weights[v] = 1.0);
            continue;
        }
        let emb = encoder::forward(g, chunk, params, spec)?.embeddings;
        let hsic_cfg = HsicConfig {
            seed: rng::derive_seed(config.seed, &[tag::HSIC, epoch as u64, c as u64]),
            ..config.hsic.clone()
        };
        let out = hsic::optimize_weights(emb.view(), &hsic_cfg)?;
        initial += out.heldout_trace[0];
        optimized += out.heldout_trace.iter().copied().fold(f64::INFINITY, f64::min);
        chunks += 1;
        diverged_chunks += out.diverged as usize;
        for (&v, &w) in chunk.iter().zip(out.weights.as_slice()) {
            loss_weights[v] = w;
        }
    }
    let denom = chunks.max(1) as f64;
    Ok(WeightUpdate {
        epoch,
        initial: initial / denom,
        optimized: optimized / denom,
        diverged_chunks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable_graph() -> (Graph, SplitAssignment) {
        // Two 20-node cliques-ish blocks with opposite-sign features.
        let n = 40;
        let mut r = rng::rng_from(1);
        use rand::Rng;
        let labels: Vec<u32> = (0..n).map(|v| (v >= 20) as u32).collect();
        let x = Array2::from_shape_fn((n, 4), |(v, j)| {
            let sign = if labels[v] == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + j as f64 * 0.1) + r.gen_range(-0.3..0.3)
        });
        let mut edges = Vec::new();
        for v in 0..n {
            for _ in 0..3 {
                let block = (v / 20) * 20;
                edges.push((v, block + r.gen_range(0..20)));
            }
        }
        let g = Graph::new(x, labels, 2, &edges).unwrap();
        let roles = (0..n)
            .map(|v| match v % 4 {
                0 | 1 => Role::Train,
                2 => Role::Validation,
                _ => Role::Test,
            })
            .collect();
        (g, SplitAssignment::new(roles))
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            hidden: 16,
            sample_size: 3,
            weight_update_period: 10,
            hsic: HsicConfig {
                steps: 5,
                pairs_per_step: 8,
                ..HsicConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (g, split) = separable_graph();
        let cfg = TrainConfig { epochs: 0, ..small_config() };
        let (model, history) = train(&g, &split, &cfg).unwrap();
        assert!(history.epochs.is_empty());
        assert_eq!(model.params, encoder::init_params(4, 16, 2, cfg.seed).unwrap());
    }

    #[test]
    fn baseline_fits_separable_data() {
        let (g, split) = separable_graph();
        let cfg = TrainConfig {
            use_ca_sampling: false,
            use_hsic_weights: false,
            ..small_config()
        };
        let (model, _) = train(&g, &split, &cfg).unwrap();
        let nodes = split.nodes(Role::Train);
        let labels = KnownLabels::from_split(&g, &split, Role::Train);
        assert_eq!(evaluate(&model, &g, &nodes, &labels).unwrap().accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let (g, split) = separable_graph();
        let cfg = TrainConfig { epochs: 6, ..small_config() };
        let (m1, h1) = train(&g, &split, &cfg).unwrap();
        let (m2, h2) = train(&g, &split, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn empty_train_split_is_rejected() {
        let (g, _) = separable_graph();
        let split = SplitAssignment::all_unused(g.num_nodes());
        assert!(matches!(train(&g, &split, &small_config()), Err(Error::Validation(_))));
        let (g, split) = separable_graph();
        let bad = TrainConfig { sample_size: 0, ..small_config() };
        assert!(matches!(train(&g, &split, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn checkpoint_round_trip_and_history_csv() {
        let (g, split) = separable_graph();
        let cfg = TrainConfig { epochs: 3, ..small_config() };
        let (model, history) = train(&g, &split, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        model.save(&p).unwrap();
        assert_eq!(TrainedModel::load(&p).unwrap(), model);
        let csv = dir.path().join("history.csv");
        history.write_csv(&csv).unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_acc,val_macro_f1\n0,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn evaluate_rejects_empty_and_unlabeled() {
        let (g, split) = separable_graph();
        let (model, _) = train(&g, &split, &TrainConfig { epochs: 1, ..small_config() }).unwrap();
        let labels = KnownLabels::from_split(&g, &split, Role::Test);
        assert!(evaluate(&model, &g, &[], &labels).is_err());
        assert!(evaluate(&model, &g, &[0], &labels).is_err());
    }
}
