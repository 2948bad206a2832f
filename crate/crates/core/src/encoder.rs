//! Two-layer sampled-neighborhood encoder with mean aggregation.
//!
//! Layer `l` maps node `v` to `relu([h_v ; mean(h_u for sampled u)] W_l + b_l)`
//! where the first layer reads raw features and the second reads layer-one
//! outputs. A linear classifier sits on the layer-two output. Gradients are
//! computed in reverse mode over the sampled computation graph recorded by
//! [`forward`].

use std::collections::HashMap;

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{self, tag};
use crate::sampler::{NeighborSampler, LAYER_INNER, LAYER_OUTER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// `(2 d_in) x h`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `(2 h) x h`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// `h x C`
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

fn contiguous<T>(a: Option<T>) -> T {
    a.expect("parameters are contiguous")
}

impl EncoderParams {
    pub fn input_dim(&self) -> usize {
        self.w1.nrows() / 2
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.w3.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
            w3: Array2::zeros(self.w3.raw_dim()),
            b3: Array1::zeros(self.b3.raw_dim()),
        }
    }

    /// Parameter blocks as flat slices, in a fixed order.
    pub fn blocks(&self) -> [&[f64]; 6] {
        [
            contiguous(self.w1.as_slice()),
            contiguous(self.b1.as_slice()),
            contiguous(self.w2.as_slice()),
            contiguous(self.b2.as_slice()),
            contiguous(self.w3.as_slice()),
            contiguous(self.b3.as_slice()),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 6] {
        [
            contiguous(self.w1.as_slice_mut()),
            contiguous(self.b1.as_slice_mut()),
            contiguous(self.w2.as_slice_mut()),
            contiguous(self.b2.as_slice_mut()),
            contiguous(self.w3.as_slice_mut()),
            contiguous(self.b3.as_slice_mut()),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Kaiming-uniform initialization: every entry of a block with fan-in `f`
/// (biases included) is drawn from `U(-sqrt(6/f), sqrt(6/f))`.
pub fn init_params(d_in: usize, hidden: usize, classes: usize, seed: u64) -> Result<EncoderParams> {
    if d_in == 0 || hidden == 0 || classes == 0 {
        return Err(Error::Config(format!(
            "encoder dimensions must be positive, got d_in={d_in}, h={hidden}, C={classes}"
        )));
    }
    let mut rng = rng::derived_rng(seed, &[tag::PARAM_INIT]);
    let mut block = |fan_in: usize, shape: (usize, usize)| {
        let bound = (6.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        Array2::from_shape_simple_fn(shape, || dist.sample(&mut rng))
    };
    let w1 = block(2 * d_in, (2 * d_in, hidden));
    let b1 = block(2 * d_in, (1, hidden)).into_shape_with_order(hidden).expect("row");
    let w2 = block(2 * hidden, (2 * hidden, hidden));
    let b2 = block(2 * hidden, (1, hidden)).into_shape_with_order(hidden).expect("row");
    let w3 = block(hidden, (hidden, classes));
    let b3 = block(hidden, (1, classes)).into_shape_with_order(classes).expect("row");
    Ok(EncoderParams {
        w1,
        b1,
        w2,
        b2,
        w3,
        b3,
    })
}

/// Sampling inputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct SampleSpec<'a> {
    pub sampler: &'a NeighborSampler,
    /// Neighbors drawn per node and layer.
    pub size: usize,
    pub seed: u64,
}

/// Sampled computation graph and intermediate activations.
#[derive(Debug, Clone)]
struct Tape {
    /// Nodes whose layer-one representation is needed; batch nodes first.
    l1_nodes: Vec<NodeId>,
    /// Position in `l1_nodes` of each batch entry.
    batch_pos: Vec<usize>,
    /// Layer-two neighbor draws of each batch entry, as `l1_nodes` positions.
    outer: Vec<Vec<usize>>,
    a1: Array2<f64>,
    z1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    z2: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// `|batch| x C`
    pub logits: Array2<f64>,
    /// Layer-two outputs, `|batch| x h`.
    pub embeddings: Array2<f64>,
    tape: Tape,
}

fn check_shapes(g: &Graph, params: &EncoderParams) -> Result<()> {
    let h = params.hidden();
    let checks = [
        (1, params.w1.nrows() == 2 * g.num_features() && params.b1.len() == h),
        (2, params.w2.dim() == (2 * h, h) && params.b2.len() == h),
        (3, params.w3.nrows() == h && params.b3.len() == params.w3.ncols()),
    ];
    for (layer, ok) in checks {
        if !ok {
            return Err(Error::Shape(format!(
                "layer {layer} parameters do not match input dimension {} / hidden {h}",
                g.num_features()
            )));
        }
    }
    Ok(())
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn affine(a: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut z = a.dot(w);
    z += b;
    z
}

/// Runs the encoder on `batch`. Neighbor draws are keyed by
/// `(sample.seed, layer, node)`, so the same seed reproduces the same
/// computation graph for a node regardless of batch composition.
pub fn forward(
    g: &Graph,
    batch: &[NodeId],
    params: &EncoderParams,
    sample: SampleSpec<'_>,
) -> Result<Forward> {
    if batch.is_empty() {
        return Err(Error::Validation("forward pass over an empty batch".into()));
    }
    for &v in batch {
        g.check_node(v)?;
    }
    check_shapes(g, params)?;
    let d = g.num_features();
    let h = params.hidden();

    let mut index: HashMap<NodeId, usize> = HashMap::new();
    let mut l1_nodes = Vec::new();
    let mut slot = |v: NodeId, l1: &mut Vec<NodeId>| {
        *index.entry(v).or_insert_with(|| {
            l1.push(v);
            l1.len() - 1
        })
    };
    let batch_pos: Vec<usize> = batch.iter().map(|&v| slot(v, &mut l1_nodes)).collect();
    let outer: Vec<Vec<usize>> = batch
        .iter()
        .map(|&v| {
            sample
                .sampler
                .draw(g, v, sample.size, sample.seed, LAYER_OUTER)
                .into_iter()
                .map(|u| slot(u, &mut l1_nodes))
                .collect()
        })
        .collect();
    let inner: Vec<Vec<NodeId>> = l1_nodes
        .iter()
        .map(|&u| sample.sampler.draw(g, u, sample.size, sample.seed, LAYER_INNER))
        .collect();

    let mut a1 = Array2::<f64>::zeros((l1_nodes.len(), 2 * d));
    for (r, (&u, draws)) in l1_nodes.iter().zip(&inner).enumerate() {
        let mut row = a1.row_mut(r);
        row.slice_mut(s![..d]).assign(&ArrayView1::from(g.feature_row(u)));
        if !draws.is_empty() {
            let mut agg = row.slice_mut(s![d..]);
            for &n in draws {
                agg += &ArrayView1::from(g.feature_row(n));
            }
            agg /= draws.len() as f64;
        }
    }
    let z1 = affine(&a1, &params.w1, &params.b1);
    let h1 = relu(&z1);

    let mut a2 = Array2::<f64>::zeros((batch.len(), 2 * h));
    for (b, draws) in outer.iter().enumerate() {
        let mut row = a2.row_mut(b);
        row.slice_mut(s![..h]).assign(&h1.row(batch_pos[b]));
        if !draws.is_empty() {
            let mut agg = row.slice_mut(s![h..]);
            for &p in draws {
                agg += &h1.row(p);
            }
            agg /= draws.len() as f64;
        }
    }
    let z2 = affine(&a2, &params.w2, &params.b2);
    let embeddings = relu(&z2);
    let logits = affine(&embeddings, &params.w3, &params.b3);
    Ok(Forward {
        logits,
        embeddings,
        tape: Tape {
            l1_nodes,
            batch_pos,
            outer,
            a1,
            z1,
            h1,
            a2,
            z2,
        },
    })
}

impl Forward {
    /// Argmax class per batch entry (lowest index on ties).
    pub fn predictions(&self) -> Vec<u32> {
        self.logits
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                    .0 as u32
            })
            .collect()
    }

    /// Nodes whose layer-one representation entered this pass.
    pub fn touched_nodes(&self) -> &[NodeId] {
        &self.tape.l1_nodes
    }

    /// Reverse-mode gradient of `sum(dlogits .* logits)` with respect to the
    /// parameters, over the recorded computation graph.
    fn backward(&self, params: &EncoderParams, dlogits: &Array2<f64>) -> EncoderParams {
        let t = &self.tape;
        let h = params.hidden();
        let mut grads = params.zeros_like();

        grads.w3 = self.embeddings.t().dot(dlogits);
        grads.b3 = dlogits.sum_axis(Axis(0));
        let mut dz2 = dlogits.dot(&params.w3.t());
        Zip::from(&mut dz2).and(&t.z2).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        grads.w2 = t.a2.t().dot(&dz2);
        grads.b2 = dz2.sum_axis(Axis(0));
        let da2 = dz2.dot(&params.w2.t());

        let mut dh1 = Array2::<f64>::zeros(t.h1.raw_dim());
        for (b, draws) in t.outer.iter().enumerate() {
            let row = da2.row(b);
            {
                let mut target = dh1.row_mut(t.batch_pos[b]);
                target += &row.slice(s![..h]);
            }
            if !draws.is_empty() {
                let share = &row.slice(s![h..]) / draws.len() as f64;
                for &p in draws {
                    let mut target = dh1.row_mut(p);
                    target += &share;
                }
            }
        }
        let mut dz1 = dh1;
        Zip::from(&mut dz1).and(&t.z1).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        grads.w1 = t.a1.t().dot(&dz1);
        grads.b1 = dz1.sum_axis(Axis(0));
        grads
    }
}

/// Labeled, weighted training batch.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub nodes: &'a [NodeId],
    pub labels: &'a [u32],
    /// Per-sample loss weights aligned with `nodes`.
    pub weights: &'a [f64],
}

/// Per-sample cross entropy of softmax(logits) against `labels`.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[u32]) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(r, &y)| {
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + r.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - r[y as usize]
        })
        .collect()
}

/// Weighted cross-entropy plus `l2 * |params|^2`, and its gradient.
///
/// `loss = (1/B) sum_k w_k CE_k + l2 |theta|^2`. Neighbor draws are made once
/// in the forward pass and reused for the gradient.
pub fn loss_and_grads(
    g: &Graph,
    batch: Batch<'_>,
    params: &EncoderParams,
    sample: SampleSpec<'_>,
    l2: f64,
) -> Result<(f64, EncoderParams)> {
    let b = batch.nodes.len();
    if batch.labels.len() != b || batch.weights.len() != b {
        return Err(Error::Shape(format!(
            "batch of {b} nodes with {} labels and {} weights",
            batch.labels.len(),
            batch.weights.len()
        )));
    }
    if let Some(&y) = batch.labels.iter().find(|&&y| y as usize >= params.num_classes()) {
        return Err(Error::Validation(format!("label {y} outside the classifier range")));
    }
    let fwd = forward(g, batch.nodes, params, sample)?;
    let ce = cross_entropy(&fwd.logits, batch.labels);
    let data: f64 = ce
        .iter()
        .zip(batch.weights)
        .map(|(l, w)| w * l)
        .sum::<f64>()
        / b as f64;
    let loss = data + l2 * params.squared_norm();
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss on batch starting at node {}",
            batch.nodes[0]
        )));
    }

    let mut dlogits = Array2::<f64>::zeros(fwd.logits.raw_dim());
    for (k, row) in fwd.logits.rows().into_iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let scale = batch.weights[k] / b as f64;
        for (c, e) in exps.iter().enumerate() {
            let target = (c == batch.labels[k] as usize) as u8 as f64;
            dlogits[[k, c]] = scale * (e / z - target);
        }
    }
    let mut grads = fwd.backward(params, &dlogits);
    if l2 != 0.0 {
        for (gb, pb) in grads.blocks_mut().into_iter().zip(params.blocks()) {
            for (gv, pv) in gb.iter_mut().zip(pb) {
                *gv += 2.0 * l2 * pv;
            }
        }
    }
    Ok((loss, grads))
}
