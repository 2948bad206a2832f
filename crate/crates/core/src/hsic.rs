//! Hilbert-Schmidt independence criterion and dependence-minimizing sample
//! weights.
//!
//! Weights `w` live on `{w >= 0, sum(w) = n}` and enter the estimator by
//! scaling samples before the Gram matrices are built. Embedding columns use
//! a gaussian kernel whose bandwidth is the median pairwise distance of the
//! weighted column, recomputed on every evaluation.

use ndarray::{Array2, ArrayView2};
use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{center_array, gram_scalar, median_in_place, GramMatrix, KernelSpec};
use crate::rng::{self, tag};

pub fn hsic_biased(kx: &GramMatrix, ky: &GramMatrix) -> Result<f64> {
    let n = check_sizes(kx, ky)?;
    Ok(centered_trace(kx.entries(), ky.entries()) / (n * n) as f64)
}

/// [`hsic_biased`] with divisor `(n - 1)^2`.
pub fn hsic_scaled(kx: &GramMatrix, ky: &GramMatrix) -> Result<f64> {
    let n = check_sizes(kx, ky)?;
    if n < 2 {
        return Err(Error::Numeric("scaled HSIC needs n >= 2 (divisor (n - 1)^2)".into()));
    }
    Ok(centered_trace(kx.entries(), ky.entries()) / ((n - 1) * (n - 1)) as f64)
}

fn check_sizes(kx: &GramMatrix, ky: &GramMatrix) -> Result<usize> {
    if kx.n() != ky.n() {
        return Err(Error::Shape(format!(
            "Gram matrices of size {} and {}",
            kx.n(),
            ky.n()
        )));
    }
    Ok(kx.n())
}

/// `Tr(Kx J Ky J)` evaluated as the entrywise inner product of the two
/// centered matrices, which is symmetric in its arguments bit for bit.
fn centered_trace(kx: &Array2<f64>, ky: &Array2<f64>) -> f64 {
    let cx = center_array(kx);
    let cy = center_array(ky);
    cx.iter().zip(cy.iter()).map(|(a, b)| a * b).sum()
}

/// Kernel applied to embedding columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKernel {
    Kronecker,
    Gaussian {
        bandwidth: f64,
    },
    /// Gaussian with the median pairwise distance of each (weighted) column.
    #[default]
    GaussianMedian,
}

/// Loss weights on the scaled simplex `{w >= 0, sum(w) = n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights {
    w: Vec<f64>,
}

impl SampleWeights {
    pub fn ones(n: usize) -> Self {
        SampleWeights { w: vec![1.0; n] }
    }

    /// Validates nonnegativity, the per-entry cap `n` and `sum = n` (to
    /// `1e-9 * n`).
    pub fn new(w: Vec<f64>) -> Result<Self> {
        let n = w.len() as f64;
        if w.iter().any(|&x| !(0.0..=n).contains(&x)) {
            return Err(Error::Validation(
                "sample weights must lie in [0, n]".into(),
            ));
        }
        let sum: f64 = w.iter().sum();
        if (sum - n).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::Validation(format!(
                "sample weights sum to {sum}, expected {n}"
            )));
        }
        Ok(SampleWeights { w })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }
}

/// Clips to `[0, n]` then rescales to sum `n`. Returns `None` when every
/// entry clips to zero.
pub fn project_to_simplex(w: &[f64]) -> Option<Vec<f64>> {
    let n = w.len() as f64;
    let clipped: Vec<f64> = w.iter().map(|&x| x.clamp(0.0, n)).collect();
    let sum: f64 = clipped.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return None;
    }
    if sum == n {
        return Some(clipped);
    }
    let scale = n / sum;
    Some(clipped.into_iter().map(|x| (x * scale).min(n)).collect())
}

/// Gram matrix of a scalar column plus the bandwidth bookkeeping needed to
/// differentiate through the median heuristic.
struct ColumnGram {
    k: Array2<f64>,
    /// Gaussian bandwidth, `None` for the Kronecker kernel.
    bandwidth: Option<f64>,
    /// `bandwidth = sum(coef * |z_p - z_q|)` over these pairs; empty when the
    /// bandwidth does not depend on the data.
    median_pairs: Vec<(usize, usize, f64)>,
}

fn median_pairs(z: &[f64]) -> Option<(f64, Vec<(usize, usize, f64)>)> {
    let n = z.len();
    if n < 2 {
        return None;
    }
    let mut idx: Vec<(usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for p in 0..n {
        for q in p + 1..n {
            idx.push((p, q));
        }
    }
    let dist = |&(p, q): &(usize, usize)| (z[p] - z[q]).abs();
    let m = idx.len();
    let hi = m / 2;
    idx.select_nth_unstable_by(hi, |a, b| dist(a).total_cmp(&dist(b)));
    let upper = idx[hi];
    let (value, pairs) = if m % 2 == 1 {
        (dist(&upper), vec![(upper.0, upper.1, 1.0)])
    } else {
        let lower = *idx[..hi]
            .iter()
            .max_by(|a, b| dist(a).total_cmp(&dist(b)))
            .expect("at least one pair below the median");
        (
            0.5 * (dist(&lower) + dist(&upper)),
            vec![(lower.0, lower.1, 0.5), (upper.0, upper.1, 0.5)],
        )
    };
    debug_assert_eq!(value, {
        let mut d: Vec<f64> = idx.iter().map(dist).collect();
        median_in_place(&mut d)
    });
    (value > 0.0).then_some((value, pairs))
}

fn column_gram(z: &[f64], kernel: ColumnKernel) -> ColumnGram {
    let (spec, bandwidth, median_pairs) = match kernel {
        ColumnKernel::Kronecker => (KernelSpec::Kronecker, None, Vec::new()),
        ColumnKernel::Gaussian { bandwidth } => {
            (KernelSpec::Gaussian { bandwidth }, Some(bandwidth), Vec::new())
        }
        ColumnKernel::GaussianMedian => match median_pairs(z) {
            Some((h, pairs)) => (KernelSpec::Gaussian { bandwidth: h }, Some(h), pairs),
            // Degenerate column: fall back to unit bandwidth.
            None => (KernelSpec::Gaussian { bandwidth: 1.0 }, Some(1.0), Vec::new()),
        },
    };
    ColumnGram {
        k: gram_scalar(&spec, z).entries().clone(),
        bandwidth,
        median_pairs,
    }
}

/// Gradient of `sum(K .* M)` with respect to the column `z` behind `K`.
fn column_grad(z: &[f64], g: &ColumnGram, m: &Array2<f64>) -> Vec<f64> {
    let n = z.len();
    let Some(h) = g.bandwidth else {
        return vec![0.0; n];
    };
    let h2 = h * h;
    let mut grad = vec![0.0; n];
    let mut d_h = 0.0;
    for p in 0..n {
        let mut acc = 0.0;
        for q in 0..n {
            let d = z[p] - z[q];
            let km = g.k[[p, q]] * m[[p, q]];
            acc += km * d;
            d_h += km * d * d;
        }
        grad[p] = -2.0 * acc / h2;
    }
    d_h /= h2 * h;
    for &(p, q, coef) in &g.median_pairs {
        let s = (z[p] - z[q]).signum();
        grad[p] += d_h * coef * s;
        grad[q] -= d_h * coef * s;
    }
    grad
}

fn weighted_column(w: &[f64], x: &[f64]) -> Vec<f64> {
    w.iter().zip(x).map(|(a, b)| a * b).collect()
}

/// Scaled HSIC between `w .* xi` and `w .* xj`.
pub fn weighted_hsic(
    w: &SampleWeights,
    xi: &[f64],
    xj: &[f64],
    kernel: ColumnKernel,
) -> Result<f64> {
    let n = w.len();
    if xi.len() != n || xj.len() != n {
        return Err(Error::Shape(format!(
            "weights of length {n} against columns of length {} and {}",
            xi.len(),
            xj.len()
        )));
    }
    if n < 2 {
        return Err(Error::Numeric("scaled HSIC needs n >= 2".into()));
    }
    Ok(pair_objective(w.as_slice(), xi, xj, kernel, false).value)
}

/// One pair's scaled HSIC and its expectation under permutations of one
/// column, plus (optionally) the weight gradient of the value.
fn pair_objective(
    w: &[f64],
    xi: &[f64],
    xj: &[f64],
    kernel: ColumnKernel,
    with_grad: bool,
) -> PairValue {
    let n = w.len();
    let zi = weighted_column(w, xi);
    let zj = weighted_column(w, xj);
    let gi = column_gram(&zi, kernel);
    let gj = column_gram(&zj, kernel);
    let ci = center_array(&gi.k);
    let cj = center_array(&gj.k);
    let scale = 1.0 / ((n - 1) * (n - 1)) as f64;
    let value = ci.iter().zip(cj.iter()).map(|(a, b)| a * b).sum::<f64>() * scale;
    // For centered A, B: E_perm[sum(A .* P B P^T)] = tr(A) tr(B) / (n - 1).
    let null = ci.diag().sum() * cj.diag().sum() * scale / (n - 1) as f64;
    if !with_grad {
        return PairValue { value, null, grad: None };
    }
    // d value / d K_i = J K_j J * scale, and symmetrically.
    let mi = cj * scale;
    let mj = ci * scale;
    let dzi = column_grad(&zi, &gi, &mi);
    let dzj = column_grad(&zj, &gj, &mj);
    let grad = (0..n).map(|k| dzi[k] * xi[k] + dzj[k] * xj[k]).collect();
    PairValue { value, null, grad: Some(grad) }
}

struct PairValue {
    value: f64,
    null: f64,
    grad: Option<Vec<f64>>,
}

/// Per-pair dependence values and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub pairs: Vec<(usize, usize)>,
    pub values: Vec<f64>,
    pub total: f64,
    /// Objective trace of the optimization that produced the weights, if any.
    #[serde(default)]
    pub trace: Vec<f64>,
}

impl DependenceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_pairs(x: &ArrayView2<f64>, pairs: &[(usize, usize)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Validation("empty dimension-pair list".into()));
    }
    let d = x.ncols();
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| !(i < j && j < d)) {
        return Err(Error::Validation(format!(
            "pair ({i}, {j}) is not i < j < {d}"
        )));
    }
    Ok(())
}

/// Sum of [`weighted_hsic`] over the listed column pairs. Pairs are
/// evaluated in parallel and summed in list order.
pub fn total_dependence(
    w: &SampleWeights,
    x: ArrayView2<f64>,
    pairs: &[(usize, usize)],
    kernel: ColumnKernel,
) -> Result<DependenceReport> {
    check_pairs(&x, pairs)?;
    if x.nrows() != w.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} samples",
            w.len(),
            x.nrows()
        )));
    }
    let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| weighted_hsic(w, &cols[i], &cols[j], kernel))
        .collect::<Result<Vec<_>>>()?;
    let total = values.iter().sum();
    Ok(DependenceReport {
        pairs: pairs.to_vec(),
        values,
        total,
        trace: Vec::new(),
    })
}

struct Objective {
    value: f64,
    /// Sum of the per-pair permutation-null expectations.
    null: f64,
    grad: Option<Vec<f64>>,
}

/// Objective restricted to a pair list, with gradient.
fn objective(
    w: &[f64],
    cols: &[Vec<f64>],
    pairs: &[(usize, usize)],
    kernel: ColumnKernel,
    with_grad: bool,
) -> Objective {
    let parts: Vec<PairValue> = pairs
        .par_iter()
        .map(|&(i, j)| pair_objective(w, &cols[i], &cols[j], kernel, with_grad))
        .collect();
    let value = parts.iter().map(|p| p.value).sum();
    let null = parts.iter().map(|p| p.null).sum();
    let grad = with_grad.then(|| {
        let mut g = vec![0.0; w.len()];
        for p in &parts {
            for (a, b) in g.iter_mut().zip(p.grad.as_ref().expect("gradient requested")) {
                *a += b;
            }
        }
        g
    });
    Objective { value, null, grad }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Closed-form derivative through the Grams and the median bandwidth.
    #[default]
    Analytic,
    /// Central differences with step `1e-4 * sqrt(n)`.
    FiniteDifference,
}

fn finite_difference_grad(
    w: &[f64],
    cols: &[Vec<f64>],
    pairs: &[(usize, usize)],
    kernel: ColumnKernel,
) -> Vec<f64> {
    let h = 1e-4 * (w.len() as f64).sqrt();
    (0..w.len())
        .map(|k| {
            let mut plus = w.to_vec();
            let mut minus = w.to_vec();
            plus[k] += h;
            minus[k] -= h;
            let fp = objective(&plus, cols, pairs, kernel, false).value;
            let fm = objective(&minus, cols, pairs, kernel, false).value;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Gradient of the pair-restricted objective with respect to the weights.
pub fn dependence_gradient(
    w: &[f64],
    x: ArrayView2<f64>,
    pairs: &[(usize, usize)],
    kernel: ColumnKernel,
    method: GradientMethod,
) -> Result<Vec<f64>> {
    check_pairs(&x, pairs)?;
    let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
    Ok(match method {
        GradientMethod::Analytic => objective(w, &cols, pairs, kernel, true)
            .grad
            .expect("gradient requested"),
        GradientMethod::FiniteDifference => finite_difference_grad(w, &cols, pairs, kernel),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HsicConfig {
    pub steps: usize,
    /// Largest change of any single weight per step.
    pub learning_rate: f64,
    pub pairs_per_step: usize,
    pub seed: u64,
    pub kernel: ColumnKernel,
    pub gradient: GradientMethod,
    /// Permutation replicates of the held-out objective used to decide
    /// whether there is dependence to remove. 0 skips the test.
    pub null_permutations: usize,
    /// Weights are only optimized when the permutation p-value of the
    /// all-ones held-out objective is at most this level.
    pub significance: f64,
}

impl Default for HsicConfig {
    fn default() -> Self {
        HsicConfig {
            steps: 50,
            learning_rate: 0.1,
            pairs_per_step: 64,
            seed: 0,
            kernel: ColumnKernel::GaussianMedian,
            gradient: GradientMethod::Analytic,
            null_permutations: 99,
            significance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightOptimization {
    pub weights: SampleWeights,
    /// Objective on each step's sampled pairs, before the step.
    pub trace: Vec<f64>,
    /// Objective on the fixed held-out pairs; entry 0 is the all-ones value
    /// and entry `t` follows step `t`.
    pub heldout_trace: Vec<f64>,
    /// The held-out trace rose across some 10-step window.
    pub diverged: bool,
    pub resets: usize,
    /// Stopped because the held-out objective fell to its permutation-null
    /// expectation.
    pub reached_null: bool,
}

impl WeightOptimization {
    pub fn report(&self, x: ArrayView2<f64>, pairs: &[(usize, usize)], kernel: ColumnKernel) -> Result<DependenceReport> {
        let mut r = total_dependence(&self.weights, x, pairs, kernel)?;
        r.trace = self.heldout_trace.clone();
        Ok(r)
    }
}

const MAX_RESETS: usize = 3;

fn sample_pairs(d: usize, k: usize, rng: &mut rng::Rng) -> Vec<(usize, usize)> {
    let total = d * (d - 1) / 2;
    let mut picks = if k >= total {
        (0..total).collect()
    } else {
        index::sample(rng, total, k).into_vec()
    };
    picks.sort_unstable();
    picks.into_iter().map(|t| unrank_pair(t, d)).collect()
}

/// Maps `t` in `0..d(d-1)/2` to the `t`-th pair `(i, j)`, `i < j`, in
/// row-major order.
fn unrank_pair(mut t: usize, d: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = d - 1 - i;
        if t < row {
            return (i, i + 1 + t);
        }
        t -= row;
        i += 1;
    }
}

/// Permutation p-value of the all-ones objective over `pairs`: each
/// replicate permutes the second column of every pair independently.
fn permutation_p_value(
    cols: &[Vec<f64>],
    pairs: &[(usize, usize)],
    kernel: ColumnKernel,
    observed: f64,
    replicates: usize,
    rng: &mut rng::Rng,
) -> f64 {
    if replicates == 0 {
        return 0.0;
    }
    let n = cols[0].len();
    let ones = vec![1.0; n];
    let centered: Vec<(Array2<f64>, Array2<f64>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let zi = weighted_column(&ones, &cols[i]);
            let zj = weighted_column(&ones, &cols[j]);
            (
                center_array(&column_gram(&zi, kernel).k),
                center_array(&column_gram(&zj, kernel).k),
            )
        })
        .collect();
    let perms: Vec<Vec<Vec<usize>>> = (0..replicates)
        .map(|_| {
            (0..pairs.len())
                .map(|_| {
                    let mut p: Vec<usize> = (0..n).collect();
                    p.shuffle(rng);
                    p
                })
                .collect()
        })
        .collect();
    let scale = 1.0 / ((n - 1) * (n - 1)) as f64;
    let exceed = perms
        .par_iter()
        .map(|perm| {
            let total: f64 = centered
                .iter()
                .zip(perm)
                .map(|((a, b), pi)| {
                    let mut acc = 0.0;
                    for p in 0..n {
                        let bp = b.row(pi[p]);
                        for q in 0..n {
                            acc += a[[p, q]] * bp[pi[q]];
                        }
                    }
                    acc * scale
                })
                .sum();
            (total >= observed) as usize
        })
        .sum::<usize>();
    (1 + exceed) as f64 / (1 + replicates) as f64
}

/// Minimizes the summed pairwise weighted HSIC over embedding columns.
///
/// Starts from all-ones weights. Each step samples `pairs_per_step` column
/// pairs, takes a gradient step of max-norm `learning_rate` and projects
/// back onto the simplex. Dependence is measured on a fixed held-out pair
/// sample: weights stay at one unless a permutation test rejects
/// independence at the all-ones weights, and optimization stops once the
/// value falls to its permutation-null expectation. The returned weights are the iterate with the lowest held-out objective, so
/// that objective never exceeds its all-ones value.
pub fn optimize_weights(x: ArrayView2<f64>, config: &HsicConfig) -> Result<WeightOptimization> {
    let (n, d) = x.dim();
    if n < 4 || d < 2 {
        return Err(Error::Shape(format!(
            "weight optimization needs n >= 4 and d >= 2, got {n}x{d}"
        )));
    }
    if config.pairs_per_step == 0 {
        return Err(Error::Config("pairs_per_step must be positive".into()));
    }
    let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
    let heldout = sample_pairs(
        d,
        config.pairs_per_step,
        &mut rng::derived_rng(config.seed, &[tag::HSIC_HELDOUT]),
    );
    let mut pair_rng = rng::derived_rng(config.seed, &[tag::HSIC_PAIRS]);

    let mut w = vec![1.0; n];
    let mut lr = config.learning_rate;
    let mut resets = 0;
    let mut trace = Vec::with_capacity(config.steps);
    let mut heldout_trace = Vec::with_capacity(config.steps + 1);

    let start = objective(&w, &cols, &heldout, config.kernel, false);
    if !start.value.is_finite() {
        return Err(Error::NonFiniteObjective { trace: vec![start.value] });
    }
    heldout_trace.push(start.value);
    let mut best = (start.value, w.clone());
    let p_value = permutation_p_value(
        &cols,
        &heldout,
        config.kernel,
        start.value,
        config.null_permutations,
        &mut rng::derived_rng(config.seed, &[tag::HSIC_NULL]),
    );
    let mut at_null = start.value <= start.null || p_value > config.significance;

    for _ in 0..config.steps {
        if at_null {
            break;
        }
        let pairs = sample_pairs(d, config.pairs_per_step, &mut pair_rng);
        let (value, grad) = match config.gradient {
            GradientMethod::Analytic => {
                let o = objective(&w, &cols, &pairs, config.kernel, true);
                (o.value, o.grad.expect("gradient computed"))
            }
            GradientMethod::FiniteDifference => (
                objective(&w, &cols, &pairs, config.kernel, false).value,
                finite_difference_grad(&w, &cols, &pairs, config.kernel),
            ),
        };
        trace.push(value);
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteObjective { trace });
        }
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax > 0.0 && lr > 0.0 {
            let step: Vec<f64> = w
                .iter()
                .zip(&grad)
                .map(|(wk, gk)| wk - lr * gk / gmax)
                .collect();
            match project_to_simplex(&step) {
                Some(p) => w = p,
                None => {
                    if resets == MAX_RESETS {
                        return Err(Error::Numeric(format!(
                            "weight projection collapsed {} times",
                            resets + 1
                        )));
                    }
                    resets += 1;
                    lr *= 0.5;
                    w = vec![1.0; n];
                }
            }
        }
        let h = objective(&w, &cols, &heldout, config.kernel, false);
        if !h.value.is_finite() {
            return Err(Error::NonFiniteObjective { trace });
        }
        heldout_trace.push(h.value);
        if h.value < best.0 {
            best = (h.value, w.clone());
        }
        at_null = h.value <= h.null;
    }

    let diverged = heldout_trace
        .windows(11)
        .any(|win| win[10] > win[0]);
    if diverged {
        log::debug!("held-out dependence rose within a 10-step window");
    }
    Ok(WeightOptimization {
        weights: SampleWeights { w: best.1 },
        trace,
        heldout_trace,
        diverged,
        resets,
        reached_null: at_null,
    })
}

/// `(1/n) * sum(w_k * loss_k)`.
pub fn apply_weights(w: &SampleWeights, per_sample_losses: &[f64]) -> Result<f64> {
    if w.len() != per_sample_losses.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} losses",
            w.len(),
            per_sample_losses.len()
        )));
    }
    let n = w.len().max(1) as f64;
    Ok(w.as_slice()
        .iter()
        .zip(per_sample_losses)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n)
}
