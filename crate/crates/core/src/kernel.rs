//! Kernels, Gram matrices, double centering and discrete kernel density
//! estimates.

use ndarray::Array2;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Samples above this count are subsampled before the median heuristic.
pub const MEDIAN_EXACT_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `K(a, b) = 1` iff `a == b` exactly.
    Kronecker,
    /// `K(a, b) = exp(-|a - b|^2 / (2 h^2))`.
    Gaussian { bandwidth: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(KernelSpec::Gaussian { bandwidth })
        } else {
            Err(Error::Config(format!(
                "gaussian bandwidth must be positive, got {bandwidth}"
            )))
        }
    }

    #[inline]
    pub(crate) fn eval_scalar(&self, a: f64, b: f64) -> f64 {
        match *self {
            KernelSpec::Kronecker => (a == b) as u8 as f64,
            KernelSpec::Gaussian { bandwidth } => {
                let d = a - b;
                (-d * d / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "kernel arguments of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(match *spec {
        KernelSpec::Kronecker => (a == b) as u8 as f64,
        KernelSpec::Gaussian { bandwidth } => {
            let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-sq / (2.0 * bandwidth * bandwidth)).exp()
        }
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Median of all pairwise Euclidean distances.
///
/// Exact up to [`MEDIAN_EXACT_LIMIT`] samples; larger inputs are reduced to a
/// seeded uniform subsample of that size first. Returns
/// [`Error::DegenerateBandwidth`] when the median distance is zero, which
/// covers the all-identical case; callers fall back to bandwidth 1.
pub fn median_heuristic<S: AsRef<[f64]>>(samples: &[S], seed: u64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Shape(
            "median heuristic needs at least 2 samples".into(),
        ));
    }
    let dim = samples[0].as_ref().len();
    if samples.iter().any(|s| s.as_ref().len() != dim) {
        return Err(Error::Shape("samples of unequal dimension".into()));
    }
    let picked: Vec<&[f64]> = if samples.len() > MEDIAN_EXACT_LIMIT {
        let mut rng = rng::derived_rng(seed, &[tag::MEDIAN]);
        let mut idx = index::sample(&mut rng, samples.len(), MEDIAN_EXACT_LIMIT).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| samples[i].as_ref()).collect()
    } else {
        samples.iter().map(|s| s.as_ref()).collect()
    };
    let mut dists = Vec::with_capacity(picked.len() * (picked.len() - 1) / 2);
    for i in 0..picked.len() {
        for j in i + 1..picked.len() {
            dists.push(euclidean(picked[i], picked[j]));
        }
    }
    let med = median_in_place(&mut dists);
    if med > 0.0 {
        Ok(med)
    } else {
        Err(Error::DegenerateBandwidth)
    }
}

/// Median of a non-empty slice (mean of the two middle values for even
/// lengths). Reorders the slice.
pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    let m = v.len();
    let hi = m / 2;
    let (_, &mut upper, _) = v.select_nth_unstable_by(hi, f64::total_cmp);
    if m % 2 == 1 {
        upper
    } else {
        let lower = v[..hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Dense symmetric kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: Array2<f64>,
}

impl GramMatrix {
    /// Wraps a square matrix. Symmetry is checked exactly.
    pub fn from_array(entries: Array2<f64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::Shape(format!(
                "Gram matrix must be square, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if entries[[i, j]] != entries[[j, i]] {
                    return Err(Error::Shape(format!("Gram matrix asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(GramMatrix { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }
}

/// `J K J` with `J = I - 11^T / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredGram {
    entries: Array2<f64>,
}

impl CenteredGram {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }
}

/// Gram matrix over vector samples. Rows are filled in parallel; each entry
/// is computed once and mirrored, so the result is exactly symmetric.
pub fn gram<S: AsRef<[f64]> + Sync>(spec: &KernelSpec, samples: &[S]) -> Result<GramMatrix> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::Shape("Gram matrix over zero samples".into()));
    }
    let dim = samples[0].as_ref().len();
    if samples.iter().any(|s| s.as_ref().len() != dim) {
        return Err(Error::Shape("samples of unequal dimension".into()));
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| kernel_eval(spec, samples[i].as_ref(), samples[j].as_ref()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut entries = Array2::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            entries[[i, i + k]] = v;
            entries[[i + k, i]] = v;
        }
    }
    Ok(GramMatrix { entries })
}

/// Gram matrix over scalar samples.
pub fn gram_scalar(spec: &KernelSpec, samples: &[f64]) -> GramMatrix {
    let n = samples.len();
    let mut entries = Array2::zeros((n, n));
    for i in 0..n {
        entries[[i, i]] = spec.eval_scalar(samples[i], samples[i]);
        for j in i + 1..n {
            let v = spec.eval_scalar(samples[i], samples[j]);
            entries[[i, j]] = v;
            entries[[j, i]] = v;
        }
    }
    GramMatrix { entries }
}

/// Double centering `J K J`, computed from row, column and grand means.
pub fn center(k: &GramMatrix) -> CenteredGram {
    CenteredGram {
        entries: center_array(&k.entries),
    }
}

pub(crate) fn center_array(k: &Array2<f64>) -> Array2<f64> {
    let n = k.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = k.rows().into_iter().map(|r| r.sum() / nf).collect();
    let col_means: Vec<f64> = k.columns().into_iter().map(|c| c.sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    Array2::from_shape_fn((n, n), |(i, j)| {
        k[[i, j]] - row_means[i] - col_means[j] + grand
    })
}

/// Kronecker-delta density estimate `(1/N) * #{n : population[n] == query}`.
pub fn discrete_kde<T: PartialEq>(query: &T, population: &[T]) -> f64 {
    if population.is_empty() {
        return 0.0;
    }
    let matches = population.iter().filter(|p| *p == query).count();
    matches as f64 / population.len() as f64
}
