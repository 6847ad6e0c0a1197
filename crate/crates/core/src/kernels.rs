//! Additive per-bin kernels and the Gram matrices built from them.
//!
//! An additive kernel decomposes over histogram bins as `K(x, z) = Σ_k κ(x_k, z_k)`.
//! Feature selection weighs each bin separately, so the per-bin Gram matrices
//! are kept apart and combined on demand.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, s};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-bin kernel on non-negative scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `κ(a, b) = a·b`
    Linear,
    /// `κ(a, b) = 2ab / (a + b)`, with `κ(0, 0) = 0`
    #[serde(rename = "chi2")]
    ChiSquare,
    /// `κ(a, b) = min(a, b)`
    Intersection,
}

impl KernelKind {
    /// Evaluates κ without validating the inputs.
    #[inline]
    pub(crate) fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            KernelKind::Linear => a * b,
            KernelKind::ChiSquare => {
                let sum = a + b;
                if sum > 0.0 {
                    2.0 * a * b / sum
                } else {
                    0.0
                }
            }
            KernelKind::Intersection => a.min(b),
        }
    }

    /// Unweighted additive kernel `Σ_k κ(x_k, z_k)`. Lengths must already agree.
    #[inline]
    pub(crate) fn full(self, x: &[f64], z: &[f64]) -> f64 {
        x.iter().zip(z).map(|(&a, &b)| self.eval(a, b)).sum()
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Linear => "linear",
            KernelKind::ChiSquare => "chi2",
            KernelKind::Intersection => "intersection",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "chi2" | "chisquare" | "chi-square" => Ok(KernelKind::ChiSquare),
            "intersection" | "hik" => Ok(KernelKind::Intersection),
            other => Err(Error::Input(format!("unknown kernel '{other}'"))),
        }
    }
}

/// A non-negative histogram (one bag-of-words vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Histogram(Vec<f64>);

impl Histogram {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("histogram must have at least one bin".into()));
        }
        if let Some((k, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Domain(format!(
                "histogram bin {k} has value {v}; entries must be finite and non-negative"
            )));
        }
        Ok(Histogram(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Histogram {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Histogram {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Histogram::new(v)
    }
}

impl From<Histogram> for Vec<f64> {
    fn from(h: Histogram) -> Self {
        h.0
    }
}

/// Evaluates the per-bin kernel, rejecting negative (or NaN) inputs.
pub fn kappa(kind: KernelKind, a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::Domain(format!(
            "kernel arguments must be non-negative (got {a}, {b})"
        )));
    }
    Ok(kind.eval(a, b))
}

/// Bin-weighted kernel `Σ_k p_k κ(x_k, z_k)`.
pub fn combined_kernel(kind: KernelKind, p: &[f64], x: &[f64], z: &[f64]) -> Result<f64> {
    check_dim(p.len(), x.len())?;
    check_dim(p.len(), z.len())?;
    Ok(p
        .iter()
        .zip(x.iter().zip(z))
        .map(|(&w, (&a, &b))| w * kind.eval(a, b))
        .sum())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

fn common_dim<'a>(mut rows: impl Iterator<Item = &'a Histogram>) -> Result<usize> {
    let first = rows
        .next()
        .ok_or_else(|| Error::Input("no histograms given".into()))?;
    let d = first.dim();
    for h in rows {
        check_dim(d, h.dim())?;
    }
    Ok(d)
}

/// One `n × n` Gram matrix per bin: entry `(i, j)` of matrix `k` is `κ(x_ik, x_jk)`.
pub fn per_bin_grams(kind: KernelKind, xs: &[Histogram]) -> Result<Vec<Array2<f64>>> {
    let d = common_dim(xs.iter())?;
    let n = xs.len();
    Ok((0..d)
        .into_par_iter()
        .map(|k| {
            let mut g = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let v = kind.eval(xs[i][k], xs[j][k]);
                    g[[i, j]] = v;
                    g[[j, i]] = v;
                }
            }
            g
        })
        .collect())
}

/// `Σ_k w_k G_k` over per-bin Gram matrices; bins with zero weight are skipped.
pub fn weighted_sum(grams: &[Array2<f64>], weights: &[f64]) -> Array2<f64> {
    assert_eq!(grams.len(), weights.len());
    let n = grams.first().map_or(0, |g| g.nrows());
    let mut out = Array2::zeros((n, n));
    for (g, &w) in grams.iter().zip(weights) {
        if w != 0.0 {
            out.scaled_add(w, g);
        }
    }
    out
}

/// Unweighted additive Gram matrix over a set of histograms.
pub fn gram(kind: KernelKind, xs: &[Histogram]) -> Result<Array2<f64>> {
    common_dim(xs.iter())?;
    let n = xs.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| kind.full(&xs[i], &xs[j])).collect())
        .collect();
    let mut out = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// Kernel values between every pair of instances, addressed by bag.
///
/// Stored as one instance-level Gram matrix plus bag offsets; block `(i, j)`
/// is the `m_i × m_j` sub-matrix of bag `i`'s rows and bag `j`'s columns.
#[derive(Debug, Clone)]
pub struct BlockGram {
    instances: Array2<f64>,
    offsets: Vec<usize>,
}

impl BlockGram {
    pub fn n_bags(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn bag_size(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn block(&self, i: usize, j: usize) -> ArrayView2<'_, f64> {
        self.instances.slice(s![
            self.offsets[i]..self.offsets[i + 1],
            self.offsets[j]..self.offsets[j + 1]
        ])
    }

    /// Instance-level Gram matrix in bag order.
    pub fn instance_gram(&self) -> &Array2<f64> {
        &self.instances
    }

    pub(crate) fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

/// Builds the block kernel matrix over bags of instances with the unweighted kernel.
pub fn block_gram<B: AsRef<[Histogram]>>(kind: KernelKind, bags: &[B]) -> Result<BlockGram> {
    if bags.is_empty() {
        return Err(Error::Input("no bags given".into()));
    }
    let mut offsets = Vec::with_capacity(bags.len() + 1);
    offsets.push(0);
    for (i, bag) in bags.iter().enumerate() {
        let m = bag.as_ref().len();
        if m == 0 {
            return Err(Error::Input(format!("bag {i} has no instances")));
        }
        offsets.push(offsets[i] + m);
    }
    let flat: Vec<Histogram> = bags
        .iter()
        .flat_map(|b| b.as_ref().iter().cloned())
        .collect();
    let instances = gram(kind, &flat)?;
    Ok(BlockGram { instances, offsets })
}

/// Bag-level Gram matrix `K_ij = s_iᵀ K̃(i, j) s_j`.
pub fn bag_gram(block: &BlockGram, s: &[Vec<f64>]) -> Result<Array2<f64>> {
    let n = block.n_bags();
    check_dim(n, s.len())?;
    for (i, si) in s.iter().enumerate() {
        check_dim(block.bag_size(i), si.len())?;
        if si.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain(format!("bag {i} has a negative instance weight")));
        }
    }
    // Row t of `weighted` holds Σ_l s_jl K(h_t, h_jl) for each bag j.
    let total = block.offsets[n];
    let mut weighted = Array2::<f64>::zeros((total, n));
    for j in 0..n {
        let (lo, hi) = (block.offsets[j], block.offsets[j + 1]);
        for t in 0..total {
            let row = block.instances.slice(s![t, lo..hi]);
            weighted[[t, j]] = row.iter().zip(&s[j]).map(|(k, w)| k * w).sum();
        }
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let lo = block.offsets[i];
        for j in i..n {
            let v: f64 = s[i]
                .iter()
                .enumerate()
                .map(|(k, w)| w * weighted[[lo + k, j]])
                .sum();
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(out)
}
