//! Product quantization: classical PQ and OPQ, plus the query-aware APQ and
//! AOPQ trainers whose pivots are fitted to a sample of the query
//! distribution.

mod apq;
mod distortion;
mod encode;
mod io;
mod kmeans;
mod pq;
mod relevance;

pub use apq::{apq_loss, apq_loss_gradient, train_aopq, train_apq, ApqTraining};
pub use distortion::{
    distortion_stats, near_pairs, pair_distortions, DistortionSummary, DISTORTION_QUANTILES,
};
pub use encode::{asymmetric_distance, asymmetric_distance_naive, encode, encode_with_relevance, Lut};
pub use io::{read_codebook, read_codes, write_codebook, write_codes};
pub use pq::{reconstruction_error, train_opq, train_pq, OpqTraining, PqParams, PqTraining};
pub use relevance::{build_relevant_queries, RelevantQuery, RelevantQueryMap};

use crate::data::{Metric, VectorDataset};
use crate::error::{ensure, Error, Result};

/// Hyperparameters of the APQ alternating optimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GdParams {
    /// Initial gradient step; adapted per update by backtracking.
    pub learning_rate: f32,
    pub max_iters_per_update: usize,
    pub outer_rounds: usize,
    /// Relative objective change that ends training.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for GdParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            max_iters_per_update: 50,
            outer_rounds: 15,
            convergence_tol: 1e-4,
            seed: 0,
        }
    }
}

impl GdParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.learning_rate > 0.0
                && self.max_iters_per_update > 0
                && self.outer_rounds > 0
                && self.convergence_tol > 0.0,
            "gradient descent parameters must be positive: {self:?}"
        );
        Ok(())
    }
}

/// `M` dictionaries of `K` pivots each, with an optional orthonormal
/// rotation applied to vectors before chunking.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    m: usize,
    k: usize,
    chunk_dim: usize,
    /// `m × k × chunk_dim`, chunk-major.
    pivots: Vec<f32>,
    /// Row-major `D × D`; encoded vectors are `R x`.
    rotation: Option<Vec<f32>>,
    metric: Metric,
}

impl Codebook {
    pub fn new(
        m: usize,
        k: usize,
        chunk_dim: usize,
        pivots: Vec<f32>,
        rotation: Option<Vec<f32>>,
        metric: Metric,
    ) -> Result<Self> {
        ensure!(
            m >= 1 && k >= 1 && chunk_dim >= 1,
            "M, K and chunk_dim must be positive"
        );
        ensure!(k <= 256, "K = {k} does not fit byte codes");
        ensure!(
            pivots.len() == m * k * chunk_dim,
            "expected {} pivot values, got {}",
            m * k * chunk_dim,
            pivots.len()
        );
        if let Some(i) = pivots.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite pivot value in chunk {}",
                i / (k * chunk_dim)
            )));
        }
        let dim = m * chunk_dim;
        if let Some(r) = &rotation {
            ensure!(r.len() == dim * dim, "rotation must be {dim}x{dim}");
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite rotation entry".into()));
            }
            let residual = orthonormality_residual(r, dim);
            if residual > 1e-4 {
                return Err(Error::Numerical(format!(
                    "rotation is not orthonormal (max |RᵀR - I| = {residual:e})"
                )));
            }
        }
        Ok(Self {
            m,
            k,
            chunk_dim,
            pivots,
            rotation,
            metric,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn chunk_dim(&self) -> usize {
        self.chunk_dim
    }

    pub fn dim(&self) -> usize {
        self.m * self.chunk_dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn rotation(&self) -> Option<&[f32]> {
        self.rotation.as_deref()
    }

    pub fn pivots(&self) -> &[f32] {
        &self.pivots
    }

    /// Dictionary of chunk `j` as a `K × chunk_dim` slice.
    pub fn dictionary(&self, j: usize) -> &[f32] {
        let len = self.k * self.chunk_dim;
        &self.pivots[j * len..(j + 1) * len]
    }

    #[inline]
    pub fn pivot(&self, j: usize, c: usize) -> &[f32] {
        let start = (j * self.k + c) * self.chunk_dim;
        &self.pivots[start..start + self.chunk_dim]
    }

    /// `R x`, or a copy of `x` without a rotation.
    pub fn rotate(&self, x: &[f32]) -> Vec<f32> {
        match &self.rotation {
            None => x.to_vec(),
            Some(r) => mat_vec(r, x),
        }
    }

    /// `Rᵀ y`, mapping a rotated vector back to the input space.
    pub fn unrotate(&self, y: &[f32]) -> Vec<f32> {
        match &self.rotation {
            None => y.to_vec(),
            Some(r) => mat_t_vec(r, y),
        }
    }

    /// Concatenated pivots in the rotated space.
    pub fn reconstruct_rotated(&self, code: &[u8]) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.dim());
        for (j, &c) in code.iter().enumerate() {
            out.extend_from_slice(self.pivot(j, c as usize));
        }
        out
    }

    /// Reconstruction of `code` in the input space.
    pub fn decode(&self, code: &[u8]) -> Vec<f32> {
        self.unrotate(&self.reconstruct_rotated(code))
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        ensure!(
            dim == self.dim(),
            "codebook dimension {} differs from data dimension {dim}",
            self.dim()
        );
        Ok(())
    }

    /// Rotates every row of `ds`.
    pub(crate) fn rotate_dataset(&self, ds: &VectorDataset) -> Result<VectorDataset> {
        match &self.rotation {
            None => Ok(ds.clone()),
            Some(r) => rotate_rows(r, ds),
        }
    }
}

/// Byte codes for a dataset: `count × M` pivot indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedDataset {
    count: usize,
    m: usize,
    codes: Vec<u8>,
}

impl QuantizedDataset {
    pub fn new(count: usize, m: usize, codes: Vec<u8>) -> Result<Self> {
        ensure!(
            codes.len() == count * m,
            "expected {} codes, got {}",
            count * m,
            codes.len()
        );
        Ok(Self { count, m, codes })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    #[inline]
    pub fn code(&self, i: usize) -> &[u8] {
        &self.codes[i * self.m..(i + 1) * self.m]
    }

    /// Checks that every code indexes an existing pivot of `cb`.
    pub fn validate_against(&self, cb: &Codebook) -> Result<()> {
        ensure!(
            self.m == cb.m(),
            "codes have M = {} but codebook has {}",
            self.m,
            cb.m()
        );
        ensure!(
            self.codes.iter().all(|&c| (c as usize) < cb.k()),
            "code out of range for K = {}",
            cb.k()
        );
        Ok(())
    }
}

pub(crate) fn mat_vec(r: &[f32], x: &[f32]) -> Vec<f32> {
    r.chunks_exact(x.len())
        .map(|row| row.iter().zip(x).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() as f32)
        .collect()
}

pub(crate) fn mat_t_vec(r: &[f32], y: &[f32]) -> Vec<f32> {
    let d = y.len();
    let mut out = vec![0f64; d];
    for (row, &yi) in r.chunks_exact(d).zip(y) {
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a as f64 * yi as f64;
        }
    }
    out.into_iter().map(|v| v as f32).collect()
}

pub(crate) fn rotate_rows(r: &[f32], ds: &VectorDataset) -> Result<VectorDataset> {
    use crate::par::*;
    let rows: Vec<Vec<f32>> = (0..ds.count())
        .into_par_iter()
        .map(|i| mat_vec(r, ds.row(i)))
        .collect();
    VectorDataset::new(ds.dim(), rows.concat(), ds.metric())
}

/// `max |RᵀR - I|` for a row-major `dim × dim` matrix.
pub fn orthonormality_residual(r: &[f32], dim: usize) -> f64 {
    let mut worst = 0f64;
    for a in 0..dim {
        for b in 0..dim {
            let mut s = 0f64;
            for i in 0..dim {
                s += r[i * dim + a] as f64 * r[i * dim + b] as f64;
            }
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
        }
    }
    worst
}
