//! Vector datasets, distance kernels, sampling and the exact-search oracle.

mod exact;
mod io;

pub(crate) use exact::topk_unchecked;
pub use exact::{brute_force_topk, ground_truth, recall_at_k, GroundTruth, Neighbor};
pub use io::{
    load_dataset, read_ground_truth, read_ids, save_dataset, write_ground_truth, write_ids, DatasetFormat,
};
pub(crate) use io::{read_file, write_file, ByteReader};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};

/// Distance convention. Smaller is always closer: inner product is negated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Metric {
    #[default]
    SquaredL2,
    InnerProduct,
}

impl Metric {
    /// Tag stored in file headers.
    pub fn tag(self) -> u32 {
        match self {
            Metric::SquaredL2 => 0,
            Metric::InnerProduct => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Metric::SquaredL2),
            1 => Some(Metric::InnerProduct),
            _ => None,
        }
    }

    #[inline]
    pub fn distance(self, a: &[f32], b: &[f32]) -> f32 {
        match self {
            Metric::SquaredL2 => squared_l2(a, b),
            Metric::InnerProduct => -dot(a, b),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::SquaredL2 => "l2",
            Metric::InnerProduct => "ip",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "squared_l2" | "euclidean" => Ok(Metric::SquaredL2),
            "ip" | "inner_product" | "mips" => Ok(Metric::InnerProduct),
            other => Err(Error::contract(format!("unknown metric {other:?}"))),
        }
    }
}

/// Computes `metric` between two vectors of equal length.
///
/// Panics when the lengths differ.
pub fn distance(metric: Metric, a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(
        a.len(),
        b.len(),
        "distance between vectors of different dimension"
    );
    metric.distance(a, b)
}

// Eight independent accumulators let the compiler vectorize without fast-math.
#[inline]
pub(crate) fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    acc.iter().sum::<f32>() + tail
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    acc.iter().sum::<f32>() + tail
}

/// A dense row-major `count × dim` matrix of `f32` with a metric tag.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorDataset {
    count: usize,
    dim: usize,
    values: Vec<f32>,
    metric: Metric,
}

impl VectorDataset {
    /// Builds a dataset, validating shape and finiteness.
    pub fn new(dim: usize, values: Vec<f32>, metric: Metric) -> Result<Self> {
        ensure!(dim >= 1, "dataset dimension must be positive");
        ensure!(
            values.len().is_multiple_of(dim),
            "value count {} is not a multiple of dim {dim}",
            values.len()
        );
        let count = values.len() / dim;
        ensure!(count >= 1, "dataset must hold at least one row");
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                row: pos / dim,
                message: format!("non-finite value {} at column {}", values[pos], pos % dim),
            });
        }
        Ok(Self {
            count,
            dim,
            values,
            metric,
        })
    }

    /// Builds a dataset from rows of equal length.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], metric: Metric) -> Result<Self> {
        ensure!(!rows.is_empty(), "dataset must hold at least one row");
        let dim = rows[0].as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            ensure!(
                row.as_ref().len() == dim,
                "row {i} has dimension {} but row 0 has {dim}",
                row.as_ref().len()
            );
            values.extend_from_slice(row.as_ref());
        }
        Self::new(dim, values, metric)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.dim)
    }

    /// Copies the listed rows into a new dataset.
    pub fn select(&self, ids: &[u32]) -> Result<Self> {
        ensure!(!ids.is_empty(), "cannot select zero rows");
        let mut values = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            ensure!((id as usize) < self.count, "row id {id} out of range");
            values.extend_from_slice(self.row(id as usize));
        }
        Ok(Self {
            count: ids.len(),
            dim: self.dim,
            values,
            metric: self.metric,
        })
    }

    /// Arithmetic mean of all rows, accumulated in f64.
    pub fn centroid(&self) -> Vec<f64> {
        let mut sum = vec![0.0f64; self.dim];
        for row in self.rows() {
            for (s, &v) in sum.iter_mut().zip(row) {
                *s += v as f64;
            }
        }
        sum.iter_mut().for_each(|s| *s /= self.count as f64);
        sum
    }
}

/// Draws `m` distinct rows uniformly at random. The id list is in draw order.
pub fn sample_without_replacement(
    ds: &VectorDataset,
    m: usize,
    seed: u64,
) -> Result<(VectorDataset, Vec<u32>)> {
    ensure!(m >= 1, "sample size must be positive");
    ensure!(
        m <= ds.count(),
        "cannot sample {m} rows from a dataset of {}",
        ds.count()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<u32> = index::sample(&mut rng, ds.count(), m)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    Ok((ds.select(&ids)?, ids))
}
