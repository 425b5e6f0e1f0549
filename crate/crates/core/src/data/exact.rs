use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::VectorDataset;
use crate::error::{ensure, Result};
use crate::par::*;

/// A `(node id, distance)` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub dist: f32,
}

impl Neighbor {
    pub fn new(id: u32, dist: f32) -> Self {
        Self { id, dist }
    }

    /// Ascending distance, ties by smaller id.
    #[inline]
    pub fn cmp_by_dist(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_by_dist(other)
    }
}

/// Exact `k` nearest rows of `base` to `query` by exhaustive scan.
pub fn brute_force_topk(base: &VectorDataset, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
    ensure!(k >= 1, "k must be positive");
    ensure!(k <= base.count(), "k = {k} exceeds base count {}", base.count());
    ensure!(
        query.len() == base.dim(),
        "query dimension {} differs from base dimension {}",
        query.len(),
        base.dim()
    );
    Ok(topk_unchecked(base, query, k))
}

pub(crate) fn topk_unchecked(base: &VectorDataset, query: &[f32], k: usize) -> Vec<Neighbor> {
    let metric = base.metric();
    let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
    for (i, row) in base.rows().enumerate() {
        let cand = Neighbor::new(i as u32, metric.distance(query, row));
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.pop();
            heap.push(cand);
        }
    }
    heap.into_sorted_vec()
}

/// Per-query exact neighbor lists, `k` entries each, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    k: usize,
    ids: Vec<u32>,
    dists: Vec<f32>,
}

impl GroundTruth {
    pub fn from_parts(k: usize, ids: Vec<u32>, dists: Vec<f32>) -> Result<Self> {
        ensure!(k >= 1, "ground truth width must be positive");
        ensure!(
            ids.len() == dists.len() && ids.len().is_multiple_of(k),
            "ground truth id/distance matrices disagree"
        );
        Ok(Self { k, ids, dists })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn query_count(&self) -> usize {
        self.ids.len() / self.k
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn dists(&self) -> &[f32] {
        &self.dists
    }

    pub fn row_ids(&self, q: usize) -> &[u32] {
        &self.ids[q * self.k..(q + 1) * self.k]
    }

    pub fn row_dists(&self, q: usize) -> &[f32] {
        &self.dists[q * self.k..(q + 1) * self.k]
    }
}

/// Exact top-`k` for every query row, parallel over queries.
pub fn ground_truth(base: &VectorDataset, queries: &VectorDataset, k: usize) -> Result<GroundTruth> {
    ensure!(
        queries.dim() == base.dim(),
        "query dimension {} differs from base dimension {}",
        queries.dim(),
        base.dim()
    );
    ensure!(k >= 1 && k <= base.count(), "k = {k} out of range");
    let rows: Vec<Vec<Neighbor>> = (0..queries.count())
        .into_par_iter()
        .map(|q| topk_unchecked(base, queries.row(q), k))
        .collect();
    let mut ids = Vec::with_capacity(rows.len() * k);
    let mut dists = Vec::with_capacity(rows.len() * k);
    for row in rows {
        for n in row {
            ids.push(n.id);
            dists.push(n.dist);
        }
    }
    GroundTruth::from_parts(k, ids, dists)
}

/// `|top-k(retrieved) ∩ top-k(truth)| / k`.
pub fn recall_at_k(retrieved: &[u32], truth: &[u32], k: usize) -> Result<f64> {
    ensure!(k >= 1, "k must be positive");
    ensure!(
        retrieved.len() >= k && truth.len() >= k,
        "recall@{k} needs at least {k} retrieved ({}) and true ({}) ids",
        retrieved.len(),
        truth.len()
    );
    let truth = &truth[..k];
    let hits = retrieved[..k].iter().filter(|id| truth.contains(id)).count();
    Ok(hits as f64 / k as f64)
}
