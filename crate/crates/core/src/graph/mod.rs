//! Navigable graph indices: plain Vamana and the query-sample-aware
//! RobustVamana construction.
//!
//! During construction the graph holds `base_count` base nodes followed by
//! `query_count` query-sample nodes (ids `base_count..`). Finalization
//! stitches the base neighbors of every query node together and drops the
//! query nodes, leaving a graph over the base set only.

mod build;
mod io;
mod prune;
mod search;
mod stitch;

pub use build::{build_robust_vamana, build_unstitched, build_vamana, medoid};
pub use io::{read_graph, write_graph};
pub use prune::robust_prune;
pub use search::{greedy_search, search_batch, search_topk, SearchTrace, Searcher};
pub use stitch::{compute_spare_counts, robust_stitch, SpareCounts};

use crate::data::{Metric, VectorDataset};
use crate::error::{ensure, Result};

/// Whether a node id refers to a base point or a transient query-sample point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Base,
    QuerySample,
}

/// Construction parameters. Defaults follow the operating point used for
/// the large-scale experiments (R = 64, L = 128, alpha 1.0 then 1.2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildParams {
    /// Maximum out-degree `R`.
    pub max_degree: usize,
    /// Build-time search list size `L`.
    pub search_list: usize,
    pub alpha1: f32,
    pub alpha2: f32,
    pub seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            max_degree: 64,
            search_list: 128,
            alpha1: 1.0,
            alpha2: 1.2,
            seed: 0,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.max_degree >= 1, "R must be at least 1");
        ensure!(
            self.search_list >= self.max_degree,
            "L = {} must be at least R = {}",
            self.search_list,
            self.max_degree
        );
        ensure!(
            self.alpha1 >= 1.0 && self.alpha2 >= self.alpha1,
            "need 1 <= alpha1 <= alpha2, got {} and {}",
            self.alpha1,
            self.alpha2
        );
        Ok(())
    }
}

/// Vectors for every node id of a (possibly unfinalized) graph.
#[derive(Clone, Copy, Debug)]
pub struct NodeVectors<'a> {
    base: &'a VectorDataset,
    queries: Option<&'a VectorDataset>,
}

impl<'a> NodeVectors<'a> {
    pub fn new(base: &'a VectorDataset, queries: Option<&'a VectorDataset>) -> Result<Self> {
        if let Some(q) = queries {
            ensure!(
                q.dim() == base.dim(),
                "query sample dimension {} differs from base dimension {}",
                q.dim(),
                base.dim()
            );
        }
        Ok(Self { base, queries })
    }

    pub fn base_only(base: &'a VectorDataset) -> Self {
        Self { base, queries: None }
    }

    pub fn base_count(&self) -> usize {
        self.base.count()
    }

    pub fn len(&self) -> usize {
        self.base.count() + self.queries.map_or(0, |q| q.count())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn metric(&self) -> Metric {
        self.base.metric()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    #[inline]
    pub fn vector(&self, id: u32) -> &'a [f32] {
        let id = id as usize;
        let n = self.base.count();
        if id < n {
            self.base.row(id)
        } else {
            self.queries
                .expect("query node without query vectors")
                .row(id - n)
        }
    }
}

/// Capped adjacency lists over base nodes and (before finalization)
/// query-sample nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphIndex {
    base_count: usize,
    query_count: usize,
    max_degree: usize,
    adjacency: Vec<Vec<u32>>,
    start: u32,
    metric: Metric,
}

impl GraphIndex {
    /// Assembles a graph from explicit lists, checking the structural
    /// invariants (degree cap, no self loops or duplicates, base start).
    pub fn from_adjacency(
        base_count: usize,
        max_degree: usize,
        adjacency: Vec<Vec<u32>>,
        start: u32,
        metric: Metric,
    ) -> Result<Self> {
        ensure!(base_count >= 1, "graph needs at least one base node");
        ensure!(
            adjacency.len() >= base_count,
            "adjacency has {} lists for {base_count} base nodes",
            adjacency.len()
        );
        let g = Self {
            base_count,
            query_count: adjacency.len() - base_count,
            max_degree,
            adjacency,
            start,
            metric,
        };
        g.check_structure()?;
        Ok(g)
    }

    /// Verifies degree bound, id range, absence of self loops and
    /// duplicates, and that the start node is a base node.
    pub fn check_structure(&self) -> Result<()> {
        ensure!(
            (self.start as usize) < self.base_count,
            "start {} is not a base node",
            self.start
        );
        let total = self.adjacency.len();
        let mut seen = vec![u32::MAX; total];
        for (v, list) in self.adjacency.iter().enumerate() {
            ensure!(
                list.len() <= self.max_degree,
                "node {v} has degree {} > R = {}",
                list.len(),
                self.max_degree
            );
            for &u in list {
                ensure!((u as usize) < total, "node {v} links to out-of-range id {u}");
                ensure!(u as usize != v, "node {v} has a self loop");
                ensure!(seen[u as usize] != v as u32, "node {v} lists {u} twice");
                seen[u as usize] = v as u32;
            }
        }
        Ok(())
    }

    pub fn base_count(&self) -> usize {
        self.base_count
    }

    pub fn query_count(&self) -> usize {
        self.query_count
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn is_finalized(&self) -> bool {
        self.query_count == 0
    }

    #[inline]
    pub fn neighbors(&self, id: u32) -> &[u32] {
        &self.adjacency[id as usize]
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    #[inline]
    pub fn node_kind(&self, id: u32) -> NodeKind {
        if (id as usize) < self.base_count {
            NodeKind::Base
        } else {
            NodeKind::QuerySample
        }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// `hist[d]` = number of nodes with out-degree `d`.
    pub fn degree_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.max_degree + 1];
        for list in &self.adjacency {
            hist[list.len()] += 1;
        }
        hist
    }

    /// Reversed adjacency (in-neighbor lists), ids ascending.
    pub fn transpose(&self) -> Vec<Vec<u32>> {
        let mut rev = vec![Vec::new(); self.adjacency.len()];
        for (v, list) in self.adjacency.iter().enumerate() {
            for &u in list {
                rev[u as usize].push(v as u32);
            }
        }
        rev
    }

    pub(crate) fn adjacency_mut(&mut self) -> &mut [Vec<u32>] {
        &mut self.adjacency
    }
}
