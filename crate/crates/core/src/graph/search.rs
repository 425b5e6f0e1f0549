use parking_lot::RwLock;

use super::{GraphIndex, NodeVectors};
use crate::data::{Neighbor, VectorDataset};
use crate::error::{ensure, Result};
use crate::par::*;

/// Record of a single greedy search.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchTrace {
    /// Final candidate list, closest first (at most `L` entries).
    pub candidates: Vec<Neighbor>,
    /// Expanded nodes in expansion order.
    pub visited: Vec<u32>,
    pub hops: usize,
    pub distance_evals: usize,
}

/// Read access to adjacency lists, shared by the frozen graph and the
/// lock-per-node graph used during construction.
pub(crate) trait Adjacency: Sync {
    fn node_count(&self) -> usize;
    fn copy_neighbors(&self, id: u32, out: &mut Vec<u32>);
}

impl Adjacency for GraphIndex {
    fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    fn copy_neighbors(&self, id: u32, out: &mut Vec<u32>) {
        out.clear();
        out.extend_from_slice(&self.adjacency[id as usize]);
    }
}

impl Adjacency for [RwLock<Vec<u32>>] {
    fn node_count(&self) -> usize {
        self.len()
    }

    fn copy_neighbors(&self, id: u32, out: &mut Vec<u32>) {
        out.clear();
        out.extend_from_slice(&self[id as usize].read());
    }
}

/// Per-thread buffers. Membership flags are generation stamps so a search
/// never has to clear arrays sized to the whole graph.
pub(crate) struct Scratch {
    stamp: u32,
    dist_stamp: Vec<u32>,
    dist_cache: Vec<f32>,
    in_list: Vec<u32>,
    expanded: Vec<u32>,
    list: Vec<Neighbor>,
    nbrs: Vec<u32>,
}

impl Scratch {
    pub(crate) fn new(nodes: usize) -> Self {
        Self {
            stamp: 0,
            dist_stamp: vec![0; nodes],
            dist_cache: vec![0.0; nodes],
            in_list: vec![0; nodes],
            expanded: vec![0; nodes],
            list: Vec::new(),
            nbrs: Vec::new(),
        }
    }

    fn next_generation(&mut self, nodes: usize) {
        if self.dist_stamp.len() < nodes {
            *self = Self::new(nodes);
        }
        if self.stamp == u32::MAX {
            self.dist_stamp.fill(0);
            self.in_list.fill(0);
            self.expanded.fill(0);
            self.stamp = 0;
        }
        self.stamp += 1;
    }
}

/// Greedy best-first search from `start` towards `query`.
///
/// Each round expands the closest unexpanded entry of the candidate list,
/// adds its out-neighbors that are not already listed and truncates the list
/// back to `l` entries. With `base_only` set, query-sample nodes are never
/// admitted to the list. Ties are broken by smaller id.
pub(crate) fn greedy_search_with<A: Adjacency + ?Sized>(
    adj: &A,
    vectors: &NodeVectors<'_>,
    start: u32,
    query: &[f32],
    base_only: bool,
    l: usize,
    sc: &mut Scratch,
) -> SearchTrace {
    let metric = vectors.metric();
    let base_count = vectors.base_count() as u32;
    sc.next_generation(adj.node_count());
    let stamp = sc.stamp;
    sc.list.clear();
    let mut visited = Vec::new();
    let mut evals = 0usize;

    let d0 = metric.distance(vectors.vector(start), query);
    evals += 1;
    sc.dist_stamp[start as usize] = stamp;
    sc.dist_cache[start as usize] = d0;
    sc.in_list[start as usize] = stamp;
    sc.list.push(Neighbor::new(start, d0));

    // Position of the first entry that may still be unexpanded.
    let mut cursor = 0usize;
    loop {
        while cursor < sc.list.len() && sc.expanded[sc.list[cursor].id as usize] == stamp {
            cursor += 1;
        }
        if cursor >= sc.list.len() {
            break;
        }
        let p = sc.list[cursor].id;
        sc.expanded[p as usize] = stamp;
        visited.push(p);

        let mut nbrs = std::mem::take(&mut sc.nbrs);
        adj.copy_neighbors(p, &mut nbrs);
        for &v in &nbrs {
            if base_only && v >= base_count {
                continue;
            }
            let vi = v as usize;
            if sc.in_list[vi] == stamp {
                continue;
            }
            let d = if sc.dist_stamp[vi] == stamp {
                sc.dist_cache[vi]
            } else {
                let d = metric.distance(vectors.vector(v), query);
                evals += 1;
                sc.dist_stamp[vi] = stamp;
                sc.dist_cache[vi] = d;
                d
            };
            let cand = Neighbor::new(v, d);
            if sc.list.len() >= l && cand >= sc.list[l - 1] {
                continue;
            }
            let pos = sc.list.partition_point(|x| *x < cand);
            sc.list.insert(pos, cand);
            sc.in_list[vi] = stamp;
            cursor = cursor.min(pos);
        }
        sc.nbrs = nbrs;
        if sc.list.len() > l {
            for dropped in &sc.list[l..] {
                sc.in_list[dropped.id as usize] = 0;
            }
            sc.list.truncate(l);
        }
    }

    SearchTrace {
        candidates: sc.list.clone(),
        hops: visited.len(),
        visited,
        distance_evals: evals,
    }
}

/// Greedy search over a built graph; see [`SearchTrace`] for the output.
///
/// `vectors` must cover every node of `graph`, including query-sample nodes
/// when the graph is not finalized.
pub fn greedy_search(
    graph: &GraphIndex,
    vectors: &NodeVectors<'_>,
    start: u32,
    query: &[f32],
    base_only: bool,
    l: usize,
) -> Result<SearchTrace> {
    ensure!(l >= 1, "search list size must be at least 1");
    ensure!(
        vectors.len() == graph.node_count(),
        "graph has {} nodes but {} vectors were supplied",
        graph.node_count(),
        vectors.len()
    );
    ensure!(
        (start as usize) < graph.node_count(),
        "start node {start} out of range"
    );
    ensure!(
        query.len() == vectors.dim(),
        "query dimension {} differs from data dimension {}",
        query.len(),
        vectors.dim()
    );
    let mut sc = Scratch::new(graph.node_count());
    Ok(greedy_search_with(
        graph, vectors, start, query, base_only, l, &mut sc,
    ))
}

/// Reusable searcher over a finalized graph that keeps its scratch space
/// between queries.
pub struct Searcher<'a> {
    graph: &'a GraphIndex,
    vectors: NodeVectors<'a>,
    scratch: Scratch,
}

impl<'a> Searcher<'a> {
    pub fn new(graph: &'a GraphIndex, base: &'a VectorDataset) -> Result<Self> {
        ensure!(graph.is_finalized(), "searching requires a finalized graph");
        ensure!(
            graph.base_count() == base.count(),
            "graph has {} nodes but the base set has {}",
            graph.base_count(),
            base.count()
        );
        Ok(Self {
            graph,
            vectors: NodeVectors::base_only(base),
            scratch: Scratch::new(graph.node_count()),
        })
    }

    /// Returns the `k` closest ids found with search list size `l`.
    pub fn search(&mut self, query: &[f32], k: usize, l: usize) -> Result<(Vec<u32>, SearchTrace)> {
        ensure!(k >= 1 && k <= l, "need 1 <= k <= L, got k = {k}, L = {l}");
        ensure!(
            query.len() == self.vectors.dim(),
            "query dimension {} differs from data dimension {}",
            query.len(),
            self.vectors.dim()
        );
        let trace = greedy_search_with(
            self.graph,
            &self.vectors,
            self.graph.start(),
            query,
            true,
            l,
            &mut self.scratch,
        );
        let ids = trace.candidates.iter().take(k).map(|n| n.id).collect();
        Ok((ids, trace))
    }
}

/// One-off top-`k` search on a finalized graph.
pub fn search_topk(
    graph: &GraphIndex,
    base: &VectorDataset,
    query: &[f32],
    k: usize,
    l: usize,
) -> Result<(Vec<u32>, SearchTrace)> {
    Searcher::new(graph, base)?.search(query, k, l)
}

/// Searches every query row; returns ids and hop counts per query.
pub fn search_batch(
    graph: &GraphIndex,
    base: &VectorDataset,
    queries: &VectorDataset,
    k: usize,
    l: usize,
) -> Result<Vec<(Vec<u32>, SearchTrace)>> {
    // Validate once up front so the parallel loop cannot fail halfway.
    let _ = Searcher::new(graph, base)?;
    ensure!(k >= 1 && k <= l, "need 1 <= k <= L, got k = {k}, L = {l}");
    ensure!(
        queries.dim() == base.dim(),
        "query dimension {} differs from data dimension {}",
        queries.dim(),
        base.dim()
    );
    let vectors = NodeVectors::base_only(base);
    let out = (0..queries.count())
        .into_par_iter()
        .map_init(
            || Scratch::new(graph.node_count()),
            |sc, q| {
                let trace = greedy_search_with(graph, &vectors, graph.start(), queries.row(q), true, l, sc);
                let ids = trace.candidates.iter().take(k).map(|n| n.id).collect();
                (ids, trace)
            },
        )
        .collect();
    Ok(out)
}
