use super::{GraphIndex, NodeVectors};
use crate::data::Neighbor;
use crate::error::{ensure, Result};

/// Per-base-node budget of edges each query in-neighbor may hand over
/// during stitching, computed once before any query node is removed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpareCounts(Vec<usize>);

impl SpareCounts {
    pub fn get(&self, v: u32) -> usize {
        self.0[v as usize]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// For each base node `p`: `(R - deg(p)) / k + 1` where `k` is the number of
/// query nodes in its list, or `R - deg(p)` when there are none.
pub fn compute_spare_counts(graph: &GraphIndex) -> SpareCounts {
    let r = graph.max_degree();
    let counts = (0..graph.base_count() as u32)
        .map(|p| {
            let list = graph.neighbors(p);
            let spare = r - list.len();
            let k = list.iter().filter(|&&u| u as usize >= graph.base_count()).count();
            if k > 0 {
                spare / k + 1
            } else {
                spare
            }
        })
        .collect();
    SpareCounts(counts)
}

/// Removes query node `p` from the lists of its in-neighbors `in_neighbors`
/// and gives each of them up to `S[v]` of `p`'s nearest other out-neighbors.
pub fn robust_stitch(
    graph: &mut GraphIndex,
    vectors: &NodeVectors<'_>,
    p: u32,
    in_neighbors: &[u32],
    spare: &SpareCounts,
) -> Result<()> {
    ensure!(
        (p as usize) >= graph.base_count() && (p as usize) < graph.node_count(),
        "node {p} is not a query-sample node"
    );
    ensure!(
        vectors.len() == graph.node_count(),
        "graph has {} nodes but {} vectors were supplied",
        graph.node_count(),
        vectors.len()
    );
    let r = graph.max_degree();
    let p_out = graph.neighbors(p).to_vec();
    for &v in in_neighbors {
        ensure!(
            (v as usize) < graph.base_count(),
            "in-neighbor {v} is not a base node"
        );
        let v_vec = vectors.vector(v);
        let metric = vectors.metric();
        let mut offered: Vec<Neighbor> = p_out
            .iter()
            .filter(|&&u| u != v)
            .map(|&u| Neighbor::new(u, metric.distance(vectors.vector(u), v_vec)))
            .collect();
        offered.sort_unstable();
        offered.truncate(spare.get(v));

        let list = &mut graph.adjacency_mut()[v as usize];
        list.retain(|&u| u != p);
        for n in offered {
            if !list.contains(&n.id) {
                list.push(n.id);
            }
        }
        if list.len() > r {
            let mut ranked: Vec<Neighbor> = list
                .iter()
                .map(|&u| Neighbor::new(u, metric.distance(vectors.vector(u), v_vec)))
                .collect();
            ranked.sort_unstable();
            ranked.truncate(r);
            *list = ranked.into_iter().map(|n| n.id).collect();
        }
    }
    Ok(())
}

impl GraphIndex {
    /// Stitches every query-sample node (ascending id) and drops them,
    /// leaving base nodes only. A no-op on a finalized graph.
    pub fn finalize(&mut self, vectors: &NodeVectors<'_>) -> Result<()> {
        if self.is_finalized() {
            return Ok(());
        }
        let spare = compute_spare_counts(self);
        let n = self.base_count;
        let mut in_neighbors: Vec<Vec<u32>> = vec![Vec::new(); self.query_count];
        for v in 0..n {
            for &u in &self.adjacency[v] {
                if u as usize >= n {
                    in_neighbors[u as usize - n].push(v as u32);
                }
            }
        }
        for (offset, ins) in in_neighbors.iter().enumerate() {
            robust_stitch(self, vectors, (n + offset) as u32, ins, &spare)?;
        }
        self.adjacency.truncate(n);
        for list in &mut self.adjacency {
            list.retain(|&u| (u as usize) < n);
        }
        self.query_count = 0;
        Ok(())
    }
}
