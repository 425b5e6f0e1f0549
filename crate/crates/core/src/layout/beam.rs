use std::collections::HashSet;

use super::SectorLayout;
use crate::data::{Neighbor, VectorDataset};
use crate::error::{ensure, Result};
use crate::graph::GraphIndex;
use crate::quant::{Codebook, Lut, QuantizedDataset};

/// Counters for one simulated disk search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IoStats {
    /// Distinct sectors fetched.
    pub sector_reads: usize,
    /// Compressed plus full-precision distance computations.
    pub distance_evals: usize,
    /// Expansion rounds.
    pub hops: usize,
    /// Nodes expanded.
    pub expanded: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeamSearchParams {
    pub k: usize,
    pub search_list: usize,
    pub beam_width: usize,
}

impl Default for BeamSearchParams {
    fn default() -> Self {
        Self {
            k: 10,
            search_list: 64,
            beam_width: 4,
        }
    }
}

/// Beam search over an on-disk index simulated in memory.
///
/// The candidate list is ordered by compressed-code distances. Each round
/// expands up to `beam_width` of the closest unexpanded candidates and reads
/// their sectors; a sector read earlier in the same query is not charged
/// again. The final list is re-ranked with full-precision distances of its
/// members, all of which were expanded and hence read. Results never depend
/// on the layout, only the counters do.
pub fn beam_search_disk(
    graph: &GraphIndex,
    layout: &SectorLayout,
    full_vectors: &VectorDataset,
    codes: &QuantizedDataset,
    cb: &Codebook,
    query: &[f32],
    params: &BeamSearchParams,
) -> Result<(Vec<u32>, IoStats)> {
    let BeamSearchParams {
        k,
        search_list: l,
        beam_width,
    } = *params;
    ensure!(k >= 1 && k <= l, "need 1 <= k <= L, got k = {k}, L = {l}");
    ensure!(beam_width >= 1, "beam width must be at least 1");
    ensure!(graph.is_finalized(), "disk search requires a finalized graph");
    let n = graph.node_count();
    ensure!(
        layout.node_count() == n && full_vectors.count() == n && codes.count() == n,
        "graph, layout, vectors and codes disagree on the node count"
    );
    codes.validate_against(cb)?;
    ensure!(
        query.len() == full_vectors.dim(),
        "query dimension {} differs from data dimension {}",
        query.len(),
        full_vectors.dim()
    );

    let lut = Lut::new(cb, query)?;
    let mut stats = IoStats::default();
    let mut seen: HashSet<u32> = HashSet::new();
    let mut expanded: HashSet<u32> = HashSet::new();
    let mut read: HashSet<u32> = HashSet::new();
    let mut list: Vec<Neighbor> = Vec::with_capacity(l + 1);

    let start = graph.start();
    seen.insert(start);
    list.push(Neighbor::new(start, lut.distance(codes.code(start as usize))));
    stats.distance_evals += 1;

    let mut frontier = Vec::with_capacity(beam_width);
    loop {
        frontier.clear();
        frontier.extend(
            list.iter()
                .filter(|c| !expanded.contains(&c.id))
                .take(beam_width)
                .map(|c| c.id),
        );
        if frontier.is_empty() {
            break;
        }
        stats.hops += 1;
        for &v in &frontier {
            expanded.insert(v);
            stats.expanded += 1;
            if read.insert(layout.sector_of(v)) {
                stats.sector_reads += 1;
            }
        }
        for &v in &frontier {
            for &u in graph.neighbors(v) {
                if !seen.insert(u) {
                    continue;
                }
                let d = lut.distance(codes.code(u as usize));
                stats.distance_evals += 1;
                let cand = Neighbor::new(u, d);
                if list.len() >= l && cand >= list[l - 1] {
                    continue;
                }
                let pos = list.partition_point(|x| *x < cand);
                list.insert(pos, cand);
                list.truncate(l);
            }
        }
    }

    let metric = full_vectors.metric();
    let mut reranked: Vec<Neighbor> = list
        .iter()
        .map(|c| Neighbor::new(c.id, metric.distance(full_vectors.row(c.id as usize), query)))
        .collect();
    stats.distance_evals += reranked.len();
    reranked.sort_unstable();
    Ok((reranked.iter().take(k).map(|c| c.id).collect(), stats))
}
