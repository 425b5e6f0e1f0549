use super::{GraphIndex, NodeVectors};
use crate::data::{Metric, Neighbor};
use crate::error::{ensure, Result};

/// Scale applied to the candidate-to-candidate distance before comparing it
/// with the candidate-to-node distance. Distances are squared for L2, so the
/// occlusion factor is squared too.
#[inline]
fn occlusion_factor(metric: Metric, alpha: f32) -> f32 {
    match metric {
        Metric::SquaredL2 => alpha * alpha,
        Metric::InnerProduct => alpha,
    }
}

/// Selects at most `max_degree` out-neighbors for `p` from `candidates`.
///
/// Candidates are taken closest first; each kept neighbor `q` removes every
/// remaining candidate `c` with `alpha * d(q, c) <= d(p, c)`.
pub(crate) fn prune_list(
    vectors: &NodeVectors<'_>,
    p: u32,
    candidates: impl IntoIterator<Item = u32>,
    alpha: f32,
    max_degree: usize,
) -> Vec<u32> {
    let p_vec = vectors.vector(p);
    let metric = vectors.metric();
    let mut pool: Vec<Neighbor> = candidates
        .into_iter()
        .filter(|&c| c != p)
        .map(|c| Neighbor::new(c, metric.distance(vectors.vector(c), p_vec)))
        .collect();
    pool.sort_unstable();
    pool.dedup_by_key(|n| n.id);
    select(vectors, &pool, alpha, max_degree)
}

fn select(vectors: &NodeVectors<'_>, pool: &[Neighbor], alpha: f32, max_degree: usize) -> Vec<u32> {
    let factor = occlusion_factor(vectors.metric(), alpha);
    let mut removed = vec![false; pool.len()];
    let mut kept = Vec::with_capacity(max_degree.min(pool.len()));
    for i in 0..pool.len() {
        if removed[i] {
            continue;
        }
        let q = pool[i].id;
        kept.push(q);
        if kept.len() == max_degree {
            break;
        }
        let q_vec = vectors.vector(q);
        for j in i + 1..pool.len() {
            if removed[j] {
                continue;
            }
            let d_qc = vectors.metric().distance(q_vec, vectors.vector(pool[j].id));
            if factor * d_qc <= pool[j].dist {
                removed[j] = true;
            }
        }
    }
    kept
}

/// Replaces the out-neighbors of `p` with the pruned union of `candidates`
/// and its current list.
pub fn robust_prune(
    graph: &mut GraphIndex,
    vectors: &NodeVectors<'_>,
    p: u32,
    candidates: &[u32],
    alpha: f32,
) -> Result<()> {
    ensure!(alpha >= 1.0, "alpha must be at least 1, got {alpha}");
    ensure!(
        vectors.len() == graph.node_count(),
        "graph has {} nodes but {} vectors were supplied",
        graph.node_count(),
        vectors.len()
    );
    let n = graph.node_count();
    ensure!((p as usize) < n, "node {p} out of range");
    ensure!(
        candidates.iter().all(|&c| (c as usize) < n),
        "candidate id out of range"
    );
    let current = graph.neighbors(p).to_vec();
    let list = prune_list(
        vectors,
        p,
        candidates.iter().copied().chain(current),
        alpha,
        graph.max_degree(),
    );
    graph.adjacency_mut()[p as usize] = list;
    Ok(())
}
