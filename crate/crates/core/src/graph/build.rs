use parking_lot::RwLock;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::prune::prune_list;
use super::search::{greedy_search_with, Scratch};
use super::{BuildParams, GraphIndex, NodeVectors};
use crate::data::VectorDataset;
use crate::error::{ensure, Result};
use crate::par::*;

/// Base point closest (squared L2) to the arithmetic mean; ties go to the
/// smaller id.
pub fn medoid(base: &VectorDataset) -> u32 {
    let mean = base.centroid();
    let dists: Vec<f64> = (0..base.count())
        .into_par_iter()
        .map(|i| {
            base.row(i)
                .iter()
                .zip(&mean)
                .map(|(&x, &m)| {
                    let d = x as f64 - m;
                    d * d
                })
                .sum()
        })
        .collect();
    let mut best = 0;
    for (i, &d) in dists.iter().enumerate() {
        if d < dists[best] {
            best = i;
        }
    }
    best as u32
}

/// Plain Vamana: RobustVamana without a query sample.
pub fn build_vamana(base: &VectorDataset, params: &BuildParams) -> Result<GraphIndex> {
    build_robust_vamana(base, None, params)
}

/// Builds the graph over `base` with the query sample inserted as transient
/// nodes, then stitches and removes them.
pub fn build_robust_vamana(
    base: &VectorDataset,
    query_sample: Option<&VectorDataset>,
    params: &BuildParams,
) -> Result<GraphIndex> {
    let mut graph = build_unstitched(base, query_sample, params)?;
    let vectors = NodeVectors::new(base, query_sample)?;
    graph.finalize(&vectors)?;
    Ok(graph)
}

/// Runs both insertion passes and returns the graph before stitching, with
/// query-sample nodes still present.
pub fn build_unstitched(
    base: &VectorDataset,
    query_sample: Option<&VectorDataset>,
    params: &BuildParams,
) -> Result<GraphIndex> {
    params.validate()?;
    if let Some(q) = query_sample {
        ensure!(
            q.metric() == base.metric(),
            "query sample uses {} but the base uses {}",
            q.metric(),
            base.metric()
        );
    }
    let vectors = NodeVectors::new(base, query_sample)?;
    let total = vectors.len();
    ensure!(total <= u32::MAX as usize, "{total} nodes do not fit 32-bit ids");
    let start = medoid(base);
    let adjacency: Vec<RwLock<Vec<u32>>> = (0..total)
        .map(|_| RwLock::new(Vec::with_capacity(params.max_degree + 1)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for alpha in [params.alpha1, params.alpha2] {
        let mut order: Vec<u32> = (0..total as u32).collect();
        order.shuffle(&mut rng);
        let ctx = Inserter {
            adjacency: &adjacency,
            vectors: &vectors,
            start,
            alpha,
            params,
        };
        if current_num_threads() <= 1 {
            // Sequential path keeps builds reproducible for a fixed seed.
            let mut sc = Scratch::new(total);
            for &i in &order {
                ctx.insert(i, &mut sc);
            }
        } else {
            order
                .par_iter()
                .for_each_init(|| Scratch::new(total), |sc, &i| ctx.insert(i, sc));
        }
    }

    let adjacency = adjacency.into_iter().map(RwLock::into_inner).collect();
    GraphIndex::from_adjacency(base.count(), params.max_degree, adjacency, start, base.metric())
}

struct Inserter<'a> {
    adjacency: &'a [RwLock<Vec<u32>>],
    vectors: &'a NodeVectors<'a>,
    start: u32,
    alpha: f32,
    params: &'a BuildParams,
}

impl Inserter<'_> {
    fn insert(&self, i: u32, sc: &mut Scratch) {
        let r = self.params.max_degree;
        let is_base = (i as usize) < self.vectors.base_count();
        let trace = greedy_search_with(
            self.adjacency,
            self.vectors,
            self.start,
            self.vectors.vector(i),
            !is_base,
            self.params.search_list,
            sc,
        );
        let out = if is_base {
            let mut list = self.adjacency[i as usize].write();
            let pruned = prune_list(
                self.vectors,
                i,
                trace.visited.iter().chain(list.iter()).copied(),
                self.alpha,
                r,
            );
            list.clone_from(&pruned);
            pruned
        } else {
            // Query nodes keep their R nearest base points unpruned.
            let nearest: Vec<u32> = trace.candidates.iter().take(r).map(|n| n.id).collect();
            self.adjacency[i as usize].write().clone_from(&nearest);
            nearest
        };

        for &j in &out {
            if j as usize >= self.vectors.base_count() {
                continue;
            }
            let mut list = self.adjacency[j as usize].write();
            if list.contains(&i) {
                continue;
            }
            list.push(i);
            if list.len() > r {
                let pruned = prune_list(self.vectors, j, list.iter().copied(), self.alpha, r);
                *list = pruned;
            }
        }
    }
}
