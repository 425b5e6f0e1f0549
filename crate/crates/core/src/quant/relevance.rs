use crate::data::{topk_unchecked, VectorDataset};
use crate::error::{ensure, Result};
use crate::par::*;

/// One entry of a base point's relevant-query list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RelevantQuery {
    pub query: u32,
    /// The base point is among the `T'` nearest neighbors of this query.
    pub near: bool,
}

/// For every base point, the sample queries that have it among their `T`
/// nearest neighbors, capped at the `phi` closest such queries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelevantQueryMap {
    t: usize,
    t_prime: usize,
    phi: usize,
    query_count: usize,
    offsets: Vec<usize>,
    entries: Vec<RelevantQuery>,
}

impl RelevantQueryMap {
    /// Map in which every base point has an empty list.
    pub fn empty(base_count: usize, query_count: usize) -> Self {
        Self {
            t: 0,
            t_prime: 0,
            phi: 0,
            query_count,
            offsets: vec![0; base_count + 1],
            entries: Vec::new(),
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn t_prime(&self) -> usize {
        self.t_prime
    }

    pub fn phi(&self) -> usize {
        self.phi
    }

    pub fn base_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn query_count(&self) -> usize {
        self.query_count
    }

    #[inline]
    pub fn list(&self, i: usize) -> &[RelevantQuery] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Number of base points with at least one relevant query.
    pub fn covered(&self) -> usize {
        self.offsets.windows(2).filter(|w| w[1] > w[0]).count()
    }

    pub(crate) fn check_against(&self, base: &VectorDataset, queries: &VectorDataset) -> Result<()> {
        ensure!(
            self.base_count() == base.count(),
            "relevant-query map covers {} base points, dataset has {}",
            self.base_count(),
            base.count()
        );
        ensure!(
            self.query_count == queries.count(),
            "relevant-query map was built for {} queries, got {}",
            self.query_count,
            queries.count()
        );
        Ok(())
    }
}

/// Computes each query's exact top-`T` base points, inverts them into
/// per-base lists and keeps the `phi` queries closest to each base point
/// (ties: smaller query id). Entries from a query's top `T'` are flagged
/// near.
pub fn build_relevant_queries(
    base: &VectorDataset,
    queries: &VectorDataset,
    t: usize,
    t_prime: usize,
    phi: usize,
) -> Result<RelevantQueryMap> {
    ensure!(
        t >= t_prime && t_prime >= 1,
        "need T >= T' >= 1, got T = {t}, T' = {t_prime}"
    );
    ensure!(phi >= 1, "phi must be at least 1");
    ensure!(
        t <= base.count(),
        "T = {t} exceeds the base size {}",
        base.count()
    );
    ensure!(
        queries.dim() == base.dim(),
        "query dimension {} differs from base dimension {}",
        queries.dim(),
        base.dim()
    );
    ensure!(
        queries.metric() == base.metric(),
        "queries use {} but the base uses {}",
        queries.metric(),
        base.metric()
    );

    let tops: Vec<_> = (0..queries.count())
        .into_par_iter()
        .map(|q| topk_unchecked(base, queries.row(q), t))
        .collect();

    let mut lists: Vec<Vec<(f32, u32, bool)>> = vec![Vec::new(); base.count()];
    for (q, top) in tops.iter().enumerate() {
        for (rank, n) in top.iter().enumerate() {
            lists[n.id as usize].push((n.dist, q as u32, rank < t_prime));
        }
    }

    let mut offsets = Vec::with_capacity(base.count() + 1);
    let mut entries = Vec::new();
    offsets.push(0);
    for mut list in lists {
        list.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        list.truncate(phi);
        entries.extend(
            list.into_iter()
                .map(|(_, query, near)| RelevantQuery { query, near }),
        );
        offsets.push(entries.len());
    }
    Ok(RelevantQueryMap {
        t,
        t_prime,
        phi,
        query_count: queries.count(),
        offsets,
        entries,
    })
}
