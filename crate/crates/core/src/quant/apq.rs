//! Query-aware pivot learning. Each base point is scored against the
//! queries it is relevant to: for queries that have it among their closest
//! `T'` neighbors the signed distortion is minimized, pushing estimates in
//! the favorable direction; for the remaining relevant queries the absolute
//! distortion is minimized. Points without relevant queries fall back to
//! the squared reconstruction error.

use super::kmeans::{chunk_seed, extract_chunk, fit, mean_into, random_rows, row, Objective};
use super::pq::{train_opq, validate_shape, PqParams};
use super::relevance::{RelevantQuery, RelevantQueryMap};
use super::{Codebook, GdParams};
use crate::data::{squared_l2, Metric, VectorDataset};
use crate::error::{ensure, Result};
use crate::par::*;

/// Signed distortion `actual - estimated` contributed by one chunk, in the
/// convention where larger inner products mean closer.
#[inline]
pub(crate) fn chunk_distortion(x: &[f32], mu: &[f32], q: &[f32], metric: Metric) -> f64 {
    match metric {
        Metric::SquaredL2 => x
            .iter()
            .zip(mu)
            .zip(q)
            .map(|((&x, &m), &q)| (x as f64 + m as f64 - 2.0 * q as f64) * (x as f64 - m as f64))
            .sum(),
        Metric::InnerProduct => x
            .iter()
            .zip(mu)
            .zip(q)
            .map(|((&x, &m), &q)| q as f64 * (x as f64 - m as f64))
            .sum(),
    }
}

#[inline]
fn term(d: f64, near: bool, metric: Metric) -> f64 {
    match (metric, near) {
        (Metric::SquaredL2, true) => -d,
        (Metric::InnerProduct, true) => d,
        (_, false) => d.abs(),
    }
}

fn loss_iter<'a>(
    x: &[f32],
    mu: &[f32],
    relevant: impl ExactSizeIterator<Item = (&'a [f32], bool)>,
    metric: Metric,
) -> f64 {
    let n = relevant.len();
    if n == 0 {
        return squared_l2(x, mu) as f64;
    }
    let total: f64 = relevant
        .map(|(q, near)| term(chunk_distortion(x, mu, q, metric), near, metric))
        .sum();
    total / n as f64
}

/// Adds the gradient of the loss with respect to `mu` into `out`.
fn gradient_iter<'a>(
    x: &[f32],
    mu: &[f32],
    relevant: impl ExactSizeIterator<Item = (&'a [f32], bool)>,
    metric: Metric,
    out: &mut [f64],
) {
    let n = relevant.len();
    if n == 0 {
        for ((o, &x), &m) in out.iter_mut().zip(x).zip(mu) {
            *o += 2.0 * (m as f64 - x as f64);
        }
        return;
    }
    let inv = 1.0 / n as f64;
    for (q, near) in relevant {
        let d = chunk_distortion(x, mu, q, metric);
        // Derivative of the loss term with respect to d; zero at the kink.
        let outer = match (metric, near) {
            (Metric::SquaredL2, true) => -1.0,
            (Metric::InnerProduct, true) => 1.0,
            (_, false) => {
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        };
        if outer == 0.0 {
            continue;
        }
        let scale = outer * inv;
        match metric {
            // d = |x - q|^2 - |mu - q|^2
            Metric::SquaredL2 => {
                for ((o, &m), &q) in out.iter_mut().zip(mu).zip(q) {
                    *o += scale * -2.0 * (m as f64 - q as f64);
                }
            }
            // d = <q, x - mu>
            Metric::InnerProduct => {
                for (o, &q) in out.iter_mut().zip(q) {
                    *o -= scale * q as f64;
                }
            }
        }
    }
}

/// Loss of representing chunk `x` by `pivot` given the (query chunk, near)
/// pairs of its relevant queries. An empty list gives `|x - pivot|^2`.
pub fn apq_loss(x: &[f32], pivot: &[f32], relevant: &[(&[f32], bool)], metric: Metric) -> f64 {
    loss_iter(x, pivot, relevant.iter().copied(), metric)
}

/// Subgradient of [`apq_loss`] with respect to the pivot.
pub fn apq_loss_gradient(x: &[f32], pivot: &[f32], relevant: &[(&[f32], bool)], metric: Metric) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    gradient_iter(x, pivot, relevant.iter().copied(), metric, &mut g);
    g
}

/// APQ objective for one chunk.
pub(crate) struct ApqObjective<'a> {
    pub data: &'a [f32],
    pub queries: &'a [f32],
    pub chunk_dim: usize,
    pub rqm: &'a RelevantQueryMap,
    pub metric: Metric,
    pub gd: GdParams,
}

impl ApqObjective<'_> {
    fn relevant<'s>(
        &'s self,
        list: &'s [RelevantQuery],
    ) -> impl ExactSizeIterator<Item = (&'s [f32], bool)> + 's {
        list.iter()
            .map(move |r| (row(self.queries, self.chunk_dim, r.query as usize), r.near))
    }

    fn members_loss(&self, members: &[usize], mu: &[f32]) -> f64 {
        members.iter().map(|&i| self.cost(i, mu)).sum::<f64>() / members.len() as f64
    }
}

impl Objective for ApqObjective<'_> {
    fn cost(&self, i: usize, pivot: &[f32]) -> f64 {
        let x = row(self.data, self.chunk_dim, i);
        loss_iter(x, pivot, self.relevant(self.rqm.list(i)), self.metric)
    }

    fn update(&self, members: &[usize], pivot: &mut [f32]) {
        if members.iter().all(|&i| self.rqm.list(i).is_empty()) {
            // The mean is the exact minimizer of the fallback loss.
            mean_into(self.data, self.chunk_dim, members, pivot);
            return;
        }
        let inv = 1.0 / members.len() as f64;
        let mut current = self.members_loss(members, pivot);
        let mut step = self.gd.learning_rate as f64;
        let mut grad = vec![0f64; self.chunk_dim];
        let mut candidate = vec![0f32; self.chunk_dim];
        let mut fresh = true;
        for _ in 0..self.gd.max_iters_per_update {
            if fresh {
                grad.fill(0.0);
                for &i in members {
                    let x = row(self.data, self.chunk_dim, i);
                    gradient_iter(x, pivot, self.relevant(self.rqm.list(i)), self.metric, &mut grad);
                }
                grad.iter_mut().for_each(|g| *g *= inv);
                if grad.iter().all(|&g| g == 0.0) {
                    break;
                }
            }
            for ((c, &p), &g) in candidate.iter_mut().zip(pivot.iter()).zip(&grad) {
                *c = (p as f64 - step * g) as f32;
            }
            let loss = self.members_loss(members, &candidate);
            if loss < current {
                let gain = current - loss;
                pivot.copy_from_slice(&candidate);
                current = loss;
                step *= 1.25;
                fresh = true;
                if gain <= self.gd.convergence_tol * current.abs() {
                    break;
                }
            } else {
                // Backtrack on the same gradient.
                step *= 0.5;
                fresh = false;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ApqTraining {
    pub codebook: Codebook,
    /// Per chunk: objective after every assignment and update step.
    pub chunk_traces: Vec<Vec<f64>>,
    /// Final total loss summed over chunks.
    pub objective: f64,
}

fn check_inputs(
    base: &VectorDataset,
    rqm: &RelevantQueryMap,
    queries: &VectorDataset,
    m: usize,
    k: usize,
    gd: &GdParams,
) -> Result<()> {
    gd.validate()?;
    validate_shape(base, m, k)?;
    ensure!(
        queries.dim() == base.dim(),
        "query dimension {} differs from base dimension {}",
        queries.dim(),
        base.dim()
    );
    rqm.check_against(base, queries)
}

/// Trains the query-aware codebook on `base`, scoring pivots with the
/// relevant queries recorded in `rqm`. The metric is taken from `base`.
pub fn train_apq(
    base: &VectorDataset,
    rqm: &RelevantQueryMap,
    queries: &VectorDataset,
    m: usize,
    k: usize,
    gd: &GdParams,
) -> Result<ApqTraining> {
    check_inputs(base, rqm, queries, m, k, gd)?;
    fit_apq(base, rqm, queries, m, k, gd, None)
}

/// AOPQ: the rotation is learned exactly as for OPQ, then APQ pivots are
/// trained on rotated base and query vectors. `rqm` stays valid because the
/// rotation preserves both metrics.
pub fn train_aopq(
    base: &VectorDataset,
    queries: &VectorDataset,
    rqm: &RelevantQueryMap,
    m: usize,
    k: usize,
    gd: &GdParams,
    opq_rounds: usize,
) -> Result<ApqTraining> {
    check_inputs(base, rqm, queries, m, k, gd)?;
    let params = PqParams {
        m,
        k,
        max_iters: gd.outer_rounds,
        tol: gd.convergence_tol,
        seed: gd.seed,
    };
    let opq = train_opq(base, &params, opq_rounds)?;
    let rotation = opq.codebook.rotation().map(<[f32]>::to_vec);
    let rotated_base = opq.codebook.rotate_dataset(base)?;
    let rotated_queries = opq.codebook.rotate_dataset(queries)?;
    fit_apq(&rotated_base, rqm, &rotated_queries, m, k, gd, rotation)
}

fn fit_apq(
    base: &VectorDataset,
    rqm: &RelevantQueryMap,
    queries: &VectorDataset,
    m: usize,
    k: usize,
    gd: &GdParams,
    rotation: Option<Vec<f32>>,
) -> Result<ApqTraining> {
    let dim = base.dim();
    let chunk_dim = dim / m;
    let fits: Vec<_> = (0..m)
        .into_par_iter()
        .map(|j| {
            let data = extract_chunk(base.values(), dim, j, chunk_dim);
            let qdata = extract_chunk(queries.values(), dim, j, chunk_dim);
            let obj = ApqObjective {
                data: &data,
                queries: &qdata,
                chunk_dim,
                rqm,
                metric: base.metric(),
                gd: *gd,
            };
            let init = random_rows(&data, chunk_dim, k, chunk_seed(gd.seed, j));
            fit(&obj, &data, chunk_dim, init, gd.outer_rounds, gd.convergence_tol)
        })
        .collect();
    let objective = fits.iter().map(|f| *f.trace.last().unwrap()).sum();
    let chunk_traces = fits.iter().map(|f| f.trace.clone()).collect();
    let pivots = fits.into_iter().flat_map(|f| f.pivots).collect();
    let codebook = Codebook::new(m, k, chunk_dim, pivots, rotation, base.metric())?;
    Ok(ApqTraining {
        codebook,
        chunk_traces,
        objective,
    })
}
