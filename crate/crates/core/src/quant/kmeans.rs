//! Alternating assignment / update loop shared by k-means (PQ, OPQ) and
//! the loss-driven APQ trainer.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::squared_l2;
use crate::par::*;

/// Per-chunk clustering objective over a fixed `n × chunk_dim` matrix.
pub(crate) trait Objective: Sync {
    /// Cost of assigning point `i` to `pivot`.
    fn cost(&self, i: usize, pivot: &[f32]) -> f64;
    /// Moves `pivot` to (approximately) minimize the summed cost of `members`.
    fn update(&self, members: &[usize], pivot: &mut [f32]);
}

/// Plain squared reconstruction error.
pub(crate) struct SquaredError<'a> {
    pub data: &'a [f32],
    pub chunk_dim: usize,
}

impl Objective for SquaredError<'_> {
    fn cost(&self, i: usize, pivot: &[f32]) -> f64 {
        squared_l2(row(self.data, self.chunk_dim, i), pivot) as f64
    }

    fn update(&self, members: &[usize], pivot: &mut [f32]) {
        mean_into(self.data, self.chunk_dim, members, pivot);
    }
}

#[inline]
pub(crate) fn row(data: &[f32], chunk_dim: usize, i: usize) -> &[f32] {
    &data[i * chunk_dim..(i + 1) * chunk_dim]
}

/// Writes the mean of the `members` rows into `out`.
pub(crate) fn mean_into(data: &[f32], chunk_dim: usize, members: &[usize], out: &mut [f32]) {
    let mut acc = vec![0f64; chunk_dim];
    for &i in members {
        for (a, &x) in acc.iter_mut().zip(row(data, chunk_dim, i)) {
            *a += x as f64;
        }
    }
    let inv = 1.0 / members.len() as f64;
    for (o, a) in out.iter_mut().zip(acc) {
        *o = (a * inv) as f32;
    }
}

/// Copies sub-vector `j` of every row of an `n × dim` matrix.
pub(crate) fn extract_chunk(values: &[f32], dim: usize, j: usize, chunk_dim: usize) -> Vec<f32> {
    values
        .chunks_exact(dim)
        .flat_map(|r| &r[j * chunk_dim..(j + 1) * chunk_dim])
        .copied()
        .collect()
}

/// Seed for chunk `j`'s pivot initialization.
pub(crate) fn chunk_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_add((j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// `k` distinct random rows of `data` as initial pivots.
pub(crate) fn random_rows(data: &[f32], chunk_dim: usize, k: usize, seed: u64) -> Vec<f32> {
    let n = data.len() / chunk_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx.iter()
        .flat_map(|&i| row(data, chunk_dim, i))
        .copied()
        .collect()
}

pub(crate) struct Fit {
    pub pivots: Vec<f32>,
    /// Objective after each assignment step and after each update step,
    /// interleaved.
    pub trace: Vec<f64>,
}

/// Index of the cheapest pivot for point `i` (ties: smaller index).
pub(crate) fn best_pivot<O: Objective + ?Sized>(
    obj: &O,
    i: usize,
    pivots: &[f32],
    chunk_dim: usize,
) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (c, p) in pivots.chunks_exact(chunk_dim).enumerate() {
        let cost = obj.cost(i, p);
        if cost < best.1 {
            best = (c as u32, cost);
        }
    }
    best
}

/// Runs assignment / update rounds from `pivots` until the relative
/// objective change falls to `tol` or `max_rounds` is reached. Pivots left
/// without members are re-seeded from the currently worst-served points.
pub(crate) fn fit<O: Objective>(
    obj: &O,
    data: &[f32],
    chunk_dim: usize,
    mut pivots: Vec<f32>,
    max_rounds: usize,
    tol: f64,
) -> Fit {
    let n = data.len() / chunk_dim;
    let k = pivots.len() / chunk_dim;
    let mut trace = Vec::with_capacity(2 * max_rounds);
    let mut assignment = vec![0u32; n];
    let mut prev: Option<f64> = None;

    for _ in 0..max_rounds {
        let best: Vec<(u32, f64)> = (0..n)
            .into_par_iter()
            .map(|i| best_pivot(obj, i, &pivots, chunk_dim))
            .collect();
        for (a, b) in assignment.iter_mut().zip(&best) {
            *a = b.0;
        }
        trace.push(best.iter().map(|b| b.1).sum());

        let mut members = vec![Vec::new(); k];
        for (i, &c) in assignment.iter().enumerate() {
            members[c as usize].push(i);
        }
        let empty: Vec<usize> = (0..k).filter(|&c| members[c].is_empty()).collect();
        if !empty.is_empty() {
            let mut worst: Vec<usize> = (0..n).collect();
            worst.sort_by(|&a, &b| best[b].1.total_cmp(&best[a].1).then(a.cmp(&b)));
            for (&c, &i) in empty.iter().zip(&worst) {
                pivots[c * chunk_dim..(c + 1) * chunk_dim].copy_from_slice(row(data, chunk_dim, i));
            }
        }
        pivots
            .par_chunks_mut(chunk_dim)
            .zip(members.par_iter())
            .for_each(|(p, m)| {
                if !m.is_empty() {
                    obj.update(m, p);
                }
            });

        let after: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                let c = assignment[i] as usize;
                obj.cost(i, &pivots[c * chunk_dim..(c + 1) * chunk_dim])
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        trace.push(after);

        let done = after == 0.0 || prev.is_some_and(|p| p - after <= tol * p.abs());
        prev = Some(after);
        if done {
            break;
        }
    }
    Fit { pivots, trace }
}
