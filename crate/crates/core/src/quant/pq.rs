use nalgebra::DMatrix;

use super::encode::assign_nearest;
use super::kmeans::{chunk_seed, extract_chunk, fit, random_rows, SquaredError};
use super::Codebook;
use crate::data::VectorDataset;
use crate::error::{ensure, Error, Result};
use crate::par::*;

/// Lloyd iterations run after each rotation update.
const OPQ_INNER_ITERS: usize = 4;

/// Classical PQ training parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PqParams {
    /// Number of chunks `M`; must divide the dimension.
    pub m: usize,
    /// Pivots per chunk `K` (at most 256).
    pub k: usize,
    pub max_iters: usize,
    /// Relative objective change that stops the Lloyd loop.
    pub tol: f64,
    pub seed: u64,
}

impl PqParams {
    pub fn new(m: usize, k: usize) -> Self {
        Self {
            m,
            k,
            max_iters: 15,
            tol: 1e-4,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub(crate) fn validate(&self, data: &VectorDataset) -> Result<()> {
        validate_shape(data, self.m, self.k)?;
        ensure!(self.max_iters >= 1, "at least one iteration is required");
        Ok(())
    }
}

pub(crate) fn validate_shape(data: &VectorDataset, m: usize, k: usize) -> Result<()> {
    ensure!(m >= 1 && k >= 1, "M and K must be positive");
    ensure!(
        data.dim().is_multiple_of(m),
        "M = {m} does not divide the dimension {}",
        data.dim()
    );
    ensure!(k <= 256, "K = {k} does not fit byte codes");
    ensure!(
        k <= data.count(),
        "K = {k} exceeds the {} training points",
        data.count()
    );
    Ok(())
}

#[derive(Clone, Debug)]
pub struct PqTraining {
    pub codebook: Codebook,
    /// Per chunk: objective after every assignment and update step.
    pub chunk_traces: Vec<Vec<f64>>,
    /// Final total squared reconstruction error.
    pub objective: f64,
}

/// Per-chunk k-means with random-row initialization.
pub fn train_pq(base: &VectorDataset, params: &PqParams) -> Result<PqTraining> {
    params.validate(base)?;
    let chunk_dim = base.dim() / params.m;
    let fits: Vec<_> = (0..params.m)
        .into_par_iter()
        .map(|j| {
            let data = extract_chunk(base.values(), base.dim(), j, chunk_dim);
            let init = random_rows(&data, chunk_dim, params.k, chunk_seed(params.seed, j));
            let obj = SquaredError {
                data: &data,
                chunk_dim,
            };
            fit(&obj, &data, chunk_dim, init, params.max_iters, params.tol)
        })
        .collect();
    let objective = fits.iter().map(|f| *f.trace.last().unwrap()).sum();
    let chunk_traces = fits.iter().map(|f| f.trace.clone()).collect();
    let pivots = fits.into_iter().flat_map(|f| f.pivots).collect();
    let codebook = Codebook::new(params.m, params.k, chunk_dim, pivots, None, base.metric())?;
    Ok(PqTraining {
        codebook,
        chunk_traces,
        objective,
    })
}

#[derive(Clone, Debug)]
pub struct OpqTraining {
    pub codebook: Codebook,
    /// Total objective of the PQ start followed by one entry per rotation
    /// round.
    pub objective_per_round: Vec<f64>,
}

/// OPQ by alternating a Procrustes rotation update with warm-started
/// chunk k-means, starting from the PQ solution.
pub fn train_opq(base: &VectorDataset, params: &PqParams, rounds: usize) -> Result<OpqTraining> {
    let pq = train_pq(base, params)?;
    let dim = base.dim();
    let m = params.m;
    let chunk_dim = dim / m;
    let mut pivots = pq.codebook.pivots().to_vec();
    let mut rotation = identity(dim);
    let mut history = vec![pq.objective];

    for _ in 0..rounds {
        let current = Codebook::new(
            m,
            params.k,
            chunk_dim,
            pivots.clone(),
            Some(rotation.clone()),
            base.metric(),
        )?;
        let rotated = super::rotate_rows(&rotation, base)?;
        let codes = assign_nearest(&current, &rotated);
        rotation = procrustes(base, &current, &codes)?;

        let rotated = super::rotate_rows(&rotation, base)?;
        let fits: Vec<_> = (0..m)
            .into_par_iter()
            .map(|j| {
                let data = extract_chunk(rotated.values(), dim, j, chunk_dim);
                let init = current.dictionary(j).to_vec();
                let obj = SquaredError {
                    data: &data,
                    chunk_dim,
                };
                fit(&obj, &data, chunk_dim, init, OPQ_INNER_ITERS, 0.0)
            })
            .collect();
        history.push(fits.iter().map(|f| *f.trace.last().unwrap()).sum());
        pivots = fits.into_iter().flat_map(|f| f.pivots).collect();
    }

    let codebook = Codebook::new(m, params.k, chunk_dim, pivots, Some(rotation), base.metric())?;
    Ok(OpqTraining {
        codebook,
        objective_per_round: history,
    })
}

pub(crate) fn identity(dim: usize) -> Vec<f32> {
    let mut r = vec![0.0; dim * dim];
    for i in 0..dim {
        r[i * dim + i] = 1.0;
    }
    r
}

/// Orthonormal `R` maximizing `Σ ⟨ŷ_i, R x_i⟩` for fixed reconstructions:
/// `R = U Vᵀ` from the SVD of `Σ ŷ_i x_iᵀ`.
fn procrustes(base: &VectorDataset, cb: &Codebook, codes: &[u8]) -> Result<Vec<f32>> {
    let dim = base.dim();
    let m = cb.m();
    let partials: Vec<Vec<f64>> = base
        .values()
        .par_chunks(dim * 1024)
        .zip(codes.par_chunks(m * 1024))
        .map(|(xs, cs)| {
            let mut acc = vec![0f64; dim * dim];
            for (x, c) in xs.chunks_exact(dim).zip(cs.chunks_exact(m)) {
                let y = cb.reconstruct_rotated(c);
                for (a, &ya) in y.iter().enumerate() {
                    let row = &mut acc[a * dim..(a + 1) * dim];
                    for (r, &xb) in row.iter_mut().zip(x) {
                        *r += ya as f64 * xb as f64;
                    }
                }
            }
            acc
        })
        .collect();
    let mut cross = vec![0f64; dim * dim];
    for p in partials {
        for (c, v) in cross.iter_mut().zip(p) {
            *c += v;
        }
    }
    let mat = DMatrix::from_row_slice(dim, dim, &cross);
    let svd = mat.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD failed in rotation update".into())),
    };
    let r = u * v_t;
    let mut out = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            out.push(r[(i, j)] as f32);
        }
    }
    Ok(out)
}

/// Squared reconstruction error of `data` under nearest-pivot codes, in
/// the rotated space (equal to the input-space error for an orthonormal
/// rotation).
pub fn reconstruction_error(cb: &Codebook, data: &VectorDataset) -> Result<f64> {
    cb.check_dim(data.dim())?;
    let rotated = cb.rotate_dataset(data)?;
    let codes = assign_nearest(cb, &rotated);
    let m = cb.m();
    Ok((0..data.count())
        .into_par_iter()
        .map(|i| {
            let r = cb.reconstruct_rotated(&codes[i * m..(i + 1) * m]);
            crate::data::squared_l2(rotated.row(i), &r) as f64
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum())
}
