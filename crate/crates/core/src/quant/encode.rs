use super::apq::ApqObjective;
use super::kmeans::{best_pivot, extract_chunk};
use super::relevance::RelevantQueryMap;
use super::{Codebook, GdParams, QuantizedDataset};
use crate::data::{squared_l2, VectorDataset};
use crate::error::{ensure, Result};
use crate::par::*;

/// Nearest-pivot codes for already rotated rows (ties: smaller index).
pub(crate) fn assign_nearest(cb: &Codebook, rotated: &VectorDataset) -> Vec<u8> {
    let m = cb.m();
    let cd = cb.chunk_dim();
    let mut codes = vec![0u8; rotated.count() * m];
    codes.par_chunks_mut(m).enumerate().for_each(|(i, code)| {
        let y = rotated.row(i);
        for (j, c) in code.iter_mut().enumerate() {
            let x = &y[j * cd..(j + 1) * cd];
            let mut best = (0usize, f32::INFINITY);
            for (p, pivot) in cb.dictionary(j).chunks_exact(cd).enumerate() {
                let d = squared_l2(x, pivot);
                if d < best.1 {
                    best = (p, d);
                }
            }
            *c = best.0 as u8;
        }
    });
    codes
}

/// Encodes every row with its nearest pivot per chunk (rotation applied
/// first). This is the encoder for PQ and OPQ codebooks.
pub fn encode(data: &VectorDataset, cb: &Codebook) -> Result<QuantizedDataset> {
    cb.check_dim(data.dim())?;
    let rotated = cb.rotate_dataset(data)?;
    QuantizedDataset::new(data.count(), cb.m(), assign_nearest(cb, &rotated))
}

/// Encodes with the query-aware loss: each point takes the pivot that
/// minimizes its loss over its relevant queries. Points without relevant
/// queries get their nearest pivot.
pub fn encode_with_relevance(
    data: &VectorDataset,
    cb: &Codebook,
    rqm: &RelevantQueryMap,
    queries: &VectorDataset,
) -> Result<QuantizedDataset> {
    cb.check_dim(data.dim())?;
    cb.check_dim(queries.dim())?;
    rqm.check_against(data, queries)?;
    let rotated = cb.rotate_dataset(data)?;
    let rotated_q = cb.rotate_dataset(queries)?;
    let (m, cd, dim) = (cb.m(), cb.chunk_dim(), cb.dim());
    let per_chunk: Vec<Vec<u8>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let chunk = extract_chunk(rotated.values(), dim, j, cd);
            let qchunk = extract_chunk(rotated_q.values(), dim, j, cd);
            let obj = ApqObjective {
                data: &chunk,
                queries: &qchunk,
                chunk_dim: cd,
                rqm,
                metric: cb.metric(),
                gd: GdParams::default(),
            };
            (0..data.count())
                .map(|i| best_pivot(&obj, i, cb.dictionary(j), cd).0 as u8)
                .collect()
        })
        .collect();
    let mut codes = vec![0u8; data.count() * m];
    for (j, col) in per_chunk.iter().enumerate() {
        for (i, &c) in col.iter().enumerate() {
            codes[i * m + j] = c;
        }
    }
    QuantizedDataset::new(data.count(), m, codes)
}

/// Per-query `M × K` table of chunk distances to every pivot.
#[derive(Clone, Debug, PartialEq)]
pub struct Lut {
    m: usize,
    k: usize,
    table: Vec<f32>,
}

impl Lut {
    pub fn new(cb: &Codebook, query: &[f32]) -> Result<Self> {
        cb.check_dim(query.len())?;
        let q = cb.rotate(query);
        let (m, k, cd) = (cb.m(), cb.k(), cb.chunk_dim());
        let mut table = Vec::with_capacity(m * k);
        for j in 0..m {
            let qj = &q[j * cd..(j + 1) * cd];
            for c in 0..k {
                table.push(cb.metric().distance(qj, cb.pivot(j, c)));
            }
        }
        Ok(Self { m, k, table })
    }

    /// Estimated distance of an encoded point, summed in chunk order.
    #[inline]
    pub fn distance(&self, code: &[u8]) -> f32 {
        let mut sum = 0f32;
        for (j, &c) in code.iter().enumerate().take(self.m) {
            sum += self.table[j * self.k + c as usize];
        }
        sum
    }
}

fn check_code(cb: &Codebook, code: &[u8]) -> Result<()> {
    ensure!(
        code.len() == cb.m(),
        "code has {} entries, expected M = {}",
        code.len(),
        cb.m()
    );
    ensure!(
        code.iter().all(|&c| (c as usize) < cb.k()),
        "code entry out of range for K = {}",
        cb.k()
    );
    Ok(())
}

/// Asymmetric distance through a freshly built lookup table.
pub fn asymmetric_distance(query: &[f32], code: &[u8], cb: &Codebook) -> Result<f32> {
    check_code(cb, code)?;
    Ok(Lut::new(cb, query)?.distance(code))
}

/// Same estimate computed chunk by chunk without a table.
pub fn asymmetric_distance_naive(query: &[f32], code: &[u8], cb: &Codebook) -> Result<f32> {
    check_code(cb, code)?;
    cb.check_dim(query.len())?;
    let q = cb.rotate(query);
    let cd = cb.chunk_dim();
    let mut sum = 0f32;
    for (j, &c) in code.iter().enumerate() {
        sum += cb
            .metric()
            .distance(&q[j * cd..(j + 1) * cd], cb.pivot(j, c as usize));
    }
    Ok(sum)
}
