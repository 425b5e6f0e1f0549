use super::apq::chunk_distortion;
use super::{Codebook, QuantizedDataset};
use crate::data::{topk_unchecked, VectorDataset};
use crate::diagnostics::percentile;
use crate::error::{ensure, Result};
use crate::par::*;

/// Quantiles reported by [`distortion_stats`].
pub const DISTORTION_QUANTILES: [f64; 7] = [0.0, 5.0, 25.0, 50.0, 75.0, 95.0, 100.0];

/// Aggregate of per-pair distortions (actual minus estimated distance,
/// with inner products compared as similarities).
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionSummary {
    pub count: usize,
    pub mean_signed: f64,
    pub mean_abs: f64,
    /// `(percentile, signed distortion)` at [`DISTORTION_QUANTILES`].
    pub quantiles: Vec<(f64, f64)>,
}

/// All `(query, base id)` pairs where the base point is among the query's
/// `t_prime` exact nearest neighbors.
pub fn near_pairs(base: &VectorDataset, queries: &VectorDataset, t_prime: usize) -> Result<Vec<(u32, u32)>> {
    ensure!(
        t_prime >= 1 && t_prime <= base.count(),
        "T' = {t_prime} out of range for {} base points",
        base.count()
    );
    ensure!(queries.dim() == base.dim(), "query and base dimensions differ");
    let tops: Vec<_> = (0..queries.count())
        .into_par_iter()
        .map(|q| topk_unchecked(base, queries.row(q), t_prime))
        .collect();
    Ok(tops
        .iter()
        .enumerate()
        .flat_map(|(q, top)| top.iter().map(move |n| (q as u32, n.id)))
        .collect())
}

/// Per-pair distortions between exact and code-estimated distances.
pub fn pair_distortions(
    base: &VectorDataset,
    queries: &VectorDataset,
    cb: &Codebook,
    codes: &QuantizedDataset,
    pairs: &[(u32, u32)],
) -> Result<Vec<f64>> {
    cb.check_dim(base.dim())?;
    cb.check_dim(queries.dim())?;
    codes.validate_against(cb)?;
    ensure!(codes.count() == base.count(), "codes do not match the base set");
    ensure!(
        pairs
            .iter()
            .all(|&(q, x)| (q as usize) < queries.count() && (x as usize) < base.count()),
        "pair references an out-of-range id"
    );
    let cd = cb.chunk_dim();
    Ok(pairs
        .par_iter()
        .map(|&(q, x)| {
            let qr = cb.rotate(queries.row(q as usize));
            let xr = cb.rotate(base.row(x as usize));
            codes
                .code(x as usize)
                .iter()
                .enumerate()
                .map(|(j, &c)| {
                    let s = j * cd..(j + 1) * cd;
                    chunk_distortion(&xr[s.clone()], cb.pivot(j, c as usize), &qr[s], cb.metric())
                })
                .sum()
        })
        .collect())
}

/// Summarizes distortions over `pairs` of `(query id, base id)`.
pub fn distortion_stats(
    base: &VectorDataset,
    queries: &VectorDataset,
    cb: &Codebook,
    codes: &QuantizedDataset,
    pairs: &[(u32, u32)],
) -> Result<DistortionSummary> {
    ensure!(!pairs.is_empty(), "no pairs to evaluate");
    let mut d = pair_distortions(base, queries, cb, codes, pairs)?;
    let n = d.len() as f64;
    let mean_signed = d.iter().sum::<f64>() / n;
    let mean_abs = d.iter().map(|v| v.abs()).sum::<f64>() / n;
    d.sort_by(f64::total_cmp);
    let quantiles = DISTORTION_QUANTILES
        .iter()
        .map(|&p| (p, percentile(&d, p)))
        .collect();
    Ok(DistortionSummary {
        count: d.len(),
        mean_signed,
        mean_abs,
        quantiles,
    })
}
