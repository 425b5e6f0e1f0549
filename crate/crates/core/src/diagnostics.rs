//! Distribution-shift measurements between a base set and query sets:
//! Mahalanobis distances to the base distribution and the spread of each
//! query's nearest neighbors.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::data::{sample_without_replacement, squared_l2, topk_unchecked, VectorDataset};
use crate::error::{ensure, Error, Result};
use crate::par::*;

/// Percentiles reported by every profile.
pub const PERCENTILES: [f64; 9] = [0.0, 1.0, 5.0, 25.0, 50.0, 75.0, 95.0, 99.0, 100.0];

/// Rows used to fit the covariance when the base set is larger.
pub const COVARIANCE_SAMPLE: usize = 100_000;

/// Linearly interpolated percentile `p` (0..=100) of ascending `sorted`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Values at [`PERCENTILES`].
#[derive(Clone, Debug, PartialEq)]
pub struct PercentileProfile {
    values: Vec<(f64, f64)>,
}

impl PercentileProfile {
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self> {
        ensure!(!samples.is_empty(), "profile needs at least one sample");
        ensure!(samples.iter().all(|v| !v.is_nan()), "profile samples contain NaN");
        samples.sort_by(f64::total_cmp);
        Ok(Self {
            values: PERCENTILES
                .iter()
                .map(|&p| (p, percentile(&samples, p)))
                .collect(),
        })
    }

    /// `(percentile, value)` pairs in ascending percentile order.
    pub fn values(&self) -> &[(f64, f64)] {
        &self.values
    }

    pub fn get(&self, p: f64) -> Option<f64> {
        self.values.iter().find(|(q, _)| *q == p).map(|&(_, v)| v)
    }

    pub fn median(&self) -> f64 {
        self.get(50.0).unwrap()
    }
}

/// Mean and regularized covariance of a base set.
#[derive(Clone, Debug)]
pub struct MahalanobisModel {
    mean: Vec<f64>,
    /// Lower Cholesky factor of `cov + ridge * I`.
    factor: DMatrix<f64>,
    ridge: f64,
}

impl MahalanobisModel {
    /// Fits on at most [`COVARIANCE_SAMPLE`] rows of `base`. `ridge = None`
    /// uses `1e-6 * trace(cov) / D`.
    pub fn fit(base: &VectorDataset, ridge: Option<f64>) -> Result<Self> {
        if let Some(r) = ridge {
            ensure!(
                r >= 0.0 && r.is_finite(),
                "ridge must be finite and non-negative, got {r}"
            );
        }
        let sample;
        let data = if base.count() > COVARIANCE_SAMPLE {
            sample = sample_without_replacement(base, COVARIANCE_SAMPLE, 0)?.0;
            &sample
        } else {
            base
        };
        let d = data.dim();
        let n = data.count();
        let mean = data.centroid();
        let partials: Vec<Vec<f64>> = data
            .values()
            .par_chunks(d * 4096)
            .map(|rows| {
                let mut acc = vec![0f64; d * d];
                let mut centered = vec![0f64; d];
                for row in rows.chunks_exact(d) {
                    for ((c, &x), &m) in centered.iter_mut().zip(row).zip(&mean) {
                        *c = x as f64 - m;
                    }
                    for a in 0..d {
                        let ca = centered[a];
                        for b in 0..=a {
                            acc[a * d + b] += ca * centered[b];
                        }
                    }
                }
                acc
            })
            .collect();
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for p in &partials {
            for a in 0..d {
                for b in 0..=a {
                    cov[(a, b)] += p[a * d + b];
                }
            }
        }
        let denom = (n.max(2) - 1) as f64;
        for a in 0..d {
            for b in 0..=a {
                let v = cov[(a, b)] / denom;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        let ridge = ridge.unwrap_or_else(|| 1e-6 * cov.trace() / d as f64);
        for a in 0..d {
            cov[(a, a)] += ridge;
        }
        let chol: Cholesky<f64, Dyn> = cov.cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "covariance is singular with ridge {ridge:e}; use a larger ridge"
            ))
        })?;
        Ok(Self {
            mean,
            factor: chol.l(),
            ridge,
        })
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `sqrt((v - mean)ᵀ (cov + ridge I)⁻¹ (v - mean))`.
    pub fn distance(&self, v: &[f32]) -> f64 {
        let d = self.mean.len();
        assert_eq!(v.len(), d, "vector dimension differs from the fitted model");
        // Forward substitution L y = v - mean; the distance is |y|.
        let mut y = vec![0f64; d];
        for i in 0..d {
            let mut s = v[i] as f64 - self.mean[i];
            for j in 0..i {
                s -= self.factor[(i, j)] * y[j];
            }
            y[i] = s / self.factor[(i, i)];
        }
        y.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Mahalanobis distance of every row of `eval_set` to the fitted base model.
pub fn mahalanobis_distances(
    base: &VectorDataset,
    eval_set: &VectorDataset,
    ridge: Option<f64>,
) -> Result<Vec<f64>> {
    ensure!(
        base.dim() == eval_set.dim(),
        "evaluation dimension {} differs from base dimension {}",
        eval_set.dim(),
        base.dim()
    );
    let model = MahalanobisModel::fit(base, ridge)?;
    Ok((0..eval_set.count())
        .into_par_iter()
        .map(|i| model.distance(eval_set.row(i)))
        .collect())
}

pub fn mahalanobis_profile(
    base: &VectorDataset,
    eval_set: &VectorDataset,
    ridge: Option<f64>,
) -> Result<PercentileProfile> {
    PercentileProfile::from_samples(mahalanobis_distances(base, eval_set, ridge)?)
}

/// Spread of a query's `k` nearest neighbors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterRadius {
    /// Largest Euclidean distance from the neighbors' centroid to a neighbor.
    pub centroid_radius: f64,
    /// Euclidean distance from the query to its `k`-th neighbor.
    pub kth_distance: f64,
}

/// Both radius measures for one query.
pub fn knn_radii(base: &VectorDataset, query: &[f32], k: usize) -> Result<ClusterRadius> {
    ensure!(
        k >= 1 && k <= base.count(),
        "k = {k} out of range for {} points",
        base.count()
    );
    ensure!(
        query.len() == base.dim(),
        "query dimension {} differs from base dimension {}",
        query.len(),
        base.dim()
    );
    let top = topk_unchecked(base, query, k);
    let d = base.dim();
    let mut centroid = vec![0f64; d];
    for n in &top {
        for (c, &x) in centroid.iter_mut().zip(base.row(n.id as usize)) {
            *c += x as f64;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= k as f64);
    let centroid_radius = top
        .iter()
        .map(|n| {
            base.row(n.id as usize)
                .iter()
                .zip(&centroid)
                .map(|(&x, &c)| (x as f64 - c).powi(2))
                .sum::<f64>()
        })
        .fold(0f64, f64::max)
        .sqrt();
    let kth = top.last().unwrap().id as usize;
    let kth_distance = (squared_l2(query, base.row(kth)) as f64).sqrt();
    Ok(ClusterRadius {
        centroid_radius,
        kth_distance,
    })
}

/// Centroid-centered radius of the ball around the query's `k` nearest
/// neighbors.
pub fn knn_cluster_radius(base: &VectorDataset, query: &[f32], k: usize) -> Result<f64> {
    Ok(knn_radii(base, query, k)?.centroid_radius)
}

/// Radius measures for every row of `eval_set`.
pub fn radii(base: &VectorDataset, eval_set: &VectorDataset, k: usize) -> Result<Vec<ClusterRadius>> {
    ensure!(
        k >= 1 && k <= base.count(),
        "k = {k} out of range for {} points",
        base.count()
    );
    ensure!(
        eval_set.dim() == base.dim(),
        "evaluation and base dimensions differ"
    );
    (0..eval_set.count())
        .into_par_iter()
        .map(|i| knn_radii(base, eval_set.row(i), k))
        .collect()
}

/// One line of an [`OodReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub diagnostic: String,
    pub percentile: f64,
    pub id_value: f64,
    pub ood_value: f64,
    /// `ood_value / id_value`; 1 when both are zero.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OodReport {
    pub rows: Vec<ReportRow>,
}

impl OodReport {
    pub fn ratio(&self, diagnostic: &str, p: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.diagnostic == diagnostic && r.percentile == p)
            .map(|r| r.ratio)
    }
}

pub const MAHALANOBIS: &str = "mahalanobis";
pub const CLUSTER_RADIUS: &str = "cluster_radius";
pub const KTH_NN_DISTANCE: &str = "kth_nn_distance";

fn ratio(ood: f64, id: f64) -> f64 {
    if id == 0.0 && ood == 0.0 {
        1.0
    } else {
        ood / id
    }
}

fn push_rows(rows: &mut Vec<ReportRow>, name: &str, id: &PercentileProfile, ood: &PercentileProfile) {
    for (&(p, a), &(_, b)) in id.values().iter().zip(ood.values()) {
        rows.push(ReportRow {
            diagnostic: name.to_string(),
            percentile: p,
            id_value: a,
            ood_value: b,
            ratio: ratio(b, a),
        });
    }
}

/// Percentile profiles of the in-distribution and shifted query samples
/// for each diagnostic, with per-percentile ratios.
pub fn ood_report(
    base: &VectorDataset,
    id_sample: &VectorDataset,
    ood_sample: &VectorDataset,
    k: usize,
    ridge: Option<f64>,
) -> Result<OodReport> {
    ensure!(
        id_sample.dim() == base.dim() && ood_sample.dim() == base.dim(),
        "all sets must share the base dimension {}",
        base.dim()
    );
    let model = MahalanobisModel::fit(base, ridge)?;
    let maha = |s: &VectorDataset| {
        PercentileProfile::from_samples(
            (0..s.count())
                .into_par_iter()
                .map(|i| model.distance(s.row(i)))
                .collect(),
        )
    };
    let id_radii = radii(base, id_sample, k)?;
    let ood_radii = radii(base, ood_sample, k)?;
    let profile = |r: &[ClusterRadius], f: fn(&ClusterRadius) -> f64| {
        PercentileProfile::from_samples(r.iter().map(f).collect())
    };
    let mut rows = Vec::new();
    push_rows(&mut rows, MAHALANOBIS, &maha(id_sample)?, &maha(ood_sample)?);
    push_rows(
        &mut rows,
        CLUSTER_RADIUS,
        &profile(&id_radii, |r| r.centroid_radius)?,
        &profile(&ood_radii, |r| r.centroid_radius)?,
    );
    push_rows(
        &mut rows,
        KTH_NN_DISTANCE,
        &profile(&id_radii, |r| r.kth_distance)?,
        &profile(&ood_radii, |r| r.kth_distance)?,
    );
    Ok(OodReport { rows })
}
