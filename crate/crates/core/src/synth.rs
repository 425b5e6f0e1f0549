//! Seeded synthetic workloads: a Gaussian-mixture base set, in-distribution
//! queries drawn from the same mixture, and shifted queries drawn from the
//! mixture plus a large offset along a few fixed directions.
//!
//! With `tail_dims > 0` the base is flat (small isotropic noise) in the
//! trailing dimensions and offsets live there, so a shifted query's nearest
//! neighbors are the points that stick out furthest along its offset. Those
//! are scattered across a cluster rather than adjacent in the base graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Metric, VectorDataset};
use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub base_count: usize,
    /// Rows in each evaluation query set (in-distribution and shifted).
    pub query_count: usize,
    /// Rows in the shifted query sample used for construction and training.
    pub sample_count: usize,
    pub dim: usize,
    pub clusters: usize,
    /// Standard deviation of the cluster centers; points have unit spread
    /// around their center.
    pub cluster_spread: f32,
    /// Length of the offset added to shifted queries.
    pub ood_shift: f32,
    /// Number of offset directions shifted queries are spread over.
    pub ood_directions: usize,
    /// Relative jitter applied to each query's offset direction.
    pub ood_jitter: f32,
    /// Trailing dimensions in which the base only has `tail_scale` noise
    /// and no cluster structure; offsets are confined to them when nonzero.
    pub tail_dims: usize,
    pub tail_scale: f32,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            base_count: 10_000,
            query_count: 1_000,
            sample_count: 100,
            dim: 32,
            clusters: 16,
            cluster_spread: 3.0,
            ood_shift: 20.0,
            ood_directions: 4,
            ood_jitter: 0.3,
            tail_dims: 0,
            tail_scale: 1.0,
            metric: Metric::SquaredL2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// 50K-point workload whose shifted queries sit far outside the base
    /// along its low-variance dimensions.
    pub fn strong_ood(seed: u64) -> Self {
        Self {
            base_count: 50_000,
            query_count: 2_000,
            sample_count: 500,
            dim: 32,
            clusters: 16,
            cluster_spread: 3.0,
            ood_shift: 40.0,
            ood_directions: 4,
            ood_jitter: 0.3,
            tail_dims: 16,
            tail_scale: 0.5,
            metric: Metric::SquaredL2,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Workload {
    pub base: VectorDataset,
    pub id_queries: VectorDataset,
    pub ood_queries: VectorDataset,
    /// Shifted queries disjoint from `ood_queries`, for building and training.
    pub ood_sample: VectorDataset,
}

struct Mixture {
    centers: Vec<Vec<f32>>,
    /// Per-dimension noise scale around a center.
    scales: Vec<f32>,
}

impl Mixture {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let c = &self.centers[rng.random_range(0..self.centers.len())];
        c.iter()
            .zip(&self.scales)
            .map(|(&m, &s)| m + s * normal(rng))
            .collect()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f32 {
    StandardNormal.sample(rng)
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f32) -> Vec<f32> {
    (0..dim).map(|_| scale * normal(rng)).collect()
}

fn unit(v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(f32::MIN_POSITIVE);
    v.into_iter().map(|x| x / norm).collect()
}

fn dataset(rows: Vec<Vec<f32>>, dim: usize, metric: Metric) -> Result<VectorDataset> {
    VectorDataset::new(dim, rows.concat(), metric)
}

/// Generates a workload; identical configs give identical data.
pub fn generate(config: &SynthConfig) -> Result<Workload> {
    ensure!(
        config.base_count >= 1 && config.query_count >= 1 && config.sample_count >= 1,
        "set sizes must be positive"
    );
    ensure!(
        config.dim >= 1 && config.clusters >= 1 && config.ood_directions >= 1,
        "dim, clusters and directions must be positive"
    );
    ensure!(
        config.tail_dims < config.dim,
        "tail_dims must leave at least one clustered dimension"
    );
    let dim = config.dim;
    let head = dim - config.tail_dims;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mixture = Mixture {
        centers: (0..config.clusters)
            .map(|_| {
                let mut c = gaussian(&mut rng, head, config.cluster_spread);
                c.resize(dim, 0.0);
                c
            })
            .collect(),
        scales: (0..dim)
            .map(|d| if d < head { 1.0 } else { config.tail_scale })
            .collect(),
    };
    let offset_from = if config.tail_dims > 0 { head } else { 0 };
    let directions: Vec<Vec<f32>> = (0..config.ood_directions)
        .map(|_| {
            let mut d = vec![0.0; offset_from];
            d.extend(gaussian(&mut rng, dim - offset_from, 1.0));
            unit(d)
        })
        .collect();

    let base: Vec<Vec<f32>> = (0..config.base_count).map(|_| mixture.draw(&mut rng)).collect();
    let id: Vec<Vec<f32>> = (0..config.query_count).map(|_| mixture.draw(&mut rng)).collect();
    let shifted = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f32>> {
        (0..count)
            .map(|_| {
                let dir = &directions[rng.random_range(0..directions.len())];
                let spread = config.ood_jitter / ((dim - offset_from) as f32).sqrt();
                let offset = unit(
                    dir.iter()
                        .enumerate()
                        .map(|(d, &a)| {
                            if d < offset_from {
                                0.0
                            } else {
                                a + spread * normal(rng)
                            }
                        })
                        .collect(),
                );
                mixture
                    .draw(rng)
                    .into_iter()
                    .zip(offset)
                    .map(|(x, o)| x + config.ood_shift * o)
                    .collect()
            })
            .collect()
    };
    let ood = shifted(config.query_count, &mut rng);
    let sample = shifted(config.sample_count, &mut rng);
    Ok(Workload {
        base: dataset(base, dim, config.metric)?,
        id_queries: dataset(id, dim, config.metric)?,
        ood_queries: dataset(ood, dim, config.metric)?,
        ood_sample: dataset(sample, dim, config.metric)?,
    })
}
