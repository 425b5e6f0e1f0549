//! End-to-end acceptance checks. Run with `cargo test --test acceptance`;
//! pass criterion numbers as arguments to run a subset.

use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use oodann::data::{distance, ground_truth, recall_at_k, GroundTruth};
use oodann::diagnostics::{mahalanobis_profile, PERCENTILES};
use oodann::graph::{build_robust_vamana, build_vamana, search_batch, search_topk, BuildParams, GraphIndex};
use oodann::layout::{beam_search_disk, parallel_gorder, BeamSearchParams, SectorLayout};
use oodann::par::with_threads;
use oodann::quant::{
    apq_loss, apq_loss_gradient, build_relevant_queries, distortion_stats, encode, encode_with_relevance,
    near_pairs, train_apq, train_pq, GdParams, PqParams, RelevantQueryMap,
};
use oodann::synth::{generate, SynthConfig, Workload};
use oodann::{Metric, VectorDataset};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Objective traces gathered by criteria 5 and 6 for the monotonicity check.
static TRACES: Mutex<Vec<(String, Vec<f64>, f64)>> = Mutex::new(Vec::new());

fn record_traces(label: &str, traces: &[Vec<f64>], tol: f64) {
    let mut all = TRACES.lock().unwrap();
    for (j, t) in traces.iter().enumerate() {
        all.push((format!("{label} chunk {j}"), t.clone(), tol));
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn mean_recall(results: &[(Vec<u32>, oodann::graph::SearchTrace)], gt: &GroundTruth, k: usize) -> f64 {
    results
        .iter()
        .enumerate()
        .map(|(q, (ids, _))| recall_at_k(ids, gt.row_ids(q), k).unwrap())
        .sum::<f64>()
        / results.len() as f64
}

fn check_graph(g: &GraphIndex, n: usize, r: usize) -> Result<(), String> {
    if !g.is_finalized() || g.node_count() != n {
        return Err(format!(
            "graph has {} nodes, {} query nodes",
            g.node_count(),
            g.query_count()
        ));
    }
    for v in 0..n as u32 {
        let list = g.neighbors(v);
        if list.len() > r {
            return Err(format!("node {v} has degree {}", list.len()));
        }
        if let Some(u) = list.iter().find(|&&u| u as usize >= n) {
            return Err(format!("node {v} links to non-base id {u}"));
        }
    }
    Ok(())
}

fn criterion_1() -> Outcome {
    let mut edges = Vec::new();
    for seed in 0..5 {
        let w = generate(&SynthConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        let n = w.base.count();
        let params = BuildParams {
            max_degree: 32,
            search_list: 64,
            seed,
            ..Default::default()
        };
        for robust in [false, true] {
            let build = || {
                with_threads(1, || {
                    if robust {
                        build_robust_vamana(&w.base, Some(&w.ood_sample), &params).unwrap()
                    } else {
                        build_vamana(&w.base, &params).unwrap()
                    }
                })
            };
            let a = build();
            let b = build();
            if let Err(e) = check_graph(&a, n, 32) {
                return Outcome::new(false, format!("seed {seed} robust={robust}: {e}"));
            }
            if a != b {
                return Outcome::new(false, format!("seed {seed} robust={robust}: rebuild differs"));
            }
            edges.push(a.edge_count());
        }
    }
    Outcome::new(
        true,
        format!("10 builds valid and reproducible, edge counts {edges:?}"),
    )
}

fn criterion_2() -> Outcome {
    let w = generate(&SynthConfig {
        base_count: 2000,
        query_count: 100,
        seed: 7,
        ..Default::default()
    })
    .unwrap();
    let g = build_vamana(
        &w.base,
        &BuildParams {
            max_degree: 32,
            search_list: 64,
            ..Default::default()
        },
    )
    .unwrap();
    let n = w.base.count();
    let mut worst: f64 = 1.0;
    for qs in [&w.id_queries, &w.ood_queries] {
        let gt = ground_truth(&w.base, qs, 10).unwrap();
        for q in 0..qs.count() {
            let (ids, _) = search_topk(&g, &w.base, qs.row(q), 10, n).unwrap();
            worst = worst.min(recall_at_k(&ids, gt.row_ids(q), 10).unwrap());
        }
    }
    Outcome::new(worst == 1.0, format!("minimum recall@10 at L = n: {worst}"))
}

fn criterion_3() -> Outcome {
    const SWEEP: [usize; 8] = [10, 15, 20, 30, 40, 60, 80, 120];
    let seeds = 3;
    let mut sums = vec![(0.0, 0.0); SWEEP.len()];
    for seed in 0..seeds {
        let w = generate(&SynthConfig::strong_ood(seed)).unwrap();
        let gt = ground_truth(&w.base, &w.ood_queries, 10).unwrap();
        let params = BuildParams {
            seed,
            ..Default::default()
        };
        let plain = build_vamana(&w.base, &params).unwrap();
        let robust = build_robust_vamana(&w.base, Some(&w.ood_sample), &params).unwrap();
        for (i, &l) in SWEEP.iter().enumerate() {
            let a = mean_recall(
                &search_batch(&plain, &w.base, &w.ood_queries, 10, l).unwrap(),
                &gt,
                10,
            );
            let b = mean_recall(
                &search_batch(&robust, &w.base, &w.ood_queries, 10, l).unwrap(),
                &gt,
                10,
            );
            sums[i].0 += a;
            sums[i].1 += b;
        }
    }
    let mut mid = Vec::new();
    let mut lines = Vec::new();
    for (i, &l) in SWEEP.iter().enumerate() {
        let (a, b) = (sums[i].0 / seeds as f64, sums[i].1 / seeds as f64);
        lines.push(format!("L={l}: {a:.3} -> {b:.3}"));
        if (0.60..=0.85).contains(&a) {
            mid.push(b - a);
        }
    }
    if mid.is_empty() {
        return Outcome::new(
            false,
            format!("no swept L lands in the 60-85% regime; {}", lines.join(", ")),
        );
    }
    let delta = mid.iter().sum::<f64>() / mid.len() as f64;
    Outcome::new(
        delta >= 0.02,
        format!(
            "mean delta {:+.2} points over {} mid-regime L values; {}",
            100.0 * delta,
            mid.len(),
            lines.join(", ")
        ),
    )
}

fn random_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f32> {
    (0..dim).map(|_| (scale * normal(rng)) as f32).collect()
}

fn sub64(a: &[f32], b: &[f32]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| x as f64 - y as f64).collect()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trials = 100_000;
    let mut worst_identity: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..trials {
        let dim = rng.random_range(1..=16);
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let q = random_vec(&mut rng, dim, scale);
        let x = random_vec(&mut rng, dim, scale);
        let mu = random_vec(&mut rng, dim, scale);
        let actual = distance(Metric::SquaredL2, &q, &x) as f64;
        let estimated = distance(Metric::SquaredL2, &q, &mu) as f64;
        let err = distance(Metric::SquaredL2, &x, &mu) as f64;
        // ||q-x||^2 = ||q-mu||^2 + ||x-mu||^2 - 2<q-mu, x-mu>
        let (qm, xm) = (sub64(&q, &mu), sub64(&x, &mu));
        let cross: f64 = qm.iter().zip(&xm).map(|(a, b)| a * b).sum();
        let rhs = estimated + err - 2.0 * cross;
        let scale_ref = actual.max(estimated).max(err).max(f64::MIN_POSITIVE);
        worst_identity = worst_identity.max((actual - rhs).abs() / scale_ref);
        let gap = actual.sqrt() - estimated.sqrt();
        if gap * gap > err * (1.0 + 1e-5) + 1e-9 * scale_ref {
            violations += 1;
        }
    }

    // Subgradient of the summed loss against central differences.
    let mut worst_grad: f64 = 0.0;
    let mut checked = 0;
    while checked < 2000 {
        let dim = rng.random_range(1..=8);
        let x = random_vec(&mut rng, dim, 1.0);
        let mu = random_vec(&mut rng, dim, 1.0);
        let queries: Vec<(Vec<f32>, bool)> = (0..rng.random_range(1..6))
            .map(|_| (random_vec(&mut rng, dim, 3.0), rng.random_bool(0.3)))
            .collect();
        // Stay away from kinks of the absolute-value branch.
        let near_kink = queries.iter().any(|(q, near)| {
            let d: f64 = x
                .iter()
                .zip(&mu)
                .zip(q)
                .map(|((&a, &m), &b)| (a as f64 + m as f64 - 2.0 * b as f64) * (a as f64 - m as f64))
                .sum();
            !near && d.abs() < 0.5
        });
        if near_kink {
            continue;
        }
        let rel: Vec<(&[f32], bool)> = queries.iter().map(|(q, n)| (q.as_slice(), *n)).collect();
        let grad = apq_loss_gradient(&x, &mu, &rel, Metric::SquaredL2);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1.0);
        for d in 0..dim {
            let h = 1e-2f32;
            let mut plus = mu.clone();
            let mut minus = mu.clone();
            plus[d] += h;
            minus[d] -= h;
            let step = plus[d] as f64 - minus[d] as f64;
            let fd = (apq_loss(&x, &plus, &rel, Metric::SquaredL2)
                - apq_loss(&x, &minus, &rel, Metric::SquaredL2))
                / step;
            worst_grad = worst_grad.max((fd - grad[d]).abs() / norm);
        }
        checked += 1;
    }
    let pass = worst_identity <= 1e-3 && violations == 0 && worst_grad <= 1e-3;
    Outcome::new(
        pass,
        format!(
            "identity max rel err {worst_identity:.2e}; bound violations {violations}/{trials}; \
             gradient max rel err {worst_grad:.2e} over {checked} points"
        ),
    )
}

fn apq_workload(seed: u64) -> Workload {
    let mut cfg = SynthConfig::strong_ood(seed);
    cfg.base_count = 20_000;
    cfg.query_count = 500;
    generate(&cfg).unwrap()
}

fn criterion_5() -> Outcome {
    const T: usize = 1000;
    const T_PRIME: usize = 10;
    const PHI: usize = 100;
    const K: usize = 32;
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let w = apq_workload(seed);
        let m = w.base.dim() / 4;
        let pq = train_pq(&w.base, &PqParams::new(m, K).with_seed(seed)).unwrap();
        record_traces(&format!("pq seed {seed}"), &pq.chunk_traces, 1e-4);
        let pq_codes = encode(&w.base, &pq.codebook).unwrap();
        let rqm = build_relevant_queries(&w.base, &w.ood_sample, T, T_PRIME, PHI).unwrap();
        let gd = GdParams {
            seed,
            ..Default::default()
        };
        let apq = train_apq(&w.base, &rqm, &w.ood_sample, m, K, &gd).unwrap();
        record_traces(&format!("apq seed {seed}"), &apq.chunk_traces, gd.convergence_tol);
        let apq_codes = encode_with_relevance(&w.base, &apq.codebook, &rqm, &w.ood_sample).unwrap();
        let pairs = near_pairs(&w.base, &w.ood_queries, T_PRIME).unwrap();
        let a = distortion_stats(&w.base, &w.ood_queries, &pq.codebook, &pq_codes, &pairs).unwrap();
        let b = distortion_stats(&w.base, &w.ood_queries, &apq.codebook, &apq_codes, &pairs).unwrap();
        ratios.push(b.mean_abs / a.mean_abs);
    }
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    Outcome::new(
        worst <= 0.9,
        format!(
            "APQ/PQ mean |distortion| per seed: {}",
            ratios
                .iter()
                .map(|r| format!("{r:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn criterion_6() -> Outcome {
    let w = generate(&SynthConfig {
        base_count: 3000,
        seed: 6,
        ..Default::default()
    })
    .unwrap();
    let (m, k) = (8, 32);
    let mut quant_ok = true;
    for seed in 0..3 {
        let pq = train_pq(&w.base, &PqParams::new(m, k).with_seed(seed)).unwrap();
        let gd = GdParams {
            seed,
            ..Default::default()
        };
        let empty = RelevantQueryMap::empty(w.base.count(), w.ood_sample.count());
        let apq = train_apq(&w.base, &empty, &w.ood_sample, m, k, &gd).unwrap();
        record_traces(
            &format!("empty-apq seed {seed}"),
            &apq.chunk_traces,
            gd.convergence_tol,
        );
        quant_ok &= apq.codebook.pivots() == pq.codebook.pivots();
    }
    let params = BuildParams {
        max_degree: 32,
        search_list: 64,
        ..Default::default()
    };
    let (plain, robust) = with_threads(1, || {
        (
            build_vamana(&w.base, &params).unwrap(),
            build_robust_vamana(&w.base, None, &params).unwrap(),
        )
    });
    let graph_ok = plain.adjacency() == robust.adjacency() && plain.start() == robust.start();
    Outcome::new(
        quant_ok && graph_ok,
        format!("empty-relevance APQ equals PQ: {quant_ok}; empty-sample graph equals Vamana: {graph_ok}"),
    )
}

fn criterion_7() -> Outcome {
    const SECTOR: usize = 4096;
    const NODE: usize = 512;
    let mut cfg = SynthConfig::strong_ood(0);
    cfg.query_count = 1000;
    let w = generate(&cfg).unwrap();
    let g = build_vamana(
        &w.base,
        &BuildParams {
            max_degree: 32,
            search_list: 64,
            ..Default::default()
        },
    )
    .unwrap();
    let pq = train_pq(&w.base, &PqParams::new(8, 256)).unwrap();
    let codes = encode(&w.base, &pq.codebook).unwrap();
    let gorder = parallel_gorder(&g, SECTOR, NODE, 0).unwrap();
    let random = SectorLayout::random(w.base.count(), SECTOR, NODE, 1).unwrap();
    if gorder.width() != 8 {
        return Outcome::new(false, format!("sector width {} instead of 8", gorder.width()));
    }
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, qs, gated) in [
        ("in-dist", &w.id_queries, true),
        ("shifted", &w.ood_queries, false),
    ] {
        for l in [20, 40, 80, 160] {
            let params = BeamSearchParams {
                k: 10,
                search_list: l,
                beam_width: 4,
            };
            let (mut a, mut b) = (0usize, 0usize);
            for q in 0..qs.count() {
                let x =
                    beam_search_disk(&g, &gorder, &w.base, &codes, &pq.codebook, qs.row(q), &params).unwrap();
                let y =
                    beam_search_disk(&g, &random, &w.base, &codes, &pq.codebook, qs.row(q), &params).unwrap();
                if x.0 != y.0 {
                    return Outcome::new(
                        false,
                        format!("{name} query {q} at L={l}: results depend on layout"),
                    );
                }
                a += x.1.sector_reads;
                b += y.1.sector_reads;
            }
            let ratio = a as f64 / b as f64;
            if gated {
                pass &= ratio <= 0.9;
            }
            lines.push(format!("{name} L={l} {ratio:.3}"));
        }
    }
    Outcome::new(pass, format!("gorder/random sector reads: {}", lines.join(", ")))
}

fn criterion_8() -> Outcome {
    let w = generate(&SynthConfig {
        base_count: 5000,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let g = build_vamana(
        &w.base,
        &BuildParams {
            max_degree: 32,
            search_list: 64,
            ..Default::default()
        },
    )
    .unwrap();
    let n = g.node_count();
    for run in 0..20u64 {
        let layout = with_threads(8, || parallel_gorder(&g, 4096, 512, run)).unwrap();
        let mut seen = vec![false; n];
        for &v in layout.order() {
            if std::mem::replace(&mut seen[v as usize], true) {
                return Outcome::new(false, format!("run {run}: node {v} placed twice"));
            }
        }
        if layout.order().len() != n || seen.iter().any(|s| !s) {
            return Outcome::new(false, format!("run {run}: order is not a permutation"));
        }
    }
    Outcome::new(true, "20 runs on 8 workers produced valid permutations")
}

fn criterion_9() -> Outcome {
    const D: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // Correlated Gaussian: x = A z with a random mixing matrix.
    let mix: Vec<f64> = (0..D * D).map(|_| normal(&mut rng)).collect();
    let draw = |rng: &mut ChaCha8Rng, count: usize, shift: f64| -> VectorDataset {
        let mut values = Vec::with_capacity(count * D);
        for _ in 0..count {
            let z: Vec<f64> = (0..D).map(|_| normal(rng)).collect();
            for r in 0..D {
                let v: f64 = (0..D).map(|c| mix[r * D + c] * z[c]).sum();
                values.push((v + shift) as f32);
            }
        }
        VectorDataset::new(D, values, Metric::SquaredL2).unwrap()
    };
    let base = draw(&mut rng, 50_000, 0.0);
    let id = draw(&mut rng, 5_000, 0.0);
    let ood = draw(&mut rng, 5_000, 2.0);
    let id_profile = mahalanobis_profile(&base, &id, None).unwrap();
    let ood_profile = mahalanobis_profile(&base, &ood, None).unwrap();
    let expected = ChiSquared::new(D as f64).unwrap().inverse_cdf(0.5).sqrt();
    let rel = (id_profile.median() - expected).abs() / expected;
    let mut ordered = true;
    for &p in PERCENTILES.iter().filter(|&&p| p >= 25.0) {
        ordered &= ood_profile.get(p).unwrap() > id_profile.get(p).unwrap();
    }
    Outcome::new(
        rel <= 0.05 && ordered,
        format!(
            "ID median {:.4} vs {expected:.4} (rel {rel:.3}); shifted above ID at p>=25: {ordered}",
            id_profile.median()
        ),
    )
}

fn criterion_10() -> Outcome {
    if TRACES.lock().unwrap().is_empty() {
        criterion_5();
        criterion_6();
    }
    let traces = TRACES.lock().unwrap();
    for (label, trace, tol) in traces.iter() {
        for (i, pair) in trace.windows(2).enumerate() {
            if pair[1] > pair[0] + tol * pair[0].abs() {
                return Outcome::new(
                    false,
                    format!("{label}: step {} rises {} -> {}", i + 1, pair[0], pair[1]),
                );
            }
        }
    }
    Outcome::new(true, format!("{} objective traces non-increasing", traces.len()))
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "structural invariants", criterion_1),
        (2, "oracle recall", criterion_2),
        (3, "RobustVamana recall delta", criterion_3),
        (4, "quantization math", criterion_4),
        (5, "APQ distortion delta", criterion_5),
        (6, "empty-sample degeneracy", criterion_6),
        (7, "ParallelGorder sector reads", criterion_7),
        (8, "permutation validity", criterion_8),
        (9, "diagnostics calibration", criterion_9),
        (10, "objective monotonicity", criterion_10),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {verdict} {name} ({:.1}s): {}",
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
