use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oodann::data::{brute_force_topk, ground_truth, recall_at_k, Neighbor};
use oodann::graph::{
    build_robust_vamana, build_unstitched, build_vamana, compute_spare_counts, greedy_search, medoid,
    read_graph, robust_prune, robust_stitch, search_topk, write_graph, BuildParams, GraphIndex, NodeKind,
    NodeVectors,
};
use oodann::par::with_threads;
use oodann::synth::{generate, SynthConfig};
use oodann::{Metric, VectorDataset};

fn rows(values: &[&[f32]]) -> VectorDataset {
    VectorDataset::from_rows(values, Metric::SquaredL2).unwrap()
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> VectorDataset {
    let values = (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    VectorDataset::new(dim, values, Metric::SquaredL2).unwrap()
}

fn small_params(seed: u64) -> BuildParams {
    BuildParams {
        max_degree: 16,
        search_list: 32,
        seed,
        ..Default::default()
    }
}

fn assert_finalized(g: &GraphIndex, n: usize) {
    assert!(g.is_finalized());
    assert_eq!(g.node_count(), n);
    assert_eq!(g.node_kind(g.start()), NodeKind::Base);
    for v in 0..n as u32 {
        let list = g.neighbors(v);
        assert!(list.len() <= g.max_degree());
        assert!(list.iter().all(|&u| (u as usize) < n && u != v));
    }
}

#[test]
fn chain_search_without_restriction() {
    let base = rows(&[&[0.0], &[1.0], &[2.0]]);
    let g = GraphIndex::from_adjacency(3, 1, vec![vec![1], vec![2], vec![]], 0, Metric::SquaredL2).unwrap();
    let trace = greedy_search(&g, &NodeVectors::base_only(&base), 0, &[2.0], false, 2).unwrap();
    assert_eq!(
        trace.candidates,
        vec![Neighbor::new(2, 0.0), Neighbor::new(1, 1.0)]
    );
    let mut visited = trace.visited.clone();
    visited.sort_unstable();
    assert_eq!(visited, vec![0, 1, 2]);
}

#[test]
fn chain_search_restricted_to_base() {
    let base = rows(&[&[0.0], &[1.0]]);
    let queries = rows(&[&[2.0]]);
    let vectors = NodeVectors::new(&base, Some(&queries)).unwrap();
    let g = GraphIndex::from_adjacency(2, 1, vec![vec![1], vec![2], vec![]], 0, Metric::SquaredL2).unwrap();
    let trace = greedy_search(&g, &vectors, 0, &[2.0], true, 2).unwrap();
    assert_eq!(
        trace.candidates,
        vec![Neighbor::new(1, 1.0), Neighbor::new(0, 4.0)]
    );
    assert!(!trace.visited.contains(&2));
}

#[test]
fn isolated_start_returns_itself() {
    let base = rows(&[&[0.0], &[5.0]]);
    let g = GraphIndex::from_adjacency(2, 1, vec![vec![], vec![]], 0, Metric::SquaredL2).unwrap();
    let (ids, trace) = search_topk(&g, &base, &[5.0], 1, 4).unwrap();
    assert_eq!(ids, vec![0]);
    assert_eq!(trace.visited, vec![0]);
}

#[test]
fn medoid_examples() {
    assert_eq!(medoid(&rows(&[&[0.0], &[10.0]])), 0);
    assert_eq!(medoid(&rows(&[&[0.0], &[1.0], &[10.0]])), 1);
}

#[test]
fn medoid_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = random_set(&mut rng, 500, 8);
    let dim = base.dim();
    let mut mean = vec![0.0f64; dim];
    for row in base.rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= base.count() as f64);
    let dist = |i: usize| -> f64 {
        base.row(i)
            .iter()
            .zip(&mean)
            .map(|(&x, m)| (x as f64 - m).powi(2))
            .sum()
    };
    let expected = (0..base.count())
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
        .unwrap();
    assert_eq!(medoid(&base) as usize, expected);
}

#[test]
fn prune_examples() {
    let base = rows(&[&[0.0], &[1.0], &[2.0]]);
    let vectors = NodeVectors::base_only(&base);
    let empty = || GraphIndex::from_adjacency(3, 2, vec![vec![]; 3], 0, Metric::SquaredL2).unwrap();

    let mut g = empty();
    robust_prune(&mut g, &vectors, 0, &[1, 2], 1.0).unwrap();
    assert_eq!(g.neighbors(0), &[1]);

    let mut g = empty();
    robust_prune(&mut g, &vectors, 0, &[1, 2], 2.5).unwrap();
    assert_eq!(g.neighbors(0), &[1, 2]);

    let mut g = empty();
    robust_prune(&mut g, &vectors, 0, &[], 1.2).unwrap();
    assert!(g.neighbors(0).is_empty());
}

#[test]
fn orthogonal_candidates_survive_prune() {
    let base = rows(&[
        &[0.0, 0.0, 0.0],
        &[1.0, 0.0, 0.0],
        &[0.0, 1.0, 0.0],
        &[0.0, 0.0, 1.0],
    ]);
    let mut g = GraphIndex::from_adjacency(4, 3, vec![vec![]; 4], 0, Metric::SquaredL2).unwrap();
    robust_prune(&mut g, &NodeVectors::base_only(&base), 0, &[1, 2, 3], 1.0).unwrap();
    assert_eq!(g.neighbors(0), &[1, 2, 3]);
}

#[test]
fn spare_count_examples() {
    // R = 8, node 0 has five out-neighbors, two of them query nodes.
    let mut adj = vec![vec![1, 2, 3, 9, 10]];
    adj.extend((1..9).map(|_| Vec::new()));
    adj.push(vec![0]);
    adj.push(vec![0]);
    let g = GraphIndex::from_adjacency(9, 8, adj, 0, Metric::SquaredL2).unwrap();
    assert_eq!(compute_spare_counts(&g).get(0), 2);

    // Full list with one query neighbor gets a budget of one.
    let mut adj: Vec<Vec<u32>> = vec![(1..=8).collect()];
    adj.extend((1..=9).map(|_| Vec::new()));
    adj[0][7] = 9;
    let g = GraphIndex::from_adjacency(9, 8, adj, 0, Metric::SquaredL2).unwrap();
    let spare = compute_spare_counts(&g);
    assert_eq!(spare.get(0), 1);
    assert_eq!(spare.get(1), 8);
}

#[test]
fn planted_stitch_replaces_query_node() {
    // Base a=0, b=1, c=2 and query node q=3 with N_out(q) = {a, b, c}.
    let base = rows(&[&[0.0], &[1.0], &[3.0]]);
    let queries = rows(&[&[1.5]]);
    let vectors = NodeVectors::new(&base, Some(&queries)).unwrap();
    let adj = vec![vec![3], vec![], vec![], vec![0, 1, 2]];
    let mut g = GraphIndex::from_adjacency(3, 3, adj, 0, Metric::SquaredL2).unwrap();
    g.finalize(&vectors).unwrap();
    let a = g.neighbors(0);
    assert!(!a.is_empty() && !a.contains(&3));
    assert!(a.iter().all(|u| [1, 2].contains(u)));
    assert_finalized(&g, 3);
}

#[test]
fn stitch_with_no_in_neighbors_only_drops_the_node() {
    let base = rows(&[&[0.0], &[1.0]]);
    let queries = rows(&[&[0.5]]);
    let vectors = NodeVectors::new(&base, Some(&queries)).unwrap();
    let adj = vec![vec![1], vec![0], vec![0, 1]];
    let mut g = GraphIndex::from_adjacency(2, 2, adj, 0, Metric::SquaredL2).unwrap();
    let spare = compute_spare_counts(&g);
    robust_stitch(&mut g, &vectors, 2, &[], &spare).unwrap();
    assert_eq!(g.neighbors(0), &[1]);
    g.finalize(&vectors).unwrap();
    assert_eq!(g.adjacency(), &[vec![1], vec![0]]);
}

#[test]
fn two_cluster_build_keeps_only_base_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 64;
    let centers = [vec![-4.0f32; dim], vec![4.0f32; dim]];
    let mut values = Vec::with_capacity(2000 * dim);
    for i in 0..2000 {
        let c = &centers[i % 2];
        values.extend(c.iter().map(|&m| m + rng.random_range(-1.0f32..1.0)));
    }
    let base = VectorDataset::new(dim, values, Metric::SquaredL2).unwrap();
    let midway: Vec<f32> = (0..20 * dim).map(|_| rng.random_range(-0.5f32..0.5)).collect();
    let sample = VectorDataset::new(dim, midway, Metric::SquaredL2).unwrap();
    let params = small_params(1);

    let unstitched = build_unstitched(&base, Some(&sample), &params).unwrap();
    assert_eq!(unstitched.query_count(), 20);
    assert_eq!(unstitched.node_kind(2000), NodeKind::QuerySample);
    for q in 2000..2020u32 {
        assert!(
            unstitched.neighbors(q).iter().all(|&u| u < 2000),
            "query nodes link to base nodes only"
        );
    }

    let g = build_robust_vamana(&base, Some(&sample), &params).unwrap();
    assert_finalized(&g, 2000);
}

#[test]
fn empty_sample_equals_plain_vamana() {
    let w = generate(&SynthConfig {
        base_count: 1500,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let params = small_params(9);
    let (a, b) = with_threads(1, || {
        (
            build_vamana(&w.base, &params).unwrap(),
            build_robust_vamana(&w.base, None, &params).unwrap(),
        )
    });
    assert_eq!(a, b);
}

#[test]
fn single_threaded_builds_are_reproducible() {
    let w = generate(&SynthConfig {
        base_count: 1500,
        sample_count: 30,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let params = small_params(4);
    let build = || {
        with_threads(1, || {
            build_robust_vamana(&w.base, Some(&w.ood_sample), &params).unwrap()
        })
    };
    assert_eq!(build(), build());
    let other = with_threads(1, || {
        build_robust_vamana(&w.base, Some(&w.ood_sample), &BuildParams { seed: 5, ..params }).unwrap()
    });
    assert_finalized(&other, 1500);
}

#[test]
fn concurrent_build_keeps_invariants() {
    let w = generate(&SynthConfig {
        base_count: 2000,
        sample_count: 40,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let g = with_threads(4, || {
        build_robust_vamana(&w.base, Some(&w.ood_sample), &small_params(0)).unwrap()
    });
    assert_finalized(&g, 2000);
}

#[test]
fn exact_match_is_found_first() {
    let w = generate(&SynthConfig {
        base_count: 1000,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let g = build_vamana(&w.base, &small_params(0)).unwrap();
    for i in (0..1000).step_by(97) {
        let (ids, _) = search_topk(&g, &w.base, w.base.row(i), 1, 32).unwrap();
        let truth = brute_force_topk(&w.base, w.base.row(i), 1).unwrap();
        assert_eq!(ids[0], truth[0].id);
    }
}

#[test]
fn exhaustive_search_list_recovers_exact_neighbors() {
    let w = generate(&SynthConfig {
        base_count: 800,
        query_count: 50,
        seed: 13,
        ..Default::default()
    })
    .unwrap();
    let g = build_robust_vamana(&w.base, Some(&w.ood_sample), &small_params(0)).unwrap();
    let gt = ground_truth(&w.base, &w.ood_queries, 10).unwrap();
    for q in 0..w.ood_queries.count() {
        let (ids, _) = search_topk(&g, &w.base, w.ood_queries.row(q), 10, 800).unwrap();
        assert_eq!(recall_at_k(&ids, gt.row_ids(q), 10).unwrap(), 1.0);
    }
}

#[test]
fn graph_file_round_trip() {
    let w = generate(&SynthConfig {
        base_count: 300,
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let g = build_vamana(&w.base, &small_params(0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.graph");
    write_graph(&path, &g).unwrap();
    assert_eq!(read_graph(&path).unwrap(), g);

    let unstitched = build_unstitched(&w.base, Some(&w.ood_sample), &small_params(0)).unwrap();
    assert!(write_graph(&path, &unstitched).is_err());
}

#[test]
fn invalid_parameters_are_rejected() {
    let base = rows(&[&[0.0], &[1.0]]);
    let bad = [
        BuildParams {
            max_degree: 0,
            ..Default::default()
        },
        BuildParams {
            max_degree: 8,
            search_list: 4,
            ..Default::default()
        },
        BuildParams {
            alpha1: 1.3,
            alpha2: 1.2,
            ..Default::default()
        },
        BuildParams {
            alpha1: 0.5,
            ..Default::default()
        },
    ];
    for params in bad {
        assert!(build_vamana(&base, &params).is_err(), "{params:?}");
    }
    let other_dim = VectorDataset::from_rows(&[vec![0.0, 1.0]], Metric::SquaredL2).unwrap();
    assert!(build_robust_vamana(&base, Some(&other_dim), &BuildParams::default()).is_err());
}
