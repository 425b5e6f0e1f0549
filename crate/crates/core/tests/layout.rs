use std::collections::{HashMap, HashSet};

use oodann::graph::{build_vamana, BuildParams, GraphIndex};
use oodann::layout::{
    beam_search_disk, node_size, pack_sectors, parallel_gorder, read_layout, sector_pack, sector_width,
    write_layout, BeamSearchParams, ClaimMap, PackedSector, SectorLayout,
};
use oodann::par::with_threads;
use oodann::quant::{encode, train_pq, PqParams};
use oodann::synth::{generate, SynthConfig, Workload};
use oodann::Metric;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn from_edges(n: usize, edges: &[(u32, u32)]) -> GraphIndex {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a as usize].push(b);
    }
    GraphIndex::from_adjacency(n, 8, adj, 0, Metric::SquaredL2).unwrap()
}

fn workload(n: usize, seed: u64) -> (Workload, GraphIndex) {
    let w = generate(&SynthConfig {
        base_count: n,
        query_count: 50,
        sample_count: 10,
        dim: 16,
        seed,
        ..Default::default()
    })
    .unwrap();
    let params = BuildParams {
        max_degree: 16,
        search_list: 32,
        seed,
        ..Default::default()
    };
    let g = build_vamana(&w.base, &params).unwrap();
    (w, g)
}

fn assert_permutation(order: &[u32], n: usize) {
    assert_eq!(order.len(), n);
    let distinct: HashSet<u32> = order.iter().copied().collect();
    assert_eq!(distinct.len(), n);
    assert!(order.iter().all(|&v| (v as usize) < n));
}

/// Replays a sequential packing: every greedy pick must carry the top
/// priority among unpacked nodes, and random fills happen only once no
/// unpacked node has positive priority.
fn replay(graph: &GraphIndex, sectors: &[PackedSector]) {
    let inn = graph.transpose();
    let mut packed: HashSet<u32> = HashSet::new();
    for sector in sectors {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for (i, (&v, &gain)) in sector.nodes.iter().zip(&sector.gains).enumerate() {
            if i > 0 {
                let best = counts
                    .iter()
                    .filter(|(u, _)| !packed.contains(u))
                    .map(|(_, &c)| c)
                    .max()
                    .unwrap_or(0);
                assert_eq!(
                    gain, best,
                    "node {v} picked with priority {gain}, best was {best}"
                );
                if gain > 0 {
                    assert_eq!(counts.get(&v), Some(&gain));
                }
            }
            assert!(packed.insert(v), "node {v} packed twice");
            let mut bump = |u: u32| *counts.entry(u).or_insert(0) += 1;
            graph.neighbors(v).iter().for_each(|&u| bump(u));
            for &u in &inn[v as usize] {
                bump(u);
                graph.neighbors(u).iter().for_each(|&t| bump(t));
            }
        }
    }
    assert_eq!(packed.len(), graph.node_count());
}

#[test]
fn sequential_packing_follows_priorities() {
    let (_, g) = workload(600, 1);
    for width in [1, 3, 7, 16] {
        let sectors = with_threads(1, || pack_sectors(&g, width, 9).unwrap());
        replay(&g, &sectors);
        assert!(sectors[..sectors.len() - 1]
            .iter()
            .all(|s| s.nodes.len() == width));
    }
}

#[test]
fn chain_and_star_examples() {
    let chain = from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = sector_pack(&chain, &chain.transpose(), &ClaimMap::new(4), 1, 3, &mut rng);
    // 0 and 2 both gain 1 from node 1; the smaller id wins, and placing 0
    // adds nothing for 2.
    assert_eq!(s.nodes, vec![1, 0, 2]);
    assert_eq!(s.gains, vec![0, 1, 1]);
    assert_eq!(s.score(), 2);

    let star = from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
    let s = sector_pack(&star, &star.transpose(), &ClaimMap::new(5), 3, 3, &mut rng);
    // From leaf 3: hub 0 is an in-neighbor, its other leaves are siblings.
    assert_eq!(s.nodes, vec![3, 0, 1]);
}

#[test]
fn claimed_seed_is_replaced() {
    let g = from_edges(4, &[(0, 1)]);
    let claims = ClaimMap::new(4);
    assert!(claims.try_claim(0));
    assert!(!claims.try_claim(0));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = sector_pack(&g, &g.transpose(), &claims, 0, 2, &mut rng);
    assert_eq!(s.nodes.len(), 2);
    assert!(!s.nodes.contains(&0));
    assert_eq!(claims.claimed_count(), 3);
}

#[test]
fn width_extremes() {
    let (_, g) = workload(300, 2);
    let one = pack_sectors(&g, 300, 0).unwrap();
    assert_eq!(one.len(), 1);
    assert_permutation(&one[0].nodes, 300);
    let big = pack_sectors(&g, 1000, 0).unwrap();
    assert_eq!(big.len(), 1);
    let singles = pack_sectors(&g, 1, 0).unwrap();
    assert_eq!(singles.len(), 300);
    assert!(singles.iter().all(|s| s.nodes.len() == 1 && s.gains == [0]));
}

#[test]
fn concurrent_packing_yields_a_permutation() {
    let (_, g) = workload(2000, 3);
    for seed in 0..5 {
        let layout = with_threads(8, || parallel_gorder(&g, 4096, 520, seed).unwrap());
        assert_eq!(layout.width(), 7);
        assert_permutation(layout.order(), 2000);
        assert_eq!(layout.sector_count(), 2000usize.div_ceil(7));
        for s in 0..layout.sector_count() {
            for &v in layout.sector(s) {
                assert_eq!(layout.sector_of(v) as usize, s);
            }
        }
    }
}

#[test]
fn gorder_beats_random_placement_on_locality() {
    let (_, g) = workload(2000, 4);
    let layout = with_threads(1, || parallel_gorder(&g, 4096, 520, 0).unwrap());
    let random = SectorLayout::random(2000, 4096, 520, 0).unwrap();
    let shared = |l: &SectorLayout| {
        (0..2000u32)
            .flat_map(|v| g.neighbors(v).iter().map(move |&u| (v, u)))
            .filter(|&(v, u)| l.sector_of(v) == l.sector_of(u))
            .count()
    };
    assert!(
        shared(&layout) > 5 * shared(&random),
        "{} vs {}",
        shared(&layout),
        shared(&random)
    );
}

#[test]
fn layout_validation() {
    assert_eq!(node_size(16, 16), 16 * 4 + 4 + 16 * 4);
    assert_eq!(sector_width(4096, 132).unwrap(), 31);
    assert!(sector_width(4096, 5000).is_err());
    assert!(sector_width(4096, 0).is_err());
    assert!(SectorLayout::from_order(vec![0, 1, 1], 4096, 512).is_err());
    assert!(SectorLayout::from_order(vec![0, 3, 1], 4096, 512).is_err());
    assert!(SectorLayout::from_order(vec![], 4096, 512).is_err());
    let l = SectorLayout::from_order(vec![2, 0, 1], 1024, 512).unwrap();
    assert_eq!(l.sector(0), &[2, 0]);
    assert_eq!(l.sector(1), &[1]);
    assert_eq!(l.sector_of(1), 1);
}

#[test]
fn search_results_do_not_depend_on_layout() {
    let (w, g) = workload(1500, 5);
    let cb = train_pq(&w.base, &PqParams::new(4, 32)).unwrap().codebook;
    let codes = encode(&w.base, &cb).unwrap();
    let layouts = [
        SectorLayout::identity(1500, 4096, 520).unwrap(),
        SectorLayout::random(1500, 4096, 520, 7).unwrap(),
        parallel_gorder(&g, 4096, 520, 7).unwrap(),
        // Node size 1 packs everything into one sector.
        SectorLayout::identity(1500, 4096, 1).unwrap(),
    ];
    let params = BeamSearchParams {
        k: 10,
        search_list: 40,
        beam_width: 4,
    };
    for q in w.id_queries.rows() {
        let runs: Vec<_> = layouts
            .iter()
            .map(|l| beam_search_disk(&g, l, &w.base, &codes, &cb, q, &params).unwrap())
            .collect();
        for (ids, stats) in &runs {
            assert_eq!(ids, &runs[0].0);
            assert_eq!(stats.expanded, runs[0].1.expanded);
            assert!(stats.sector_reads <= stats.expanded);
            assert!(stats.sector_reads >= 1);
        }
        assert_eq!(runs[3].1.sector_reads, 1);
    }
}

#[test]
fn layout_file_round_trip() {
    let (_, g) = workload(500, 6);
    let layout = parallel_gorder(&g, 4096, 520, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("layout");
    write_layout(&path, &layout).unwrap();
    assert_eq!(read_layout(&path).unwrap(), layout);
    std::fs::write(&path, b"garbage").unwrap();
    assert!(read_layout(&path).is_err());
}
