use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sector_width, SectorLayout};
use crate::error::{ensure, Result};
use crate::graph::GraphIndex;
use crate::par::*;

/// Shared "already packed" flags. A node is claimed by exactly one packer.
#[derive(Debug)]
pub struct ClaimMap {
    flags: Vec<AtomicBool>,
}

impl ClaimMap {
    pub fn new(n: usize) -> Self {
        Self {
            flags: (0..n).map(|_| AtomicBool::new(false)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// Atomically marks `v` packed; false when another packer got there first.
    pub fn try_claim(&self, v: u32) -> bool {
        self.flags[v as usize]
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_ok()
    }

    pub fn is_claimed(&self, v: u32) -> bool {
        self.flags[v as usize].load(Ordering::Acquire)
    }

    pub fn claimed_count(&self) -> usize {
        self.flags.iter().filter(|f| f.load(Ordering::Acquire)).count()
    }
}

/// Nodes placed in one sector, in placement order, with the heap priority
/// each had when it was chosen (0 for the seed and for random fills).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedSector {
    pub nodes: Vec<u32>,
    pub gains: Vec<u32>,
}

impl PackedSector {
    /// Locality score: total priority collected by the placed nodes.
    pub fn score(&self) -> u64 {
        self.gains.iter().map(|&g| g as u64).sum()
    }
}

/// Claims a random unpacked node: a few random probes, then a scan from a
/// random offset. `None` once every node is packed.
fn claim_random(claims: &ClaimMap, rng: &mut impl Rng) -> Option<u32> {
    let n = claims.len();
    for _ in 0..32 {
        let v = rng.random_range(0..n) as u32;
        if !claims.is_claimed(v) && claims.try_claim(v) {
            return Some(v);
        }
    }
    let offset = rng.random_range(0..n);
    (0..n)
        .map(|i| ((offset + i) % n) as u32)
        .find(|&v| !claims.is_claimed(v) && claims.try_claim(v))
}

/// Greedily fills one sector starting from `seed`.
///
/// After each placement the priorities of the new node's out-neighbors,
/// in-neighbors and the out-neighbors of its in-neighbors are incremented;
/// the next node is the unpacked one with the highest priority (ties:
/// smaller id), or a random unpacked node when no candidate is left. If
/// `seed` is already packed a random unpacked node replaces it.
pub fn sector_pack(
    graph: &GraphIndex,
    in_neighbors: &[Vec<u32>],
    claims: &ClaimMap,
    seed: u32,
    width: usize,
    rng: &mut impl Rng,
) -> PackedSector {
    let mut nodes = Vec::with_capacity(width);
    let mut gains = Vec::with_capacity(width);
    let first = if claims.try_claim(seed) {
        Some(seed)
    } else {
        claim_random(claims, rng)
    };
    let Some(first) = first else {
        return PackedSector { nodes, gains };
    };
    nodes.push(first);
    gains.push(0);

    let mut counts: HashMap<u32, u32> = HashMap::new();
    let mut heap: BinaryHeap<(u32, Reverse<u32>)> = BinaryHeap::new();
    let bump = |u: u32, counts: &mut HashMap<u32, u32>, heap: &mut BinaryHeap<(u32, Reverse<u32>)>| {
        if claims.is_claimed(u) {
            return;
        }
        let c = counts.entry(u).or_insert(0);
        *c += 1;
        heap.push((*c, Reverse(u)));
    };

    while nodes.len() < width {
        let placed = *nodes.last().unwrap();
        for &u in graph.neighbors(placed) {
            bump(u, &mut counts, &mut heap);
        }
        for &u in &in_neighbors[placed as usize] {
            bump(u, &mut counts, &mut heap);
            for &t in graph.neighbors(u) {
                bump(t, &mut counts, &mut heap);
            }
        }

        let next = loop {
            match heap.pop() {
                None => break claim_random(claims, rng).map(|v| (v, 0)),
                Some((c, Reverse(v))) => {
                    if counts.get(&v) != Some(&c) || claims.is_claimed(v) {
                        continue;
                    }
                    if claims.try_claim(v) {
                        break Some((v, c));
                    }
                }
            }
        };
        match next {
            Some((v, gain)) => {
                nodes.push(v);
                gains.push(gain);
            }
            None => break,
        }
    }
    PackedSector { nodes, gains }
}

fn sector_rng(seed: u64, sector: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (sector as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Packs all sectors: `floor(n / w)` full sectors concurrently, each from a
/// random unpacked seed, then the remainder as a final partial sector.
pub fn pack_sectors(graph: &GraphIndex, width: usize, seed: u64) -> Result<Vec<PackedSector>> {
    ensure!(graph.is_finalized(), "layout requires a finalized graph");
    ensure!(width >= 1, "sector width must be at least 1");
    let n = graph.node_count();
    let in_neighbors = graph.transpose();
    let claims = ClaimMap::new(n);
    let full = n / width;
    let pack = |i: usize| {
        let mut rng = sector_rng(seed, i);
        let s = rng.random_range(0..n) as u32;
        sector_pack(graph, &in_neighbors, &claims, s, width, &mut rng)
    };
    let mut sectors: Vec<PackedSector> = if current_num_threads() <= 1 {
        (0..full).map(pack).collect()
    } else {
        (0..full).into_par_iter().map(pack).collect()
    };
    if !n.is_multiple_of(width) {
        sectors.push(pack(full));
    }
    Ok(sectors)
}

/// Sector-locality ordering of a finalized graph.
pub fn parallel_gorder(
    graph: &GraphIndex,
    sector_size: usize,
    node_size: usize,
    seed: u64,
) -> Result<SectorLayout> {
    let width = sector_width(sector_size, node_size)?;
    let sectors = pack_sectors(graph, width, seed)?;
    let order: Vec<u32> = sectors.into_iter().flat_map(|s| s.nodes).collect();
    ensure!(
        order.len() == graph.node_count(),
        "packing placed {} of {} nodes",
        order.len(),
        graph.node_count()
    );
    SectorLayout::from_order(order, sector_size, node_size)
}
