//! Placement of graph nodes into fixed-size disk sectors and a search
//! simulator that counts the sectors a query touches.

mod beam;
mod gorder;
mod io;

pub use beam::{beam_search_disk, BeamSearchParams, IoStats};
pub use gorder::{pack_sectors, parallel_gorder, sector_pack, ClaimMap, PackedSector};
pub use io::{read_layout, write_layout};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};

/// Default sector size in bytes.
pub const DEFAULT_SECTOR_SIZE: usize = 4096;

/// Bytes per node in a DiskANN-style record: the full-precision vector, a
/// degree word and `max_degree` neighbor ids.
pub fn node_size(dim: usize, max_degree: usize) -> usize {
    dim * 4 + 4 + max_degree * 4
}

/// Nodes that fit one sector, `floor(sector_size / node_size)`.
pub fn sector_width(sector_size: usize, node_size: usize) -> Result<usize> {
    ensure!(
        node_size >= 1 && node_size <= sector_size,
        "node size {node_size} must be between 1 and the sector size {sector_size}"
    );
    Ok(sector_size / node_size)
}

/// A permutation of node ids cut into sectors of `width` consecutive slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectorLayout {
    order: Vec<u32>,
    width: usize,
    sector_size: usize,
    node_size: usize,
    sector_of: Vec<u32>,
}

impl SectorLayout {
    /// Wraps an explicit order, checking that it is a permutation.
    pub fn from_order(order: Vec<u32>, sector_size: usize, node_size: usize) -> Result<Self> {
        let width = sector_width(sector_size, node_size)?;
        let n = order.len();
        ensure!(n >= 1, "layout needs at least one node");
        let mut sector_of = vec![u32::MAX; n];
        for (slot, &v) in order.iter().enumerate() {
            ensure!((v as usize) < n, "node id {v} out of range for {n} nodes");
            ensure!(sector_of[v as usize] == u32::MAX, "node {v} placed twice");
            sector_of[v as usize] = (slot / width) as u32;
        }
        Ok(Self {
            order,
            width,
            sector_size,
            node_size,
            sector_of,
        })
    }

    /// Nodes in id order.
    pub fn identity(n: usize, sector_size: usize, node_size: usize) -> Result<Self> {
        Self::from_order((0..n as u32).collect(), sector_size, node_size)
    }

    /// Nodes in a seeded random order.
    pub fn random(n: usize, sector_size: usize, node_size: usize, seed: u64) -> Result<Self> {
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self::from_order(order, sector_size, node_size)
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn sector_size(&self) -> usize {
        self.sector_size
    }

    pub fn node_size(&self) -> usize {
        self.node_size
    }

    pub fn node_count(&self) -> usize {
        self.order.len()
    }

    pub fn sector_count(&self) -> usize {
        self.order.len().div_ceil(self.width)
    }

    #[inline]
    pub fn sector_of(&self, v: u32) -> u32 {
        self.sector_of[v as usize]
    }

    /// Node ids stored in sector `s`.
    pub fn sector(&self, s: usize) -> &[u32] {
        let start = s * self.width;
        &self.order[start..(start + self.width).min(self.order.len())]
    }
}
