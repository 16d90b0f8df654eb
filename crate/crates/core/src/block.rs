//! Patch/Block domain decomposition and neighbor topology.
//!
//! One rectangular `Patch` at uniform resolution covers the whole domain and
//! is subdivided into a Cartesian grid of cuboidal `Block`s. Management data
//! (id, bounding box, owning rank, selectors) is replicated on every process;
//! simulation data is allocated only on the owning process.

use std::any::Any;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::registry::Selector;
use crate::scalar::Scalar;
use crate::stencil::CommDir;

#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct BlockId(pub u64);

impl std::fmt::Display for BlockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "B{}", self.0)
    }
}

/// Axis-aligned bounding box in global cell coordinates, `min` inclusive and
/// `max` exclusive.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct Aabb {
    pub min: [i64; 3],
    pub max: [i64; 3],
}

impl Aabb {
    pub fn extent(&self) -> [usize; 3] {
        [
            (self.max[0] - self.min[0]) as usize,
            (self.max[1] - self.min[1]) as usize,
            (self.max[2] - self.min[2]) as usize,
        ]
    }

    pub fn cells(&self) -> usize {
        self.extent().iter().product()
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct Patch {
    pub extent: [usize; 3],
    pub grid: [usize; 3],
}

/// Replicated management data of one block.
#[derive(Copy, Clone, Debug)]
pub struct BlockMeta {
    pub id: BlockId,
    pub coord: [usize; 3],
    pub aabb: Aabb,
    pub rank: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Locality {
    Local,
    Remote(usize),
}

#[derive(Copy, Clone, Debug)]
pub struct Neighbor {
    pub dir: CommDir,
    pub id: BlockId,
    pub locality: Locality,
}

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("block grid {grid:?} does not fit extent {extent:?}")]
    GridTooFine { extent: [usize; 3], grid: [usize; 3] },
    #[error("extent and grid must be positive on every axis")]
    ZeroSize,
    #[error("rank block counts sum to {got}, expected {expected} blocks")]
    CountMismatch { got: usize, expected: usize },
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
}

/// The decomposed domain: patch, periodicity and replicated block metadata.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub patch: Patch,
    pub periodic: [bool; 3],
    blocks: Vec<BlockMeta>,
    by_id: BTreeMap<BlockId, usize>,
}

/// Split `extent` cells into `grid` near-uniform slabs; the remainder goes to
/// the low-index slabs.
pub fn axis_split(extent: usize, grid: usize) -> Vec<(i64, i64)> {
    let base = extent / grid;
    let rem = extent % grid;
    let mut out = Vec::with_capacity(grid);
    let mut at = 0i64;
    for g in 0..grid {
        let len = base + usize::from(g < rem);
        out.push((at, at + len as i64));
        at += len as i64;
    }
    out
}

/// Build the decomposition. Blocks are ordered lexicographically (x fastest)
/// and ranks are assigned by filling that order with `blocks_per_rank` counts,
/// which keeps each rank's blocks contiguous along the slowest-varying axis.
pub fn decompose(
    extent: [usize; 3],
    grid: [usize; 3],
    periodic: [bool; 3],
    blocks_per_rank: &[usize],
) -> Result<Decomposition, DomainError> {
    if extent.iter().any(|&e| e == 0) || grid.iter().any(|&g| g == 0) {
        return Err(DomainError::ZeroSize);
    }
    if (0..3).any(|a| grid[a] > extent[a]) {
        return Err(DomainError::GridTooFine { extent, grid });
    }
    let total = grid[0] * grid[1] * grid[2];
    let got: usize = blocks_per_rank.iter().sum();
    if got != total {
        return Err(DomainError::CountMismatch { got, expected: total });
    }

    let splits: [Vec<(i64, i64)>; 3] = [
        axis_split(extent[0], grid[0]),
        axis_split(extent[1], grid[1]),
        axis_split(extent[2], grid[2]),
    ];

    let mut ranks = Vec::with_capacity(total);
    for (rank, &count) in blocks_per_rank.iter().enumerate() {
        ranks.extend(std::iter::repeat(rank).take(count));
    }

    let mut blocks = Vec::with_capacity(total);
    let mut by_id = BTreeMap::new();
    for bz in 0..grid[2] {
        for by in 0..grid[1] {
            for bx in 0..grid[0] {
                let idx = bx + grid[0] * (by + grid[1] * bz);
                let id = BlockId(idx as u64);
                let aabb = Aabb {
                    min: [splits[0][bx].0, splits[1][by].0, splits[2][bz].0],
                    max: [splits[0][bx].1, splits[1][by].1, splits[2][bz].1],
                };
                blocks.push(BlockMeta {
                    id,
                    coord: [bx, by, bz],
                    aabb,
                    rank: ranks[idx],
                });
                by_id.insert(id, idx);
            }
        }
    }
    blocks.sort_by_key(|b| b.id);
    Ok(Decomposition {
        patch: Patch { extent, grid },
        periodic,
        blocks,
        by_id,
    })
}

impl Decomposition {
    pub fn blocks(&self) -> &[BlockMeta] {
        &self.blocks
    }

    pub fn meta(&self, id: BlockId) -> Result<&BlockMeta, DomainError> {
        self.by_id
            .get(&id)
            .map(|&i| &self.blocks[i])
            .ok_or(DomainError::UnknownBlock(id))
    }

    pub fn owner(&self, id: BlockId) -> Result<usize, DomainError> {
        self.meta(id).map(|m| m.rank)
    }

    pub fn ranks(&self) -> usize {
        self.blocks.iter().map(|b| b.rank).max().map_or(0, |r| r + 1)
    }

    /// Block at grid coordinate, honoring per-axis periodic wrap. `None` when
    /// the coordinate falls outside a non-periodic boundary.
    fn block_at(&self, coord: [i64; 3]) -> Option<&BlockMeta> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let g = self.patch.grid[a] as i64;
            if coord[a] < 0 || coord[a] >= g {
                if !self.periodic[a] {
                    return None;
                }
                c[a] = coord[a].rem_euclid(g) as usize;
            } else {
                c[a] = coord[a] as usize;
            }
        }
        let idx = c[0] + self.patch.grid[0] * (c[1] + self.patch.grid[1] * c[2]);
        Some(&self.blocks[idx])
    }

    /// The face and edge neighbors of a block that exist under the configured
    /// periodicity, relative to `viewer_rank`.
    pub fn neighbors_of(
        &self,
        id: BlockId,
        viewer_rank: usize,
    ) -> Result<Vec<Neighbor>, DomainError> {
        let meta = self.meta(id)?;
        let mut out = Vec::new();
        for dir in CommDir::all() {
            let off = dir.offset();
            let coord = [
                meta.coord[0] as i64 + off[0] as i64,
                meta.coord[1] as i64 + off[1] as i64,
                meta.coord[2] as i64 + off[2] as i64,
            ];
            if let Some(nb) = self.block_at(coord) {
                out.push(Neighbor {
                    dir,
                    id: nb.id,
                    locality: if nb.rank == viewer_rank {
                        Locality::Local
                    } else {
                        Locality::Remote(nb.rank)
                    },
                });
            }
        }
        Ok(out)
    }

    /// Stable digest of the replicated management data; equal on every process
    /// by construction, asserted by the runtime.
    pub fn management_digest(&self, hs_of_rank: &[String]) -> u64 {
        let mut bytes = Vec::new();
        for b in &self.blocks {
            bytes.extend_from_slice(&b.id.0.to_le_bytes());
            for a in 0..3 {
                bytes.extend_from_slice(&b.aabb.min[a].to_le_bytes());
                bytes.extend_from_slice(&b.aabb.max[a].to_le_bytes());
            }
            bytes.extend_from_slice(&(b.rank as u64).to_le_bytes());
            if let Some(hs) = hs_of_rank.get(b.rank) {
                bytes.extend_from_slice(hs.as_bytes());
            }
            bytes.push(0);
        }
        crate::util::digest_bytes(0x9d5f, &bytes)
    }
}

/// Type-erased simulation data stored on a block.
pub trait SimData<T: Scalar>: Any + Send {
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

impl<T: Scalar> SimData<T> for crate::field::PdfField<T> {
    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Unit of decomposition: replicated management data plus, on the owning
/// process only, a heterogeneous list of simulation data keyed by a data-kind
/// selector.
pub struct Block<T: Scalar> {
    pub id: BlockId,
    pub aabb: Aabb,
    pub rank: usize,
    pub hs: Selector,
    pub bs: Selector,
    pub data: Vec<(Selector, Box<dyn SimData<T>>)>,
}

impl<T: Scalar> Block<T> {
    pub fn from_meta(meta: &BlockMeta, hs: Selector, bs: Selector) -> Self {
        Self {
            id: meta.id,
            aabb: meta.aabb,
            rank: meta.rank,
            hs,
            bs,
            data: Vec::new(),
        }
    }

    pub fn extent(&self) -> [usize; 3] {
        self.aabb.extent()
    }

    pub fn find<D: 'static>(&self, kind: Selector) -> Option<&D> {
        self.data
            .iter()
            .find(|(k, _)| *k == kind)
            .and_then(|(_, d)| d.as_any().downcast_ref())
    }

    pub fn find_mut<D: 'static>(&mut self, kind: Selector) -> Option<&mut D> {
        self.data
            .iter_mut()
            .find(|(k, _)| *k == kind)
            .and_then(|(_, d)| d.as_any_mut().downcast_mut())
    }
}
