//! Emulated accelerator data path.
//!
//! A `StagedArena` is a separate memory space standing in for device memory:
//! host code cannot read it directly, every crossing goes through `stage_in`
//! / `stage_out` and is byte-counted, and compute runs inside a device
//! context. `StagedField` stores a SoA PDF field in an arena together with 6
//! plane and 12 edge buffers mirrored by host staging buffers; on-device copy
//! operations move boundary data between field and buffers around each kernel
//! call. Domain-boundary conditions are applied host-side on staged-out
//! buffer contents and staged back in, exactly two link crossings per wall
//! direction per step.
//!
//! The compute itself is emulated on the host, but the data path (arena,
//! staging buffers, counters, modeled link bandwidth) reproduces the real
//! topology, so transfer volumes are exact and desk-verifiable. A real device
//! backend would slot in behind the same interface.

use std::cell::Cell;

use thiserror::Error;

use crate::block::SimData;
use crate::field::{boundary_cells, ghost_cells, CellKind, Layout};
use crate::params::LbmParams;
use crate::registry::BlockGeometry;
use crate::scalar::Scalar;
use crate::stencil::{CommDir, DIRECTIONS, OPPOSITE, Q, WEIGHTS};

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct BufId(usize);

#[derive(Debug, Error)]
pub enum StagedError {
    #[error("staging payload of {got} bytes into buffer of {expected} bytes")]
    SizeMismatch { got: usize, expected: usize },
}

/// Cumulative transfer accounting for one arena.
#[derive(Copy, Clone, Default, PartialEq, Eq, Debug)]
pub struct StagedCounters {
    pub host_to_device: u64,
    pub device_to_host: u64,
    pub on_device_copies: u64,
}

impl StagedCounters {
    pub fn link_bytes(&self) -> u64 {
        self.host_to_device + self.device_to_host
    }
}

pub struct StagedArena<T: Scalar> {
    bufs: Vec<Vec<T>>,
    h2d: Cell<u64>,
    d2h: Cell<u64>,
    on_dev: Cell<u64>,
    faults: Cell<u64>,
    /// Modeled link bandwidth in bytes per second.
    bandwidth: f64,
}

impl<T: Scalar> StagedArena<T> {
    pub fn new(bandwidth_bytes_per_s: f64) -> Self {
        Self {
            bufs: Vec::new(),
            h2d: Cell::new(0),
            d2h: Cell::new(0),
            on_dev: Cell::new(0),
            faults: Cell::new(0),
            bandwidth: bandwidth_bytes_per_s,
        }
    }

    pub fn alloc(&mut self, len: usize) -> BufId {
        self.bufs.push(vec![T::zero(); len]);
        BufId(self.bufs.len() - 1)
    }

    pub fn len_of(&self, id: BufId) -> usize {
        self.bufs[id.0].len()
    }

    /// Run device code. The context is the only sanctioned way to touch
    /// arena memory without a counted link crossing.
    pub fn with_device<R>(&mut self, f: impl FnOnce(&mut DeviceCtx<'_, T>) -> R) -> R {
        let mut ctx = DeviceCtx {
            bufs: &mut self.bufs,
            on_dev: &self.on_dev,
        };
        f(&mut ctx)
    }

    /// Copy bytes from host into a device buffer (counted link crossing).
    pub fn stage_in(&mut self, id: BufId, bytes: &[u8]) -> Result<(), StagedError> {
        let buf = &mut self.bufs[id.0];
        let expected = buf.len() * T::BYTES;
        if bytes.len() != expected {
            return Err(StagedError::SizeMismatch {
                got: bytes.len(),
                expected,
            });
        }
        for (i, v) in buf.iter_mut().enumerate() {
            *v = T::read_le(&bytes[i * T::BYTES..]);
        }
        self.h2d.set(self.h2d.get() + bytes.len() as u64);
        Ok(())
    }

    /// Copy a device buffer out to host bytes (counted link crossing).
    pub fn stage_out(&self, id: BufId) -> Vec<u8> {
        let buf = &self.bufs[id.0];
        let mut out = Vec::with_capacity(buf.len() * T::BYTES);
        for v in buf {
            v.write_le(&mut out);
        }
        self.d2h.set(self.d2h.get() + out.len() as u64);
        out
    }

    /// Typed upload, counted like `stage_in`.
    pub fn stage_in_values(&mut self, id: BufId, values: &[T]) -> Result<(), StagedError> {
        let buf = &mut self.bufs[id.0];
        if values.len() != buf.len() {
            return Err(StagedError::SizeMismatch {
                got: values.len() * T::BYTES,
                expected: buf.len() * T::BYTES,
            });
        }
        buf.copy_from_slice(values);
        self.h2d.set(self.h2d.get() + (values.len() * T::BYTES) as u64);
        Ok(())
    }

    /// Typed readback, counted like `stage_out`.
    pub fn stage_out_values(&self, id: BufId) -> Vec<T> {
        let buf = self.bufs[id.0].clone();
        self.d2h.set(self.d2h.get() + (buf.len() * T::BYTES) as u64);
        buf
    }

    /// Exchange two equally-sized device buffers by identity. No bytes cross
    /// the link and nothing is copied; this is the local-communication fast
    /// path between staged blocks in the same arena.
    pub fn swap_bufs(&mut self, a: BufId, b: BufId) {
        debug_assert_eq!(self.bufs[a.0].len(), self.bufs[b.0].len());
        self.bufs.swap(a.0, b.0);
    }

    /// Direct host read of arena memory. This bypasses the staged interface
    /// and is recorded as an isolation fault; it exists so tests can prove
    /// the detector fires. Production code paths never call it.
    pub fn host_read(&self, id: BufId, index: usize) -> T {
        self.faults.set(self.faults.get() + 1);
        self.bufs[id.0][index]
    }

    /// Fault-injection hook: one uncounted host read of whatever buffer
    /// exists, if any.
    pub fn probe_host_read(&self) -> Option<f64> {
        if self.bufs.is_empty() {
            None
        } else {
            Some(self.host_read(BufId(0), 0).as_f64())
        }
    }

    pub fn counters(&self) -> StagedCounters {
        StagedCounters {
            host_to_device: self.h2d.get(),
            device_to_host: self.d2h.get(),
            on_device_copies: self.on_dev.get(),
        }
    }

    pub fn faults(&self) -> u64 {
        self.faults.get()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Modeled time spent on the link so far: counted bytes / bandwidth.
    pub fn modeled_transfer_seconds(&self) -> f64 {
        (self.h2d.get() + self.d2h.get()) as f64 / self.bandwidth
    }
}

/// Device-side view of the arena: buffer access plus on-device copy
/// accounting.
pub struct DeviceCtx<'a, T: Scalar> {
    bufs: &'a mut Vec<Vec<T>>,
    on_dev: &'a Cell<u64>,
}

impl<'a, T: Scalar> DeviceCtx<'a, T> {
    pub fn buf(&self, id: BufId) -> &[T] {
        &self.bufs[id.0]
    }

    pub fn buf_mut(&mut self, id: BufId) -> &mut [T] {
        &mut self.bufs[id.0]
    }

    /// Distinct read and write buffers.
    pub fn read_write(&mut self, read: BufId, write: BufId) -> (&[T], &mut [T]) {
        assert_ne!(read.0, write.0);
        if read.0 < write.0 {
            let (lo, hi) = self.bufs.split_at_mut(write.0);
            (&lo[read.0], &mut hi[0])
        } else {
            let (lo, hi) = self.bufs.split_at_mut(read.0);
            (&hi[0], &mut lo[write.0])
        }
    }

    pub fn count_copy_bytes(&self, bytes: u64) {
        self.on_dev.set(self.on_dev.get() + bytes);
    }
}

/// SoA PDF field resident in a staged arena, with one device buffer per
/// communication direction.
pub struct StagedField<T: Scalar> {
    extent: [usize; 3],
    kinds: Vec<CellKind<T>>,
    src: BufId,
    dst: BufId,
    dir_bufs: [BufId; CommDir::COUNT],
    wall_dirs: Vec<CommDir>,
    /// Precomputed SoA indices per direction: boundary gather order equals
    /// the wire layout; ghost scatter order mirrors it on the receiving side.
    pack_idx: Vec<Vec<usize>>,
    unpack_idx: Vec<Vec<usize>>,
}

impl<T: Scalar> SimData<T> for StagedField<T> {
    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn std::any::Any {
        self
    }
}

fn soa_index(extent: [usize; 3], c: [i64; 3], dir: usize) -> usize {
    let cells = (extent[0] + 2) * (extent[1] + 2) * (extent[2] + 2);
    dir * cells + crate::field::cell_index_of(extent, c)
}

impl<T: Scalar> StagedField<T> {
    pub fn new(geom: &BlockGeometry<T>, arena: &mut StagedArena<T>) -> Result<Self, StagedError> {
        let extent = geom.extent;
        let cells = (extent[0] + 2) * (extent[1] + 2) * (extent[2] + 2);
        let src = arena.alloc(cells * Q);
        let dst = arena.alloc(cells * Q);

        let mut dir_bufs = [BufId(0); CommDir::COUNT];
        let mut pack_idx = Vec::with_capacity(CommDir::COUNT);
        let mut unpack_idx = Vec::with_capacity(CommDir::COUNT);
        for d in CommDir::all() {
            let slots = d.slots();
            let boundary = boundary_cells(extent, d);
            dir_bufs[d.index() - 1] = arena.alloc(boundary.len() * slots.len());
            let mut pk = Vec::with_capacity(boundary.len() * slots.len());
            for c in &boundary {
                for &s in slots {
                    pk.push(soa_index(extent, *c, s));
                }
            }
            pack_idx.push(pk);
            let ghost = ghost_cells(extent, d);
            let in_slots = d.opposite().slots();
            let mut up = Vec::with_capacity(ghost.len() * in_slots.len());
            for c in &ghost {
                for &s in in_slots {
                    up.push(soa_index(extent, *c, s));
                }
            }
            unpack_idx.push(up);
        }

        // Initial upload: interior PDFs into the SoA array, ghost zeros.
        let mut initial = vec![T::zero(); cells * Q];
        let mut k = 0;
        for z in 0..extent[2] as i64 {
            for y in 0..extent[1] as i64 {
                for x in 0..extent[0] as i64 {
                    for i in 0..Q {
                        initial[soa_index(extent, [x, y, z], i)] = geom.init[k][i];
                    }
                    k += 1;
                }
            }
        }
        arena.stage_in_values(src, &initial)?;

        Ok(Self {
            extent,
            kinds: geom.kinds.clone(),
            src,
            dst,
            dir_bufs,
            wall_dirs: geom.wall_dirs.clone(),
            pack_idx,
            unpack_idx,
        })
    }

    pub fn extent(&self) -> [usize; 3] {
        self.extent
    }

    pub fn interior_fluid_count(&self) -> usize {
        let [nx, ny, nz] = self.extent;
        let mut n = 0;
        for z in 0..nz as i64 {
            for y in 0..ny as i64 {
                for x in 0..nx as i64 {
                    let idx = crate::field::cell_index_of(self.extent, [x, y, z]);
                    if matches!(self.kinds[idx], CellKind::Fluid) {
                        n += 1;
                    }
                }
            }
        }
        n
    }

    pub fn wall_dirs(&self) -> &[CommDir] {
        &self.wall_dirs
    }

    pub fn dir_buf(&self, d: CommDir) -> BufId {
        self.dir_bufs[d.index() - 1]
    }

    pub fn set_dir_buf(&mut self, d: CommDir, id: BufId) {
        self.dir_bufs[d.index() - 1] = id;
    }

    pub fn buf_len_bytes(&self, d: CommDir) -> usize {
        let cells: usize = crate::field::region_cell_count(self.extent, d);
        cells * d.slots().len() * T::BYTES
    }

    /// Copy boundary PDFs into all 18 direction buffers (post-kernel
    /// on-device copy).
    pub fn pack_ghost(&self, arena: &mut StagedArena<T>) {
        arena.with_device(|dev| {
            let mut moved = 0u64;
            for d in CommDir::all() {
                let idx = &self.pack_idx[d.index() - 1];
                let (field, buf) = dev.read_write(self.src, self.dir_buf(d));
                for (k, &i) in idx.iter().enumerate() {
                    buf[k] = field[i];
                }
                moved += (idx.len() * T::BYTES) as u64;
            }
            dev.count_copy_bytes(moved);
        });
    }

    /// Scatter all 18 direction buffers into the ghost layer (pre-kernel
    /// on-device copy).
    pub fn unpack_ghost(&self, arena: &mut StagedArena<T>) {
        arena.with_device(|dev| {
            let mut moved = 0u64;
            for d in CommDir::all() {
                let idx = &self.unpack_idx[d.index() - 1];
                let (buf, field) = dev.read_write(self.dir_buf(d), self.src);
                for (k, &i) in idx.iter().enumerate() {
                    field[i] = buf[k];
                }
                moved += (idx.len() * T::BYTES) as u64;
            }
            dev.count_copy_bytes(moved);
        });
    }

    /// Apply bounce-back to the buffers of every domain-boundary direction:
    /// stage the packed outgoing values out, reverse them with the
    /// moving-wall term on the host, stage them back in. The transformed
    /// buffer is consumed by the next `unpack_ghost` as incoming ghost data.
    pub fn host_boundary(&self, arena: &mut StagedArena<T>, params: &LbmParams<T>) {
        let six = T::from_f64(6.0);
        let rho0 = params.rho0();
        for &d in &self.wall_dirs {
            let id = self.dir_buf(d);
            let bytes = arena.stage_out(id);
            let mut values: Vec<T> = bytes
                .chunks_exact(T::BYTES)
                .map(|c| T::read_le(c))
                .collect();
            let boundary = boundary_cells(self.extent, d);
            let slots = d.slots();
            let mut k = 0;
            for c in &boundary {
                for &s in slots {
                    let e = DIRECTIONS[s];
                    let wall = [c[0] + e[0] as i64, c[1] + e[1] as i64, c[2] + e[2] as i64];
                    let u_w = match self.kinds[crate::field::cell_index_of(self.extent, wall)] {
                        CellKind::Wall(u) => u,
                        CellKind::Fluid => {
                            debug_assert!(false, "no-neighbor direction without wall shell");
                            [T::zero(); 3]
                        }
                    };
                    let delivered = OPPOSITE[s];
                    let ed = DIRECTIONS[delivered];
                    let eu = T::from_f64(ed[0] as f64) * u_w[0]
                        + T::from_f64(ed[1] as f64) * u_w[1]
                        + T::from_f64(ed[2] as f64) * u_w[2];
                    values[k] += six * T::from_f64(WEIGHTS[delivered]) * rho0 * eu;
                    k += 1;
                }
            }
            let mut back = Vec::with_capacity(values.len() * T::BYTES);
            for v in &values {
                v.write_le(&mut back);
            }
            arena
                .stage_in(id, &back)
                .expect("wall buffer round-trip preserves size");
        }
    }

    /// The staged work step: scatter incoming buffers, run the SoA sweep in
    /// the arena, gather outgoing buffers, then handle domain boundaries on
    /// the host so the next scatter sees reflected values.
    pub fn sweep(&mut self, arena: &mut StagedArena<T>, params: &LbmParams<T>) {
        self.unpack_ghost(arena);
        let extent = self.extent;
        let (src, dst, kinds) = (self.src, self.dst, &self.kinds);
        arena.with_device(|dev| {
            let (s, d) = dev.read_write(src, dst);
            crate::sweep::sweep_raw(extent, Layout::Soa, s, d, kinds, params);
        });
        std::mem::swap(&mut self.src, &mut self.dst);
        self.pack_ghost(arena);
        self.host_boundary(arena, params);
    }

    /// Prime outgoing buffers from the initial state so the first
    /// communication phase has valid data.
    pub fn prime(&self, arena: &mut StagedArena<T>, params: &LbmParams<T>) {
        self.pack_ghost(arena);
        self.host_boundary(arena, params);
    }

    /// Interior PDFs in canonical AoS order via a counted readback.
    pub fn interior_aos(&self, arena: &StagedArena<T>) -> Vec<T> {
        let values = arena.stage_out_values(self.src);
        let [nx, ny, nz] = self.extent;
        let mut out = Vec::with_capacity(nx * ny * nz * Q);
        for z in 0..nz as i64 {
            for y in 0..ny as i64 {
                for x in 0..nx as i64 {
                    for i in 0..Q {
                        out.push(values[soa_index(self.extent, [x, y, z], i)]);
                    }
                }
            }
        }
        out
    }

    /// Per-step link and on-device byte volumes implied by the geometry.
    /// `byte_neighbor_dirs` are the directions whose exchange crosses the
    /// link (remote neighbors or local mixed host/staged pairs).
    pub fn predicted_per_step(&self, byte_neighbor_dirs: &[CommDir]) -> StagedCounters {
        let total: u64 = CommDir::all().map(|d| self.buf_len_bytes(d) as u64).sum();
        let wall: u64 = self.wall_dirs.iter().map(|&d| self.buf_len_bytes(d) as u64).sum();
        let link: u64 = byte_neighbor_dirs
            .iter()
            .map(|&d| self.buf_len_bytes(d) as u64)
            .sum();
        StagedCounters {
            host_to_device: wall + link,
            device_to_host: wall + link,
            on_device_copies: 2 * total,
        }
    }

    /// Link and on-device bytes of allocation plus priming.
    pub fn predicted_setup(&self) -> StagedCounters {
        let cells = (self.extent[0] + 2) * (self.extent[1] + 2) * (self.extent[2] + 2);
        let total: u64 = CommDir::all().map(|d| self.buf_len_bytes(d) as u64).sum();
        let wall: u64 = self.wall_dirs.iter().map(|&d| self.buf_len_bytes(d) as u64).sum();
        StagedCounters {
            host_to_device: (cells * Q * T::BYTES) as u64 + wall,
            device_to_host: wall,
            on_device_copies: total,
        }
    }
}
