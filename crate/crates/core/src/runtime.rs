//! Per-process worker loop executing the sweep schedule.
//!
//! One worker owns the blocks assigned to its rank (plus replicated
//! management data for all others) and a staged arena. Every time step is one
//! sweep: a communication phase filling ghost data, then the
//! communication-independent work step of each local block through its
//! registry-resolved kernel. Workers interact only through a `Transport`.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::balance::BalanceError;
use crate::block::{Block, BlockId, Decomposition, DomainError, Locality};
use crate::comm::transport::{Transport, TransportError};
use crate::comm::{self, CommError, FaultInjector};
use crate::field::PdfField;
use crate::params::LbmParams;
use crate::registry::{DispatchError, FunctionalityRegistry, KernelError, Selector, SweepKernel};
use crate::scalar::Scalar;
use crate::staged::{StagedArena, StagedCounters, StagedField};
use crate::stencil::{CommDir, DIRECTIONS, Q};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error("staged byte counters diverged from geometric prediction at step {step}: counted {counted:?}, predicted {predicted:?}")]
    CounterMismatch {
        step: usize,
        counted: StagedCounters,
        predicted: StagedCounters,
    },
    #[error("configuration: {0}")]
    Config(String),
}

/// Fault-injection modes driven by `LATTICEBLOCKS_FAULT_INJECT`.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Default)]
pub enum FaultMode {
    #[default]
    None,
    /// Corrupt one delivered ghost value in the first step.
    Ghost,
    /// Perform one uncounted host read of arena memory.
    Arena,
}

impl FaultMode {
    pub fn from_env() -> FaultMode {
        match std::env::var("LATTICEBLOCKS_FAULT_INJECT").ok().as_deref() {
            Some("ghost") => FaultMode::Ghost,
            Some("arena") => FaultMode::Arena,
            _ => FaultMode::None,
        }
    }
}

/// Everything a worker needs besides its blocks, arena and transport.
pub struct WorkerSetup<T: Scalar> {
    pub rank: usize,
    pub steps: usize,
    /// Residual sampling interval in steps (0 disables sampling).
    pub sample_every: usize,
    pub params: LbmParams<T>,
    pub fs: Selector,
    pub decomp: Arc<Decomposition>,
    /// Hardware selector name per rank, for the management digest.
    pub hs_names: Arc<Vec<String>>,
    /// Injected per-block work-step delay in microseconds, per hardware
    /// selector (emulates slower units for calibration experiments).
    pub delays_us: BTreeMap<Selector, u64>,
    pub fault: FaultMode,
}

/// Timing sample for one block's work step.
#[derive(Clone, Debug)]
pub struct BlockTiming {
    pub hs: String,
    pub seconds: f64,
}

/// Everything observed by one worker during a run.
pub struct WorkerOutput<T: Scalar> {
    pub rank: usize,
    /// Interior PDFs per local block in canonical AoS order.
    pub fields: Vec<(BlockId, Vec<T>)>,
    pub fluid_cells: u64,
    pub wall_seconds: f64,
    pub step_seconds: Vec<f64>,
    pub block_timings: Vec<BlockTiming>,
    pub counters: StagedCounters,
    pub modeled_transfer_seconds: f64,
    pub arena_faults: u64,
    pub counters_verified_each_step: bool,
    pub residuals: Vec<(u64, f64)>,
    pub mass: (f64, f64),
    pub momentum: ([f64; 3], [f64; 3]),
    pub mgmt_digest: u64,
    pub messages_sent: u64,
    pub messages_received: u64,
}

/// Directions of a block with no neighbor under the decomposition's
/// periodicity; their ghost shells must be walls.
pub fn missing_neighbor_dirs(
    decomp: &Decomposition,
    id: BlockId,
) -> Result<Vec<CommDir>, DomainError> {
    let present: Vec<CommDir> = decomp.neighbors_of(id, 0)?.iter().map(|n| n.dir).collect();
    Ok(CommDir::all().filter(|d| !present.contains(d)).collect())
}

/// Instantiate every block's replicated management data and, for blocks owned
/// by `rank`, allocate simulation data through the registered factory.
/// `geometry` receives each local block's metadata together with its
/// no-neighbor directions.
#[allow(clippy::too_many_arguments)]
pub fn build_blocks<T: Scalar>(
    decomp: &Decomposition,
    rank: usize,
    hs_names: &[String],
    fs: Selector,
    bs: Selector,
    registry: &FunctionalityRegistry<T>,
    arena: &mut StagedArena<T>,
    mut geometry: impl FnMut(&crate::block::BlockMeta, &[CommDir]) -> crate::registry::BlockGeometry<T>,
) -> Result<Vec<Block<T>>, RunError> {
    let mut blocks = Vec::with_capacity(decomp.blocks().len());
    for meta in decomp.blocks() {
        let hs = Selector::intern(
            hs_names
                .get(meta.rank)
                .ok_or_else(|| RunError::Config(format!("no hs for rank {}", meta.rank)))?,
        );
        let mut block = Block::from_meta(meta, hs, bs);
        if meta.rank == rank {
            let wall_dirs = missing_neighbor_dirs(decomp, meta.id)?;
            let geom = geometry(meta, &wall_dirs);
            let factory = registry.resolve_factory(fs, hs, bs)?;
            block.data.push(factory.allocate(&geom, arena)?);
        }
        blocks.push(block);
    }
    Ok(blocks)
}

fn spin_for_us(us: u64) {
    if us == 0 {
        return;
    }
    let until = Instant::now() + std::time::Duration::from_micros(us);
    while Instant::now() < until {
        std::hint::spin_loop();
    }
}

/// Directions of a staged block whose exchange crosses the link as bytes.
/// Remote neighbors always do; local neighbors share this process's hardware
/// selector, so they are staged too and swap device buffers instead.
fn byte_neighbor_dirs<T: Scalar>(
    setup: &WorkerSetup<T>,
    id: BlockId,
) -> Result<Vec<CommDir>, DomainError> {
    let mut out = Vec::new();
    for n in setup.decomp.neighbors_of(id, setup.rank)? {
        if matches!(n.locality, Locality::Remote(_)) {
            out.push(n.dir);
        }
    }
    Ok(out)
}

fn local_indices<T: Scalar>(blocks: &[Block<T>], rank: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..blocks.len()).filter(|&k| blocks[k].rank == rank).collect();
    idx.sort_by_key(|&k| blocks[k].id);
    idx
}

fn interior_u_x<T: Scalar>(aos: &[T], rho0: f64) -> Vec<f64> {
    let cells = aos.len() / Q;
    let mut out = Vec::with_capacity(cells);
    for c in 0..cells {
        let mut mx = 0.0;
        for i in 0..Q {
            mx += DIRECTIONS[i][0] as f64 * aos[c * Q + i].as_f64();
        }
        out.push(mx / rho0);
    }
    out
}

fn export_block<T: Scalar>(block: &Block<T>, arena: &StagedArena<T>) -> Option<Vec<T>> {
    let kind = comm::pdf_data_kind();
    if let Some(f) = block.find::<PdfField<T>>(kind) {
        Some(f.interior_aos())
    } else {
        block
            .find::<StagedField<T>>(kind)
            .map(|f| f.interior_aos(arena))
    }
}

fn sums_of_blocks<T: Scalar>(
    blocks: &[Block<T>],
    local: &[usize],
    arena: &StagedArena<T>,
) -> (f64, [f64; 3]) {
    let kind = comm::pdf_data_kind();
    let mut mass = 0.0;
    let mut mom = [0.0; 3];
    for &k in local {
        if let Some(f) = blocks[k].find::<PdfField<T>>(kind) {
            let (m, p) = f.interior_sums();
            mass += m;
            for a in 0..3 {
                mom[a] += p[a];
            }
        } else if let Some(aos) = export_block(&blocks[k], arena) {
            let cells = aos.len() / Q;
            for c in 0..cells {
                for i in 0..Q {
                    let f = aos[c * Q + i].as_f64();
                    mass += f;
                    for a in 0..3 {
                        mom[a] += DIRECTIONS[i][a] as f64 * f;
                    }
                }
            }
        }
    }
    (mass, mom)
}

/// Run `steps` sweeps over this worker's blocks.
pub fn run_worker<T: Scalar>(
    setup: &WorkerSetup<T>,
    registry: &FunctionalityRegistry<T>,
    mut blocks: Vec<Block<T>>,
    mut arena: StagedArena<T>,
    transport: &mut dyn Transport,
) -> Result<WorkerOutput<T>, RunError> {
    let rank = setup.rank;
    let local = local_indices(&blocks, rank);
    for (k, b) in blocks.iter().enumerate() {
        let has_data = !b.data.is_empty();
        let is_local = local.contains(&k);
        if has_data != is_local {
            return Err(RunError::Config(format!(
                "block {} data allocation does not match its rank",
                b.id
            )));
        }
    }

    // Resolve every local block's kernel once; dispatch is pure.
    let mut kernels: Vec<Arc<dyn SweepKernel<T>>> = Vec::with_capacity(local.len());
    for &k in &local {
        kernels.push(registry.resolve_kernel(setup.fs, blocks[k].hs, blocks[k].bs)?);
    }

    // Prime staged buffers so the first communication phase sees valid data.
    for (slot, &k) in local.iter().enumerate() {
        kernels[slot].prime(&mut blocks[k], &mut arena, &setup.params)?;
    }

    if setup.fault == FaultMode::Arena {
        arena.probe_host_read();
    }

    // Geometric per-step counter prediction over the local staged blocks.
    let mut per_step = StagedCounters::default();
    for &k in &local {
        if let Some(f) = blocks[k].find::<StagedField<T>>(comm::pdf_data_kind()) {
            let dirs = byte_neighbor_dirs(setup, blocks[k].id)?;
            let p = f.predicted_per_step(&dirs);
            per_step.host_to_device += p.host_to_device;
            per_step.device_to_host += p.device_to_host;
            per_step.on_device_copies += p.on_device_copies;
        }
    }

    let mut fault = if setup.fault == FaultMode::Ghost {
        FaultInjector::armed()
    } else {
        FaultInjector::default()
    };

    let fluid_cells: u64 = {
        let kind = comm::pdf_data_kind();
        local
            .iter()
            .map(|&k| {
                let b = &blocks[k];
                if let Some(f) = b.find::<PdfField<T>>(kind) {
                    f.interior_fluid_count() as u64
                } else if let Some(f) = b.find::<StagedField<T>>(kind) {
                    f.interior_fluid_count() as u64
                } else {
                    b.aabb.cells() as u64
                }
            })
            .sum()
    };

    let (mass0, mom0) = sums_of_blocks(&blocks, &local, &arena);
    let mut prev_ux: Option<Vec<f64>> = None;
    let mut residuals = Vec::new();

    // Counter baseline excludes setup and telemetry readbacks.
    let mut expected = arena.counters();
    let counters_ok = setup.fault == FaultMode::None;

    let mut step_seconds = Vec::with_capacity(setup.steps);
    let mut block_timings = Vec::new();
    let mut sent = 0u64;
    let mut received = 0u64;
    let t_run = Instant::now();

    for step in 0..setup.steps {
        let t_step = Instant::now();
        let stats = comm::communicate(
            &mut blocks,
            &mut arena,
            &setup.decomp,
            rank,
            setup.fs,
            registry,
            transport,
            &mut fault,
        )?;
        sent += stats.messages_sent;
        received += stats.messages_received;

        for (slot, &k) in local.iter().enumerate() {
            let t_block = Instant::now();
            kernels[slot].run(&mut blocks[k], &mut arena, &setup.params)?;
            let delay = setup.delays_us.get(&blocks[k].hs).copied().unwrap_or(0);
            spin_for_us(delay);
            block_timings.push(BlockTiming {
                hs: blocks[k].hs.name(),
                seconds: t_block.elapsed().as_secs_f64(),
            });
        }
        step_seconds.push(t_step.elapsed().as_secs_f64());

        // Ghost traffic must match the geometric prediction exactly each
        // step; telemetry readbacks below re-baseline.
        expected.host_to_device += per_step.host_to_device;
        expected.device_to_host += per_step.device_to_host;
        expected.on_device_copies += per_step.on_device_copies;
        let counted = arena.counters();
        if counted != expected && setup.fault == FaultMode::None {
            return Err(RunError::CounterMismatch {
                step,
                counted,
                predicted: expected,
            });
        }

        if setup.sample_every > 0 && (step + 1) % setup.sample_every == 0 {
            let mut ux = Vec::new();
            for &k in &local {
                if let Some(aos) = export_block(&blocks[k], &arena) {
                    ux.extend(interior_u_x(&aos, setup.params.rho0().as_f64()));
                }
            }
            if let Some(prev) = &prev_ux {
                let res = ux
                    .iter()
                    .zip(prev)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                residuals.push((step as u64 + 1, res));
            }
            prev_ux = Some(ux);
            expected = arena.counters();
        }
    }

    let wall_seconds = t_run.elapsed().as_secs_f64();
    let counters = arena.counters();
    let modeled_transfer_seconds = arena.modeled_transfer_seconds();

    let (mass1, mom1) = sums_of_blocks(&blocks, &local, &arena);
    let mut fields = Vec::with_capacity(local.len());
    for &k in &local {
        let aos = export_block(&blocks[k], &arena)
            .ok_or_else(|| RunError::Config(format!("block {} has no PDF data", blocks[k].id)))?;
        fields.push((blocks[k].id, aos));
    }

    Ok(WorkerOutput {
        rank,
        fields,
        fluid_cells,
        wall_seconds,
        step_seconds,
        block_timings,
        counters,
        modeled_transfer_seconds,
        arena_faults: arena.faults(),
        counters_verified_each_step: counters_ok,
        residuals,
        mass: (mass0, mass1),
        momentum: (mom0, mom1),
        mgmt_digest: setup.decomp.management_digest(&setup.hs_names),
        messages_sent: sent,
        messages_received: received,
    })
}

