//! Shared setup for integration tests: a registry with host and staged
//! strategies, and simple block geometries.

use std::collections::BTreeMap;
use std::sync::Arc;

use latticeblocks_core::block::BlockMeta;
use latticeblocks_core::field::{CellKind, Layout};
use latticeblocks_core::kernels::{
    HostDataFactory, HostSweepKernel, StagedDataFactory, StagedSweepKernel,
};
use latticeblocks_core::comm::{HostCodec, StagedCodec};
use latticeblocks_core::registry::{BlockGeometry, FunctionalityRegistry, UidTriple};
use latticeblocks_core::runtime::{FaultMode, WorkerSetup};
use latticeblocks_core::stencil::{CommDir, Q};
use latticeblocks_core::util::{splitmix64, unit_from_hash};
use latticeblocks_core::{Decomposition, LbmParams, Scalar, Selector};

pub fn fs() -> Selector {
    Selector::intern("lbm")
}

pub fn bs() -> Selector {
    Selector::intern("pureLbm")
}

pub fn hs_cpu() -> Selector {
    Selector::intern("cpu")
}

#[allow(dead_code)]
pub fn hs_cpu_soa() -> Selector {
    Selector::intern("cpu-soa")
}

#[allow(dead_code)]
pub fn hs_staged() -> Selector {
    Selector::intern("staged")
}

/// Registry with the full strategy catalog under the standard selectors.
pub fn standard_registry<T: Scalar>() -> FunctionalityRegistry<T> {
    use std::sync::Arc;
    let mut reg = FunctionalityRegistry::new();
    let any = Selector::ANY;
    reg.kernels
        .register(UidTriple::new(fs(), hs_cpu(), bs()), Arc::new(HostSweepKernel::aos()))
        .unwrap();
    reg.kernels
        .register(UidTriple::new(fs(), hs_cpu_soa(), bs()), Arc::new(HostSweepKernel::soa()))
        .unwrap();
    reg.kernels
        .register(UidTriple::new(fs(), hs_staged(), bs()), Arc::new(StagedSweepKernel))
        .unwrap();
    reg.codecs
        .register(UidTriple::new(any, hs_cpu(), any), Arc::new(HostCodec))
        .unwrap();
    reg.codecs
        .register(UidTriple::new(any, hs_cpu_soa(), any), Arc::new(HostCodec))
        .unwrap();
    reg.codecs
        .register(UidTriple::new(any, hs_staged(), any), Arc::new(StagedCodec))
        .unwrap();
    reg.factories
        .register(
            UidTriple::new(any, hs_cpu(), any),
            Arc::new(HostDataFactory::new(Layout::Aos)),
        )
        .unwrap();
    reg.factories
        .register(
            UidTriple::new(any, hs_cpu_soa(), any),
            Arc::new(HostDataFactory::new(Layout::Soa)),
        )
        .unwrap();
    reg.factories
        .register(UidTriple::new(any, hs_staged(), any), Arc::new(StagedDataFactory))
        .unwrap();
    reg
}

/// Equilibrium of a hashed density/velocity perturbation at a global cell.
#[allow(dead_code)]
pub fn perturbed_init<T: Scalar>(
    params: &LbmParams<T>,
    seed: u64,
    gx: i64,
    gy: i64,
    gz: i64,
) -> [T; Q] {
    let h = splitmix64(seed ^ (gx as u64) << 42 ^ (gy as u64) << 21 ^ gz as u64);
    let drho = 1e-3 * unit_from_hash(h);
    let u = [
        T::from_f64(0.02 + 5e-3 * unit_from_hash(splitmix64(h ^ 1))),
        T::from_f64(0.01 + 5e-3 * unit_from_hash(splitmix64(h ^ 2))),
        T::from_f64(-0.005 + 5e-3 * unit_from_hash(splitmix64(h ^ 3))),
    ];
    params.equilibrium(params.rho0() + T::from_f64(drho), u)
}

/// Geometry for one block of a fully periodic perturbed box.
#[allow(dead_code)]
pub fn periodic_geometry<T: Scalar>(
    params: &LbmParams<T>,
    seed: u64,
    meta: &BlockMeta,
    wall_dirs: &[CommDir],
) -> BlockGeometry<T> {
    let extent = meta.aabb.extent();
    let cells = (extent[0] + 2) * (extent[1] + 2) * (extent[2] + 2);
    let mut init = Vec::with_capacity(extent.iter().product());
    for z in 0..extent[2] as i64 {
        for y in 0..extent[1] as i64 {
            for x in 0..extent[0] as i64 {
                init.push(perturbed_init(
                    params,
                    seed,
                    meta.aabb.min[0] + x,
                    meta.aabb.min[1] + y,
                    meta.aabb.min[2] + z,
                ));
            }
        }
    }
    BlockGeometry {
        extent,
        kinds: vec![CellKind::Fluid; cells],
        init,
        wall_dirs: wall_dirs.to_vec(),
    }
}

/// Geometry for a Couette channel block: periodic x/z, wall shells on the
/// domain's y faces, the top one moving with `u_lid` along +x. Shells span
/// the full extended plane so corner pulls reflect with the right velocity.
#[allow(dead_code)]
pub fn couette_geometry<T: Scalar>(
    u_lid: f64,
    patch_extent_y: usize,
    meta: &BlockMeta,
    wall_dirs: &[CommDir],
) -> BlockGeometry<T> {
    let extent = meta.aabb.extent();
    let cells = (extent[0] + 2) * (extent[1] + 2) * (extent[2] + 2);
    let mut kinds = vec![CellKind::Fluid; cells];
    let ny = extent[1] as i64;
    if meta.aabb.min[1] == 0 {
        for z in -1..=extent[2] as i64 {
            for x in -1..=extent[0] as i64 {
                kinds[latticeblocks_core::field::cell_index_of(extent, [x, -1, z])] =
                    CellKind::Wall([T::zero(); 3]);
            }
        }
    }
    if meta.aabb.max[1] == patch_extent_y as i64 {
        for z in -1..=extent[2] as i64 {
            for x in -1..=extent[0] as i64 {
                kinds[latticeblocks_core::field::cell_index_of(extent, [x, ny, z])] =
                    CellKind::Wall([T::from_f64(u_lid), T::zero(), T::zero()]);
            }
        }
    }
    BlockGeometry {
        extent,
        kinds,
        init: vec![[T::zero(); Q]; extent.iter().product()],
        wall_dirs: wall_dirs.to_vec(),
    }
}

#[allow(dead_code)]
pub fn setup_for<T: Scalar>(
    rank: usize,
    steps: usize,
    decomp: Arc<Decomposition>,
    hs_names: Arc<Vec<String>>,
    params: LbmParams<T>,
) -> WorkerSetup<T> {
    WorkerSetup {
        rank,
        steps,
        sample_every: 0,
        params,
        fs: fs(),
        decomp,
        hs_names,
        delays_us: BTreeMap::new(),
        fault: FaultMode::None,
    }
}

/// Max |a - b| over two canonical field exports.
#[allow(dead_code)]
pub fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
        .fold(0.0, f64::max)
}
