//! Block-structured D3Q19 lattice Boltzmann solver core.
//!
//! The domain is a single uniform `Patch` subdivided into a Cartesian grid of
//! `Block`s. Each block carries replicated management data (id, bounding box,
//! owning rank, selectors) and, on its owning rank only, simulation data:
//! either a plain host PDF field or a field resident in an emulated staged
//! accelerator arena. Kernels, ghost-layer codecs and data factories are
//! trait objects registered under `(fs, hs, bs)` selector triples and resolved
//! at runtime, so heterogeneous runs mix hardware-specific strategies freely
//! while sharing one byte-exact wire format for ghost traffic.

pub mod balance;
pub mod block;
pub mod comm;
pub mod field;
pub mod kernels;
pub mod params;
pub mod perf;
pub mod registry;
pub mod runtime;
pub mod scalar;
pub mod staged;
pub mod stencil;
pub mod sweep;
pub mod util;

pub use block::{Aabb, Block, BlockId, BlockMeta, Decomposition, Locality, Patch};
pub use field::{CellKind, FieldError, Layout, PdfField};
pub use params::{LbmParams, Macroscopic, ParamsError, Precision};
pub use registry::{DispatchError, FunctionalityRegistry, Selector, UidMap};
pub use scalar::Scalar;
pub use staged::{BufId, StagedArena, StagedField};
pub use stencil::CommDir;
