//! UID-based functionality management.
//!
//! Every registrable strategy (sweep kernel, ghost codec, data factory)
//! carries a selector triple `(fs, hs, bs)`: functionality selector at
//! simulation granularity, hardware selector at process granularity, block
//! selector at block granularity. Lookup matches exact selectors or the
//! explicit wildcard, most specific entry wins, and ties are configuration
//! errors. Selectors are interned strings, cheap to copy and compare.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use crate::block::{Block, SimData};
use crate::field::CellKind;
use crate::params::LbmParams;
use crate::scalar::Scalar;
use crate::staged::StagedArena;
use crate::stencil::{CommDir, Q};

static INTERNER: OnceLock<Mutex<Interner>> = OnceLock::new();

struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

fn interner() -> &'static Mutex<Interner> {
    INTERNER.get_or_init(|| {
        Mutex::new(Interner {
            names: vec!["*".to_string()],
            ids: HashMap::from([("*".to_string(), 0)]),
        })
    })
}

/// Interned selector UID. `Selector::ANY` is the wildcard.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Selector(u32);

impl Selector {
    pub const ANY: Selector = Selector(0);

    pub fn intern(name: &str) -> Selector {
        let mut it = interner().lock().unwrap();
        if let Some(&id) = it.ids.get(name) {
            return Selector(id);
        }
        let id = it.names.len() as u32;
        it.names.push(name.to_string());
        it.ids.insert(name.to_string(), id);
        Selector(id)
    }

    pub fn name(self) -> String {
        interner().lock().unwrap().names[self.0 as usize].clone()
    }

    pub fn is_wildcard(self) -> bool {
        self == Selector::ANY
    }
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct UidTriple {
    pub fs: Selector,
    pub hs: Selector,
    pub bs: Selector,
}

impl UidTriple {
    pub fn new(fs: Selector, hs: Selector, bs: Selector) -> Self {
        Self { fs, hs, bs }
    }

    fn matches(&self, fs: Selector, hs: Selector, bs: Selector) -> bool {
        (self.fs.is_wildcard() || self.fs == fs)
            && (self.hs.is_wildcard() || self.hs == hs)
            && (self.bs.is_wildcard() || self.bs == bs)
    }

    fn specificity(&self) -> usize {
        [self.fs, self.hs, self.bs]
            .iter()
            .filter(|s| !s.is_wildcard())
            .count()
    }
}

impl std::fmt::Display for UidTriple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(fs={}, hs={}, bs={})", self.fs, self.hs, self.bs)
    }
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("no {kind} registered for fs={fs}, hs={hs}, bs={bs}")]
    Unregistered {
        kind: &'static str,
        fs: String,
        hs: String,
        bs: String,
    },
    #[error("ambiguous {kind} registration for fs={fs}, hs={hs}, bs={bs}: {candidates}")]
    Ambiguous {
        kind: &'static str,
        fs: String,
        hs: String,
        bs: String,
        candidates: String,
    },
    #[error("duplicate {kind} registration under {triple}")]
    Duplicate { kind: &'static str, triple: String },
    #[error("block data has unexpected type for kernel {kernel}")]
    WrongDataType { kernel: &'static str },
}

/// Triple-keyed map with wildcard entries; lookups are pure.
pub struct UidMap<V> {
    kind: &'static str,
    entries: Vec<(UidTriple, V)>,
}

impl<V: Clone> UidMap<V> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    pub fn register(&mut self, triple: UidTriple, value: V) -> Result<(), DispatchError> {
        if self.entries.iter().any(|(t, _)| *t == triple) {
            return Err(DispatchError::Duplicate {
                kind: self.kind,
                triple: triple.to_string(),
            });
        }
        self.entries.push((triple, value));
        Ok(())
    }

    pub fn resolve(&self, fs: Selector, hs: Selector, bs: Selector) -> Result<V, DispatchError> {
        let mut best: Vec<&UidTriple> = Vec::new();
        let mut best_value: Option<&V> = None;
        let mut best_spec = 0usize;
        for (t, v) in &self.entries {
            if !t.matches(fs, hs, bs) {
                continue;
            }
            let s = t.specificity();
            if best_value.is_none() || s > best_spec {
                best = vec![t];
                best_value = Some(v);
                best_spec = s;
            } else if s == best_spec {
                best.push(t);
            }
        }
        match (best.len(), best_value) {
            (0, _) | (_, None) => Err(DispatchError::Unregistered {
                kind: self.kind,
                fs: fs.name(),
                hs: hs.name(),
                bs: bs.name(),
            }),
            (1, Some(v)) => Ok(v.clone()),
            (_, Some(_)) => Err(DispatchError::Ambiguous {
                kind: self.kind,
                fs: fs.name(),
                hs: hs.name(),
                bs: bs.name(),
                candidates: best
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
            }),
        }
    }
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("field error: {0}")]
    Field(#[from] crate::field::FieldError),
    #[error(transparent)]
    Staged(#[from] crate::staged::StagedError),
}

/// The communication-independent work step of a sweep for one block.
pub trait SweepKernel<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;

    /// One-time preparation before the first communication phase (staged
    /// kernels prime their outgoing buffers here).
    fn prime(
        &self,
        _block: &mut Block<T>,
        _arena: &mut StagedArena<T>,
        _params: &LbmParams<T>,
    ) -> Result<(), KernelError> {
        Ok(())
    }

    fn run(
        &self,
        block: &mut Block<T>,
        arena: &mut StagedArena<T>,
        params: &LbmParams<T>,
    ) -> Result<(), KernelError>;
}

/// Hardware-specific extraction/insertion of ghost payloads. All codecs
/// produce and consume the same byte layout, so the wire format is
/// independent of the hardware selector.
pub trait GhostCodec<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Serialize the boundary PDFs leaving `block` along `dir`.
    fn extract(
        &self,
        block: &Block<T>,
        arena: &mut StagedArena<T>,
        dir: CommDir,
    ) -> Result<Vec<u8>, crate::comm::CommError>;

    /// Scatter a payload that traveled along `dir` into the receiving block.
    fn insert(
        &self,
        block: &mut Block<T>,
        arena: &mut StagedArena<T>,
        dir: CommDir,
        payload: &[u8],
    ) -> Result<(), crate::comm::CommError>;
}

/// Per-block geometry handed to data factories at allocation time.
pub struct BlockGeometry<T: Scalar> {
    pub extent: [usize; 3],
    /// Cell kinds over the extended (ghost-inclusive) array in canonical
    /// cell-index order.
    pub kinds: Vec<CellKind<T>>,
    /// Initial centered PDFs for interior cells, x fastest.
    pub init: Vec<[T; Q]>,
    /// Directions with no neighbor block; their ghost shells are walls.
    pub wall_dirs: Vec<CommDir>,
}

/// Allocates the simulation data appropriate for a hardware selector.
pub trait DataFactory<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;
    fn allocate(
        &self,
        geom: &BlockGeometry<T>,
        arena: &mut StagedArena<T>,
    ) -> Result<(Selector, Box<dyn SimData<T>>), KernelError>;
}

/// All registered functionality for one run.
pub struct FunctionalityRegistry<T: Scalar> {
    pub kernels: UidMap<Arc<dyn SweepKernel<T>>>,
    pub codecs: UidMap<Arc<dyn GhostCodec<T>>>,
    pub factories: UidMap<Arc<dyn DataFactory<T>>>,
}

impl<T: Scalar> FunctionalityRegistry<T> {
    pub fn new() -> Self {
        Self {
            kernels: UidMap::new("kernel"),
            codecs: UidMap::new("ghost codec"),
            factories: UidMap::new("data factory"),
        }
    }

    pub fn resolve_kernel(
        &self,
        fs: Selector,
        hs: Selector,
        bs: Selector,
    ) -> Result<Arc<dyn SweepKernel<T>>, DispatchError> {
        self.kernels.resolve(fs, hs, bs)
    }

    pub fn resolve_codec(
        &self,
        fs: Selector,
        hs: Selector,
        bs: Selector,
    ) -> Result<Arc<dyn GhostCodec<T>>, DispatchError> {
        self.codecs.resolve(fs, hs, bs)
    }

    pub fn resolve_factory(
        &self,
        fs: Selector,
        hs: Selector,
        bs: Selector,
    ) -> Result<Arc<dyn DataFactory<T>>, DispatchError> {
        self.factories.resolve(fs, hs, bs)
    }
}

impl<T: Scalar> Default for FunctionalityRegistry<T> {
    fn default() -> Self {
        Self::new()
    }
}
