//! Three-phase ghost-layer communication: data extraction into byte buffers,
//! transport, data insertion.
//!
//! Every block message carries a 13-byte little-endian header (receiver block
//! id u64, travel direction u8, payload length u32) followed by the payload:
//! for each boundary cell of the face or edge, the PDFs whose velocity points
//! out of the sender along the travel direction (5 per face cell, 1 per edge
//! cell), cells x-fastest, slots in ascending stencil order. The layout is
//! identical for every hardware selector. All messages from one process to
//! another are serialized into a single per-destination byte buffer per
//! phase. Block pairs on the same process bypass buffers entirely: host
//! fields copy values directly, staged fields swap device buffer identities.

pub mod transport;

use thiserror::Error;

use crate::block::{Block, BlockId, Decomposition, Locality};
use crate::field::{boundary_cells, ghost_cells, PdfField};
use crate::registry::{DispatchError, FunctionalityRegistry, GhostCodec, Selector};
use crate::scalar::Scalar;
use crate::staged::{StagedArena, StagedError, StagedField};
use crate::stencil::CommDir;
use transport::{Transport, TransportError};

pub const HEADER_LEN: usize = 13;

#[derive(Debug, Error)]
pub enum CommError {
    #[error("message buffer truncated ({0})")]
    Truncated(String),
    #[error("invalid direction byte {0} in message header")]
    BadDirection(u8),
    #[error("message addressed to unknown or non-local block {0}")]
    UnknownReceiver(BlockId),
    #[error("payload of {got} bytes does not match {expected} for block {block}, direction {dir}")]
    PayloadMismatch {
        block: BlockId,
        dir: CommDir,
        got: usize,
        expected: usize,
    },
    #[error("blocks {0} and {1} are not both on the local process")]
    NotLocal(BlockId, BlockId),
    #[error("unexpected or duplicate message from rank {0}")]
    UnexpectedSender(usize),
    #[error("block {0} carries no PDF data")]
    MissingData(BlockId),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Staged(#[from] StagedError),
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
}

/// Well-known data-kind selector for PDF simulation data.
pub fn pdf_data_kind() -> Selector {
    Selector::intern("pdf")
}

/// Exact payload size for one block message.
pub fn payload_len<T: Scalar>(extent: [usize; 3], dir: CommDir) -> usize {
    crate::field::region_cell_count(extent, dir) * dir.slots().len() * T::BYTES
}

pub fn append_message(out: &mut Vec<u8>, receiver: BlockId, dir: CommDir, payload: &[u8]) {
    out.extend_from_slice(&receiver.0.to_le_bytes());
    out.push(dir.to_wire());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
}

/// Split a process buffer into its block messages.
pub fn parse_messages(buf: &[u8]) -> Result<Vec<(BlockId, CommDir, &[u8])>, CommError> {
    let mut out = Vec::new();
    let mut at = 0usize;
    while at < buf.len() {
        if buf.len() - at < HEADER_LEN {
            return Err(CommError::Truncated(format!(
                "{} bytes left, header needs {HEADER_LEN}",
                buf.len() - at
            )));
        }
        let id = BlockId(u64::from_le_bytes(buf[at..at + 8].try_into().unwrap()));
        let dir_byte = buf[at + 8];
        let dir = CommDir::from_wire(dir_byte).ok_or(CommError::BadDirection(dir_byte))?;
        let len = u32::from_le_bytes(buf[at + 9..at + 13].try_into().unwrap()) as usize;
        at += HEADER_LEN;
        if buf.len() - at < len {
            return Err(CommError::PayloadMismatch {
                block: id,
                dir,
                got: buf.len() - at,
                expected: len,
            });
        }
        out.push((id, dir, &buf[at..at + len]));
        at += len;
    }
    Ok(out)
}

/// Serialize the boundary PDFs of a host field leaving along `dir`.
pub fn extract_host<T: Scalar>(field: &PdfField<T>, dir: CommDir) -> Vec<u8> {
    let extent = field.extent();
    let slots = dir.slots();
    let cells = boundary_cells(extent, dir);
    let mut out = Vec::with_capacity(cells.len() * slots.len() * T::BYTES);
    for c in &cells {
        let cell = field.cell_index(*c);
        for &s in slots {
            field.src()[field.pdf_index(cell, s)].write_le(&mut out);
        }
    }
    out
}

/// Scatter a payload that traveled along `dir` into the ghost shell of a
/// host field (the side facing the sender).
pub fn insert_host<T: Scalar>(
    field: &mut PdfField<T>,
    block: BlockId,
    dir: CommDir,
    payload: &[u8],
) -> Result<(), CommError> {
    let extent = field.extent();
    let expected = payload_len::<T>(extent, dir);
    if payload.len() != expected {
        return Err(CommError::PayloadMismatch {
            block,
            dir,
            got: payload.len(),
            expected,
        });
    }
    let slots = dir.slots();
    let cells = ghost_cells(extent, dir.opposite());
    let mut at = 0usize;
    for c in &cells {
        let cell = field.cell_index(*c);
        for &s in slots {
            let idx = field.pdf_index(cell, s);
            field.src_mut()[idx] = T::read_le(&payload[at..]);
            at += T::BYTES;
        }
    }
    Ok(())
}

/// Host codec: plain field gather/scatter, no link crossings.
pub struct HostCodec;

impl<T: Scalar> GhostCodec<T> for HostCodec {
    fn name(&self) -> &'static str {
        "host-copy"
    }

    fn extract(
        &self,
        block: &Block<T>,
        _arena: &mut StagedArena<T>,
        dir: CommDir,
    ) -> Result<Vec<u8>, CommError> {
        let field: &PdfField<T> = block
            .find(pdf_data_kind())
            .ok_or(CommError::MissingData(block.id))?;
        Ok(extract_host(field, dir))
    }

    fn insert(
        &self,
        block: &mut Block<T>,
        _arena: &mut StagedArena<T>,
        dir: CommDir,
        payload: &[u8],
    ) -> Result<(), CommError> {
        let id = block.id;
        let field: &mut PdfField<T> = block
            .find_mut(pdf_data_kind())
            .ok_or(CommError::MissingData(id))?;
        insert_host(field, id, dir, payload)
    }
}

/// Staged codec: outgoing data leaves the arena through a counted stage-out
/// of the packed direction buffer; incoming payloads are staged into the
/// buffer that the next unpack scatters into the ghost layer.
pub struct StagedCodec;

impl<T: Scalar> GhostCodec<T> for StagedCodec {
    fn name(&self) -> &'static str {
        "staged-copy"
    }

    fn extract(
        &self,
        block: &Block<T>,
        arena: &mut StagedArena<T>,
        dir: CommDir,
    ) -> Result<Vec<u8>, CommError> {
        let field: &StagedField<T> = block
            .find(pdf_data_kind())
            .ok_or(CommError::MissingData(block.id))?;
        Ok(arena.stage_out(field.dir_buf(dir)))
    }

    fn insert(
        &self,
        block: &mut Block<T>,
        arena: &mut StagedArena<T>,
        dir: CommDir,
        payload: &[u8],
    ) -> Result<(), CommError> {
        let id = block.id;
        let field: &StagedField<T> = block
            .find(pdf_data_kind())
            .ok_or(CommError::MissingData(id))?;
        let buf = field.dir_buf(dir.opposite());
        if payload.len() != arena.len_of(buf) * T::BYTES {
            return Err(CommError::PayloadMismatch {
                block: id,
                dir,
                got: payload.len(),
                expected: arena.len_of(buf) * T::BYTES,
            });
        }
        arena.stage_in(buf, payload)?;
        Ok(())
    }
}

/// Bidirectional exchange between two local blocks adjacent along `dir`
/// (block `i` sends along `dir`, block `j` along the opposite). Host pairs
/// copy values directly, staged pairs swap device buffers without any byte
/// crossing, mixed pairs fall back to the byte path through the codecs.
#[allow(clippy::too_many_arguments)]
pub fn local_exchange<T: Scalar>(
    blocks: &mut [Block<T>],
    i: usize,
    j: usize,
    dir: CommDir,
    local_rank: usize,
    fs: Selector,
    registry: &FunctionalityRegistry<T>,
    arena: &mut StagedArena<T>,
) -> Result<(), CommError> {
    if blocks[i].rank != local_rank || blocks[j].rank != local_rank {
        return Err(CommError::NotLocal(blocks[i].id, blocks[j].id));
    }
    let kind = pdf_data_kind();
    if i == j {
        // Periodic self-neighbor.
        let block = &mut blocks[i];
        if block.find::<StagedField<T>>(kind).is_some() {
            let f: &StagedField<T> = block.find(kind).unwrap();
            arena.swap_bufs(f.dir_buf(dir), f.dir_buf(dir.opposite()));
            return Ok(());
        }
        let id = block.id;
        let field: &mut PdfField<T> = block.find_mut(kind).ok_or(CommError::MissingData(id))?;
        for d in [dir, dir.opposite()] {
            let payload = extract_host(field, d);
            insert_host(field, id, d, &payload)?;
        }
        return Ok(());
    }

    let both_staged = blocks[i].find::<StagedField<T>>(kind).is_some()
        && blocks[j].find::<StagedField<T>>(kind).is_some();
    if both_staged {
        let a = blocks[i].find::<StagedField<T>>(kind).unwrap().dir_buf(dir);
        let b = blocks[j]
            .find::<StagedField<T>>(kind)
            .unwrap()
            .dir_buf(dir.opposite());
        arena.swap_bufs(a, b);
        return Ok(());
    }

    let both_host = blocks[i].find::<PdfField<T>>(kind).is_some()
        && blocks[j].find::<PdfField<T>>(kind).is_some();
    if both_host {
        let (lo, hi) = blocks.split_at_mut(i.max(j));
        let (a, b) = if i < j {
            (&mut lo[i], &mut hi[0])
        } else {
            (&mut hi[0], &mut lo[j])
        };
        let (a_id, b_id) = (a.id, b.id);
        let fa: &mut PdfField<T> = a.find_mut(kind).ok_or(CommError::MissingData(a_id))?;
        let fb: &mut PdfField<T> = b.find_mut(kind).ok_or(CommError::MissingData(b_id))?;
        let to_b = extract_host(fa, dir);
        let to_a = extract_host(fb, dir.opposite());
        insert_host(fb, b_id, dir, &to_b)?;
        insert_host(fa, a_id, dir.opposite(), &to_a)?;
        return Ok(());
    }

    // Mixed staged/host pair: byte path via the hardware-selected codecs.
    let codec_i = registry.resolve_codec(fs, blocks[i].hs, blocks[i].bs)?;
    let codec_j = registry.resolve_codec(fs, blocks[j].hs, blocks[j].bs)?;
    let to_j = codec_i.extract(&blocks[i], arena, dir)?;
    let to_i = codec_j.extract(&blocks[j], arena, dir.opposite())?;
    codec_j.insert(&mut blocks[j], arena, dir, &to_j)?;
    codec_i.insert(&mut blocks[i], arena, dir.opposite(), &to_i)?;
    Ok(())
}

/// Ghost-corruption switch for negative tests (`LATTICEBLOCKS_FAULT_INJECT=ghost`).
#[derive(Default)]
pub struct FaultInjector {
    pub armed: bool,
    fired: bool,
}

impl FaultInjector {
    pub fn armed() -> Self {
        Self {
            armed: true,
            fired: false,
        }
    }
}

#[derive(Copy, Clone, Default, Debug)]
pub struct CommStats {
    pub messages_sent: u64,
    pub messages_received: u64,
}

/// One communication phase: local exchanges, then exactly one transport
/// message per destination rank carrying all serialized block messages, then
/// insertion of every received payload.
#[allow(clippy::too_many_arguments)]
pub fn communicate<T: Scalar>(
    blocks: &mut [Block<T>],
    arena: &mut StagedArena<T>,
    decomp: &Decomposition,
    rank: usize,
    fs: Selector,
    registry: &FunctionalityRegistry<T>,
    transport: &mut dyn Transport,
    fault: &mut FaultInjector,
) -> Result<CommStats, CommError> {
    use std::collections::{BTreeMap, BTreeSet};

    let mut stats = CommStats::default();
    let local: Vec<usize> = (0..blocks.len()).filter(|&k| blocks[k].rank == rank).collect();

    // Local pairs, each processed once (bidirectional exchange).
    for &bi in &local {
        let id = blocks[bi].id;
        for n in decomp.neighbors_of(id, rank).map_err(|_| CommError::UnknownReceiver(id))? {
            if n.locality != Locality::Local {
                continue;
            }
            let canonical = (id, n.dir.index()) <= (n.id, n.dir.opposite().index());
            if !canonical {
                continue;
            }
            let bj = blocks
                .iter()
                .position(|b| b.id == n.id)
                .ok_or(CommError::UnknownReceiver(n.id))?;
            local_exchange(blocks, bi, bj, n.dir, rank, fs, registry, arena)?;
        }
    }

    // Remote extraction, serialized per destination rank in deterministic
    // (block id, direction) order.
    let mut outgoing: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
    let mut expected: BTreeSet<usize> = BTreeSet::new();
    for &bi in &local {
        let id = blocks[bi].id;
        for n in decomp.neighbors_of(id, rank).map_err(|_| CommError::UnknownReceiver(id))? {
            let peer = match n.locality {
                Locality::Local => continue,
                Locality::Remote(r) => r,
            };
            expected.insert(peer);
            let codec = registry.resolve_codec(fs, blocks[bi].hs, blocks[bi].bs)?;
            let payload = codec.extract(&blocks[bi], arena, n.dir)?;
            append_message(outgoing.entry(peer).or_default(), n.id, n.dir, &payload);
        }
    }
    for (peer, buf) in outgoing {
        transport.send(peer, buf)?;
        stats.messages_sent += 1;
    }

    // Receive one buffer from every rank that owns a neighbor of ours.
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    while seen.len() < expected.len() {
        let (from, buf) = transport.receive()?;
        if !expected.contains(&from) || !seen.insert(from) {
            return Err(CommError::UnexpectedSender(from));
        }
        stats.messages_received += 1;
        for (receiver, dir, payload) in parse_messages(&buf)? {
            let bj = blocks
                .iter()
                .position(|b| b.id == receiver && b.rank == rank)
                .ok_or(CommError::UnknownReceiver(receiver))?;
            let codec = registry.resolve_codec(fs, blocks[bj].hs, blocks[bj].bs)?;
            codec.insert(&mut blocks[bj], arena, dir, payload)?;
        }
    }

    if fault.armed && !fault.fired && decomp.blocks().len() > 1 {
        fault.fired = true;
        corrupt_first_ghost(blocks, &local, decomp, rank, arena)?;
    }
    Ok(stats)
}

/// Overwrite one delivered ghost value on the first local block; used as a
/// negative control to prove decomposition verification detects mismatches.
fn corrupt_first_ghost<T: Scalar>(
    blocks: &mut [Block<T>],
    local: &[usize],
    decomp: &Decomposition,
    rank: usize,
    arena: &mut StagedArena<T>,
) -> Result<(), CommError> {
    let kind = pdf_data_kind();
    let Some(&bi) = local.first() else {
        return Ok(());
    };
    let id = blocks[bi].id;
    let Some(n) = decomp
        .neighbors_of(id, rank)
        .map_err(|_| CommError::UnknownReceiver(id))?
        .into_iter()
        .next()
    else {
        return Ok(());
    };
    let side = n.dir;
    if let Some(f) = blocks[bi].find_mut::<PdfField<T>>(kind) {
        let cell = ghost_cells(f.extent(), side)[0];
        let slot = side.opposite().slots()[0];
        let v = f.get(cell, slot);
        f.set(cell, slot, v + T::one());
    } else if let Some(f) = blocks[bi].find::<StagedField<T>>(kind) {
        let buf = f.dir_buf(side);
        let mut bytes = arena.stage_out(buf);
        let v = T::read_le(&bytes) + T::one();
        bytes[..T::BYTES].copy_from_slice(&{
            let mut tmp = Vec::new();
            v.write_le(&mut tmp);
            tmp
        });
        arena.stage_in(buf, &bytes)?;
    }
    Ok(())
}

/// Fill the ghost shell of a single field from its own opposite boundaries
/// for every direction whose nonzero axes are all periodic. Single-block
/// periodic runs and field-level tests use this directly.
pub fn exchange_self_periodic<T: Scalar>(field: &mut PdfField<T>, periodic: [bool; 3]) {
    for dir in CommDir::all() {
        let off = dir.offset();
        if (0..3).any(|a| off[a] != 0 && !periodic[a]) {
            continue;
        }
        let payload = extract_host(field, dir);
        insert_host(field, BlockId(0), dir, &payload).expect("self exchange sizes match");
    }
}
