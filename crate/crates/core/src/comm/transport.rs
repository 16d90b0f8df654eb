//! Rank-to-rank byte transport.
//!
//! Two implementations share one contract: per-(sender, receiver) ordering is
//! preserved and messages arrive intact or an error is raised. The in-process
//! mailbox connects worker threads inside one OS process; the socket
//! transport connects worker OS processes through a hub in the coordinator
//! process, framing every buffer with little-endian u64 length fields so
//! receives are pre-sized.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Duration;

use thiserror::Error;

/// Pseudo-rank addressing the coordinator process in socket mode.
pub const COORDINATOR: u64 = u64::MAX;

const RECV_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("rank {0} is not reachable")]
    UnknownRank(usize),
    #[error("peer channel closed")]
    Closed,
    #[error("receive timed out")]
    Timeout,
    #[error("socket error involving rank {rank}: {source}")]
    Io {
        rank: usize,
        #[source]
        source: std::io::Error,
    },
}

pub trait Transport: Send {
    fn rank(&self) -> usize;
    fn send(&mut self, to: usize, bytes: Vec<u8>) -> Result<(), TransportError>;
    /// Blocking receive of the next buffer with its source rank.
    fn receive(&mut self) -> Result<(usize, Vec<u8>), TransportError>;
}

/// Mailbox transport for worker threads in one process.
pub struct InProcessTransport {
    rank: usize,
    peers: Vec<Sender<(usize, Vec<u8>)>>,
    inbox: Receiver<(usize, Vec<u8>)>,
}

/// Create a fully-connected mesh of `n` mailboxes.
pub fn in_process_mesh(n: usize) -> Vec<InProcessTransport> {
    let mut senders = Vec::with_capacity(n);
    let mut inboxes = Vec::with_capacity(n);
    for _ in 0..n {
        let (tx, rx) = channel();
        senders.push(tx);
        inboxes.push(rx);
    }
    inboxes
        .into_iter()
        .enumerate()
        .map(|(rank, inbox)| InProcessTransport {
            rank,
            peers: senders.clone(),
            inbox,
        })
        .collect()
}

impl Transport for InProcessTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn send(&mut self, to: usize, bytes: Vec<u8>) -> Result<(), TransportError> {
        let tx = self.peers.get(to).ok_or(TransportError::UnknownRank(to))?;
        tx.send((self.rank, bytes)).map_err(|_| TransportError::Closed)
    }

    fn receive(&mut self) -> Result<(usize, Vec<u8>), TransportError> {
        match self.inbox.recv_timeout(RECV_TIMEOUT) {
            Ok(m) => Ok(m),
            Err(std::sync::mpsc::RecvTimeoutError::Timeout) => Err(TransportError::Timeout),
            Err(std::sync::mpsc::RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

fn write_frame(w: &mut impl Write, a: u64, b: u64, payload: &[u8]) -> std::io::Result<()> {
    w.write_all(&a.to_le_bytes())?;
    w.write_all(&b.to_le_bytes())?;
    w.write_all(&(payload.len() as u64).to_le_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

fn read_frame(r: &mut impl Read) -> std::io::Result<Option<(u64, u64, Vec<u8>)>> {
    let mut head = [0u8; 24];
    match r.read_exact(&mut head) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let a = u64::from_le_bytes(head[0..8].try_into().unwrap());
    let b = u64::from_le_bytes(head[8..16].try_into().unwrap());
    let len = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some((a, b, payload)))
}

/// Byte-stream socket transport between worker OS processes. Every worker
/// holds one TCP connection to the coordinator hub, which routes frames of
/// the form (peer rank, length, payload).
pub struct SocketTransport {
    rank: usize,
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl SocketTransport {
    pub fn connect(addr: SocketAddr, rank: usize) -> Result<Self, TransportError> {
        let stream = TcpStream::connect(addr).map_err(|source| TransportError::Io { rank, source })?;
        stream
            .set_read_timeout(Some(RECV_TIMEOUT))
            .map_err(|source| TransportError::Io { rank, source })?;
        stream
            .set_nodelay(true)
            .map_err(|source| TransportError::Io { rank, source })?;
        let reader = BufReader::new(
            stream
                .try_clone()
                .map_err(|source| TransportError::Io { rank, source })?,
        );
        let mut writer = BufWriter::new(stream);
        // Hello frame announces this worker's rank.
        write_frame(&mut writer, rank as u64, 0, &[])
            .map_err(|source| TransportError::Io { rank, source })?;
        Ok(Self {
            rank,
            reader,
            writer,
        })
    }

    /// Ship a control payload (reports, field dumps) to the coordinator.
    pub fn send_to_coordinator(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        write_frame(&mut self.writer, COORDINATOR, 0, bytes).map_err(|source| TransportError::Io {
            rank: self.rank,
            source,
        })
    }
}

impl Transport for SocketTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn send(&mut self, to: usize, bytes: Vec<u8>) -> Result<(), TransportError> {
        write_frame(&mut self.writer, to as u64, 0, &bytes).map_err(|source| TransportError::Io {
            rank: self.rank,
            source,
        })
    }

    fn receive(&mut self) -> Result<(usize, Vec<u8>), TransportError> {
        match read_frame(&mut self.reader) {
            Ok(Some((src, _, payload))) => Ok((src as usize, payload)),
            Ok(None) => Err(TransportError::Closed),
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => Err(TransportError::Timeout),
            Err(source) => Err(TransportError::Io {
                rank: self.rank,
                source,
            }),
        }
    }
}

/// Frames collected by the hub that were addressed to the coordinator.
pub type CoordinatorInbox = Receiver<(usize, Vec<u8>)>;

/// Accept `workers` connections and route frames between them until every
/// worker disconnects. Frames addressed to [`COORDINATOR`] are handed to the
/// returned inbox. Accepting and routing run on background threads, so this
/// returns before any worker has connected.
pub fn run_hub(
    listener: TcpListener,
    workers: usize,
) -> std::io::Result<(std::thread::JoinHandle<()>, CoordinatorInbox)> {
    let (coord_tx, coord_rx) = channel();
    let handle = std::thread::spawn(move || {
        let run = || -> std::io::Result<()> {
            let (route_tx, route_rx) = channel::<(u64, u64, Vec<u8>)>();
            let mut writers: HashMap<u64, BufWriter<TcpStream>> = HashMap::new();
            for _ in 0..workers {
                let (stream, _) = listener.accept()?;
                stream.set_nodelay(true)?;
                let mut reader = BufReader::new(stream.try_clone()?);
                // First frame is the hello carrying the worker's rank.
                let hello = read_frame(&mut reader)?.ok_or_else(|| {
                    std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "no hello")
                })?;
                let rank = hello.0;
                writers.insert(rank, BufWriter::new(stream));
                let tx = route_tx.clone();
                std::thread::spawn(move || {
                    while let Ok(Some((dst, _, payload))) = read_frame(&mut reader) {
                        if tx.send((rank, dst, payload)).is_err() {
                            break;
                        }
                    }
                });
            }
            drop(route_tx);
            while let Ok((src, dst, payload)) = route_rx.recv() {
                if dst == COORDINATOR {
                    let _ = coord_tx.send((src as usize, payload));
                } else if let Some(w) = writers.get_mut(&dst) {
                    write_frame(w, src, 0, &payload)?;
                }
            }
            Ok(())
        };
        if let Err(e) = run() {
            eprintln!("transport hub: {e}");
        }
    });
    Ok((handle, coord_rx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_preserves_pairwise_order() {
        let mut mesh = in_process_mesh(3);
        let mut t2 = mesh.pop().unwrap();
        let mut t1 = mesh.pop().unwrap();
        let mut t0 = mesh.pop().unwrap();
        for k in 0..10u8 {
            t0.send(2, vec![k]).unwrap();
            t1.send(2, vec![100 + k]).unwrap();
        }
        let mut from0 = Vec::new();
        let mut from1 = Vec::new();
        for _ in 0..20 {
            let (src, bytes) = t2.receive().unwrap();
            match src {
                0 => from0.push(bytes[0]),
                1 => from1.push(bytes[0]),
                _ => panic!(),
            }
        }
        assert_eq!(from0, (0..10).collect::<Vec<_>>());
        assert_eq!(from1, (100..110).collect::<Vec<_>>());
    }

    #[test]
    fn mesh_supports_concurrent_senders() {
        let mut mesh = in_process_mesh(4);
        let receiver = mesh.remove(0);
        let handles: Vec<_> = mesh
            .into_iter()
            .map(|mut t| {
                std::thread::spawn(move || {
                    for k in 0..50u8 {
                        t.send(0, vec![t.rank() as u8, k]).unwrap();
                    }
                })
            })
            .collect();
        let mut got = vec![Vec::new(); 4];
        let mut r = receiver;
        for _ in 0..150 {
            let (src, bytes) = r.receive().unwrap();
            assert_eq!(src as u8, bytes[0]);
            got[src].push(bytes[1]);
        }
        for h in handles {
            h.join().unwrap();
        }
        for seq in &got[1..] {
            assert_eq!(*seq, (0..50).collect::<Vec<_>>());
        }
    }

    #[test]
    fn socket_hub_routes_between_workers_and_coordinator() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (hub, coord) = run_hub(listener, 2).unwrap();

        let w0 = std::thread::spawn(move || {
            let mut t = SocketTransport::connect(addr, 0).unwrap();
            t.send(1, vec![7, 7]).unwrap();
            let (src, bytes) = t.receive().unwrap();
            assert_eq!((src, bytes), (1, vec![9]));
            t.send_to_coordinator(b"done-0").unwrap();
        });
        let w1 = std::thread::spawn(move || {
            let mut t = SocketTransport::connect(addr, 1).unwrap();
            let (src, bytes) = t.receive().unwrap();
            assert_eq!((src, bytes), (0, vec![7, 7]));
            t.send(0, vec![9]).unwrap();
            t.send_to_coordinator(b"done-1").unwrap();
        });

        let mut reports = Vec::new();
        for _ in 0..2 {
            let (src, bytes) = coord.recv_timeout(Duration::from_secs(30)).unwrap();
            reports.push((src, bytes));
        }
        reports.sort();
        assert_eq!(reports[0], (0, b"done-0".to_vec()));
        assert_eq!(reports[1], (1, b"done-1".to_vec()));
        w0.join().unwrap();
        w1.join().unwrap();
        hub.join().unwrap();
    }
}
