//! Wire protocol, PIR server daemon, client session and two-phase publishing.
//!
//! Every frame is `len u32 | type u8 | body`, little-endian, where `len`
//! counts the type byte and the body. Bit vectors travel as `bits u32` followed
//! by `ceil(bits / 8)` bytes.
//!
//! | type | name          | body                                                   |
//! |------|---------------|--------------------------------------------------------|
//! | 1    | HELLO         | empty                                                  |
//! | 2    | META          | version u64, digest [32], directory digest [32], header |
//! | 3    | QUERY         | version u64, mode u8, bit vector                       |
//! | 4    | ANSWER        | version u64, bit vector                                |
//! | 5    | ERROR         | code u16, UTF-8 message                                |
//! | 6    | GET_DIRECTORY | empty                                                  |
//! | 7    | DIRECTORY     | directory bytes as stored in the database file         |
//! | 8    | STAGE         | full database file                                     |
//! | 9    | COMMIT        | version u64, digest [32]                               |
//! | 10   | ABORT         | empty                                                  |
//! | 11   | ACK           | version u64, digest [32]                               |

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};

use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{NodeDirectory, NodeId};
use crate::hubdb::{self, DbHeader, HubDatabase, HubDbError, HubSlot, HEADER_LEN};
use crate::pir::{self, BitVector, LocalReplica, PirError, PirMode, PirServer, RecordLayout};

/// Largest accepted frame payload.
pub const MAX_FRAME: usize = 1 << 30;

/// Bytes of a QUERY frame besides the packed query bits.
pub const QUERY_FRAME_OVERHEAD: usize = 4 + 1 + 8 + 1 + 4;
/// Bytes of an ANSWER frame besides the packed answer bits.
pub const ANSWER_FRAME_OVERHEAD: usize = 4 + 1 + 8 + 4;

pub mod error_code {
    pub const MALFORMED: u16 = 1;
    pub const LENGTH_MISMATCH: u16 = 2;
    pub const VERSION_MISMATCH: u16 = 3;
    pub const UNEXPECTED: u16 = 4;
    pub const BAD_DATABASE: u16 = 5;
    pub const NOTHING_STAGED: u16 = 6;
    pub const STALE_COMMIT: u16 = 7;
}

mod msg {
    pub const HELLO: u8 = 1;
    pub const META: u8 = 2;
    pub const QUERY: u8 = 3;
    pub const ANSWER: u8 = 4;
    pub const ERROR: u8 = 5;
    pub const GET_DIRECTORY: u8 = 6;
    pub const DIRECTORY: u8 = 7;
    pub const STAGE: u8 = 8;
    pub const COMMIT: u8 = 9;
    pub const ABORT: u8 = 10;
    pub const ACK: u8 = 11;
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("server error {code}: {message}")]
    Server { code: u16, message: String },
    #[error(transparent)]
    Pir(#[from] PirError),
    #[error(transparent)]
    Database(#[from] HubDbError),
    #[error("unknown node label {0:?}")]
    UnknownLabel(String),
    #[error("stale database: hub sets of {s} and {t} do not intersect")]
    StaleDatabase { s: String, t: String },
    #[error("servers hold different database versions")]
    ReplicaMismatch,
    #[error("directory does not match the advertised digest")]
    DirectoryMismatch,
    #[error("publish failed: {0}")]
    Publish(String),
}

/// Monotone counter plus content digest of the database file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DbVersion {
    pub counter: u64,
    pub digest: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Meta {
    pub version: DbVersion,
    pub directory_digest: [u8; 32],
    pub header: DbHeader,
}

impl Meta {
    pub fn layout(&self) -> RecordLayout {
        RecordLayout {
            records: self.header.records as usize,
            record_bits: self.header.record_bits as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Hello,
    Meta(Meta),
    Query { version: u64, mode: PirMode, query: BitVector },
    Answer { version: u64, answer: BitVector },
    Error { code: u16, message: String },
    GetDirectory,
    Directory(Vec<u8>),
    Stage(Vec<u8>),
    Commit { version: u64, digest: [u8; 32] },
    Abort,
    Ack { version: u64, digest: [u8; 32] },
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "truncated body".to_string())?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn digest(&mut self) -> Result<[u8; 32], String> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    fn bits(&mut self) -> Result<BitVector, String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len.div_ceil(8))?.to_vec();
        BitVector::from_bytes(len, bytes).map_err(|e| e.to_string())
    }

    fn rest(&mut self) -> &'a [u8] {
        let out = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        out
    }

    fn finish(&self) -> Result<(), String> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", self.bytes.len() - self.pos))
        }
    }
}

fn put_bits(out: &mut Vec<u8>, v: &BitVector) {
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    out.extend_from_slice(v.as_bytes());
}

impl WireMessage {
    fn type_byte(&self) -> u8 {
        match self {
            WireMessage::Hello => msg::HELLO,
            WireMessage::Meta(_) => msg::META,
            WireMessage::Query { .. } => msg::QUERY,
            WireMessage::Answer { .. } => msg::ANSWER,
            WireMessage::Error { .. } => msg::ERROR,
            WireMessage::GetDirectory => msg::GET_DIRECTORY,
            WireMessage::Directory(_) => msg::DIRECTORY,
            WireMessage::Stage(_) => msg::STAGE,
            WireMessage::Commit { .. } => msg::COMMIT,
            WireMessage::Abort => msg::ABORT,
            WireMessage::Ack { .. } => msg::ACK,
        }
    }

    /// The complete frame, length prefix included.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![0u8; 4];
        out.push(self.type_byte());
        match self {
            WireMessage::Hello | WireMessage::GetDirectory | WireMessage::Abort => {}
            WireMessage::Meta(m) => {
                out.extend_from_slice(&m.version.counter.to_le_bytes());
                out.extend_from_slice(&m.version.digest);
                out.extend_from_slice(&m.directory_digest);
                m.header.write(&mut out);
            }
            WireMessage::Query { version, mode, query } => {
                out.extend_from_slice(&version.to_le_bytes());
                out.push(*mode as u8);
                put_bits(&mut out, query);
            }
            WireMessage::Answer { version, answer } => {
                out.extend_from_slice(&version.to_le_bytes());
                put_bits(&mut out, answer);
            }
            WireMessage::Error { code, message } => {
                out.extend_from_slice(&code.to_le_bytes());
                out.extend_from_slice(message.as_bytes());
            }
            WireMessage::Directory(bytes) | WireMessage::Stage(bytes) => out.extend_from_slice(bytes),
            WireMessage::Commit { version, digest } | WireMessage::Ack { version, digest } => {
                out.extend_from_slice(&version.to_le_bytes());
                out.extend_from_slice(digest);
            }
        }
        let len = (out.len() - 4) as u32;
        out[..4].copy_from_slice(&len.to_le_bytes());
        out
    }

    pub fn decode(frame_type: u8, body: &[u8]) -> Result<Self, String> {
        let mut c = Cursor { bytes: body, pos: 0 };
        let message = match frame_type {
            msg::HELLO => WireMessage::Hello,
            msg::GET_DIRECTORY => WireMessage::GetDirectory,
            msg::ABORT => WireMessage::Abort,
            msg::META => {
                let counter = c.u64()?;
                let digest = c.digest()?;
                let directory_digest = c.digest()?;
                let header = DbHeader::parse(c.take(HEADER_LEN)?).map_err(|e| e.to_string())?;
                WireMessage::Meta(Meta {
                    version: DbVersion { counter, digest },
                    directory_digest,
                    header,
                })
            }
            msg::QUERY => {
                let version = c.u64()?;
                let raw = c.u8()?;
                let mode = PirMode::try_from(raw).map_err(|m| format!("unknown mode {m}"))?;
                WireMessage::Query {
                    version,
                    mode,
                    query: c.bits()?,
                }
            }
            msg::ANSWER => WireMessage::Answer {
                version: c.u64()?,
                answer: c.bits()?,
            },
            msg::ERROR => {
                let code = c.u16()?;
                let message = String::from_utf8_lossy(c.rest()).into_owned();
                WireMessage::Error { code, message }
            }
            msg::DIRECTORY => WireMessage::Directory(c.rest().to_vec()),
            msg::STAGE => WireMessage::Stage(c.rest().to_vec()),
            msg::COMMIT => WireMessage::Commit {
                version: c.u64()?,
                digest: c.digest()?,
            },
            msg::ACK => WireMessage::Ack {
                version: c.u64()?,
                digest: c.digest()?,
            },
            other => return Err(format!("unknown message type {other}")),
        };
        c.finish()?;
        Ok(message)
    }
}

enum FrameRead {
    Frame(u8, Vec<u8>),
    Closed,
    Oversize(usize),
}

fn read_frame(r: &mut impl Read) -> io::Result<FrameRead> {
    let mut prefix = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(FrameRead::Closed),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_le_bytes(prefix) as usize;
    if len == 0 || len > MAX_FRAME {
        return Ok(FrameRead::Oversize(len));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    let body = payload.split_off(1);
    Ok(FrameRead::Frame(payload[0], body))
}

/// Reads and decodes one frame; `Ok(None)` on a clean close.
pub fn read_message(r: &mut impl Read) -> Result<Option<(WireMessage, usize)>, TransportError> {
    match read_frame(r)? {
        FrameRead::Closed => Ok(None),
        FrameRead::Oversize(len) => Err(TransportError::Protocol(format!("frame length {len}"))),
        FrameRead::Frame(t, body) => {
            let size = 4 + 1 + body.len();
            let m = WireMessage::decode(t, &body).map_err(TransportError::Protocol)?;
            Ok(Some((m, size)))
        }
    }
}

/// Writes one frame and returns its size in bytes.
pub fn write_message(w: &mut impl Write, m: &WireMessage) -> io::Result<usize> {
    let frame = m.encode();
    w.write_all(&frame)?;
    w.flush()?;
    Ok(frame.len())
}

struct Snapshot {
    meta: Meta,
    directory: Vec<u8>,
    replica: LocalReplica,
}

impl Snapshot {
    fn new(db: &HubDatabase, counter: u64) -> Self {
        let digest = db.digest();
        let layout = RecordLayout {
            records: db.record_count(),
            record_bits: db.header().record_bits as usize,
        };
        Self {
            meta: Meta {
                version: DbVersion { counter, digest },
                directory_digest: db.directory_digest(),
                header: *db.header(),
            },
            directory: hubdb::directory_bytes(db.directory()),
            replica: LocalReplica::new(db.records(), layout, digest),
        }
    }
}

struct Shared {
    current: RwLock<Arc<Snapshot>>,
    staged: Mutex<Option<(HubDatabase, [u8; 32])>>,
    stop: AtomicBool,
}

impl Shared {
    fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().unwrap().clone()
    }
}

/// A PIR server holding one in-memory database snapshot.
pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, db: &HubDatabase, counter: u64) -> Result<Self, TransportError> {
        let listener = TcpListener::bind(addr)?;
        Ok(Self {
            listener,
            shared: Arc::new(Shared {
                current: RwLock::new(Arc::new(Snapshot::new(db, counter))),
                staged: Mutex::new(None),
                stop: AtomicBool::new(false),
            }),
        })
    }

    /// Loads and validates `db_path`; a corrupt file is an error.
    pub fn open(db_path: &Path, addr: impl ToSocketAddrs, counter: u64) -> Result<Self, TransportError> {
        let db = HubDatabase::load(db_path)?;
        Self::bind(addr, &db, counter)
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn version(&self) -> DbVersion {
        self.shared.snapshot().meta.version
    }

    /// Accepts connections until stopped, one thread per connection.
    pub fn run(self) -> Result<(), TransportError> {
        for stream in self.listener.incoming() {
            if self.shared.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let shared = Arc::clone(&self.shared);
            thread::spawn(move || {
                if let Err(e) = handle_connection(stream, &shared) {
                    log::debug!("connection ended: {e}");
                }
            });
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> Result<ServerHandle, TransportError> {
        let addr = self.local_addr()?;
        let shared = Arc::clone(&self.shared);
        let thread = thread::spawn(move || self.run());
        Ok(ServerHandle {
            addr,
            shared,
            thread: Some(thread),
        })
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<Result<(), TransportError>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn version(&self) -> DbVersion {
        self.shared.snapshot().meta.version
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(t) = self.thread.take() {
            self.shared.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.addr);
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn error(code: u16, message: impl Into<String>) -> WireMessage {
    WireMessage::Error {
        code,
        message: message.into(),
    }
}

fn handle_connection(mut stream: TcpStream, shared: &Shared) -> Result<(), TransportError> {
    stream.set_nodelay(true)?;
    loop {
        let (frame_type, body) = match read_frame(&mut stream)? {
            FrameRead::Closed => return Ok(()),
            FrameRead::Oversize(len) => {
                write_message(&mut stream, &error(error_code::MALFORMED, format!("frame length {len}")))?;
                let _ = stream.shutdown(Shutdown::Both);
                return Ok(());
            }
            FrameRead::Frame(t, b) => (t, b),
        };
        let message = match WireMessage::decode(frame_type, &body) {
            Ok(m) => m,
            Err(e) => {
                write_message(&mut stream, &error(error_code::MALFORMED, e))?;
                let _ = stream.shutdown(Shutdown::Both);
                return Ok(());
            }
        };
        let (reply, close) = respond(shared, message);
        write_message(&mut stream, &reply)?;
        if close {
            let _ = stream.shutdown(Shutdown::Both);
            return Ok(());
        }
    }
}

/// The reply to one request, and whether to close afterwards.
fn respond(shared: &Shared, message: WireMessage) -> (WireMessage, bool) {
    match message {
        WireMessage::Hello => (WireMessage::Meta(shared.snapshot().meta), false),
        WireMessage::GetDirectory => (WireMessage::Directory(shared.snapshot().directory.clone()), false),
        WireMessage::Query { version, mode, query } => {
            let snap = shared.snapshot();
            if version != snap.meta.version.counter {
                let text = format!("holding version {}, asked {version}", snap.meta.version.counter);
                return (error(error_code::VERSION_MISMATCH, text), false);
            }
            let cols = snap.replica.matrix(mode).cols();
            if query.len() != cols {
                let text = format!("query has {} bits, expected {cols}", query.len());
                return (error(error_code::LENGTH_MISMATCH, text), false);
            }
            match snap.replica.matrix(mode).answer(&query) {
                Ok(answer) => (WireMessage::Answer { version, answer }, false),
                Err(e) => (error(error_code::LENGTH_MISMATCH, e.to_string()), false),
            }
        }
        WireMessage::Stage(bytes) => match HubDatabase::from_bytes(&bytes) {
            Ok(db) => {
                let digest = db.digest();
                *shared.staged.lock().unwrap() = Some((db, digest));
                let version = shared.snapshot().meta.version.counter;
                (WireMessage::Ack { version, digest }, false)
            }
            Err(e) => (error(error_code::BAD_DATABASE, e.to_string()), false),
        },
        WireMessage::Commit { version, digest } => {
            let mut staged = shared.staged.lock().unwrap();
            match staged.as_ref() {
                Some((_, d)) if *d == digest => {}
                _ => return (error(error_code::NOTHING_STAGED, "no staged database with that digest"), false),
            }
            let current = shared.snapshot().meta.version.counter;
            if version <= current {
                let text = format!("version {version} does not advance {current}");
                return (error(error_code::STALE_COMMIT, text), false);
            }
            let (db, _) = staged.take().expect("checked above");
            let next = Arc::new(Snapshot::new(&db, version));
            *shared.current.write().unwrap() = next;
            (WireMessage::Ack { version, digest }, false)
        }
        WireMessage::Abort => {
            *shared.staged.lock().unwrap() = None;
            let v = shared.snapshot().meta.version;
            (
                WireMessage::Ack {
                    version: v.counter,
                    digest: v.digest,
                },
                false,
            )
        }
        other => (
            error(error_code::UNEXPECTED, format!("unexpected message type {}", other.type_byte())),
            true,
        ),
    }
}

/// Bytes moved over one connection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Traffic {
    pub sent: u64,
    pub received: u64,
}

/// Client connection to one PIR server.
pub struct TcpEndpoint {
    stream: TcpStream,
    meta: Meta,
    traffic: Traffic,
}

impl TcpEndpoint {
    /// Connects and learns the served version through HELLO / META.
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, TransportError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let placeholder = Meta {
            version: DbVersion {
                counter: 0,
                digest: [0; 32],
            },
            directory_digest: [0; 32],
            header: DbHeader {
                version: 0,
                label_bits: 0,
                records: 0,
                h_max: 0,
                d_max: 0,
                record_bits: 0,
            },
        };
        let mut endpoint = Self {
            stream,
            meta: placeholder,
            traffic: Traffic::default(),
        };
        endpoint.refresh()?;
        Ok(endpoint)
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn traffic(&self) -> Traffic {
        self.traffic
    }

    pub fn reset_traffic(&mut self) {
        self.traffic = Traffic::default();
    }

    /// Re-reads the served version.
    pub fn refresh(&mut self) -> Result<Meta, TransportError> {
        match self.request(&WireMessage::Hello)? {
            WireMessage::Meta(m) => {
                self.meta = m;
                Ok(m)
            }
            other => Err(unexpected(&other)),
        }
    }

    /// Fetches the public directory and checks it against the META digest.
    pub fn fetch_directory(&mut self) -> Result<NodeDirectory, TransportError> {
        let bytes = match self.request(&WireMessage::GetDirectory)? {
            WireMessage::Directory(b) => b,
            other => return Err(unexpected(&other)),
        };
        if <[u8; 32]>::from(Sha256::digest(&bytes)) != self.meta.directory_digest {
            return Err(TransportError::DirectoryMismatch);
        }
        let h = &self.meta.header;
        let (directory, used) = hubdb::parse_directory(&bytes, h.records as usize, h.label_bits)?;
        if used != bytes.len() {
            return Err(TransportError::Protocol("trailing directory bytes".into()));
        }
        Ok(directory)
    }

    /// Sends one frame and reads the reply; ERROR replies become errors.
    pub fn request(&mut self, m: &WireMessage) -> Result<WireMessage, TransportError> {
        self.traffic.sent += write_message(&mut self.stream, m)? as u64;
        let (reply, size) = read_message(&mut self.stream)?
            .ok_or_else(|| TransportError::Protocol("server closed the connection".into()))?;
        self.traffic.received += size as u64;
        match reply {
            WireMessage::Error { code, message } => Err(TransportError::Server { code, message }),
            other => Ok(other),
        }
    }
}

fn unexpected(m: &WireMessage) -> TransportError {
    TransportError::Protocol(format!("unexpected reply type {}", m.type_byte()))
}

impl PirServer for TcpEndpoint {
    fn replica_digest(&mut self) -> Result<[u8; 32], PirError> {
        Ok(self.meta.version.digest)
    }

    fn answer(&mut self, mode: PirMode, query: &BitVector) -> Result<BitVector, PirError> {
        let version = self.meta.version.counter;
        let q = WireMessage::Query {
            version,
            mode,
            query: query.clone(),
        };
        match self.request(&q) {
            Ok(WireMessage::Answer { version: v, answer }) if v == version => Ok(answer),
            Ok(WireMessage::Answer { version: v, .. }) => {
                Err(PirError::Transport(format!("answer for version {v}, asked {version}")))
            }
            Ok(other) => Err(PirError::Transport(unexpected(&other).to_string())),
            Err(TransportError::Server { code, message }) => Err(PirError::Server { code, message }),
            Err(e) => Err(PirError::Transport(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteResult {
    pub nodes: Vec<NodeId>,
    pub labels: Vec<String>,
    pub cost: u64,
}

/// Privately fetches the records of `s` and `t` and joins them at the common
/// hub minimizing the base cost, smaller hub index on ties.
///
/// Both records are retrieved even when `s == t`, so server views do not
/// depend on the query.
#[allow(clippy::too_many_arguments)]
pub fn route_query<A, B, R>(
    s1: &mut A,
    s2: &mut B,
    header: &DbHeader,
    directory: &NodeDirectory,
    s: &str,
    t: &str,
    mode: PirMode,
    rng: &mut R,
) -> Result<RouteResult, TransportError>
where
    A: PirServer + Send,
    B: PirServer + Send,
    R: RngCore + CryptoRng,
{
    let lookup = |l: &str| directory.index_of(l).ok_or_else(|| TransportError::UnknownLabel(l.to_owned()));
    let (su, tu) = (lookup(s)?, lookup(t)?);
    let layout = RecordLayout {
        records: header.records as usize,
        record_bits: header.record_bits as usize,
    };
    let fetch = |u: NodeId, s1: &mut A, s2: &mut B, rng: &mut R| -> Result<Vec<HubSlot>, TransportError> {
        let bits = pir::retrieve_record(s1, s2, layout, mode, u as usize, rng).map_err(|e| match e {
            PirError::ReplicaMismatch => TransportError::ReplicaMismatch,
            other => TransportError::Pir(other),
        })?;
        Ok(hubdb::decode_record_bytes(header, u, &bits.into_bytes())?)
    };
    let out_slots = fetch(su, s1, s2, rng)?;
    let in_slots = fetch(tu, s1, s2, rng)?;
    if su == tu {
        return Ok(RouteResult {
            nodes: vec![su],
            labels: vec![s.to_owned()],
            cost: 0,
        });
    }
    let (nodes, cost) = join_slots(&out_slots, &in_slots).ok_or_else(|| TransportError::StaleDatabase {
        s: s.to_owned(),
        t: t.to_owned(),
    })?;
    if nodes.first() != Some(&su) || nodes.last() != Some(&tu) {
        return Err(TransportError::Protocol("hub paths do not start and end at the query nodes".into()));
    }
    let labels = nodes
        .iter()
        .map(|&v| {
            directory
                .label(v)
                .map(str::to_owned)
                .ok_or_else(|| TransportError::Protocol(format!("node {v} outside the directory")))
        })
        .collect::<Result<_, _>>()?;
    Ok(RouteResult { nodes, labels, cost })
}

/// Route from the record of `s` (`out`) and the record of `t` (`inn`): the
/// path `s -> w* -> t` and its base cost, or `None` without a common hub.
pub fn join_slots(out: &[HubSlot], inn: &[HubSlot]) -> Option<(Vec<NodeId>, u64)> {
    let (a, b) = best_common_hub(out, inn)?;
    let (o, i) = (&out[a], &inn[b]);
    let mut nodes = o.out_path.clone();
    nodes.extend_from_slice(i.in_path.get(1..)?);
    Some((nodes, o.out_base + i.in_base))
}

/// Linear merge over hub-sorted slots; indices of the argmin pair.
fn best_common_hub(out: &[HubSlot], inn: &[HubSlot]) -> Option<(usize, usize)> {
    let (mut i, mut j) = (0, 0);
    let mut best: Option<(u128, usize, usize)> = None;
    while i < out.len() && j < inn.len() {
        match out[i].hub.cmp(&inn[j].hub) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let cost = out[i].out_base as u128 + inn[j].in_base as u128;
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, i, j));
                }
                i += 1;
                j += 1;
            }
        }
    }
    best.map(|(_, i, j)| (i, j))
}

/// Connections to both servers plus the verified public metadata.
pub struct ClientSession {
    pub first: TcpEndpoint,
    pub second: TcpEndpoint,
    pub directory: NodeDirectory,
}

impl ClientSession {
    pub fn connect(a1: impl ToSocketAddrs, a2: impl ToSocketAddrs) -> Result<Self, TransportError> {
        let mut first = TcpEndpoint::connect(a1)?;
        let mut second = TcpEndpoint::connect(a2)?;
        if first.meta() != second.meta() {
            return Err(TransportError::ReplicaMismatch);
        }
        let directory = first.fetch_directory()?;
        first.reset_traffic();
        second.reset_traffic();
        Ok(Self {
            first,
            second,
            directory,
        })
    }

    pub fn header(&self) -> DbHeader {
        self.first.meta().header
    }

    pub fn route<R: RngCore + CryptoRng>(
        &mut self,
        s: &str,
        t: &str,
        mode: PirMode,
        rng: &mut R,
    ) -> Result<RouteResult, TransportError> {
        let header = self.header();
        route_query(&mut self.first, &mut self.second, &header, &self.directory, s, t, mode, rng)
    }

    pub fn traffic(&self) -> [Traffic; 2] {
        [self.first.traffic(), self.second.traffic()]
    }
}

/// One-shot private route query against two servers.
pub fn client_route_query<R: RngCore + CryptoRng>(
    a1: impl ToSocketAddrs,
    a2: impl ToSocketAddrs,
    s: &str,
    t: &str,
    rng: &mut R,
) -> Result<(RouteResult, [Traffic; 2]), TransportError> {
    let mut session = ClientSession::connect(a1, a2)?;
    let route = session.route(s, t, PirMode::ColumnAligned, rng)?;
    Ok((route, session.traffic()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub version: DbVersion,
}

/// Two-phase distribution: both servers stage and validate the file before
/// either commits. A staging failure aborts every staged copy. The new
/// counter is one past the larger counter currently served.
pub fn publish(db: &HubDatabase, targets: [&str; 2]) -> Result<Receipt, TransportError> {
    let mut endpoints = Vec::with_capacity(2);
    for target in targets {
        endpoints.push(TcpEndpoint::connect(target).map_err(|e| TransportError::Publish(format!("{target}: {e}")))?);
    }
    let digest = db.digest();
    let counter = endpoints.iter().map(|e| e.meta().version.counter).max().unwrap_or(0) + 1;
    let bytes = db.to_bytes();
    let mut staged = 0;
    for (k, e) in endpoints.iter_mut().enumerate() {
        let outcome = match e.request(&WireMessage::Stage(bytes.clone())) {
            Ok(WireMessage::Ack { digest: d, .. }) if d == digest => Ok(()),
            Ok(other) => Err(unexpected(&other)),
            Err(err) => Err(err),
        };
        if let Err(err) = outcome {
            for prior in endpoints.iter_mut().take(staged) {
                let _ = prior.request(&WireMessage::Abort);
            }
            return Err(TransportError::Publish(format!("staging on {} failed: {err}", targets[k])));
        }
        staged += 1;
    }
    for (k, e) in endpoints.iter_mut().enumerate() {
        match e.request(&WireMessage::Commit { version: counter, digest }) {
            Ok(WireMessage::Ack { .. }) => {}
            Ok(other) => return Err(TransportError::Publish(format!("commit on {}: {}", targets[k], unexpected(&other)))),
            Err(err) => return Err(TransportError::Publish(format!("commit on {} failed: {err}", targets[k]))),
        }
    }
    Ok(Receipt {
        version: DbVersion { counter, digest },
    })
}
