//! Two-server information-theoretic PIR over a bit matrix.
//!
//! The database is viewed as `rows x cols` bits stored column by column. The
//! client sends a uniformly random column selector `q1` to one server and
//! `q2 = q1 ^ e_i` to the other; each server XORs the selected columns, and
//! the XOR of the two answers is column `i`.

use rand::{CryptoRng, RngCore};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PirError {
    #[error("index {index} out of range for {len} columns")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("bit vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("servers hold different database versions")]
    ReplicaMismatch,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("server error {code}: {message}")]
    Server { code: u16, message: String },
}

impl PirError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, PirError::Transport(_))
    }
}

/// Packed bit vector, bit `k` at byte `k / 8`, position `k % 8`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    len: usize,
    bytes: Vec<u8>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            bytes: vec![0; len.div_ceil(8)],
        }
    }

    /// Takes the first `len` bits of `bytes`; trailing bits are cleared.
    pub fn from_bytes(len: usize, mut bytes: Vec<u8>) -> Result<Self, PirError> {
        if bytes.len() != len.div_ceil(8) {
            return Err(PirError::LengthMismatch {
                expected: len.div_ceil(8),
                got: bytes.len(),
            });
        }
        if len % 8 != 0 {
            if let Some(last) = bytes.last_mut() {
                *last &= (1u8 << (len % 8)) - 1;
            }
        }
        Ok(Self { len, bytes })
    }

    pub fn random<R: RngCore + CryptoRng>(len: usize, rng: &mut R) -> Self {
        let mut bytes = vec![0u8; len.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        Self::from_bytes(len, bytes).expect("sized above")
    }

    pub fn unit(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(i, true);
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn get(&self, i: usize) -> bool {
        (self.bytes[i / 8] >> (i % 8)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        let mask = 1u8 << (i % 8);
        if value {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        self.bytes[i / 8] ^= 1 << (i % 8);
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &BitVector) -> Result<BitVector, PirError> {
        if self.len != other.len {
            return Err(PirError::LengthMismatch {
                expected: self.len,
                got: other.len,
            });
        }
        Ok(BitVector {
            len: self.len,
            bytes: self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect(),
        })
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    /// Bits `[start, start + len)` as a new vector.
    pub fn slice(&self, start: usize, len: usize) -> BitVector {
        let mut out = BitVector::zeros(len);
        for k in 0..len {
            if self.get(start + k) {
                out.set(k, true);
            }
        }
        out
    }
}

/// Smallest `s >= 1` with `s * s >= total_bits`.
fn balanced_side(total_bits: usize) -> usize {
    let mut s = (total_bits as f64).sqrt() as usize;
    while s * s < total_bits {
        s += 1;
    }
    s.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PirMode {
    /// One column per record: `rows = L`, `cols = N`.
    ColumnAligned = 0,
    /// Near-square matrix over the concatenated record bits.
    Balanced = 1,
}

impl TryFrom<u8> for PirMode {
    type Error = u8;

    fn try_from(v: u8) -> Result<Self, u8> {
        match v {
            0 => Ok(PirMode::ColumnAligned),
            1 => Ok(PirMode::Balanced),
            other => Err(other),
        }
    }
}

/// Column-major bit matrix. Each column occupies `stride` bytes (a multiple of
/// eight so aggregation can XOR whole words); bits past `rows` are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PirMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u8>,
}

impl PirMatrix {
    fn with_shape(rows: usize, cols: usize) -> Self {
        let stride = rows.div_ceil(64) * 8;
        Self {
            rows,
            cols,
            stride,
            data: vec![0; stride * cols],
        }
    }

    /// `records` holds `count` records of `ceil(record_bits / 8)` bytes.
    pub fn column_aligned(records: &[u8], count: usize, record_bits: usize) -> Self {
        let rb = record_bits.div_ceil(8);
        assert_eq!(records.len(), rb * count, "record buffer size");
        let mut m = Self::with_shape(record_bits, count);
        for (j, rec) in records.chunks(rb.max(1)).take(count).enumerate() {
            m.data[j * m.stride..j * m.stride + rb].copy_from_slice(rec);
        }
        m
    }

    /// Square layout with side `ceil(sqrt(count * record_bits))`. Record `i`
    /// occupies payload bits `[i * record_bits, (i + 1) * record_bits)`, and
    /// column `j` holds payload bits `[j * rows, (j + 1) * rows)`.
    pub fn balanced(records: &[u8], count: usize, record_bits: usize) -> Self {
        let rb = record_bits.div_ceil(8);
        assert_eq!(records.len(), rb * count, "record buffer size");
        let side = balanced_side(count * record_bits);
        let mut m = Self::with_shape(side, side);
        for i in 0..count {
            for k in 0..record_bits {
                let bit = (records[i * rb + k / 8] >> (k % 8)) & 1;
                if bit == 1 {
                    let p = i * record_bits + k;
                    let (col, row) = (p / side, p % side);
                    m.data[col * m.stride + row / 8] |= 1 << (row % 8);
                }
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> BitVector {
        let bytes = self.data[j * self.stride..j * self.stride + self.rows.div_ceil(8)].to_vec();
        BitVector::from_bytes(self.rows, bytes).expect("column size")
    }

    /// XOR of the columns selected by `q`.
    pub fn answer(&self, q: &BitVector) -> Result<BitVector, PirError> {
        if q.len() != self.cols {
            return Err(PirError::LengthMismatch {
                expected: self.cols,
                got: q.len(),
            });
        }
        let words = self.stride / 8;
        let mut acc = vec![0u64; words];
        for (j, byte) in q.as_bytes().iter().enumerate() {
            if *byte == 0 {
                continue;
            }
            for bit in 0..8 {
                if (byte >> bit) & 1 == 0 {
                    continue;
                }
                let col = j * 8 + bit;
                let column = &self.data[col * self.stride..(col + 1) * self.stride];
                for (a, chunk) in acc.iter_mut().zip(column.chunks_exact(8)) {
                    *a ^= u64::from_le_bytes(chunk.try_into().unwrap());
                }
            }
        }
        let mut bytes: Vec<u8> = acc.iter().flat_map(|w| w.to_le_bytes()).collect();
        bytes.truncate(self.rows.div_ceil(8));
        BitVector::from_bytes(self.rows, bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PirQueryPair {
    pub first: BitVector,
    pub second: BitVector,
}

/// `first` is uniform over `{0,1}^cols`; `second = first ^ e_index`.
pub fn gen_query_pair<R: RngCore + CryptoRng>(cols: usize, index: usize, rng: &mut R) -> Result<PirQueryPair, PirError> {
    if index >= cols {
        return Err(PirError::IndexOutOfRange { index, len: cols });
    }
    let first = BitVector::random(cols, rng);
    let mut second = first.clone();
    second.flip(index);
    Ok(PirQueryPair { first, second })
}

pub fn reconstruct(a1: &BitVector, a2: &BitVector) -> Result<BitVector, PirError> {
    a1.xor(a2)
}

/// Shape of the database a client retrieves from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordLayout {
    pub records: usize,
    pub record_bits: usize,
}

impl RecordLayout {
    /// `(rows, cols)` of the matrix the servers answer over in `mode`.
    pub fn shape(&self, mode: PirMode) -> (usize, usize) {
        match mode {
            PirMode::ColumnAligned => (self.record_bits, self.records),
            PirMode::Balanced => {
                let side = balanced_side(self.records * self.record_bits);
                (side, side)
            }
        }
    }
}

/// A server that answers PIR queries over one database replica.
pub trait PirServer {
    /// Content digest of the replica being served.
    fn replica_digest(&mut self) -> Result<[u8; 32], PirError>;
    fn answer(&mut self, mode: PirMode, query: &BitVector) -> Result<BitVector, PirError>;
}

/// In-process replica holding both matrix views.
#[derive(Debug, Clone)]
pub struct LocalReplica {
    digest: [u8; 32],
    column: PirMatrix,
    balanced: PirMatrix,
}

impl LocalReplica {
    pub fn new(records: &[u8], layout: RecordLayout, digest: [u8; 32]) -> Self {
        Self {
            digest,
            column: PirMatrix::column_aligned(records, layout.records, layout.record_bits),
            balanced: PirMatrix::balanced(records, layout.records, layout.record_bits),
        }
    }

    pub fn matrix(&self, mode: PirMode) -> &PirMatrix {
        match mode {
            PirMode::ColumnAligned => &self.column,
            PirMode::Balanced => &self.balanced,
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }
}

impl PirServer for LocalReplica {
    fn replica_digest(&mut self) -> Result<[u8; 32], PirError> {
        Ok(self.digest)
    }

    fn answer(&mut self, mode: PirMode, query: &BitVector) -> Result<BitVector, PirError> {
        self.matrix(mode).answer(query)
    }
}

impl<S: PirServer + ?Sized> PirServer for &mut S {
    fn replica_digest(&mut self) -> Result<[u8; 32], PirError> {
        (**self).replica_digest()
    }

    fn answer(&mut self, mode: PirMode, query: &BitVector) -> Result<BitVector, PirError> {
        (**self).answer(mode, query)
    }
}

/// One column through a fresh query pair; the two servers are queried
/// concurrently.
fn retrieve_column<A, B, R>(
    s1: &mut A,
    s2: &mut B,
    mode: PirMode,
    cols: usize,
    column: usize,
    rng: &mut R,
) -> Result<BitVector, PirError>
where
    A: PirServer + Send,
    B: PirServer + Send,
    R: RngCore + CryptoRng,
{
    let pair = gen_query_pair(cols, column, rng)?;
    let (a1, a2) = std::thread::scope(|scope| {
        let first = scope.spawn(|| s1.answer(mode, &pair.first));
        let a2 = s2.answer(mode, &pair.second);
        (first.join().expect("server thread panicked"), a2)
    });
    reconstruct(&a1?, &a2?)
}

/// Privately fetches record `index`. Fails with [`PirError::ReplicaMismatch`]
/// when the servers report different digests.
pub fn retrieve_record<A, B, R>(
    s1: &mut A,
    s2: &mut B,
    layout: RecordLayout,
    mode: PirMode,
    index: usize,
    rng: &mut R,
) -> Result<BitVector, PirError>
where
    A: PirServer + Send,
    B: PirServer + Send,
    R: RngCore + CryptoRng,
{
    if index >= layout.records {
        return Err(PirError::IndexOutOfRange {
            index,
            len: layout.records,
        });
    }
    if s1.replica_digest()? != s2.replica_digest()? {
        return Err(PirError::ReplicaMismatch);
    }
    let (rows, cols) = layout.shape(mode);
    match mode {
        PirMode::ColumnAligned => {
            let record = retrieve_column(s1, s2, mode, cols, index, rng)?;
            if record.len() != layout.record_bits {
                return Err(PirError::LengthMismatch {
                    expected: layout.record_bits,
                    got: record.len(),
                });
            }
            Ok(record)
        }
        PirMode::Balanced => {
            let start = index * layout.record_bits;
            let end = start + layout.record_bits;
            if layout.record_bits == 0 {
                return Ok(BitVector::zeros(0));
            }
            let (first, last) = (start / rows, (end - 1) / rows);
            let mut bits = BitVector::zeros((last - first + 1) * rows);
            for (k, col) in (first..=last).enumerate() {
                let c = retrieve_column(s1, s2, mode, cols, col, rng)?;
                if c.len() != rows {
                    return Err(PirError::LengthMismatch { expected: rows, got: c.len() });
                }
                for bit in c.ones() {
                    bits.set(k * rows + bit, true);
                }
            }
            Ok(bits.slice(start - first * rows, layout.record_bits))
        }
    }
}
