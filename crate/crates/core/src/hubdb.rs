//! Fixed-record binary encoding of a hub labeling.
//!
//! File layout, little-endian:
//!
//! ```text
//! magic "LPIR" | version u16 | label_bits u16 | records u32 | h_max u32 | d_max u16 | record_bits u64
//! directory: `records` labels, each u32 byte length + UTF-8 bytes, in index order
//! records: `records` x ceil(record_bits / 8) bytes
//! ```
//!
//! A record holds `h_max` slots, real slots first in hub order, then padding
//! slots whose hub field is all ones. Each slot is, LSB-first:
//!
//! ```text
//! hub (λ) | out hops (8) | in hops (8) | out base cost (64) | in base cost (64)
//! | out intermediates (d_max·λ) | in intermediates (d_max·λ)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{NodeDirectory, NodeId};
use crate::hubs::HubLabeling;

pub const MAGIC: &[u8; 4] = b"LPIR";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 2 + 4 + 4 + 2 + 8;
const HOP_BITS: u32 = 8;
const COST_BITS: u32 = 64;

#[derive(Debug, Error)]
pub enum HubDbError {
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("inconsistent labeling: {0}")]
    Validation(String),
    #[error("record index {index} out of range for {records} records")]
    IndexOutOfRange { index: usize, records: usize },
    #[error("corrupt database: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Width in bits of one hub slot.
pub fn slot_bits(label_bits: u32, d_max: u32) -> u64 {
    label_bits as u64 + 2 * HOP_BITS as u64 + 2 * COST_BITS as u64 + 2 * d_max as u64 * label_bits as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DbHeader {
    pub version: u16,
    pub label_bits: u32,
    pub records: u32,
    pub h_max: u32,
    pub d_max: u32,
    pub record_bits: u64,
}

impl DbHeader {
    pub fn record_bytes(&self) -> usize {
        self.record_bits.div_ceil(8) as usize
    }

    fn pad_hub(&self) -> u64 {
        (1u64 << self.label_bits) - 1
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.label_bits as u16).to_le_bytes());
        out.extend_from_slice(&self.records.to_le_bytes());
        out.extend_from_slice(&self.h_max.to_le_bytes());
        out.extend_from_slice(&(self.d_max as u16).to_le_bytes());
        out.extend_from_slice(&self.record_bits.to_le_bytes());
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, HubDbError> {
        if bytes.len() < HEADER_LEN {
            return Err(HubDbError::Format("truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(HubDbError::Format("bad magic".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let header = Self {
            version: u16_at(4),
            label_bits: u16_at(6) as u32,
            records: u32_at(8),
            h_max: u32_at(12),
            d_max: u16_at(16) as u32,
            record_bits: u64::from_le_bytes(bytes[18..26].try_into().unwrap()),
        };
        if header.version != FORMAT_VERSION {
            return Err(HubDbError::Format(format!("unsupported version {}", header.version)));
        }
        if !(1..=32).contains(&header.label_bits) {
            return Err(HubDbError::Format(format!("label width {}", header.label_bits)));
        }
        if header.record_bits != header.h_max as u64 * slot_bits(header.label_bits, header.d_max) {
            return Err(HubDbError::Format("record length disagrees with h_max and d_max".into()));
        }
        if header.records as u64 >= 1u64 << header.label_bits {
            return Err(HubDbError::Format("record count needs wider labels".into()));
        }
        Ok(header)
    }
}

/// One decoded hub slot. Paths include both endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubSlot {
    pub hub: NodeId,
    pub out_base: u64,
    pub in_base: u64,
    pub out_path: Vec<NodeId>,
    pub in_path: Vec<NodeId>,
}

impl HubLabeling {
    /// The slots a database record for `u` should decode to.
    pub fn slots(&self, u: NodeId) -> Vec<HubSlot> {
        self.hubs[u as usize]
            .iter()
            .map(|e| HubSlot {
                hub: e.hub,
                out_base: e.out_base,
                in_base: e.in_base,
                out_path: e.out_path.clone(),
                in_path: e.in_path.clone(),
            })
            .collect()
    }
}

struct BitWriter<'a> {
    buf: &'a mut [u8],
    pos: u64,
}

impl BitWriter<'_> {
    fn put(&mut self, value: u64, bits: u32) {
        for k in 0..bits {
            if (value >> k) & 1 == 1 {
                let p = self.pos + k as u64;
                self.buf[(p / 8) as usize] |= 1 << (p % 8);
            }
        }
        self.pos += bits as u64;
    }
}

struct BitReader<'a> {
    buf: &'a [u8],
    pos: u64,
}

impl BitReader<'_> {
    fn get(&mut self, bits: u32) -> u64 {
        let mut value = 0u64;
        for k in 0..bits {
            let p = self.pos + k as u64;
            if (self.buf[(p / 8) as usize] >> (p % 8)) & 1 == 1 {
                value |= 1 << k;
            }
        }
        self.pos += bits as u64;
        value
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubDatabase {
    header: DbHeader,
    directory: NodeDirectory,
    records: Vec<u8>,
}

impl HubDatabase {
    pub fn encode(labeling: &HubLabeling, directory: &NodeDirectory, label_bits: u32) -> Result<Self, HubDbError> {
        let n = labeling.node_count();
        if directory.len() != n {
            return Err(HubDbError::Validation(format!(
                "directory has {} labels for {n} records",
                directory.len()
            )));
        }
        if !(1..=32).contains(&label_bits) || n as u64 >= 1u64 << label_bits {
            return Err(HubDbError::Capacity(format!(
                "{n} nodes need more than {label_bits}-bit labels"
            )));
        }
        let d_max = labeling.diameter;
        if d_max >= 1 << HOP_BITS {
            return Err(HubDbError::Capacity(format!("path length {d_max} exceeds 255 hops")));
        }
        if d_max > u16::MAX as u32 {
            return Err(HubDbError::Capacity("d_max".into()));
        }
        let h_max = labeling.max_hub_size();
        let header = DbHeader {
            version: FORMAT_VERSION,
            label_bits,
            records: n as u32,
            h_max: h_max as u32,
            d_max,
            record_bits: h_max as u64 * slot_bits(label_bits, d_max),
        };
        let record_bytes = header.record_bytes();
        let mut records = vec![0u8; record_bytes * n];
        for (u, chunk) in records.chunks_mut(record_bytes.max(1)).enumerate().take(n) {
            encode_record(&header, u as NodeId, labeling, chunk)?;
        }
        Ok(Self {
            header,
            directory: directory.with_label_bits(label_bits).map_err(|e| HubDbError::Capacity(e.to_string()))?,
            records,
        })
    }

    pub fn header(&self) -> &DbHeader {
        &self.header
    }

    pub fn directory(&self) -> &NodeDirectory {
        &self.directory
    }

    pub fn record_count(&self) -> usize {
        self.header.records as usize
    }

    /// Concatenated records, `record_bytes()` each.
    pub fn records(&self) -> &[u8] {
        &self.records
    }

    pub fn record(&self, i: usize) -> Result<&[u8], HubDbError> {
        if i >= self.record_count() {
            return Err(HubDbError::IndexOutOfRange {
                index: i,
                records: self.record_count(),
            });
        }
        let rb = self.header.record_bytes();
        Ok(&self.records[i * rb..(i + 1) * rb])
    }

    pub fn decode_record(&self, i: usize) -> Result<Vec<HubSlot>, HubDbError> {
        decode_record_bytes(&self.header, i as NodeId, self.record(i)?)
    }

    pub fn directory_len(&self) -> usize {
        self.directory.labels().iter().map(|l| 4 + l.len()).sum()
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.directory_len() + self.records.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.header.write(&mut out);
        out.extend_from_slice(&directory_bytes(&self.directory));
        out.extend_from_slice(&self.records);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HubDbError> {
        let header = DbHeader::parse(bytes)?;
        let (directory, used) = parse_directory(&bytes[HEADER_LEN..], header.records as usize, header.label_bits)?;
        let pos = HEADER_LEN + used;
        let expected = header.records as usize * header.record_bytes();
        if bytes.len() - pos != expected {
            return Err(HubDbError::Format(format!(
                "expected {expected} record bytes, found {}",
                bytes.len() - pos
            )));
        }
        let db = Self {
            header,
            directory,
            records: bytes[pos..].to_vec(),
        };
        for i in 0..db.record_count() {
            db.decode_record(i)?;
        }
        Ok(db)
    }

    pub fn save(&self, path: &Path) -> Result<(), HubDbError> {
        Ok(fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, HubDbError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// SHA-256 of the serialized file.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    pub fn directory_digest(&self) -> [u8; 32] {
        Sha256::digest(directory_bytes(&self.directory)).into()
    }

    pub fn stats(&self) -> DbStats {
        let mut histogram = BTreeMap::new();
        for i in 0..self.record_count() {
            let real = self.decode_record(i).map(|s| s.len()).unwrap_or(0);
            *histogram.entry(real).or_insert(0usize) += 1;
        }
        DbStats {
            records: self.record_count(),
            record_bits: self.header.record_bits,
            total_bytes: self.encoded_len(),
            h_max: self.header.h_max as usize,
            slot_histogram: histogram,
        }
    }
}

pub fn directory_bytes(directory: &NodeDirectory) -> Vec<u8> {
    let mut out = Vec::new();
    for label in directory.labels() {
        out.extend_from_slice(&(label.len() as u32).to_le_bytes());
        out.extend_from_slice(label.as_bytes());
    }
    out
}

/// Parses `count` length-prefixed labels; returns the directory and the bytes consumed.
pub fn parse_directory(bytes: &[u8], count: usize, label_bits: u32) -> Result<(NodeDirectory, usize), HubDbError> {
    let mut pos = 0;
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let len_bytes = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| HubDbError::Format("truncated directory".into()))?;
        let len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
        pos += 4;
        let raw = bytes
            .get(pos..pos + len)
            .ok_or_else(|| HubDbError::Format("truncated directory".into()))?;
        labels.push(
            std::str::from_utf8(raw)
                .map_err(|_| HubDbError::Format("label is not UTF-8".into()))?
                .to_owned(),
        );
        pos += len;
    }
    let directory = NodeDirectory::from_labels(labels, label_bits).map_err(|e| HubDbError::Format(e.to_string()))?;
    Ok((directory, pos))
}

fn encode_record(header: &DbHeader, u: NodeId, labeling: &HubLabeling, out: &mut [u8]) -> Result<(), HubDbError> {
    let lb = header.label_bits;
    let entries = &labeling.hubs[u as usize];
    let mut w = BitWriter { buf: out, pos: 0 };
    let mut prev = None;
    for e in entries {
        if prev.is_some_and(|p| p >= e.hub) {
            return Err(HubDbError::Validation(format!("hubs of {u} not strictly sorted")));
        }
        prev = Some(e.hub);
        if e.hub as usize >= labeling.node_count() {
            return Err(HubDbError::Validation(format!("hub {} of {u} out of range", e.hub)));
        }
        check_path(&e.out_path, u, e.hub, header.d_max)?;
        check_path(&e.in_path, e.hub, u, header.d_max)?;
        w.put(e.hub as u64, lb);
        w.put((e.out_path.len() - 1) as u64, HOP_BITS);
        w.put((e.in_path.len() - 1) as u64, HOP_BITS);
        w.put(e.out_base, COST_BITS);
        w.put(e.in_base, COST_BITS);
        for path in [&e.out_path, &e.in_path] {
            let start = w.pos;
            for &v in interior(path) {
                w.put(v as u64, lb);
            }
            w.pos = start + header.d_max as u64 * lb as u64;
        }
    }
    let slot = slot_bits(lb, header.d_max);
    for _ in entries.len()..header.h_max as usize {
        let start = w.pos;
        w.put(header.pad_hub(), lb);
        w.pos = start + slot;
    }
    Ok(())
}

fn interior(path: &[NodeId]) -> &[NodeId] {
    if path.len() <= 2 {
        &[]
    } else {
        &path[1..path.len() - 1]
    }
}

fn check_path(path: &[NodeId], from: NodeId, to: NodeId, d_max: u32) -> Result<(), HubDbError> {
    if path.first() != Some(&from) || path.last() != Some(&to) {
        return Err(HubDbError::Validation(format!("path {path:?} does not join {from} and {to}")));
    }
    if path.len() - 1 > d_max as usize {
        return Err(HubDbError::Validation(format!(
            "path {from} -> {to} has {} hops, more than d_max = {d_max}",
            path.len() - 1
        )));
    }
    if from == to && path.len() != 1 {
        return Err(HubDbError::Validation(format!("self path of {from} is not trivial")));
    }
    Ok(())
}

/// Decodes the record of node `u` from raw bytes.
pub fn decode_record_bytes(header: &DbHeader, u: NodeId, bytes: &[u8]) -> Result<Vec<HubSlot>, HubDbError> {
    let lb = header.label_bits;
    let slot = slot_bits(lb, header.d_max);
    if (bytes.len() as u64) * 8 < header.record_bits {
        return Err(HubDbError::Format("record shorter than record_bits".into()));
    }
    let n = header.records as u64;
    let mut slots = Vec::new();
    let mut padding = false;
    for k in 0..header.h_max as u64 {
        let mut r = BitReader {
            buf: bytes,
            pos: k * slot,
        };
        let hub = r.get(lb);
        if hub == header.pad_hub() {
            padding = true;
            continue;
        }
        if padding {
            return Err(HubDbError::Format(format!("record {u}: real slot after padding")));
        }
        if hub >= n {
            return Err(HubDbError::Format(format!("record {u}: hub index {hub} >= {n}")));
        }
        let hub = hub as NodeId;
        let out_hops = r.get(HOP_BITS) as u32;
        let in_hops = r.get(HOP_BITS) as u32;
        if out_hops.max(in_hops) > header.d_max {
            return Err(HubDbError::Format(format!("record {u}: hop count above d_max")));
        }
        let out_base = r.get(COST_BITS);
        let in_base = r.get(COST_BITS);
        let mut read_path = |from: NodeId, to: NodeId, hops: u32| -> Result<Vec<NodeId>, HubDbError> {
            let start = r.pos;
            let mut path = vec![from];
            for _ in 1..hops {
                let v = r.get(lb);
                if v >= n {
                    return Err(HubDbError::Format(format!("record {u}: path node {v} >= {n}")));
                }
                path.push(v as NodeId);
            }
            if hops > 0 {
                path.push(to);
            } else if from != to {
                return Err(HubDbError::Format(format!("record {u}: empty path to {to}")));
            }
            r.pos = start + header.d_max as u64 * lb as u64;
            Ok(path)
        };
        let out_path = read_path(u, hub, out_hops)?;
        let in_path = read_path(hub, u, in_hops)?;
        slots.push(HubSlot {
            hub,
            out_base,
            in_base,
            out_path,
            in_path,
        });
    }
    Ok(slots)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbStats {
    pub records: usize,
    pub record_bits: u64,
    pub total_bytes: usize,
    pub h_max: usize,
    /// Real slots per record -> number of records.
    pub slot_histogram: BTreeMap<usize, usize>,
}
