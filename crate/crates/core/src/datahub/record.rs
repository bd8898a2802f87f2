//! `HDYSREC1` per-sequence binary records.
//!
//! Layout: the 8-byte magic, a little-endian u32 header length, a JSON
//! header (ids, fps, mass, mask, per-channel widths, marker sites, oracle
//! width), then the frame-major float64 payload: for each frame every present
//! channel in channel order, followed by the oracle `q, q̇, q̈` when stored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HdysError, Result};
use crate::kinrep::{Block, Channel, ChannelMask, SequenceRecord, Trajectory};
use crate::util::atomic_write;

pub const RECORD_MAGIC: &[u8; 8] = b"HDYSREC1";

#[derive(Serialize, Deserialize)]
struct Header {
    id: String,
    profile: String,
    tree: String,
    fps: f64,
    subject_mass: f64,
    frames: usize,
    mask: u8,
    widths: [usize; 8],
    marker_sites: Vec<u32>,
    oracle_dof: usize,
}

pub fn encode_record(rec: &SequenceRecord) -> Vec<u8> {
    let n = rec.frames();
    let mut widths = [0usize; 8];
    for c in Channel::ALL {
        if let Some(b) = rec.block(c) {
            widths[c.index()] = b.width;
        }
    }
    let header = Header {
        id: rec.id.clone(),
        profile: rec.profile.clone(),
        tree: rec.tree.clone(),
        fps: rec.fps,
        subject_mass: rec.subject_mass,
        frames: n,
        mask: rec.mask().0,
        widths,
        marker_sites: rec.marker_sites.clone(),
        oracle_dof: rec.oracle.as_ref().map_or(0, Trajectory::dof),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let per_frame: usize = widths.iter().sum::<usize>() + 3 * header.oracle_dof;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * n * per_frame);
    out.extend_from_slice(RECORD_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let mut put = |vals: &[f64]| {
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for t in 0..n {
        for c in Channel::ALL {
            if let Some(b) = rec.block(c) {
                put(b.frame(t));
            }
        }
        if let Some(o) = &rec.oracle {
            put(o.q.frame(t));
            put(o.qd.frame(t));
            put(o.qdd.frame(t));
        }
    }
    out
}

pub fn decode_record(bytes: &[u8]) -> Result<SequenceRecord> {
    if bytes.len() < 12 || &bytes[..8] != RECORD_MAGIC {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned();
        return Err(HdysError::Version {
            expected: "HDYSREC1".into(),
            found,
        });
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < hlen {
        return Err(HdysError::InvalidRecord("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&body[..hlen])?;
    let payload = &body[hlen..];
    for (i, &w) in header.widths.iter().enumerate() {
        if (w > 0) != (header.mask & (1 << i) != 0) {
            return Err(HdysError::InvalidRecord(format!(
                "{}: mask and payload widths disagree on {}",
                header.id,
                Channel::ALL[i]
            )));
        }
    }
    let n = header.frames;
    let per_frame: usize = header.widths.iter().sum::<usize>() + 3 * header.oracle_dof;
    let expected = 8 * n * per_frame;
    if payload.len() != expected {
        return Err(HdysError::InvalidRecord(format!(
            "{}: payload has {} bytes, expected {expected}",
            header.id,
            payload.len()
        )));
    }
    let mut vals = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut data: Vec<Vec<f64>> = header.widths.iter().map(|w| Vec::with_capacity(w * n)).collect();
    let d = header.oracle_dof;
    let (mut q, mut qd, mut qdd) = (Vec::with_capacity(n * d), Vec::with_capacity(n * d), Vec::with_capacity(n * d));
    for _ in 0..n {
        for (i, &w) in header.widths.iter().enumerate() {
            data[i].extend(vals.by_ref().take(w));
        }
        q.extend(vals.by_ref().take(d));
        qd.extend(vals.by_ref().take(d));
        qdd.extend(vals.by_ref().take(d));
    }
    let mut blocks: [Option<Block>; 8] = Default::default();
    for (i, v) in data.into_iter().enumerate() {
        if header.widths[i] > 0 {
            blocks[i] = Some(Block::new(header.widths[i], v));
        }
    }
    let oracle = (d > 0).then(|| Trajectory {
        q: Block::new(d, q),
        qd: Block::new(d, qd),
        qdd: Block::new(d, qdd),
    });
    let rec = SequenceRecord {
        id: header.id,
        profile: header.profile,
        tree: header.tree,
        fps: header.fps,
        subject_mass: header.subject_mass,
        marker_sites: header.marker_sites,
        blocks,
        oracle,
    };
    if rec.mask() != ChannelMask(header.mask) {
        return Err(HdysError::InvalidRecord("mask mismatch".into()));
    }
    rec.validate()?;
    Ok(rec)
}

pub fn write_record(path: &Path, rec: &SequenceRecord) -> Result<()> {
    atomic_write(path, &encode_record(rec))
}

pub fn read_record(path: &Path) -> Result<SequenceRecord> {
    decode_record(&std::fs::read(path)?)
}
