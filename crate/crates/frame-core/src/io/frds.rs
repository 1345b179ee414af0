//! Descriptor record sets as a compact binary format: magic `FRDS`, a
//! format version (u16), a record count (u32), then fixed-size records of
//! timestep (u32), position (3 x f64), place descriptor (64 x f32), and
//! orientation profile (64 x f32). Everything is little-endian. Place
//! descriptors are renormalized on load, since the f32 round trip erodes
//! their unit norm.

use std::fs;
use std::path::Path;

use crate::descriptor::{DescriptorRecord, OrientDescriptor, QueryDescriptor, DESCRIPTOR_LEN};
use crate::error::Result;
use crate::geometry::Point3;
use crate::io::{io_error, parse_error};

pub const FRDS_MAGIC: [u8; 4] = *b"FRDS";
pub const FRDS_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4;
const RECORD_LEN: usize = 4 + 3 * 8 + DESCRIPTOR_LEN * 4 + DESCRIPTOR_LEN * 4;

pub fn write_frds(records: &[DescriptorRecord], path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * RECORD_LEN);
    out.extend_from_slice(&FRDS_MAGIC);
    out.extend_from_slice(&FRDS_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&r.timestep.to_le_bytes());
        for v in [r.position.x, r.position.y, r.position.z] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in r.query.values() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        for v in r.orient.values() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

pub fn read_frds(path: &Path) -> Result<Vec<DescriptorRecord>> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(parse_error(path, bytes.len() as u64, "file too short for a header"));
    }
    if bytes[0..4] != FRDS_MAGIC {
        return Err(parse_error(path, 0, "bad magic, not an FRDS file"));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().expect("slice of length 2"));
    if version != FRDS_VERSION {
        return Err(parse_error(
            path,
            4,
            format!("unsupported version {version}, expected {FRDS_VERSION}"),
        ));
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().expect("slice of length 4")) as usize;
    let need = HEADER_LEN + count * RECORD_LEN;
    if bytes.len() < need {
        return Err(parse_error(
            path,
            bytes.len() as u64,
            format!("truncated: need {need} bytes for {count} records"),
        ));
    }
    if bytes.len() > need {
        return Err(parse_error(path, need as u64, "trailing bytes after the last record"));
    }
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let base = HEADER_LEN + i * RECORD_LEN;
        let rec = &bytes[base..base + RECORD_LEN];
        let timestep = u32::from_le_bytes(rec[0..4].try_into().expect("slice of length 4"));
        let mut position = [0.0f64; 3];
        for (j, v) in position.iter_mut().enumerate() {
            *v = f64::from_le_bytes(
                rec[4 + j * 8..12 + j * 8].try_into().expect("slice of length 8"),
            );
            if !v.is_finite() {
                return Err(parse_error(
                    path,
                    (base + 4 + j * 8) as u64,
                    "non-finite position coordinate",
                ));
            }
        }
        let q_base = 4 + 24;
        let w_base = q_base + DESCRIPTOR_LEN * 4;
        let read_block = |block_base: usize| -> Result<[f64; DESCRIPTOR_LEN]> {
            let mut out = [0.0f64; DESCRIPTOR_LEN];
            for (j, v) in out.iter_mut().enumerate() {
                let at = block_base + j * 4;
                let raw = f32::from_le_bytes(rec[at..at + 4].try_into().expect("slice of length 4"));
                if !raw.is_finite() {
                    return Err(parse_error(path, (base + at) as u64, "non-finite descriptor value"));
                }
                *v = raw as f64;
            }
            Ok(out)
        };
        let query = QueryDescriptor::normalized(read_block(q_base)?);
        let orient = OrientDescriptor::new(read_block(w_base)?)
            .map_err(|e| parse_error(path, (base + w_base) as u64, e.to_string()))?;
        records.push(DescriptorRecord {
            query,
            orient,
            position: Point3::new(position[0], position[1], position[2]),
            timestep,
        });
    }
    Ok(records)
}
