//! World surfaces as binary STL: an 80-byte header, a u32 triangle count,
//! then 50 bytes per triangle (normal, three vertices, attribute word), all
//! little-endian f32.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::Result;
use crate::geometry::Point3;
use crate::io::{io_error, parse_error};
use crate::sim::mesh::{TriMesh, Triangle};

const TRIANGLE_LEN: usize = 50;

pub fn write_stl(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(84 + mesh.len() * TRIANGLE_LEN);
    let mut header = [0u8; 80];
    let tag = b"tunnel world surface";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.len() as u32).to_le_bytes());
    for t in &mesh.triangles {
        let e1 = t.b.vector() - t.a.vector();
        let e2 = t.c.vector() - t.a.vector();
        let cross = e1.cross(&e2);
        let n = if cross.norm() > 0.0 {
            cross.normalize()
        } else {
            Vector3::zeros()
        };
        for v in [
            n.x, n.y, n.z, t.a.x, t.a.y, t.a.z, t.b.x, t.b.y, t.b.z, t.c.x, t.c.y, t.c.z,
        ] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

pub fn read_stl(path: &Path) -> Result<TriMesh> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    if bytes.len() < 84 {
        return Err(parse_error(
            path,
            bytes.len() as u64,
            "file too short for an STL header",
        ));
    }
    if bytes.starts_with(b"solid ") {
        return Err(parse_error(path, 0, "ASCII STL is not supported, use binary"));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().expect("slice of length 4")) as usize;
    let need = 84 + count * TRIANGLE_LEN;
    if bytes.len() < need {
        return Err(parse_error(
            path,
            bytes.len() as u64,
            format!("truncated: need {need} bytes for {count} triangles"),
        ));
    }
    if bytes.len() > need {
        return Err(parse_error(path, need as u64, "trailing bytes after the last triangle"));
    }
    let mut mesh = TriMesh::new();
    for i in 0..count {
        let base = 84 + i * TRIANGLE_LEN;
        let mut coords = [0.0f32; 9];
        for (j, c) in coords.iter_mut().enumerate() {
            // The first 12 bytes of each record hold the normal, which the
            // geometry itself determines; skip it.
            let at = base + 12 + j * 4;
            *c = f32::from_le_bytes(bytes[at..at + 4].try_into().expect("slice of length 4"));
            if !c.is_finite() {
                return Err(parse_error(path, at as u64, "non-finite vertex coordinate"));
            }
        }
        mesh.push(Triangle::new(
            Point3::new(coords[0] as f64, coords[1] as f64, coords[2] as f64),
            Point3::new(coords[3] as f64, coords[4] as f64, coords[5] as f64),
            Point3::new(coords[6] as f64, coords[7] as f64, coords[8] as f64),
        ));
    }
    Ok(mesh)
}
