//! Point clouds as PCD v0.7, the `x y z` float dialect, in both ASCII and
//! little-endian binary bodies. Coordinates are stored as f32.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{FrameError, Result};
use crate::geometry::{Point3, PointCloud};
use crate::io::{byte_lines, io_error, parse_error};

fn header(points: usize, data: &str) -> String {
    format!(
        "# .PCD v0.7 - Point Cloud Data file format\n\
         VERSION 0.7\n\
         FIELDS x y z\n\
         SIZE 4 4 4\n\
         TYPE F F F\n\
         COUNT 1 1 1\n\
         WIDTH {points}\n\
         HEIGHT 1\n\
         VIEWPOINT 0 0 0 1 0 0 0\n\
         POINTS {points}\n\
         DATA {data}\n"
    )
}

fn check_finite(cloud: &PointCloud) -> Result<()> {
    match cloud.first_non_finite() {
        Some(index) => Err(FrameError::NonFinitePoint { index }),
        None => Ok(()),
    }
}

/// Write a cloud with an ASCII body, one `x y z` row per point. Values are
/// printed as the shortest decimal that reproduces the f32 exactly.
pub fn write_pcd_ascii(cloud: &PointCloud, path: &Path) -> Result<()> {
    check_finite(cloud)?;
    let mut out = Vec::with_capacity(cloud.len() * 24 + 256);
    out.extend_from_slice(header(cloud.len(), "ascii").as_bytes());
    for p in cloud.iter() {
        writeln!(out, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)
            .expect("writing to a Vec cannot fail");
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

/// Write a cloud with a little-endian binary body, 12 bytes per point.
pub fn write_pcd_binary(cloud: &PointCloud, path: &Path) -> Result<()> {
    check_finite(cloud)?;
    let mut out = Vec::with_capacity(cloud.len() * 12 + 256);
    out.extend_from_slice(header(cloud.len(), "binary").as_bytes());
    for p in cloud.iter() {
        for v in [p.x as f32, p.y as f32, p.z as f32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

struct Header {
    points: usize,
    binary: bool,
    /// Byte offset of the first body byte.
    body_start: u64,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let mut width: Option<u64> = None;
    let mut height: Option<u64> = None;
    let mut points: Option<u64> = None;
    let mut seen = [false; 4]; // fields, size, type, count
    for (offset, raw) in byte_lines(bytes) {
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_error(path, offset, "header line is not valid utf-8"))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let keyword = tokens.next().expect("non-empty line has a first token");
        let rest: Vec<&str> = tokens.collect();
        let expect = |want: &[&str], what: &str| -> Result<()> {
            if rest == want {
                Ok(())
            } else {
                Err(parse_error(
                    path,
                    offset,
                    format!("unsupported {what}: expected `{}`", want.join(" ")),
                ))
            }
        };
        match keyword {
            "VERSION" => expect(&["0.7"], "version")?,
            "FIELDS" => {
                expect(&["x", "y", "z"], "field layout")?;
                seen[0] = true;
            }
            "SIZE" => {
                expect(&["4", "4", "4"], "field sizes")?;
                seen[1] = true;
            }
            "TYPE" => {
                expect(&["F", "F", "F"], "field types")?;
                seen[2] = true;
            }
            "COUNT" => {
                expect(&["1", "1", "1"], "field counts")?;
                seen[3] = true;
            }
            "WIDTH" => width = Some(parse_count(&rest, path, offset, "WIDTH")?),
            "HEIGHT" => height = Some(parse_count(&rest, path, offset, "HEIGHT")?),
            "VIEWPOINT" => {}
            "POINTS" => points = Some(parse_count(&rest, path, offset, "POINTS")?),
            "DATA" => {
                let binary = match rest.as_slice() {
                    ["ascii"] => false,
                    ["binary"] => true,
                    _ => return Err(parse_error(path, offset, "DATA must be ascii or binary")),
                };
                if !seen.iter().all(|&s| s) {
                    return Err(parse_error(
                        path,
                        offset,
                        "header is missing FIELDS, SIZE, TYPE, or COUNT",
                    ));
                }
                let (Some(w), Some(h), Some(n)) = (width, height, points) else {
                    return Err(parse_error(
                        path,
                        offset,
                        "header is missing WIDTH, HEIGHT, or POINTS",
                    ));
                };
                if w.checked_mul(h) != Some(n) {
                    return Err(parse_error(
                        path,
                        offset,
                        format!("WIDTH x HEIGHT ({w} x {h}) does not equal POINTS ({n})"),
                    ));
                }
                let body_start = offset + raw.len() as u64 + 1;
                return Ok(Header {
                    points: n as usize,
                    binary,
                    body_start: body_start.min(bytes.len() as u64),
                });
            }
            other => {
                return Err(parse_error(
                    path,
                    offset,
                    format!("unknown header keyword `{other}`"),
                ))
            }
        }
    }
    Err(parse_error(
        path,
        bytes.len() as u64,
        "header ended without a DATA line",
    ))
}

fn parse_count(rest: &[&str], path: &Path, offset: u64, what: &str) -> Result<u64> {
    match rest {
        [token] => token
            .parse::<u64>()
            .map_err(|_| parse_error(path, offset, format!("{what} is not a whole number"))),
        _ => Err(parse_error(
            path,
            offset,
            format!("{what} takes exactly one value"),
        )),
    }
}

/// Read a PCD file in either body encoding.
pub fn read_pcd(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    let header = parse_header(&bytes, path)?;
    let body = &bytes[header.body_start as usize..];
    if header.binary {
        read_binary_body(body, header.body_start, header.points, path)
    } else {
        read_ascii_body(body, header.body_start, header.points, path)
    }
}

fn read_ascii_body(body: &[u8], base: u64, points: usize, path: &Path) -> Result<PointCloud> {
    let mut cloud = PointCloud::new();
    for (rel, raw) in byte_lines(body) {
        let offset = base + rel;
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_error(path, offset, "data line is not valid utf-8"))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                offset,
                format!("expected 3 coordinates per row, found {}", fields.len()),
            ));
        }
        let mut coords = [0.0f32; 3];
        for (c, field) in coords.iter_mut().zip(&fields) {
            let v: f32 = field
                .parse()
                .map_err(|_| parse_error(path, offset, format!("bad coordinate `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_error(path, offset, "non-finite coordinate"));
            }
            *c = v;
        }
        if cloud.len() == points {
            return Err(parse_error(path, offset, "more rows than POINTS declares"));
        }
        cloud.push(Point3::new(coords[0] as f64, coords[1] as f64, coords[2] as f64));
    }
    if cloud.len() != points {
        return Err(parse_error(
            path,
            (base as usize + body.len()) as u64,
            format!("expected {points} points, file has {}", cloud.len()),
        ));
    }
    Ok(cloud)
}

fn read_binary_body(body: &[u8], base: u64, points: usize, path: &Path) -> Result<PointCloud> {
    let need = points * 12;
    if body.len() < need {
        return Err(parse_error(
            path,
            (base as usize + body.len()) as u64,
            format!("binary body truncated: need {need} bytes, have {}", body.len()),
        ));
    }
    if body.len() > need {
        return Err(parse_error(
            path,
            (base as usize + need) as u64,
            "trailing bytes after the last point",
        ));
    }
    let mut cloud = PointCloud::new();
    for (i, record) in body.chunks_exact(12).enumerate() {
        let mut coords = [0.0f32; 3];
        for (j, c) in coords.iter_mut().enumerate() {
            let raw: [u8; 4] = record[j * 4..j * 4 + 4]
                .try_into()
                .expect("chunk has exactly 12 bytes");
            *c = f32::from_le_bytes(raw);
            if !c.is_finite() {
                return Err(parse_error(
                    path,
                    (base as usize + i * 12 + j * 4) as u64,
                    "non-finite coordinate",
                ));
            }
        }
        cloud.push(Point3::new(coords[0] as f64, coords[1] as f64, coords[2] as f64));
    }
    Ok(cloud)
}
