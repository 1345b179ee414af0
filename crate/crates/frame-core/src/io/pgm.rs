//! Depth images as 16-bit binary PGM for visual inspection. Ranges are
//! stored in millimeters (scaled by 1000), clamped to the u16 range, with
//! the most significant byte first as the PGM format requires.

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::io::{io_error, parse_error};
use crate::projection::DepthImage;

const MAXVAL: u32 = 65535;

pub fn write_pgm(image: &DepthImage, path: &Path) -> Result<()> {
    let header = format!("P5\n{} {}\n{MAXVAL}\n", image.width(), image.height());
    let mut out = Vec::with_capacity(header.len() + image.data().len() * 2);
    out.extend_from_slice(header.as_bytes());
    for &range in image.data() {
        let mm = (range * 1000.0).round().clamp(0.0, MAXVAL as f64) as u16;
        out.extend_from_slice(&mm.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

pub fn read_pgm(path: &Path) -> Result<DepthImage> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    let mut cursor = 0usize;
    let mut next_token = |what: &str| -> Result<(u64, String)> {
        // Skip whitespace and `#` comments between tokens.
        loop {
            match bytes.get(cursor) {
                Some(b) if b.is_ascii_whitespace() => cursor += 1,
                Some(b'#') => {
                    while cursor < bytes.len() && bytes[cursor] != b'\n' {
                        cursor += 1;
                    }
                }
                Some(_) => break,
                None => {
                    return Err(parse_error(
                        path,
                        bytes.len() as u64,
                        format!("file ended before {what}"),
                    ))
                }
            }
        }
        let start = cursor;
        while cursor < bytes.len() && !bytes[cursor].is_ascii_whitespace() {
            cursor += 1;
        }
        let token = std::str::from_utf8(&bytes[start..cursor])
            .map_err(|_| parse_error(path, start as u64, format!("{what} is not valid utf-8")))?;
        Ok((start as u64, token.to_string()))
    };

    let (off, magic) = next_token("the magic number")?;
    if magic != "P5" {
        return Err(parse_error(path, off, "not a binary PGM (magic must be P5)"));
    }
    let parse_dim = |(off, tok): (u64, String), what: &str| -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|_| parse_error(path, off, format!("bad {what} `{tok}`")))
    };
    let width = parse_dim(next_token("the width")?, "width")?;
    let height = parse_dim(next_token("the height")?, "height")?;
    let (off, maxval) = next_token("the maximum value")?;
    if maxval != MAXVAL.to_string() {
        return Err(parse_error(
            path,
            off,
            format!("expected 16-bit samples (maxval {MAXVAL}), found {maxval}"),
        ));
    }
    // Exactly one whitespace byte separates the header from the samples.
    match bytes.get(cursor) {
        Some(b) if b.is_ascii_whitespace() => cursor += 1,
        _ => return Err(parse_error(path, cursor as u64, "missing sample separator")),
    }
    let need = width * height * 2;
    let body = &bytes[cursor..];
    if body.len() < need {
        return Err(parse_error(
            path,
            bytes.len() as u64,
            format!("truncated: need {need} sample bytes, have {}", body.len()),
        ));
    }
    if body.len() > need {
        return Err(parse_error(
            path,
            (cursor + need) as u64,
            "trailing bytes after the last sample",
        ));
    }
    let mut image = DepthImage::zeros(height, width);
    for r in 0..height {
        for c in 0..width {
            let at = (r * width + c) * 2;
            let mm = u16::from_be_bytes([body[at], body[at + 1]]);
            image.set(r, c, mm as f64 / 1000.0);
        }
    }
    Ok(image)
}
