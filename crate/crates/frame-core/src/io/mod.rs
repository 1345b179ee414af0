//! On-disk formats for every artifact the pipeline produces or consumes:
//! point clouds (PCD), trajectories (CSV), descriptor records (FRDS), depth
//! images (PGM), world surfaces (STL), and JSON reports with ground-truth
//! sidecars. Readers reject malformed input with the file path and the byte
//! offset of the offending content.

pub mod frds;
pub mod pcd;
pub mod pgm;
pub mod sidecar;
pub mod stl;
pub mod traj_csv;

pub use frds::{read_frds, write_frds};
pub use pcd::{read_pcd, write_pcd_ascii, write_pcd_binary};
pub use pgm::{read_pgm, write_pgm};
pub use sidecar::{read_json, scenario_sidecar, write_json, RunMeta, ScenarioSidecar};
pub use stl::{read_stl, write_stl};
pub use traj_csv::{read_trajectory_csv, write_trajectory_csv};

use std::path::Path;

use crate::error::FrameError;

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> FrameError {
    FrameError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn parse_error(path: &Path, offset: u64, message: impl Into<String>) -> FrameError {
    FrameError::Parse {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

/// Iterate over the lines of a byte buffer as (start_offset, line) pairs,
/// with the trailing `\n` and any `\r` stripped. The final unterminated
/// line, if any, is yielded too.
pub(crate) fn byte_lines(bytes: &[u8]) -> impl Iterator<Item = (u64, &[u8])> {
    let mut start = 0usize;
    std::iter::from_fn(move || {
        if start >= bytes.len() {
            return None;
        }
        let line_start = start;
        let rest = &bytes[start..];
        let (line, next) = match rest.iter().position(|&b| b == b'\n') {
            Some(i) => (&rest[..i], start + i + 1),
            None => (rest, bytes.len()),
        };
        start = next;
        let line = match line.last() {
            Some(b'\r') => &line[..line.len() - 1],
            _ => line,
        };
        Some((line_start as u64, line))
    })
}
