//! Per-stream flat binary files.
//!
//! Layout: `b"SPRC"`, version `u32` LE, sample_count `u64` LE, then
//! `sample_count * dim` row-major `f32` LE values.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, SparcError};

pub const MAGIC: [u8; 4] = *b"SPRC";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 16;

pub fn encode_header(sample_count: u64) -> [u8; 16] {
    let mut h = [0u8; 16];
    h[..4].copy_from_slice(&MAGIC);
    h[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[8..].copy_from_slice(&sample_count.to_le_bytes());
    h
}

/// Reads and checks the header, then checks the file length against
/// `sample_count * dim`.
pub fn validate_file(path: &Path, file: &File, sample_count: usize, dim: usize) -> Result<()> {
    let len = file.metadata().map_err(|e| SparcError::io(path, e))?.len();
    let expected = HEADER_LEN + (sample_count as u64) * (dim as u64) * 4;
    if len < HEADER_LEN {
        return Err(SparcError::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            found: len,
        });
    }
    let mut header = [0u8; 16];
    (&*file)
        .read_exact(&mut header)
        .map_err(|e| SparcError::io(path, e))?;
    if header[..4] != MAGIC {
        return Err(SparcError::format(
            "data file",
            format!("{}: bad magic {:?}", path.display(), &header[..4]),
        ));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(SparcError::format(
            "data file",
            format!("{}: unsupported version {version}", path.display()),
        ));
    }
    let count = u64::from_le_bytes(header[8..].try_into().unwrap());
    if count != sample_count as u64 {
        return Err(SparcError::format(
            "data file",
            format!(
                "{}: header sample_count {count} disagrees with manifest {sample_count}",
                path.display()
            ),
        ));
    }
    if len != expected {
        return Err(SparcError::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            found: len,
        });
    }
    Ok(())
}

/// Writes a complete stream file from row-major values.
pub fn write_file(path: &Path, sample_count: usize, values: &[f32]) -> Result<()> {
    let file = File::create(path).map_err(|e| SparcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| SparcError::io(path, e);
    w.write_all(&encode_header(sample_count as u64)).map_err(io)?;
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn decode_f32s(bytes: &[u8], out: &mut Vec<f64>) {
    out.extend(
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64),
    );
}
