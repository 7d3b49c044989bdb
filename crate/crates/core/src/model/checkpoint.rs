//! Checkpoint files.
//!
//! `checkpoint.json` holds the header. Each stream has a flat f32 LE blob
//! laid out as `W_E (L×d)`, `b_pre (d)`, `b_lat (L)`, `W_D (d×L)`, each
//! row-major, named in the header.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SparcError};
use crate::model::{ModelParams, SelectionMode, StreamParams};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const FORMAT: &str = "sparc-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStream {
    pub name: String,
    pub dim: usize,
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    #[serde(rename = "L")]
    pub latent_dim: usize,
    pub k: usize,
    pub mode: SelectionMode,
    pub streams: Vec<CheckpointStream>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(
        params: ModelParams,
        k: usize,
        mode: SelectionMode,
        metadata: serde_json::Value,
    ) -> Self {
        let streams = params
            .streams
            .iter()
            .map(|s| CheckpointStream {
                name: s.name.clone(),
                dim: s.dim(),
                file: PathBuf::from(format!("{}.params.bin", s.name)),
            })
            .collect();
        Self {
            header: CheckpointHeader {
                format: FORMAT.into(),
                version: VERSION,
                latent_dim: params.latent_dim,
                k,
                mode,
                streams,
                metadata,
            },
            params,
        }
    }

    /// Writes the header and blobs into `dir`; returns the header path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| SparcError::io(dir, e))?;
        for (spec, p) in self.header.streams.iter().zip(&self.params.streams) {
            let path = dir.join(&spec.file);
            let mut bytes = Vec::with_capacity(p.num_parameters() * 4);
            let parts = [
                p.w_enc.as_standard_layout().into_owned().into_raw_vec_and_offset().0,
                p.b_pre.to_vec(),
                p.b_lat.to_vec(),
                p.w_dec.as_standard_layout().into_owned().into_raw_vec_and_offset().0,
            ];
            for v in parts.iter().flatten() {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            let mut f = std::fs::File::create(&path).map_err(|e| SparcError::io(&path, e))?;
            f.write_all(&bytes).map_err(|e| SparcError::io(&path, e))?;
        }
        let path = dir.join(CHECKPOINT_FILE);
        let text = serde_json::to_string_pretty(&self.header)
            .map_err(|e| SparcError::format("checkpoint", e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| SparcError::io(&path, e))?;
        Ok(path)
    }

    /// Loads from a header path or from a directory containing one.
    pub fn load(path: &Path) -> Result<Self> {
        let header_path = if path.is_dir() {
            path.join(CHECKPOINT_FILE)
        } else {
            path.to_path_buf()
        };
        let dir = header_path.parent().unwrap_or(Path::new("."));
        let text =
            std::fs::read_to_string(&header_path).map_err(|e| SparcError::io(&header_path, e))?;
        let header: CheckpointHeader = serde_json::from_str(&text).map_err(|e| {
            SparcError::format("checkpoint", format!("{}: {e}", header_path.display()))
        })?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(SparcError::format(
                "checkpoint",
                format!("unsupported format {} v{}", header.format, header.version),
            ));
        }
        let l = header.latent_dim;
        let mut streams = Vec::with_capacity(header.streams.len());
        for spec in &header.streams {
            let path = dir.join(&spec.file);
            let bytes = std::fs::read(&path).map_err(|e| SparcError::io(&path, e))?;
            let d = spec.dim;
            let count = 2 * l * d + d + l;
            if bytes.len() != count * 4 {
                return Err(SparcError::SizeMismatch {
                    path,
                    expected: (count * 4) as u64,
                    found: bytes.len() as u64,
                });
            }
            let vals: Vec<f64> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let (w_enc, rest) = vals.split_at(l * d);
            let (b_pre, rest) = rest.split_at(d);
            let (b_lat, w_dec) = rest.split_at(l);
            streams.push(StreamParams {
                name: spec.name.clone(),
                w_enc: Array2::from_shape_vec((l, d), w_enc.to_vec()).expect("shape"),
                b_pre: Array1::from(b_pre.to_vec()),
                b_lat: Array1::from(b_lat.to_vec()),
                w_dec: Array2::from_shape_vec((d, l), w_dec.to_vec()).expect("shape"),
            });
        }
        let params = ModelParams::new(l, streams)?;
        Ok(Self { header, params })
    }
}
