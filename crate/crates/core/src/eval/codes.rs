use rayon::prelude::*;

use crate::error::Result;
use crate::model::{forward, ModelParams, SelectionMode};
use crate::store::{BatchRange, FeatureBatch};

pub const DEFAULT_CHUNK: usize = 512;

/// Sparse rectified codes of an evaluation set. Only strictly positive
/// activations are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCodes {
    pub latent_dim: usize,
    pub streams: Vec<String>,
    /// Store ids of the encoded samples, ascending by position.
    pub sample_ids: Vec<usize>,
    /// `[stream][position]` → ascending `(latent, activation)` pairs.
    pub codes: Vec<Vec<Vec<(usize, f64)>>>,
}

impl LatentCodes {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn num_streams(&self) -> usize {
        self.streams.len()
    }

    pub fn stream_index(&self, name: &str) -> Option<usize> {
        self.streams.iter().position(|s| s == name)
    }

    /// `z^s_j` at `position`.
    pub fn activation(&self, stream: usize, position: usize, latent: usize) -> f64 {
        let row = &self.codes[stream][position];
        row.binary_search_by_key(&latent, |p| p.0)
            .map_or(0.0, |i| row[i].1)
    }

    /// Per latent, the `(position, activation)` pairs where it fires for
    /// `stream`, positions ascending.
    pub fn postings(&self, stream: usize) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.latent_dim];
        for (pos, row) in self.codes[stream].iter().enumerate() {
            for &(j, v) in row {
                out[j].push((pos, v));
            }
        }
        out
    }

    /// Multiplies every activation of `stream` by `c`.
    pub fn scale_stream(&mut self, stream: usize, c: f64) {
        for row in &mut self.codes[stream] {
            for p in row {
                p.1 *= c;
            }
        }
    }
}

/// Encodes every row of `data`. Chunks run in parallel; the result does not
/// depend on the thread count.
pub fn encode_dataset(
    model: &ModelParams,
    data: &FeatureBatch,
    mode: SelectionMode,
    k: usize,
) -> Result<LatentCodes> {
    model.check_streams(&data.streams)?;
    let n = data.len();
    let starts: Vec<usize> = (0..n).step_by(DEFAULT_CHUNK).collect();
    let parts: Vec<Vec<Vec<Vec<(usize, f64)>>>> = starts
        .par_iter()
        .map(|&start| {
            let part = data.slice(BatchRange::new(start, (start + DEFAULT_CHUNK).min(n)));
            let out = forward(model, &part, mode, k, false)?;
            let code = &out.code;
            Ok((0..model.num_streams())
                .map(|s| {
                    (0..part.len())
                        .map(|r| code.active(s, r).map(|j| (j, code.codes[s][[r, j]])).collect())
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut codes = vec![Vec::with_capacity(n); model.num_streams()];
    for part in parts {
        for (s, rows) in part.into_iter().enumerate() {
            codes[s].extend(rows);
        }
    }
    Ok(LatentCodes {
        latent_dim: model.latent_dim,
        streams: model.stream_names(),
        sample_ids: data.sample_ids.clone(),
        codes,
    })
}
