use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SparcError};

/// How the k active latents of a sample are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// One index set per sample from the sum of all streams' logits.
    Global,
    /// Each stream picks its own top-k.
    Local,
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMode::Global => "global",
            SelectionMode::Local => "local",
        })
    }
}

impl FromStr for SelectionMode {
    type Err = SparcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(Self::Global),
            "local" => Ok(Self::Local),
            other => Err(SparcError::Config(format!(
                "unknown mode `{other}` (expected global or local)"
            ))),
        }
    }
}

/// Encoder and decoder of one stream.
///
/// `w_enc` is `(L, d)`, `w_dec` is `(d, L)`. Decoder columns are kept at unit
/// norm by the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamParams {
    pub name: String,
    pub w_enc: Array2<f64>,
    pub b_pre: Array1<f64>,
    pub b_lat: Array1<f64>,
    pub w_dec: Array2<f64>,
}

impl StreamParams {
    pub fn zeros(name: &str, dim: usize, latent_dim: usize) -> Self {
        Self {
            name: name.to_string(),
            w_enc: Array2::zeros((latent_dim, dim)),
            b_pre: Array1::zeros(dim),
            b_lat: Array1::zeros(latent_dim),
            w_dec: Array2::zeros((dim, latent_dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.b_pre.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.b_lat.len()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (d, l) = (self.dim(), self.latent_dim());
        if self.w_enc.dim() != (l, d) || self.w_dec.dim() != (d, l) {
            return Err(SparcError::Shape(format!(
                "stream `{}`: w_enc {:?}, w_dec {:?}, expected ({l}, {d}) and ({d}, {l})",
                self.name,
                self.w_enc.dim(),
                self.w_dec.dim()
            )));
        }
        Ok(())
    }

    pub fn decoder_column_norms(&self) -> Array1<f64> {
        self.w_dec
            .map_axis(Axis(0), |c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Largest `|‖column‖ − 1|` over decoder columns.
    pub fn max_norm_deviation(&self) -> f64 {
        self.decoder_column_norms()
            .iter()
            .map(|n| (n - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn normalize_decoder(&mut self) {
        for mut col in self.w_dec.columns_mut() {
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                col.mapv_inplace(|v| v / norm);
            }
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.w_enc.len() + self.b_pre.len() + self.b_lat.len() + self.w_dec.len()
    }
}

/// The full learnable state: one [`StreamParams`] per stream, sharing `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub latent_dim: usize,
    pub streams: Vec<StreamParams>,
}

impl ModelParams {
    pub fn new(latent_dim: usize, streams: Vec<StreamParams>) -> Result<Self> {
        let model = Self {
            latent_dim,
            streams,
        };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn check_shapes(&self) -> Result<()> {
        let mut names = std::collections::HashSet::new();
        for s in &self.streams {
            s.check_shapes()?;
            if s.latent_dim() != self.latent_dim {
                return Err(SparcError::Shape(format!(
                    "stream `{}` has latent dim {}, model has {}",
                    s.name,
                    s.latent_dim(),
                    self.latent_dim
                )));
            }
            if !names.insert(s.name.as_str()) {
                return Err(SparcError::DuplicateStream(s.name.clone()));
            }
        }
        Ok(())
    }

    pub fn num_streams(&self) -> usize {
        self.streams.len()
    }

    pub fn stream_names(&self) -> Vec<String> {
        self.streams.iter().map(|s| s.name.clone()).collect()
    }

    pub fn stream_index(&self, name: &str) -> Option<usize> {
        self.streams.iter().position(|s| s.name == name)
    }

    pub fn max_norm_deviation(&self) -> f64 {
        self.streams
            .iter()
            .map(StreamParams::max_norm_deviation)
            .fold(0.0, f64::max)
    }

    /// Checks that `names` lists exactly this model's streams in order.
    pub fn check_streams(&self, names: &[String]) -> Result<()> {
        let ours = self.stream_names();
        if ours != names {
            return Err(SparcError::Shape(format!(
                "model streams {ours:?} do not match data streams {names:?}"
            )));
        }
        Ok(())
    }
}
