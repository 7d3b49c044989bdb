//! Synthetic multi-stream datasets with planted shared sparse codes.
//!
//! Every sample draws one sparse code `z*` over `L*` true latents; each
//! stream observes `A^s z* + noise` through its own fixed mixing matrix.
//! Labels come from the strongest true latent, so the planted concept of a
//! latent is known.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SparcError};
use crate::store::{LabelSet, StoreManifest, StoreWriter, Taxonomy};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const TAXONOMY_ROOT: &str = "entity";
/// Classes per intermediate taxonomy group.
pub const CLASSES_PER_GROUP: usize = 4;
pub const MAGNITUDE_RANGE: (f64, f64) = (0.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MixingKind {
    /// Gaussian entries, columns scaled to unit norm.
    #[default]
    Gaussian,
    /// `A^s = I`; needs `d_s = L*`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub stream_dims: Vec<usize>,
    /// Defaults to `s0, s1, ...`.
    pub stream_names: Option<Vec<String>>,
    pub n_samples: usize,
    pub true_latents: usize,
    pub true_sparsity: usize,
    pub noise_std: f64,
    pub n_label_classes: usize,
    pub seed: u64,
    pub mixing: MixingKind,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            stream_dims: vec![64, 96, 128],
            stream_names: None,
            n_samples: 20_000,
            true_latents: 256,
            true_sparsity: 8,
            noise_std: 0.01,
            n_label_classes: 16,
            seed: 42,
            mixing: MixingKind::Gaussian,
        }
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SparcError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| SparcError::format("synth config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SparcError::Config(msg));
        if self.stream_dims.is_empty() {
            return fail("stream_dims must not be empty".into());
        }
        if self.stream_dims.contains(&0) {
            return fail("all stream dims must be >= 1".into());
        }
        if let Some(names) = &self.stream_names {
            if names.len() != self.stream_dims.len() {
                return fail(format!(
                    "{} stream names for {} streams",
                    names.len(),
                    self.stream_dims.len()
                ));
            }
        }
        if self.true_latents == 0 {
            return fail("true_latents must be >= 1".into());
        }
        if self.true_sparsity == 0 || self.true_sparsity > self.true_latents {
            return fail(format!(
                "true_sparsity must be in 1..={}, got {}",
                self.true_latents, self.true_sparsity
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail(format!("noise_std must be finite and >= 0, got {}", self.noise_std));
        }
        if self.n_label_classes == 0 || self.n_label_classes > self.true_latents {
            return fail(format!(
                "n_label_classes must be in 1..={}, got {}",
                self.true_latents, self.n_label_classes
            ));
        }
        if self.mixing == MixingKind::Identity
            && self.stream_dims.iter().any(|&d| d != self.true_latents)
        {
            return fail("identity mixing needs every stream dim equal to true_latents".into());
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.stream_names
            .clone()
            .unwrap_or_else(|| (0..self.stream_dims.len()).map(|s| format!("s{s}")).collect())
    }
}

/// Planted structure of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub streams: Vec<String>,
    /// Per sample, `(latent, value)` pairs in ascending latent order.
    pub codes: Vec<Vec<(usize, f64)>>,
    /// Per stream, row-major `(d_s, L*)`.
    pub mixing: Vec<Vec<Vec<f64>>>,
    pub latent_to_class: Vec<usize>,
    pub class_names: Vec<String>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SparcError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| SparcError::format("ground truth", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| SparcError::format("ground truth", e.to_string()))?;
        std::fs::write(path, text).map_err(|e| SparcError::io(path, e))
    }

    pub fn dense_codes(&self) -> Array2<f64> {
        let mut z = Array2::zeros((self.codes.len(), self.config.true_latents));
        for (i, code) in self.codes.iter().enumerate() {
            for &(j, v) in code {
                z[[i, j]] = v;
            }
        }
        z
    }

    pub fn mixing_matrix(&self, stream: usize) -> Array2<f64> {
        let rows = &self.mixing[stream];
        let cols = rows.first().map_or(0, Vec::len);
        Array2::from_shape_fn((rows.len(), cols), |(r, c)| rows[r][c])
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest_path: PathBuf,
    pub manifest: StoreManifest,
    pub ground_truth: GroundTruth,
}

pub fn class_of_latent(latent: usize, n_classes: usize) -> usize {
    latent % n_classes
}

pub fn class_names(n_classes: usize) -> Vec<String> {
    let width = n_classes.saturating_sub(1).to_string().len().max(2);
    (0..n_classes).map(|c| format!("class_{c:0width$}")).collect()
}

fn group_name(group: usize) -> String {
    format!("group_{group}")
}

/// `entity -> group_g -> class_c`, with `g = c / CLASSES_PER_GROUP`.
pub fn class_taxonomy(n_classes: usize) -> Result<Taxonomy> {
    let classes = class_names(n_classes);
    let groups: Vec<String> = (0..n_classes.div_ceil(CLASSES_PER_GROUP)).map(group_name).collect();
    let mut edges: Vec<(&str, &str)> = groups.iter().map(|g| (g.as_str(), TAXONOMY_ROOT)).collect();
    for (c, name) in classes.iter().enumerate() {
        edges.push((name.as_str(), groups[c / CLASSES_PER_GROUP].as_str()));
    }
    Taxonomy::from_edges(TAXONOMY_ROOT, edges)
}

fn mixing_matrix<R: Rng>(kind: MixingKind, dim: usize, latents: usize, rng: &mut R) -> Array2<f64> {
    match kind {
        MixingKind::Identity => Array2::eye(latents),
        MixingKind::Gaussian => {
            let mut a = Array2::from_shape_simple_fn((dim, latents), || rng.sample::<f64, _>(StandardNormal));
            for mut col in a.axis_iter_mut(Axis(1)) {
                let norm = col.dot(&col).sqrt();
                if norm > 0.0 {
                    col /= norm;
                }
            }
            a
        }
    }
}

/// Draws a store in memory: per-stream data, codes and labels.
pub fn sample(config: &SynthConfig) -> Result<(Vec<Array2<f64>>, GroundTruth, Vec<usize>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let latents = config.true_latents;
    let mixing: Vec<Array2<f64>> = config
        .stream_dims
        .iter()
        .map(|&d| mixing_matrix(config.mixing, d, latents, &mut rng))
        .collect();
    let magnitude = Uniform::new(MAGNITUDE_RANGE.0, MAGNITUDE_RANGE.1)
        .map_err(|e| SparcError::Config(e.to_string()))?;
    let noise = (config.noise_std > 0.0)
        .then(|| Normal::new(0.0, config.noise_std))
        .transpose()
        .map_err(|e| SparcError::Config(e.to_string()))?;

    let n = config.n_samples;
    let mut data: Vec<Array2<f64>> = config.stream_dims.iter().map(|&d| Array2::zeros((n, d))).collect();
    let mut codes = Vec::with_capacity(n);
    let mut classes = Vec::with_capacity(n);
    let mut z = Array1::zeros(latents);
    for i in 0..n {
        let mut support = sample_indices(&mut rng, latents, config.true_sparsity).into_vec();
        support.sort_unstable();
        let code: Vec<(usize, f64)> = support.iter().map(|&j| (j, magnitude.sample(&mut rng))).collect();
        z.fill(0.0);
        for &(j, v) in &code {
            z[j] = v;
        }
        let (top, _) = code
            .iter()
            .fold((code[0].0, code[0].1), |best, &(j, v)| if v > best.1 { (j, v) } else { best });
        classes.push(class_of_latent(top, config.n_label_classes));
        for (x, a) in data.iter_mut().zip(&mixing) {
            let mut row = x.row_mut(i);
            row.assign(&a.dot(&z));
            if let Some(dist) = &noise {
                row.mapv_inplace(|v| v + dist.sample(&mut rng));
            }
        }
        codes.push(code);
    }

    let truth = GroundTruth {
        config: config.clone(),
        streams: config.names(),
        codes,
        mixing: mixing
            .iter()
            .map(|a| a.outer_iter().map(|r| r.to_vec()).collect())
            .collect(),
        latent_to_class: (0..latents).map(|j| class_of_latent(j, config.n_label_classes)).collect(),
        class_names: class_names(config.n_label_classes),
    };
    Ok((data, truth, classes))
}

/// Writes a store plus `ground_truth.json` into `out_dir`.
pub fn generate(config: &SynthConfig, out_dir: &Path) -> Result<SynthOutput> {
    let (data, truth, classes) = sample(config)?;
    let mut counts = vec![0usize; config.n_label_classes];
    for &c in &classes {
        counts[c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(SparcError::Config(format!(
            "class {} received no samples; increase n_samples or reduce n_label_classes",
            truth.class_names[empty]
        )));
    }
    let labels = LabelSet::new(classes.iter().map(|&c| vec![truth.class_names[c].clone()]).collect());

    let mut writer = StoreWriter::new(out_dir)?;
    for (name, x) in truth.streams.iter().zip(&data) {
        writer.add_stream_f64(name, x.view())?;
    }
    writer
        .labels(labels)
        .taxonomy(class_taxonomy(config.n_label_classes)?)
        .metadata(serde_json::json!({
            "generator": "synth",
            "ground_truth_file": GROUND_TRUTH_FILE,
            "config": config,
        }));
    let manifest_path = writer.finish()?;
    truth.save(&out_dir.join(GROUND_TRUTH_FILE))?;
    Ok(SynthOutput {
        manifest: StoreManifest::load(&manifest_path)?,
        manifest_path,
        ground_truth: truth,
    })
}
