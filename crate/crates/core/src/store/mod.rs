//! Multi-stream feature store.
//!
//! A store is a directory holding `manifest.json`, one flat binary file per
//! stream, and optionally `labels.jsonl` and `taxonomy.json`. Row `i` of
//! every stream file describes the same underlying sample.

mod binfile;
mod labels;
mod manifest;
mod sampler;
mod taxonomy;

use std::fs::File;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, ArrayView2};

pub use binfile::{FORMAT_VERSION, HEADER_LEN, MAGIC};
pub use labels::LabelSet;
pub use manifest::{StoreManifest, StreamSpec, MANIFEST_VERSION};
pub use sampler::{contiguous_batch_order, BatchRange};
pub use taxonomy::Taxonomy;

use crate::error::{Result, SparcError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const TAXONOMY_FILE: &str = "taxonomy.json";

/// Co-indexed rows of every stream for one set of samples. Data is held in
/// f64 working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub sample_ids: Vec<usize>,
    pub streams: Vec<String>,
    pub data: Vec<Array2<f64>>,
}

impl FeatureBatch {
    pub fn new(sample_ids: Vec<usize>, streams: Vec<String>, data: Vec<Array2<f64>>) -> Result<Self> {
        if streams.len() != data.len() {
            return Err(SparcError::Shape(format!(
                "{} stream names for {} matrices",
                streams.len(),
                data.len()
            )));
        }
        if let Some((name, m)) = streams
            .iter()
            .zip(&data)
            .find(|(_, m)| m.nrows() != sample_ids.len())
        {
            return Err(SparcError::Shape(format!(
                "stream `{name}` has {} rows, expected {}",
                m.nrows(),
                sample_ids.len()
            )));
        }
        Ok(Self {
            sample_ids,
            streams,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn num_streams(&self) -> usize {
        self.streams.len()
    }

    pub fn stream(&self, name: &str) -> Option<&Array2<f64>> {
        self.streams
            .iter()
            .position(|s| s == name)
            .map(|i| &self.data[i])
    }

    /// Copies rows `range` (positions within this batch, not sample ids).
    pub fn slice(&self, range: BatchRange) -> FeatureBatch {
        FeatureBatch {
            sample_ids: self.sample_ids[range.as_range()].to_vec(),
            streams: self.streams.clone(),
            data: self
                .data
                .iter()
                .map(|m| m.slice(s![range.start..range.end, ..]).to_owned())
                .collect(),
        }
    }

    /// Copies the rows at the given positions, in order.
    pub fn select(&self, positions: &[usize]) -> FeatureBatch {
        FeatureBatch {
            sample_ids: positions.iter().map(|&p| self.sample_ids[p]).collect(),
            streams: self.streams.clone(),
            data: self
                .data
                .iter()
                .map(|m| m.select(ndarray::Axis(0), positions))
                .collect(),
        }
    }
}

/// Read-only handle on an opened store. Safe to share between threads.
#[derive(Debug)]
pub struct StoreHandle {
    root: PathBuf,
    manifest: StoreManifest,
    files: Vec<File>,
}

impl StoreHandle {
    /// Opens a store from its manifest path and validates every stream file.
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let manifest = StoreManifest::load(manifest_path)?;
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut files = Vec::with_capacity(manifest.streams.len());
        for spec in &manifest.streams {
            let path = root.join(&spec.data_file);
            let file = File::open(&path).map_err(|e| SparcError::io(&path, e))?;
            binfile::validate_file(&path, &file, manifest.sample_count, spec.dim)?;
            files.push(file);
        }
        Ok(Self {
            root,
            manifest,
            files,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn sample_count(&self) -> usize {
        self.manifest.sample_count
    }

    pub fn streams(&self) -> &[StreamSpec] {
        &self.manifest.streams
    }

    pub fn stream_names(&self) -> Vec<String> {
        self.manifest.streams.iter().map(|s| s.name.clone()).collect()
    }

    fn read_rows_into(&self, stream: usize, range: BatchRange, out: &mut Vec<f64>) -> Result<()> {
        let spec = &self.manifest.streams[stream];
        let row_bytes = spec.dim * 4;
        let mut buf = vec![0u8; range.len() * row_bytes];
        let offset = HEADER_LEN + (range.start * row_bytes) as u64;
        self.files[stream]
            .read_exact_at(&mut buf, offset)
            .map_err(|e| SparcError::io(self.root.join(&spec.data_file), e))?;
        binfile::decode_f32s(&buf, out);
        Ok(())
    }

    fn check_range(&self, range: BatchRange) -> Result<()> {
        if range.start > range.end || range.end > self.sample_count() {
            return Err(SparcError::OutOfRange {
                start: range.start,
                end: range.end,
                len: self.sample_count(),
            });
        }
        Ok(())
    }

    /// One row of one stream.
    pub fn read_row(&self, stream: usize, sample: usize) -> Result<Vec<f64>> {
        if stream >= self.files.len() {
            return Err(SparcError::Shape(format!("no stream #{stream}")));
        }
        let range = BatchRange::new(sample, sample + 1);
        self.check_range(range)?;
        let mut out = Vec::with_capacity(self.manifest.streams[stream].dim);
        self.read_rows_into(stream, range, &mut out)?;
        Ok(out)
    }

    /// Reads a contiguous range of samples from every stream.
    pub fn read_batch(&self, range: BatchRange) -> Result<FeatureBatch> {
        self.check_range(range)?;
        let mut data = Vec::with_capacity(self.files.len());
        for (i, spec) in self.manifest.streams.iter().enumerate() {
            let mut values = Vec::with_capacity(range.len() * spec.dim);
            self.read_rows_into(i, range, &mut values)?;
            data.push(
                Array2::from_shape_vec((range.len(), spec.dim), values)
                    .expect("row count times dim"),
            );
        }
        FeatureBatch::new(range.as_range().collect(), self.stream_names(), data)
    }

    /// Reads arbitrary samples (in the order given). Runs of consecutive ids
    /// are fetched with one read each.
    pub fn read_samples(&self, ids: &[usize]) -> Result<FeatureBatch> {
        let n = self.sample_count();
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(SparcError::OutOfRange {
                start: bad,
                end: bad + 1,
                len: n,
            });
        }
        let mut runs = Vec::new();
        let mut i = 0;
        while i < ids.len() {
            let mut j = i + 1;
            while j < ids.len() && ids[j] == ids[j - 1] + 1 {
                j += 1;
            }
            runs.push(BatchRange::new(ids[i], ids[j - 1] + 1));
            i = j;
        }
        let mut data = Vec::with_capacity(self.files.len());
        for (s, spec) in self.manifest.streams.iter().enumerate() {
            let mut values = Vec::with_capacity(ids.len() * spec.dim);
            for run in &runs {
                self.read_rows_into(s, *run, &mut values)?;
            }
            data.push(Array2::from_shape_vec((ids.len(), spec.dim), values).expect("shape"));
        }
        FeatureBatch::new(ids.to_vec(), self.stream_names(), data)
    }

    pub fn read_all(&self) -> Result<FeatureBatch> {
        self.read_batch(BatchRange::new(0, self.sample_count()))
    }

    pub fn labels(&self) -> Result<Option<LabelSet>> {
        let Some(rel) = &self.manifest.labels_file else {
            return Ok(None);
        };
        let labels = LabelSet::load(&self.root.join(rel))?;
        if labels.len() != self.sample_count() {
            return Err(SparcError::format(
                "labels",
                format!(
                    "{} label lines for {} samples",
                    labels.len(),
                    self.sample_count()
                ),
            ));
        }
        if let Some(tax) = self.taxonomy()? {
            labels.check_against(&tax)?;
        }
        Ok(Some(labels))
    }

    pub fn taxonomy(&self) -> Result<Option<Taxonomy>> {
        match &self.manifest.taxonomy_file {
            Some(rel) => Taxonomy::load(&self.root.join(rel)).map(Some),
            None => Ok(None),
        }
    }
}

/// Writes a complete store directory. Streams are written as f32.
pub struct StoreWriter {
    dir: PathBuf,
    sample_count: Option<usize>,
    streams: Vec<StreamSpec>,
    labels: Option<LabelSet>,
    taxonomy: Option<Taxonomy>,
    metadata: Option<serde_json::Value>,
}

impl StoreWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| SparcError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            sample_count: None,
            streams: Vec::new(),
            labels: None,
            taxonomy: None,
            metadata: None,
        })
    }

    pub fn add_stream(&mut self, name: &str, rows: ArrayView2<f32>) -> Result<&mut Self> {
        if self.streams.iter().any(|s| s.name == name) {
            return Err(SparcError::DuplicateStream(name.to_string()));
        }
        match self.sample_count {
            Some(n) if n != rows.nrows() => {
                return Err(SparcError::Shape(format!(
                    "stream `{name}` has {} rows, others have {n}",
                    rows.nrows()
                )))
            }
            _ => self.sample_count = Some(rows.nrows()),
        }
        let file = PathBuf::from(format!("{name}.bin"));
        let values: Vec<f32> = rows.iter().copied().collect();
        binfile::write_file(&self.dir.join(&file), rows.nrows(), &values)?;
        self.streams.push(StreamSpec {
            name: name.to_string(),
            dim: rows.ncols(),
            data_file: file,
        });
        Ok(self)
    }

    /// Convenience for f64 data; values are rounded to f32.
    pub fn add_stream_f64(&mut self, name: &str, rows: ArrayView2<f64>) -> Result<&mut Self> {
        let rows32 = rows.mapv(|v| v as f32);
        self.add_stream(name, rows32.view())
    }

    pub fn labels(&mut self, labels: LabelSet) -> &mut Self {
        self.labels = Some(labels);
        self
    }

    pub fn taxonomy(&mut self, taxonomy: Taxonomy) -> &mut Self {
        self.taxonomy = Some(taxonomy);
        self
    }

    pub fn metadata(&mut self, metadata: serde_json::Value) -> &mut Self {
        self.metadata = Some(metadata);
        self
    }

    /// Writes labels, taxonomy and the manifest; returns the manifest path.
    pub fn finish(&mut self) -> Result<PathBuf> {
        let sample_count = self.sample_count.unwrap_or(0);
        let mut manifest = StoreManifest {
            version: MANIFEST_VERSION,
            sample_count,
            streams: self.streams.clone(),
            labels_file: None,
            taxonomy_file: None,
            metadata: self.metadata.clone(),
        };
        if let Some(labels) = &self.labels {
            if labels.len() != sample_count {
                return Err(SparcError::Shape(format!(
                    "{} label lists for {sample_count} samples",
                    labels.len()
                )));
            }
            if let Some(tax) = &self.taxonomy {
                labels.check_against(tax)?;
            }
            labels.save(&self.dir.join(LABELS_FILE))?;
            manifest.labels_file = Some(LABELS_FILE.into());
        }
        if let Some(tax) = &self.taxonomy {
            tax.save(&self.dir.join(TAXONOMY_FILE))?;
            manifest.taxonomy_file = Some(TAXONOMY_FILE.into());
        }
        manifest.validate()?;
        let path = self.dir.join(MANIFEST_FILE);
        manifest.save(&path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn write_two_stream(dir: &Path, n: usize) -> PathBuf {
        let a = Array2::from_shape_fn((n, 8), |(i, j)| (i * 8 + j) as f32 * 0.5);
        let b = Array2::from_shape_fn((n, 12), |(i, j)| -((i * 12 + j) as f32));
        let mut w = StoreWriter::new(dir).unwrap();
        w.add_stream("a", a.view()).unwrap();
        w.add_stream("b", b.view()).unwrap();
        w.finish().unwrap()
    }

    #[test]
    fn open_reports_sample_count() {
        let dir = tempfile::tempdir().unwrap();
        let store = StoreHandle::open(&write_two_stream(dir.path(), 100)).unwrap();
        assert_eq!(store.sample_count(), 100);
        assert_eq!(store.streams()[0].dim, 8);
        assert_eq!(store.streams()[1].dim, 12);
    }

    #[test]
    fn truncated_file_is_a_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_two_stream(dir.path(), 100);
        let path = dir.path().join("b.bin");
        let len = std::fs::metadata(&path).unwrap().len();
        let f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(len - 4).unwrap();
        match StoreHandle::open(&manifest) {
            Err(SparcError::SizeMismatch { expected, found, .. }) => {
                assert_eq!(expected, len);
                assert_eq!(found, len - 4);
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_stream_in_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = write_two_stream(dir.path(), 4);
        let mut m = StoreManifest::load(&manifest_path).unwrap();
        m.streams[1].name = "a".into();
        std::fs::write(&manifest_path, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(
            StoreHandle::open(&manifest_path),
            Err(SparcError::DuplicateStream(n)) if n == "a"
        ));
    }

    #[test]
    fn malformed_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        std::fs::write(&path, "{\"version\": 1, \"streams\": ").unwrap();
        assert!(matches!(
            StoreHandle::open(&path),
            Err(SparcError::Format { .. })
        ));
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_two_stream(dir.path(), 3);
        let path = dir.path().join("a.bin");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            StoreHandle::open(&manifest),
            Err(SparcError::Format { .. })
        ));
    }

    #[test]
    fn read_batch_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let store = StoreHandle::open(&write_two_stream(dir.path(), 10)).unwrap();
        let batch = store.read_batch(BatchRange::new(0, 4)).unwrap();
        assert_eq!(batch.len(), 4);
        assert_eq!(batch.data[0].dim(), (4, 8));
        assert_eq!(batch.data[1].dim(), (4, 12));

        let one = store.read_batch(BatchRange::new(0, 1)).unwrap();
        assert_eq!(one.data[0].nrows(), 1);
        assert_eq!(one.data[1][[0, 3]], -3.0);

        let later = store.read_batch(BatchRange::new(6, 8)).unwrap();
        assert_eq!(later.sample_ids, vec![6, 7]);
        assert_eq!(later.data[0][[1, 0]], (7 * 8) as f64 * 0.5);
    }

    #[test]
    fn out_of_range_batch() {
        let dir = tempfile::tempdir().unwrap();
        let store = StoreHandle::open(&write_two_stream(dir.path(), 10)).unwrap();
        assert!(matches!(
            store.read_batch(BatchRange::new(8, 11)),
            Err(SparcError::OutOfRange { .. })
        ));
        assert!(store.read_samples(&[3, 10]).is_err());
    }

    #[test]
    fn scattered_reads_match_contiguous() {
        let dir = tempfile::tempdir().unwrap();
        let store = StoreHandle::open(&write_two_stream(dir.path(), 20)).unwrap();
        let all = store.read_all().unwrap();
        let ids = [3, 4, 5, 9, 0, 1, 19];
        let picked = store.read_samples(&ids).unwrap();
        assert_eq!(picked, all.select(&ids));
    }

    #[test]
    fn labels_must_cover_every_sample() {
        let dir = tempfile::tempdir().unwrap();
        let rows = Array2::<f32>::zeros((3, 2));
        let mut w = StoreWriter::new(dir.path()).unwrap();
        w.add_stream("x", rows.view()).unwrap();
        w.labels(LabelSet::new(vec![vec![]; 2]));
        assert!(w.finish().is_err());
    }
}
