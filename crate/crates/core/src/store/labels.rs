use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Result, SparcError};
use crate::store::Taxonomy;

/// Per-sample lists of label identifiers. A sample may carry no labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    pub per_sample: Vec<Vec<String>>,
}

impl LabelSet {
    pub fn new(per_sample: Vec<Vec<String>>) -> Self {
        Self { per_sample }
    }

    pub fn len(&self) -> usize {
        self.per_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }

    pub fn get(&self, sample: usize) -> &[String] {
        &self.per_sample[sample]
    }

    /// Distinct labels in lexicographic order.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> = self.per_sample.iter().flatten().cloned().collect();
        v.sort();
        v.dedup();
        v
    }

    /// JSON-lines: one array of strings per sample.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| SparcError::io(path, e))?;
        let mut per_sample = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| SparcError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let labels: Vec<String> = serde_json::from_str(&line).map_err(|e| {
                SparcError::format("labels", format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            per_sample.push(labels);
        }
        Ok(Self { per_sample })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| SparcError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for labels in &self.per_sample {
            let line = serde_json::to_string(labels)
                .map_err(|e| SparcError::format("labels", e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| SparcError::io(path, e))?;
        }
        w.flush().map_err(|e| SparcError::io(path, e))
    }

    pub fn check_against(&self, taxonomy: &Taxonomy) -> Result<()> {
        match self.per_sample.iter().flatten().find(|l| !taxonomy.contains(l)) {
            Some(l) => Err(SparcError::UnknownLabel(l.clone())),
            None => Ok(()),
        }
    }
}
