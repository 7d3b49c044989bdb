//! Activation patterns, concept alignment, probes and retrieval.
//!
//! Every evaluator works on [`LatentCodes`], the sparse codes of an
//! evaluation set, so one forward pass serves all of them.

mod codes;
mod jaccard;
mod patterns;
mod probe;
mod report;
mod retrieval;
mod top_activating;

use std::fmt;
use std::str::FromStr;

pub use codes::{encode_dataset, LatentCodes, DEFAULT_CHUNK};
pub use jaccard::{
    alignment_table, generalized_jaccard, jaccard_alignment, label_counts, AlignmentReport,
    LabelCounts, PairAlignment, DEFAULT_TOP_N,
};
pub use patterns::{ActivationStats, PatternSummary};
pub use probe::{
    fit_logistic, probe_eval, Logistic, ProbeConfig, ProbeReport, StreamProbe, TaskResult, LN_2,
};
pub use report::{fmt_f, Table};
pub use retrieval::{retrieval_matrix, retrieval_r_at_1, retrieval_table, RetrievalResult, SIMILARITY};
pub use top_activating::{rank_postings, top_activating, top_activating_all, TopActivating};

use crate::error::{Result, SparcError};
use crate::model::Checkpoint;
use crate::store::{FeatureBatch, StoreHandle};
use crate::train::{split_indices, TrainConfig};

/// Which samples of a store to evaluate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalSplit {
    /// The held-out split of the run that produced the checkpoint.
    #[default]
    Validation,
    Train,
    All,
}

impl fmt::Display for EvalSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalSplit::Validation => "val",
            EvalSplit::Train => "train",
            EvalSplit::All => "all",
        })
    }
}

impl FromStr for EvalSplit {
    type Err = SparcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val" | "validation" => Ok(Self::Validation),
            "train" => Ok(Self::Train),
            "all" => Ok(Self::All),
            other => Err(SparcError::Config(format!(
                "unknown split `{other}` (expected val, train or all)"
            ))),
        }
    }
}

/// Sample ids of `split`, rebuilt from the training config recorded in the
/// checkpoint. Checkpoints without one evaluate on every sample.
pub fn split_ids(store: &StoreHandle, checkpoint: &Checkpoint, split: EvalSplit) -> Result<Vec<usize>> {
    let n = store.sample_count();
    if split == EvalSplit::All {
        return Ok((0..n).collect());
    }
    let Some(cfg) = checkpoint.header.metadata.get("train_config") else {
        log::warn!("checkpoint records no training split; evaluating on all samples");
        return Ok((0..n).collect());
    };
    let cfg: TrainConfig = serde_json::from_value(cfg.clone())
        .map_err(|e| SparcError::format("checkpoint metadata", e.to_string()))?;
    let s = split_indices(n, cfg.train_ratio, cfg.seed);
    Ok(match split {
        EvalSplit::Train => s.train,
        _ => s.validation,
    })
}

/// Evaluation data with labels aligned to positions.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub data: FeatureBatch,
    pub labels: Option<Vec<Vec<String>>>,
}

impl EvalSet {
    pub fn load(store: &StoreHandle, ids: &[usize]) -> Result<Self> {
        let data = store.read_samples(ids)?;
        let labels = store
            .labels()?
            .map(|l| ids.iter().map(|&i| l.get(i).to_vec()).collect());
        Ok(Self { data, labels })
    }

    /// Limits to the first `n` positions.
    pub fn truncate(&mut self, n: usize) {
        if n < self.data.len() {
            let keep: Vec<usize> = (0..n).collect();
            self.data = self.data.select(&keep);
            if let Some(l) = &mut self.labels {
                l.truncate(n);
            }
        }
    }
}
