use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SparcError};
use crate::model::{forward, ordered_pairs, ModelParams, SelectionMode};
use crate::store::{BatchRange, FeatureBatch};
use crate::train::loss::nmse;

/// Mean reconstruction quality over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconMetrics {
    pub streams: Vec<String>,
    pub self_nmse: Vec<f64>,
    /// In [`ordered_pairs`] order.
    pub cross_nmse: Vec<f64>,
}

impl ReconMetrics {
    pub fn mean_self(&self) -> f64 {
        mean(&self.self_nmse)
    }

    pub fn mean_cross(&self) -> f64 {
        mean(&self.cross_nmse)
    }

    pub fn pair_names(&self) -> Vec<String> {
        ordered_pairs(self.streams.len())
            .into_iter()
            .map(|(s, t)| format!("{}->{}", self.streams[s], self.streams[t]))
            .collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Self and cross NMSE averaged over every row of `data`, evaluated in
/// chunks of `chunk` rows.
pub fn reconstruction_metrics(
    model: &ModelParams,
    data: &FeatureBatch,
    mode: SelectionMode,
    k: usize,
    chunk: usize,
) -> Result<ReconMetrics> {
    let m = model.num_streams();
    let pairs = ordered_pairs(m);
    let mut self_sum = vec![0.0; m];
    let mut cross_sum = vec![0.0; pairs.len()];
    let n = data.len();
    let chunk = chunk.max(1);
    for start in (0..n).step_by(chunk) {
        let part = data.slice(BatchRange::new(start, (start + chunk).min(n)));
        let out = forward(model, &part, mode, k, m > 1)?;
        for s in 0..m {
            for (x, xh) in part.data[s].rows().into_iter().zip(out.recon[s].rows()) {
                self_sum[s] += nmse(x, xh);
            }
        }
        if let Some(cross) = &out.cross {
            for (p, (&(_, t), xh)) in pairs.iter().zip(cross).enumerate() {
                for (x, y) in part.data[t].rows().into_iter().zip(xh.rows()) {
                    cross_sum[p] += nmse(x, y);
                }
            }
        }
    }
    let denom = n.max(1) as f64;
    Ok(ReconMetrics {
        streams: model.stream_names(),
        self_nmse: self_sum.into_iter().map(|v| v / denom).collect(),
        cross_nmse: cross_sum.into_iter().map(|v| v / denom).collect(),
    })
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: String,
    /// A stream name, an ordered pair `a->b`, or `all`.
    pub target: String,
    pub metric: String,
    pub value: f64,
}

pub const METRICS_HEADER: &str = "epoch,split,stream_pair,metric,value";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.split, r.target, r.metric, r.value);
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    std::fs::write(path, metrics_csv(rows)).map_err(|e| SparcError::io(path, e))
}

pub(crate) fn recon_rows(epoch: usize, split: &str, m: &ReconMetrics) -> Vec<MetricRow> {
    let mut rows: Vec<MetricRow> = m
        .streams
        .iter()
        .zip(&m.self_nmse)
        .map(|(s, &v)| MetricRow {
            epoch,
            split: split.into(),
            target: s.clone(),
            metric: "self_nmse".into(),
            value: v,
        })
        .collect();
    rows.extend(m.pair_names().into_iter().zip(&m.cross_nmse).map(|(p, &v)| MetricRow {
        epoch,
        split: split.into(),
        target: p,
        metric: "cross_nmse".into(),
        value: v,
    }));
    rows
}
