use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Result, SparcError};
use crate::model::SelectionMode;
use crate::store::StoreHandle;
use crate::train::config::TrainConfig;
use crate::train::trainer::train;

/// Hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    LatentDim,
    K,
    Lambda,
    Lr,
}

impl SweepAxis {
    pub fn apply(self, config: &mut TrainConfig, value: f64) -> Result<()> {
        let as_count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(SparcError::Config(format!("{self} needs a positive integer, got {v}")))
            }
        };
        match self {
            SweepAxis::LatentDim => config.latent_dim = as_count(value)?,
            SweepAxis::K => config.k = as_count(value)?,
            SweepAxis::Lambda => config.lambda = value,
            SweepAxis::Lr => config.lr = value,
        }
        config.validate()
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::LatentDim => "L",
            SweepAxis::K => "k",
            SweepAxis::Lambda => "lambda",
            SweepAxis::Lr => "lr",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = SparcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "latent_dim" => Ok(Self::LatentDim),
            "k" => Ok(Self::K),
            "lambda" => Ok(Self::Lambda),
            "lr" | "eta" => Ok(Self::Lr),
            other => Err(SparcError::Config(format!(
                "unknown sweep axis `{other}` (expected L, k, lambda or lr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mode: SelectionMode,
    /// Validation self-NMSE averaged over streams.
    pub self_nmse: f64,
    /// Validation cross-NMSE averaged over ordered pairs.
    pub cross_nmse: f64,
}

/// Trains one model per `(value, mode)` and records its final validation
/// NMSE.
pub fn run_sweep(
    store: &StoreHandle,
    base: &TrainConfig,
    axis: SweepAxis,
    values: &[f64],
    modes: &[SelectionMode],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() || modes.is_empty() {
        return Err(SparcError::Config("sweep needs at least one value and one mode".into()));
    }
    let mut rows = Vec::with_capacity(values.len() * modes.len());
    for &value in values {
        for &mode in modes {
            let mut cfg = base.clone();
            cfg.mode = mode;
            axis.apply(&mut cfg, value)?;
            log::info!("sweep {axis}={value} mode={mode}");
            let out = train(store, &cfg, None)?;
            rows.push(SweepRow {
                value,
                mode,
                self_nmse: out.last.mean_self(),
                cross_nmse: out.last.mean_cross(),
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,mode,self_nmse,cross_nmse\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.value, r.mode, r.self_nmse, r.cross_nmse);
    }
    out
}
