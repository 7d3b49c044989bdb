use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SparcError};
use crate::model::{forward, Checkpoint, ModelParams};
use crate::store::{contiguous_batch_order, FeatureBatch, StoreHandle};
use crate::train::adam::{adam_step, OptimizerState};
use crate::train::backward::backward;
use crate::train::config::TrainConfig;
use crate::train::dead::{reinit_dead, DeadTracker};
use crate::train::init::init_params;
use crate::train::loss::{total_loss, AuxSelection, LossBreakdown, LossWeights};
use crate::train::metrics::{
    reconstruction_metrics, recon_rows, write_metrics_csv, MetricRow, ReconMetrics,
};

pub const METRICS_FILE: &str = "metrics.csv";
const EVAL_CHUNK: usize = 1024;

/// Train/validation sample ids, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded permutation of `0..n`; the first `⌊ratio·n⌋` ids train.
pub fn split_indices(n: usize, train_ratio: f64, seed: u64) -> DataSplit {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * train_ratio).floor() as usize;
    let mut train = ids[..n_train].to_vec();
    let mut validation = ids[n_train..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    DataSplit { train, validation }
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub loss: LossBreakdown,
    pub reinitialized: usize,
}

/// Optimization state for one run: parameters, Adam moments, dead tracker
/// and the run's RNG.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub tracker: DeadTracker,
    /// Compute cross-reconstructions even when `lambda == 0`.
    pub always_cross: bool,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(streams: &[(String, usize)], config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = init_params(streams, config.latent_dim, &mut rng)?;
        Ok(Self::from_params(params, config, rng))
    }

    pub fn from_params(params: ModelParams, config: TrainConfig, rng: ChaCha8Rng) -> Self {
        let tracker = DeadTracker::new(
            params.num_streams(),
            params.latent_dim,
            config.auxk_threshold,
            config.dead_steps_threshold,
        );
        Self {
            optimizer: OptimizerState::new(&params),
            tracker,
            params,
            config,
            always_cross: false,
            rng,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.config.lambda,
            auxk_gamma: self.config.auxk_gamma,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// forward → loss → backward → Adam → dead tracking → reinit.
    pub fn step(&mut self, batch: &FeatureBatch) -> Result<StepReport> {
        let cfg = &self.config;
        let with_cross = (cfg.lambda > 0.0 || self.always_cross) && self.params.num_streams() > 1;
        let fwd = forward(&self.params, batch, cfg.mode, cfg.k, with_cross)?;
        let aux = if cfg.auxk_gamma > 0.0 {
            AuxSelection::from_dead(&fwd, &self.tracker.dead_masks(), cfg.auxk_k)
        } else {
            None
        };
        let weights = self.weights();
        let loss = total_loss(&self.params, batch, &fwd, aux.as_ref(), weights)?;
        let step = self.optimizer.step + 1;
        if !loss.is_finite() {
            return Err(SparcError::NonFinite {
                step,
                detail: format!(
                    "loss {} (self {:?}, cross {:?}, aux {:?})",
                    loss.total, loss.self_terms, loss.cross_terms, loss.aux_terms
                ),
            });
        }
        let mut grads = backward(&self.params, batch, &fwd, aux.as_ref(), weights)?;
        adam_step(&mut self.params, &mut grads, &mut self.optimizer, &self.config.adam())?;
        let update = self.tracker.update(&fwd.code);
        let reinitialized = update.newly_dead.iter().map(Vec::len).sum();
        if reinitialized > 0 {
            reinit_dead(&mut self.params, &update.newly_dead, &mut self.rng);
        }
        Ok(StepReport {
            loss,
            reinitialized,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub config: TrainConfig,
    pub split: DataSplit,
    pub steps: u64,
    pub initial: ReconMetrics,
    pub last: ReconMetrics,
    pub metrics: Vec<MetricRow>,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.params.clone(),
            self.config.k,
            self.config.mode,
            serde_json::json!({
                "train_config": self.config,
                "steps": self.steps,
                "train_samples": self.split.train.len(),
                "validation_samples": self.split.validation.len(),
                "split_seed": self.config.seed,
            }),
        )
    }
}

/// Loads the split from the store and trains on it. With `out_dir`, writes
/// the checkpoint and `metrics.csv` there.
pub fn train(store: &StoreHandle, config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let split = split_indices(store.sample_count(), config.train_ratio, config.seed);
    let train_data = store.read_samples(&split.train)?;
    let val_data = store.read_samples(&split.validation)?;
    let outcome = train_on(&train_data, &val_data, config, split)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| SparcError::io(dir, e))?;
        outcome.checkpoint().save(dir)?;
        write_metrics_csv(&dir.join(METRICS_FILE), &outcome.metrics)?;
    }
    Ok(outcome)
}

/// Trains on in-memory data. Validation metrics are logged after each epoch.
pub fn train_on(
    train_data: &FeatureBatch,
    val_data: &FeatureBatch,
    config: &TrainConfig,
    split: DataSplit,
) -> Result<TrainOutcome> {
    let streams: Vec<(String, usize)> = train_data
        .streams
        .iter()
        .zip(&train_data.data)
        .map(|(n, x)| (n.clone(), x.ncols()))
        .collect();
    let mut trainer = Trainer::new(&streams, config.clone())?;
    let evaluate = |p: &ModelParams| {
        reconstruction_metrics(p, val_data, config.mode, config.k, EVAL_CHUNK)
    };
    let initial = evaluate(&trainer.params)?;
    let mut last = initial.clone();
    let mut metrics = Vec::new();

    for epoch in 1..=config.epochs {
        let order_seed: u64 = trainer.rng().random();
        let order = contiguous_batch_order(train_data.len(), config.batch_size, order_seed)?;
        let mut loss_sum = 0.0;
        for range in &order {
            let batch = train_data.slice(*range);
            loss_sum += trainer.step(&batch)?.loss.total;
        }
        let train_loss = loss_sum / order.len().max(1) as f64;
        log::info!(
            "epoch {epoch}/{}: train loss {train_loss:.6}",
            config.epochs
        );
        metrics.push(MetricRow {
            epoch,
            split: "train".into(),
            target: "all".into(),
            metric: "loss".into(),
            value: train_loss,
        });
        last = evaluate(&trainer.params)?;
        metrics.extend(recon_rows(epoch, "val", &last));
        let dead: Vec<usize> = (0..trainer.params.num_streams())
            .map(|s| trainer.tracker.dead_count(s))
            .collect();
        for (name, count) in trainer.params.stream_names().into_iter().zip(dead) {
            metrics.push(MetricRow {
                epoch,
                split: "train".into(),
                target: name,
                metric: "dead_latents".into(),
                value: count as f64,
            });
        }
    }

    Ok(TrainOutcome {
        params: trainer.params,
        config: config.clone(),
        split,
        steps: trainer.optimizer.step,
        initial,
        last,
        metrics,
    })
}
