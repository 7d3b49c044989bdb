//! Objective, gradients and the optimization loop.

mod adam;
mod backward;
mod config;
mod dead;
mod init;
mod loss;
mod metrics;
mod sweep;
mod trainer;

pub use adam::{adam_step, project_decoder_grads, OptimizerState};
pub use backward::{backward, zeros_like, Gradients};
pub use config::{AdamConfig, TrainConfig};
pub use dead::{reinit_dead, DeadTracker, DeadUpdate, REINIT_STD};
pub use init::init_params;
pub use loss::{mean_nmse, nmse, total_loss, AuxSelection, LossBreakdown, LossWeights, NMSE_EPS};
pub use metrics::{
    metrics_csv, reconstruction_metrics, write_metrics_csv, MetricRow, ReconMetrics,
    METRICS_HEADER,
};
pub use sweep::{run_sweep, sweep_csv, SweepAxis, SweepRow};
pub use trainer::{split_indices, train, train_on, DataSplit, StepReport, TrainOutcome, Trainer, METRICS_FILE};
