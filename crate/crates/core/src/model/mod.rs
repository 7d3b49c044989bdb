//! Parameters and the forward pass.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{Checkpoint, CheckpointHeader, CheckpointStream, CHECKPOINT_FILE};
pub use forward::{
    aggregate_logits, apply_activation, decode_rows, encode_batch, encode_stream, forward,
    ordered_pairs, select_topk, select_topk_masked, ForwardOutput, SparseCode,
};
pub use params::{ModelParams, SelectionMode, StreamParams};
