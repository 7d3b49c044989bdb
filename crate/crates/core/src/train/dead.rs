use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{ModelParams, SparseCode};

/// Standard deviation of the Gaussian used to reinitialize dead latents.
pub const REINIT_STD: f64 = 0.01;

/// Per (stream, latent) count of consecutive steps without firing.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadTracker {
    pub steps_since_fired: Vec<Vec<u64>>,
    pub activity_threshold: f64,
    pub dead_steps_threshold: u64,
}

/// Result of one tracker update.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadUpdate {
    /// `counter > dead_steps_threshold`, per stream.
    pub dead: Vec<Vec<bool>>,
    /// Latents that crossed the threshold on this step, per stream.
    pub newly_dead: Vec<Vec<usize>>,
}

impl DeadTracker {
    pub fn new(
        num_streams: usize,
        latent_dim: usize,
        activity_threshold: f64,
        dead_steps_threshold: u64,
    ) -> Self {
        Self {
            steps_since_fired: vec![vec![0; latent_dim]; num_streams],
            activity_threshold,
            dead_steps_threshold,
        }
    }

    pub fn is_dead(&self, stream: usize, latent: usize) -> bool {
        self.steps_since_fired[stream][latent] > self.dead_steps_threshold
    }

    pub fn dead_masks(&self) -> Vec<Vec<bool>> {
        self.steps_since_fired
            .iter()
            .map(|c| c.iter().map(|&n| n > self.dead_steps_threshold).collect())
            .collect()
    }

    pub fn dead_count(&self, stream: usize) -> usize {
        self.steps_since_fired[stream]
            .iter()
            .filter(|&&n| n > self.dead_steps_threshold)
            .count()
    }

    /// A latent fired for a stream when the fraction of batch rows with
    /// `z > 0` reaches the activity threshold.
    pub fn update(&mut self, code: &SparseCode) -> DeadUpdate {
        let rows = code.batch_len();
        let mut newly_dead = Vec::with_capacity(self.steps_since_fired.len());
        for (s, counters) in self.steps_since_fired.iter_mut().enumerate() {
            let mut fired = vec![0usize; counters.len()];
            for r in 0..rows {
                for j in code.active(s, r) {
                    fired[j] += 1;
                }
            }
            let mut crossed = Vec::new();
            for (j, c) in counters.iter_mut().enumerate() {
                let frac = if rows == 0 { 0.0 } else { fired[j] as f64 / rows as f64 };
                if rows > 0 && frac >= self.activity_threshold && fired[j] > 0 {
                    *c = 0;
                } else {
                    *c += 1;
                    if *c == self.dead_steps_threshold + 1 {
                        crossed.push(j);
                    }
                }
            }
            newly_dead.push(crossed);
        }
        DeadUpdate {
            dead: self.dead_masks(),
            newly_dead,
        }
    }
}

/// Re-draws the encoder row and decoder column of each listed latent from
/// `N(0, 0.01²)`, zeroes its latent bias and renormalizes the decoder column.
pub fn reinit_dead<R: Rng + ?Sized>(params: &mut ModelParams, dead: &[Vec<usize>], rng: &mut R) {
    for (p, latents) in params.streams.iter_mut().zip(dead) {
        for &j in latents {
            for v in p.w_enc.row_mut(j) {
                *v = REINIT_STD * rng.sample::<f64, _>(StandardNormal);
            }
            p.b_lat[j] = 0.0;
            let mut col = p.w_dec.column_mut(j);
            for v in col.iter_mut() {
                *v = REINIT_STD * rng.sample::<f64, _>(StandardNormal);
            }
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                col.mapv_inplace(|v| v / norm);
            }
        }
    }
}
