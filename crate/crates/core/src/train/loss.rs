use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Result, SparcError};
use crate::model::{ordered_pairs, select_topk_masked, ForwardOutput, ModelParams};
use crate::store::FeatureBatch;

/// Floor on the NMSE denominator so zero-norm targets stay finite.
pub const NMSE_EPS: f64 = 1e-12;

/// `‖x − x̂‖² / (‖x‖² + ε)`.
pub fn nmse(x: ArrayView1<f64>, x_hat: ArrayView1<f64>) -> f64 {
    debug_assert_eq!(x.len(), x_hat.len());
    let (mut err, mut norm) = (0.0, 0.0);
    for (a, b) in x.iter().zip(x_hat.iter()) {
        err += (a - b) * (a - b);
        norm += a * a;
    }
    err / (norm + NMSE_EPS)
}

/// Mean row-wise NMSE between two `(B, d)` matrices.
pub fn mean_nmse(x: &Array2<f64>, x_hat: &Array2<f64>) -> f64 {
    let n = x.nrows();
    if n == 0 {
        return 0.0;
    }
    x.axis_iter(Axis(0))
        .zip(x_hat.axis_iter(Axis(0)))
        .map(|(a, b)| nmse(a, b))
        .sum::<f64>()
        / n as f64
}

/// Coefficients of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub auxk_gamma: f64,
}

/// Per stream, per row: the dead latents picked for the auxiliary loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxSelection {
    pub selected: Vec<Vec<Vec<usize>>>,
}

impl AuxSelection {
    /// Top `k_aux` logits among each stream's dead latents. `None` when no
    /// stream has a dead latent.
    pub fn from_dead(fwd: &ForwardOutput, dead: &[Vec<bool>], k_aux: usize) -> Option<Self> {
        if k_aux == 0 || !dead.iter().flatten().any(|&d| d) {
            return None;
        }
        let selected = fwd
            .logits
            .iter()
            .zip(dead)
            .map(|(h, mask)| {
                if mask.iter().any(|&d| d) {
                    h.axis_iter(Axis(0))
                        .map(|row| select_topk_masked(row, k_aux, mask))
                        .collect()
                } else {
                    vec![Vec::new(); h.nrows()]
                }
            })
            .collect();
        Some(Self { selected })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Batch-mean NMSE per stream.
    pub self_terms: Vec<f64>,
    /// Batch-mean NMSE per ordered pair in [`ordered_pairs`] order; empty
    /// when cross-reconstructions were not computed.
    pub cross_terms: Vec<f64>,
    /// Batch-mean auxiliary squared error per stream.
    pub aux_terms: Vec<f64>,
}

impl LossBreakdown {
    pub fn self_loss(&self) -> f64 {
        self.self_terms.iter().sum()
    }

    pub fn cross_loss(&self) -> f64 {
        self.cross_terms.iter().sum()
    }

    pub fn aux_loss(&self) -> f64 {
        self.aux_terms.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Auxiliary residual target for one row: `e − ê`, where `e = x − x̂` and
/// `ê = W_D z_aux`.
pub(crate) fn aux_residual(
    model: &ModelParams,
    batch: &FeatureBatch,
    fwd: &ForwardOutput,
    aux: &AuxSelection,
    stream: usize,
    row: usize,
) -> ndarray::Array1<f64> {
    let p = &model.streams[stream];
    let mut q = &batch.data[stream].row(row) - &fwd.recon[stream].row(row);
    let h = &fwd.logits[stream];
    for &j in &aux.selected[stream][row] {
        let z = h[[row, j]].max(0.0);
        if z > 0.0 {
            q.scaled_add(-z, &p.w_dec.column(j));
        }
    }
    q
}

/// `L_self + λ·L_cross + γ·Σ_s L_aux^s`, each term a mean over batch rows.
pub fn total_loss(
    model: &ModelParams,
    batch: &FeatureBatch,
    fwd: &ForwardOutput,
    aux: Option<&AuxSelection>,
    weights: LossWeights,
) -> Result<LossBreakdown> {
    let m = model.num_streams();
    let n = batch.len();
    let self_terms: Vec<f64> = (0..m)
        .map(|s| mean_nmse(&batch.data[s], &fwd.recon[s]))
        .collect();

    let cross_terms: Vec<f64> = match &fwd.cross {
        Some(cross) => ordered_pairs(m)
            .iter()
            .zip(cross)
            .map(|(&(_, t), xh)| mean_nmse(&batch.data[t], xh))
            .collect(),
        None if weights.lambda > 0.0 && m > 1 => {
            return Err(SparcError::Config(
                "lambda > 0 requires cross-reconstructions".into(),
            ))
        }
        None => Vec::new(),
    };

    let aux_terms: Vec<f64> = match aux {
        Some(aux) if weights.auxk_gamma > 0.0 && n > 0 => (0..m)
            .map(|s| {
                (0..n)
                    .map(|r| {
                        aux_residual(model, batch, fwd, aux, s, r)
                            .iter()
                            .map(|v| v * v)
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / n as f64
            })
            .collect(),
        _ => vec![0.0; m],
    };

    let self_sum: f64 = self_terms.iter().sum();
    let cross_sum: f64 = cross_terms.iter().sum();
    let aux_sum: f64 = aux_terms.iter().sum();
    Ok(LossBreakdown {
        total: self_sum + weights.lambda * cross_sum + weights.auxk_gamma * aux_sum,
        self_terms,
        cross_terms,
        aux_terms,
    })
}
