//! Closed-form gradients of the training objective.
//!
//! The TopK selections (main and auxiliary) are treated as constants, so
//! gradient reaches a latent only where it was selected and its logit was
//! strictly positive. With `q` a residual and `w` its weight, every term has
//! the shape `w·‖q‖²`, and `∂/∂x̂ = 2w(x̂ − x)` feeds the decoder, the
//! pre-bias and, through the active coordinates, the encoder.

use ndarray::{Array1, Array2, Axis};

use crate::error::Result;
use crate::model::{ordered_pairs, ForwardOutput, ModelParams, StreamParams};
use crate::store::FeatureBatch;
use crate::train::loss::{aux_residual, AuxSelection, LossWeights, NMSE_EPS};

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

pub fn zeros_like(model: &ModelParams) -> Gradients {
    ModelParams {
        latent_dim: model.latent_dim,
        streams: model
            .streams
            .iter()
            .map(|s| StreamParams::zeros(&s.name, s.dim(), s.latent_dim()))
            .collect(),
    }
}

struct Accum {
    /// `∂L/∂h`, `(B, L)`.
    grad_h: Array2<f64>,
    /// `∂L/∂W_D` kept transposed, `(L, d)`, so one latent's column is a row.
    grad_w_dec_t: Array2<f64>,
    grad_b_pre: Array1<f64>,
}

/// Adds `g` (the gradient w.r.t. a reconstruction `W_D^t z + b_pre^t`) into
/// the decoder `t` accumulators and the code gradient of `code_stream`.
fn push_decoder_grad(
    acc: &mut [Accum],
    w_dec_t: &[Array2<f64>],
    target: usize,
    code_stream: usize,
    row: usize,
    latents: &[(usize, f64)],
    g: &Array1<f64>,
) {
    acc[target].grad_b_pre += g;
    for &(j, z) in latents {
        acc[target].grad_w_dec_t.row_mut(j).scaled_add(z, g);
        let dz = w_dec_t[target].row(j).dot(g);
        acc[code_stream].grad_h[[row, j]] += dz;
    }
}

pub fn backward(
    model: &ModelParams,
    batch: &FeatureBatch,
    fwd: &ForwardOutput,
    aux: Option<&AuxSelection>,
    weights: LossWeights,
) -> Result<Gradients> {
    model.check_streams(&batch.streams)?;
    let m = model.num_streams();
    let n = batch.len();
    let l = model.latent_dim;
    let mut grads = zeros_like(model);
    if n == 0 {
        return Ok(grads);
    }
    let inv_n = 1.0 / n as f64;

    let w_dec_t: Vec<Array2<f64>> = model
        .streams
        .iter()
        .map(|p| p.w_dec.t().as_standard_layout().into_owned())
        .collect();
    let mut acc: Vec<Accum> = model
        .streams
        .iter()
        .map(|p| Accum {
            grad_h: Array2::zeros((n, l)),
            grad_w_dec_t: Array2::zeros((l, p.dim())),
            grad_b_pre: Array1::zeros(p.dim()),
        })
        .collect();

    let norms: Vec<Vec<f64>> = batch
        .data
        .iter()
        .map(|x| x.axis_iter(Axis(0)).map(|r| r.dot(&r) + NMSE_EPS).collect())
        .collect();

    let active: Vec<Vec<Vec<(usize, f64)>>> = (0..m)
        .map(|s| {
            (0..n)
                .map(|r| {
                    fwd.code
                        .active(s, r)
                        .map(|j| (j, fwd.code.codes[s][[r, j]]))
                        .collect()
                })
                .collect()
        })
        .collect();

    // self-reconstruction
    for s in 0..m {
        for r in 0..n {
            let w = 2.0 * inv_n / norms[s][r];
            let g = (&fwd.recon[s].row(r) - &batch.data[s].row(r)) * w;
            push_decoder_grad(&mut acc, &w_dec_t, s, s, r, &active[s][r], &g);
        }
    }

    // cross-reconstruction
    if let (Some(cross), true) = (&fwd.cross, weights.lambda != 0.0) {
        for (&(s, t), xh) in ordered_pairs(m).iter().zip(cross) {
            for r in 0..n {
                let w = 2.0 * weights.lambda * inv_n / norms[t][r];
                let g = (&xh.row(r) - &batch.data[t].row(r)) * w;
                push_decoder_grad(&mut acc, &w_dec_t, t, s, r, &active[s][r], &g);
            }
        }
    }

    // auxiliary: q = x − b_pre − W_D (z + z_aux), loss γ/B ‖q‖²
    if let (Some(aux), true) = (aux, weights.auxk_gamma != 0.0) {
        for s in 0..m {
            let h = &fwd.logits[s];
            for r in 0..n {
                let q = aux_residual(model, batch, fwd, aux, s, r);
                let g = q * (-2.0 * weights.auxk_gamma * inv_n);
                let mut latents = active[s][r].clone();
                latents.extend(
                    aux.selected[s][r]
                        .iter()
                        .map(|&j| (j, h[[r, j]]))
                        .filter(|&(_, v)| v > 0.0),
                );
                push_decoder_grad(&mut acc, &w_dec_t, s, s, r, &latents, &g);
            }
        }
    }

    // encoder: h = W_E (x − b_pre) + b_lat
    for (s, (p, a)) in model.streams.iter().zip(acc).enumerate() {
        let out = &mut grads.streams[s];
        out.b_pre = a.grad_b_pre;
        out.w_dec = a.grad_w_dec_t.t().as_standard_layout().into_owned();
        for r in 0..n {
            let centered = &batch.data[s].row(r) - &p.b_pre;
            for (j, &gh) in a.grad_h.row(r).iter().enumerate() {
                if gh != 0.0 {
                    out.w_enc.row_mut(j).scaled_add(gh, &centered);
                    out.b_lat[j] += gh;
                    out.b_pre.scaled_add(-gh, &p.w_enc.row(j));
                }
            }
        }
    }
    Ok(grads)
}
