use crate::error::{Result, SparcError};
use crate::model::ModelParams;
use crate::train::backward::{zeros_like, Gradients};
use crate::train::config::AdamConfig;

/// First and second moment estimates, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Gradients,
    pub v: Gradients,
}

impl OptimizerState {
    pub fn new(model: &ModelParams) -> Self {
        Self {
            step: 0,
            m: zeros_like(model),
            v: zeros_like(model),
        }
    }
}

/// Removes from every decoder-gradient column its component along the
/// (unit) decoder column: `g_j ← g_j − (g_j·d_j) d_j`.
pub fn project_decoder_grads(model: &ModelParams, grads: &mut Gradients) {
    for (p, g) in model.streams.iter().zip(grads.streams.iter_mut()) {
        for (d, mut gc) in p.w_dec.columns().into_iter().zip(g.w_dec.columns_mut()) {
            let along = d.dot(&gc);
            gc.scaled_add(-along, &d);
        }
    }
}

fn check_finite(grads: &Gradients) -> Result<()> {
    for g in &grads.streams {
        for (what, bad) in [
            ("w_enc", g.w_enc.iter().any(|v| !v.is_finite())),
            ("b_pre", g.b_pre.iter().any(|v| !v.is_finite())),
            ("b_lat", g.b_lat.iter().any(|v| !v.is_finite())),
            ("w_dec", g.w_dec.iter().any(|v| !v.is_finite())),
        ] {
            if bad {
                return Err(SparcError::NonFinite {
                    step: 0,
                    detail: format!("gradient of {what} in stream `{}`", g.name),
                });
            }
        }
    }
    Ok(())
}

fn update<'a>(
    params: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'a f64>,
    m: impl Iterator<Item = &'a mut f64>,
    v: impl Iterator<Item = &'a mut f64>,
    cfg: &AdamConfig,
    bias1: f64,
    bias2: f64,
) {
    for (((p, g), m), v) in params.zip(grads).zip(m).zip(v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// One Adam step with decoder-norm maintenance: project the decoder
/// gradients, apply bias-corrected Adam to every parameter, then rescale
/// decoder columns to unit norm. Non-finite gradients abort before any
/// parameter changes.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &mut Gradients,
    state: &mut OptimizerState,
    cfg: &AdamConfig,
) -> Result<()> {
    check_finite(grads).map_err(|e| match e {
        SparcError::NonFinite { detail, .. } => SparcError::NonFinite {
            step: state.step + 1,
            detail,
        },
        other => other,
    })?;
    project_decoder_grads(params, grads);

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);

    for ((p, g), (m, v)) in params
        .streams
        .iter_mut()
        .zip(&grads.streams)
        .zip(state.m.streams.iter_mut().zip(state.v.streams.iter_mut()))
    {
        update(p.w_enc.iter_mut(), g.w_enc.iter(), m.w_enc.iter_mut(), v.w_enc.iter_mut(), cfg, bias1, bias2);
        update(p.b_pre.iter_mut(), g.b_pre.iter(), m.b_pre.iter_mut(), v.b_pre.iter_mut(), cfg, bias1, bias2);
        update(p.b_lat.iter_mut(), g.b_lat.iter(), m.b_lat.iter_mut(), v.b_lat.iter_mut(), cfg, bias1, bias2);
        update(p.w_dec.iter_mut(), g.w_dec.iter(), m.w_dec.iter_mut(), v.w_dec.iter_mut(), cfg, bias1, bias2);
        p.normalize_decoder();
    }
    Ok(())
}
