//! Reference implementations used as test oracles. Written with plain loops
//! over the raw parameter arrays, independent of the library's forward pass.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparc::{FeatureBatch, ModelParams, StreamParams};

/// Fixed selections: `[stream][row]` → latent indices.
pub type Supports = Vec<Vec<Vec<usize>>>;

fn logit(p: &StreamParams, x: &Array2<f64>, r: usize, j: usize) -> f64 {
    let mut h = p.b_lat[j];
    for i in 0..p.b_pre.len() {
        h += p.w_enc[[j, i]] * (x[[r, i]] - p.b_pre[i]);
    }
    h
}

fn code(p: &StreamParams, x: &Array2<f64>, r: usize, support: &[usize]) -> Vec<(usize, f64)> {
    support.iter().map(|&j| (j, logit(p, x, r, j).max(0.0))).collect()
}

fn decode(p: &StreamParams, z: &[(usize, f64)], with_bias: bool) -> Vec<f64> {
    (0..p.b_pre.len())
        .map(|i| {
            let b = if with_bias { p.b_pre[i] } else { 0.0 };
            b + z.iter().map(|&(j, v)| p.w_dec[[i, j]] * v).sum::<f64>()
        })
        .collect()
}

fn nmse(x: &[f64], y: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = x.iter().map(|a| a * a).sum();
    num / (den + 1e-12)
}

/// `Σ_s L_self^s + λ Σ_{s≠t} L_cross^{s→t} + γ Σ_s L_aux^s`, batch means,
/// with every selection held fixed.
pub fn oracle_loss(
    model: &ModelParams,
    data: &[Array2<f64>],
    supports: &Supports,
    aux: Option<&Supports>,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let m = model.streams.len();
    let n = data[0].nrows();
    let mut total = 0.0;
    for r in 0..n {
        let codes: Vec<Vec<(usize, f64)>> = (0..m)
            .map(|s| code(&model.streams[s], &data[s], r, &supports[s][r]))
            .collect();
        for s in 0..m {
            let x: Vec<f64> = data[s].row(r).to_vec();
            let recon = decode(&model.streams[s], &codes[s], true);
            total += nmse(&x, &recon);
            for t in 0..m {
                if t != s {
                    let xt: Vec<f64> = data[t].row(r).to_vec();
                    total += lambda * nmse(&xt, &decode(&model.streams[t], &codes[s], true));
                }
            }
            if let Some(aux) = aux {
                let za = code(&model.streams[s], &data[s], r, &aux[s][r]);
                let e_hat = decode(&model.streams[s], &za, false);
                total += gamma
                    * x.iter()
                        .zip(&recon)
                        .zip(&e_hat)
                        .map(|((a, b), c)| (a - b - c).powi(2))
                        .sum::<f64>();
            }
        }
    }
    total / n as f64
}

/// Random parameters with unit-norm decoder columns and non-zero biases.
pub fn random_model(dims: &[usize], latent_dim: usize, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = || rng.sample::<f64, _>(StandardNormal);
    let streams = dims
        .iter()
        .enumerate()
        .map(|(s, &d)| {
            let mut p = StreamParams::zeros(&format!("s{s}"), d, latent_dim);
            p.w_enc.mapv_inplace(|_| g());
            p.w_dec.mapv_inplace(|_| g());
            p.b_pre.mapv_inplace(|_| 0.3 * g());
            p.b_lat.mapv_inplace(|_| 0.3 * g());
            p.normalize_decoder();
            p
        })
        .collect();
    ModelParams::new(latent_dim, streams).unwrap()
}

pub fn random_batch(dims: &[usize], n: usize, seed: u64) -> FeatureBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = dims
        .iter()
        .map(|&d| Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal)))
        .collect();
    FeatureBatch::new(
        (0..n).collect(),
        (0..dims.len()).map(|s| format!("s{s}")).collect(),
        data,
    )
    .unwrap()
}

/// Top-k by full sort: descending value (NaN last), ties to the lower index;
/// result ascending.
pub fn brute_topk(h: &[f64], k: usize) -> Vec<usize> {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut idx: Vec<usize> = (0..h.len()).collect();
    idx.sort_by(|&a, &b| {
        let (na, nb) = (h[a].is_nan(), h[b].is_nan());
        na.cmp(&nb)
            .then(key(h[b]).partial_cmp(&key(h[a])).unwrap())
            .then(a.cmp(&b))
    });
    idx.truncate(k.min(h.len()));
    idx.sort_unstable();
    idx
}

/// `|a − f| / max(|a|, |f|, floor)`.
pub fn rel_err(a: f64, f: f64, floor: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(floor)
}

fn param_slices(p: &mut StreamParams) -> [&mut [f64]; 4] {
    [
        p.w_enc.as_slice_mut().expect("standard layout"),
        p.b_pre.as_slice_mut().expect("contiguous"),
        p.b_lat.as_slice_mut().expect("contiguous"),
        p.w_dec.as_slice_mut().expect("standard layout"),
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Oracle loss minus library loss at the base point.
    pub loss_gap: f64,
}

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;

/// Compares library gradients against central differences of
/// [`oracle_loss`] on a tiny two-stream model.
pub fn gradient_check(lambda: f64, with_aux: bool, seed: u64) -> GradCheck {
    use sparc::model::forward;
    use sparc::train::{backward, total_loss, AuxSelection, LossWeights};
    use sparc::SelectionMode;

    let dims = [5, 5];
    let (l, k) = (8, 3);
    let gamma = if with_aux { 0.5 } else { 0.0 };
    // Pick a seed whose selected logits sit away from the ReLU kink.
    let mut seed = seed;
    let (model, batch, fwd) = loop {
        let model = random_model(&dims, l, seed);
        let batch = random_batch(&dims, 4, seed + 1);
        let fwd = forward(&model, &batch, SelectionMode::Global, k, true).unwrap();
        let clear = (0..2).all(|s| {
            (0..batch.len()).all(|r| {
                (0..l).all(|j| fwd.logits[s][[r, j]].abs() > 1e-3)
            })
        });
        if clear {
            break (model, batch, fwd);
        }
        seed += 100;
    };
    let dead = vec![
        (0..l).map(|j| j >= 5).collect::<Vec<bool>>(),
        (0..l).map(|j| j == 0 || j == 7).collect(),
    ];
    let aux = if with_aux {
        AuxSelection::from_dead(&fwd, &dead, 2)
    } else {
        None
    };
    let weights = LossWeights {
        lambda,
        auxk_gamma: gamma,
    };
    let supports = fwd.code.selected.clone();
    let aux_supports = aux.as_ref().map(|a| a.selected.clone());
    let lib_loss = total_loss(&model, &batch, &fwd, aux.as_ref(), weights).unwrap().total;
    let f = |m: &ModelParams| oracle_loss(m, &batch.data, &supports, aux_supports.as_ref(), lambda, gamma);
    let loss_gap = f(&model) - lib_loss;

    let mut grads = backward(&model, &batch, &fwd, aux.as_ref(), weights).unwrap();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for s in 0..model.streams.len() {
        for part in 0..4 {
            let len = param_slices(&mut model.clone().streams[s])[part].len();
            for i in 0..len {
                let mut plus = model.clone();
                param_slices(&mut plus.streams[s])[part][i] += FD_STEP;
                let mut minus = model.clone();
                param_slices(&mut minus.streams[s])[part][i] -= FD_STEP;
                let fd = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
                let an = param_slices(&mut grads.streams[s])[part][i];
                worst = worst.max(rel_err(an, fd, REL_FLOOR));
                checked += 1;
            }
        }
    }
    GradCheck {
        max_rel_err: worst,
        checked,
        loss_gap,
    }
}
