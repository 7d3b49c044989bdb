use std::cmp::Ordering;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Result, SparcError};
use crate::model::{ModelParams, SelectionMode, StreamParams};
use crate::store::FeatureBatch;

static WARNED_K_CLAMP: AtomicBool = AtomicBool::new(false);

/// `h = W_E (x − b_pre) + b_lat` for one input vector.
pub fn encode_stream(p: &StreamParams, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    if x.len() != p.dim() {
        return Err(SparcError::Shape(format!(
            "stream `{}` expects dim {}, got {}",
            p.name,
            p.dim(),
            x.len()
        )));
    }
    let centered = &x - &p.b_pre;
    Ok(p.w_enc.dot(&centered) + &p.b_lat)
}

/// Row-wise [`encode_stream`] over a `(B, d)` matrix, giving `(B, L)`.
pub fn encode_batch(p: &StreamParams, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != p.dim() {
        return Err(SparcError::Shape(format!(
            "stream `{}` expects dim {}, got {}",
            p.name,
            p.dim(),
            x.ncols()
        )));
    }
    let centered = &x - &p.b_pre.view().insert_axis(Axis(0));
    Ok(centered.dot(&p.w_enc.t()) + &p.b_lat.view().insert_axis(Axis(0)))
}

/// Elementwise sum of raw (unrectified) per-stream logits.
pub fn aggregate_logits(logits: &[ArrayView1<f64>]) -> Result<Array1<f64>> {
    let first = logits
        .first()
        .ok_or_else(|| SparcError::Shape("no logits to aggregate".into()))?;
    let mut agg = first.to_owned();
    for h in &logits[1..] {
        if h.len() != agg.len() {
            return Err(SparcError::Shape(format!(
                "logit lengths {} and {} differ",
                agg.len(),
                h.len()
            )));
        }
        agg += h;
    }
    Ok(agg)
}

/// Larger value first, lower index first on ties, NaN last.
fn rank(h: &ArrayView1<f64>, i: usize, j: usize) -> Ordering {
    let (a, b) = (h[i], h[j]);
    match (a.is_nan(), b.is_nan()) {
        (false, false) => b.partial_cmp(&a).unwrap().then(i.cmp(&j)),
        (true, true) => i.cmp(&j),
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
    }
}

fn clamp_k(k: usize, len: usize) -> usize {
    if k > len && !WARNED_K_CLAMP.swap(true, AtomicOrdering::Relaxed) {
        log::warn!("k = {k} exceeds latent dim {len}; clamping");
    }
    k.min(len)
}

/// Indices of the `k` largest entries, ties to the lower index, returned in
/// ascending index order. `k > len` is clamped to `len`.
pub fn select_topk(h: ArrayView1<f64>, k: usize) -> Vec<usize> {
    let k = clamp_k(k, h.len());
    let mut idx: Vec<usize> = (0..h.len()).collect();
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&i, &j| rank(&h, i, j));
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// [`select_topk`] restricted to indices where `allowed` is true.
pub fn select_topk_masked(h: ArrayView1<f64>, k: usize, allowed: &[bool]) -> Vec<usize> {
    debug_assert_eq!(h.len(), allowed.len());
    let mut idx: Vec<usize> = (0..h.len()).filter(|&j| allowed[j]).collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&i, &j| rank(&h, i, j));
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// `z_j = max(h_j, 0)` on `indices`, zero elsewhere.
pub fn apply_activation(h: ArrayView1<f64>, indices: &[usize]) -> Result<Array1<f64>> {
    let mut z = Array1::zeros(h.len());
    for &j in indices {
        if j >= h.len() {
            return Err(SparcError::Shape(format!(
                "index {j} out of range for latent dim {}",
                h.len()
            )));
        }
        z[j] = h[j].max(0.0);
    }
    Ok(z)
}

/// Ordered pairs `(s, t)` with `s ≠ t`, lexicographic.
pub fn ordered_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|s| (0..m).filter(move |&t| t != s).map(move |t| (s, t)))
        .collect()
}

/// Rectified sparse codes of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub mode: SelectionMode,
    /// Effective k after clamping to `L`.
    pub k: usize,
    /// Per stream, dense `(B, L)`; zero outside the selected set.
    pub codes: Vec<Array2<f64>>,
    /// Per stream, per row: selected indices in ascending order. In Global
    /// mode every stream holds the same sets.
    pub selected: Vec<Vec<Vec<usize>>>,
}

impl SparseCode {
    pub fn batch_len(&self) -> usize {
        self.codes.first().map_or(0, |c| c.nrows())
    }

    /// Indices with strictly positive activation for `(stream, row)`.
    pub fn active(&self, stream: usize, row: usize) -> impl Iterator<Item = usize> + '_ {
        let z = &self.codes[stream];
        self.selected[stream][row]
            .iter()
            .copied()
            .filter(move |&j| z[[row, j]] > 0.0)
    }
}

/// Everything the loss and gradient need from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Vec<Array2<f64>>,
    pub code: SparseCode,
    /// Self-reconstructions, `(B, d_s)` per stream.
    pub recon: Vec<Array2<f64>>,
    /// Cross-reconstructions in [`ordered_pairs`] order; `cross[p]` for pair
    /// `(s, t)` is stream `t`'s decoder applied to stream `s`'s code.
    pub cross: Option<Vec<Array2<f64>>>,
}

/// `x̂ = W_D z + b_pre` over rows, touching only the listed indices.
pub fn decode_rows(p: &StreamParams, codes: &Array2<f64>, selected: &[Vec<usize>]) -> Array2<f64> {
    let w_t = p.w_dec.t().as_standard_layout().into_owned();
    let mut out = Array2::zeros((codes.nrows(), p.dim()));
    for (r, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        row.assign(&p.b_pre);
        for &j in &selected[r] {
            let zj = codes[[r, j]];
            if zj != 0.0 {
                row.scaled_add(zj, &w_t.row(j));
            }
        }
    }
    out
}

fn select_rows(
    mode: SelectionMode,
    logits: &[Array2<f64>],
    k: usize,
) -> Vec<Vec<Vec<usize>>> {
    let m = logits.len();
    let b = logits[0].nrows();
    match mode {
        SelectionMode::Global => {
            let rows: Vec<Vec<usize>> = (0..b)
                .map(|r| {
                    let mut agg = logits[0].row(r).to_owned();
                    for h in &logits[1..] {
                        agg += &h.row(r);
                    }
                    select_topk(agg.view(), k)
                })
                .collect();
            vec![rows; m]
        }
        SelectionMode::Local => logits
            .iter()
            .map(|h| (0..b).map(|r| select_topk(h.row(r), k)).collect())
            .collect(),
    }
}

/// Full forward pass over a batch. With `with_cross`, also computes every
/// cross-reconstruction `x̂^{s→t} = W_D^t z^s + b_pre^t`.
pub fn forward(
    model: &ModelParams,
    batch: &FeatureBatch,
    mode: SelectionMode,
    k: usize,
    with_cross: bool,
) -> Result<ForwardOutput> {
    model.check_streams(&batch.streams)?;
    let logits: Vec<Array2<f64>> = model
        .streams
        .iter()
        .zip(&batch.data)
        .map(|(p, x)| encode_batch(p, x.view()))
        .collect::<Result<_>>()?;
    let k_eff = clamp_k(k, model.latent_dim);
    let selected = select_rows(mode, &logits, k_eff);

    let codes: Vec<Array2<f64>> = logits
        .iter()
        .zip(&selected)
        .map(|(h, sel)| {
            let mut z = Array2::zeros(h.dim());
            for (r, idx) in sel.iter().enumerate() {
                for &j in idx {
                    z[[r, j]] = h[[r, j]].max(0.0);
                }
            }
            z
        })
        .collect();

    let recon = model
        .streams
        .iter()
        .enumerate()
        .map(|(s, p)| decode_rows(p, &codes[s], &selected[s]))
        .collect();

    let cross = with_cross.then(|| {
        ordered_pairs(model.num_streams())
            .into_iter()
            .map(|(s, t)| decode_rows(&model.streams[t], &codes[s], &selected[s]))
            .collect()
    });

    Ok(ForwardOutput {
        logits,
        code: SparseCode {
            mode,
            k: k_eff,
            codes,
            selected,
        },
        recon,
        cross,
    })
}
