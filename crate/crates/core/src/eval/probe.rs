use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::codes::LatentCodes;
use crate::eval::report::{fmt_f, Table};

pub const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub min_positives: usize,
    pub n_candidates: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    pub downsample_seed_base: u64,
    pub split_seed_base: u64,
    pub holdout_seed_base: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            min_positives: 50,
            n_candidates: 20,
            train_frac: 0.70,
            val_frac: 0.15,
            c: 1.0,
            max_iter: 200,
            downsample_seed_base: 1000,
            split_seed_base: 2000,
            holdout_seed_base: 3000,
        }
    }
}

/// `w, b` of a 1D logistic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logistic {
    pub w: f64,
    pub b: f64,
    pub iterations: usize,
}

impl Logistic {
    pub fn mean_bce(&self, x: &[f64], y: &[bool]) -> f64 {
        if x.is_empty() {
            return LN_2;
        }
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| bce(self.w * xi + self.b, yi))
            .sum::<f64>()
            / x.len() as f64
    }
}

/// `-log σ(t)` for a positive, `-log(1 - σ(t))` for a negative.
fn bce(t: f64, y: bool) -> f64 {
    let m = if y { -t } else { t };
    // log(1 + e^m), stable
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Minimizes `C·Σ BCE + ½w²` (intercept unpenalized) by damped Newton
/// steps with backtracking.
pub fn fit_logistic(x: &[f64], y: &[bool], c: f64, max_iter: usize) -> Logistic {
    let objective = |w: f64, b: f64| {
        c * x.iter().zip(y).map(|(&xi, &yi)| bce(w * xi + b, yi)).sum::<f64>() + 0.5 * w * w
    };
    let (mut w, mut b) = (0.0, 0.0);
    let mut f = objective(w, b);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (mut gw, mut gb, mut hww, mut hwb, mut hbb) = (w, 0.0, 1.0, 0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y) {
            let p = sigmoid(w * xi + b);
            let r = c * (p - if yi { 1.0 } else { 0.0 });
            let s = c * p * (1.0 - p);
            gw += r * xi;
            gb += r;
            hww += s * xi * xi;
            hwb += s * xi;
            hbb += s;
        }
        if gw.abs().max(gb.abs()) < 1e-10 {
            break;
        }
        let hbb = hbb + 1e-12;
        let det = hww * hbb - hwb * hwb;
        let (dw, db) = if det > 1e-18 {
            ((hbb * gw - hwb * gb) / det, (hww * gb - hwb * gw) / det)
        } else {
            (gw / hww, gb / hbb)
        };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let (nw, nb) = (w - step * dw, b - step * db);
            let nf = objective(nw, nb);
            if nf <= f {
                improved = nf < f;
                w = nw;
                b = nb;
                f = nf;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Logistic { w, b, iterations }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamProbe {
    pub best_latent: Option<usize>,
    pub val_loss: f64,
    pub test_loss: f64,
    /// No candidate latent fired on positive training samples.
    pub no_candidates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskResult {
    pub label: String,
    pub task_id: usize,
    pub positives: usize,
    /// Samples per class after balancing.
    pub balanced: usize,
    pub per_stream: Vec<StreamProbe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub streams: Vec<String>,
    pub tasks: Vec<TaskResult>,
    /// Mean best-probe test loss per stream over tasks.
    pub mean_loss: Vec<f64>,
    /// Labels with fewer than the minimum number of positives.
    pub excluded_tasks: usize,
    /// Labels with no negatives to balance against.
    pub excluded_no_negatives: usize,
}

impl ProbeReport {
    pub fn overall_mean(&self) -> f64 {
        if self.mean_loss.is_empty() {
            LN_2
        } else {
            self.mean_loss.iter().sum::<f64>() / self.mean_loss.len() as f64
        }
    }

    pub fn flagged(&self) -> usize {
        self.tasks
            .iter()
            .flat_map(|t| &t.per_stream)
            .filter(|p| p.no_candidates)
            .count()
    }

    pub fn table(&self) -> Table {
        let mut headers = vec!["task".to_string(), "positives".to_string()];
        headers.extend(self.streams.iter().cloned());
        let mut t = Table::new("Best 1D probe test loss", headers);
        for task in &self.tasks {
            let mut row = vec![task.label.clone(), task.positives.to_string()];
            row.extend(task.per_stream.iter().map(|p| {
                let v = fmt_f(p.test_loss, 4);
                if p.no_candidates {
                    format!("{v}*")
                } else {
                    v
                }
            }));
            t.push(row);
        }
        let mut mean = vec!["mean".to_string(), self.tasks.len().to_string()];
        mean.extend(self.mean_loss.iter().map(|&v| fmt_f(v, 4)));
        t.push(mean);
        t.note(format!(
            "excluded tasks: {} below min positives, {} without negatives; {} task-streams flagged (*) with no candidates",
            self.excluded_tasks,
            self.excluded_no_negatives,
            self.flagged()
        ));
        t
    }
}

struct TaskSplit {
    train: Vec<(usize, bool)>,
    val: Vec<(usize, bool)>,
    test: Vec<(usize, bool)>,
}

fn shuffled(mut v: Vec<usize>, seed: u64) -> Vec<usize> {
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

/// Balances by downsampling the majority class, then splits each class
/// `train_frac / val_frac / rest`.
fn split_task(pos: Vec<usize>, neg: Vec<usize>, task_id: usize, cfg: &ProbeConfig) -> TaskSplit {
    let n = pos.len().min(neg.len());
    let id = task_id as u64;
    let balance = |v: Vec<usize>| {
        let mut v = if v.len() > n {
            shuffled(v, cfg.downsample_seed_base + id)[..n].to_vec()
        } else {
            v
        };
        v.sort_unstable();
        v
    };
    let (pos, neg) = (balance(pos), balance(neg));
    let mut split = TaskSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (class, members) in [(true, pos), (false, neg)] {
        let m = members.len();
        let n_train = ((m as f64) * cfg.train_frac).round() as usize;
        let n_val = ((m as f64) * cfg.val_frac).round() as usize;
        let order = shuffled(members, cfg.split_seed_base + id);
        let (train, rest) = order.split_at(n_train.min(m));
        let rest = shuffled(rest.to_vec(), cfg.holdout_seed_base + id);
        let (val, test) = rest.split_at(n_val.min(rest.len()));
        split.train.extend(train.iter().map(|&p| (p, class)));
        split.val.extend(val.iter().map(|&p| (p, class)));
        split.test.extend(test.iter().map(|&p| (p, class)));
    }
    split
}

fn probe_stream(codes: &LatentCodes, stream: usize, split: &TaskSplit, cfg: &ProbeConfig) -> StreamProbe {
    let mut freq = vec![0usize; codes.latent_dim];
    for &(p, y) in &split.train {
        if y {
            for &(j, _) in &codes.codes[stream][p] {
                freq[j] += 1;
            }
        }
    }
    let mut cand: Vec<usize> = (0..codes.latent_dim).filter(|&j| freq[j] > 0).collect();
    cand.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
    cand.truncate(cfg.n_candidates);
    if cand.is_empty() {
        return StreamProbe {
            best_latent: None,
            val_loss: LN_2,
            test_loss: LN_2,
            no_candidates: true,
        };
    }
    let column = |set: &[(usize, bool)], j: usize| -> (Vec<f64>, Vec<bool>) {
        set.iter()
            .map(|&(p, y)| (codes.activation(stream, p, j), y))
            .unzip()
    };
    let mut best: Option<(f64, usize, Logistic)> = None;
    for &j in &cand {
        let (x, y) = column(&split.train, j);
        let model = fit_logistic(&x, &y, cfg.c, cfg.max_iter);
        let (xv, yv) = column(&split.val, j);
        let val = model.mean_bce(&xv, &yv);
        if best.as_ref().is_none_or(|b| val < b.0) {
            best = Some((val, j, model));
        }
    }
    let (val_loss, j, model) = best.expect("non-empty candidates");
    let (xt, yt) = column(&split.test, j);
    StreamProbe {
        best_latent: Some(j),
        val_loss,
        test_loss: model.mean_bce(&xt, &yt),
        no_candidates: false,
    }
}

/// Runs one binary probe task per label with enough positives. `labels` is
/// indexed by evaluation position; task ids index the sorted vocabulary.
pub fn probe_eval(codes: &LatentCodes, labels: &[Vec<String>], cfg: &ProbeConfig) -> ProbeReport {
    let mut vocab: Vec<&str> = labels.iter().flatten().map(String::as_str).collect();
    vocab.sort_unstable();
    vocab.dedup();
    let mut excluded_tasks = 0;
    let mut excluded_no_negatives = 0;
    let mut jobs = Vec::new();
    for (task_id, &label) in vocab.iter().enumerate() {
        let (pos, neg): (Vec<usize>, Vec<usize>) =
            (0..labels.len()).partition(|&p| labels[p].iter().any(|l| l == label));
        if pos.len() < cfg.min_positives {
            excluded_tasks += 1;
        } else if neg.is_empty() {
            excluded_no_negatives += 1;
        } else {
            jobs.push((task_id, label, pos, neg));
        }
    }
    let tasks: Vec<TaskResult> = jobs
        .into_par_iter()
        .map(|(task_id, label, pos, neg)| {
            let positives = pos.len();
            let balanced = positives.min(neg.len());
            let split = split_task(pos, neg, task_id, cfg);
            TaskResult {
                label: label.to_string(),
                task_id,
                positives,
                balanced,
                per_stream: (0..codes.num_streams())
                    .map(|s| probe_stream(codes, s, &split, cfg))
                    .collect(),
            }
        })
        .collect();
    let mean_loss = (0..codes.num_streams())
        .map(|s| {
            if tasks.is_empty() {
                LN_2
            } else {
                tasks.iter().map(|t| t.per_stream[s].test_loss).sum::<f64>() / tasks.len() as f64
            }
        })
        .collect();
    ProbeReport {
        streams: codes.streams.clone(),
        tasks,
        mean_loss,
        excluded_tasks,
        excluded_no_negatives,
    }
}
