use rayon::prelude::*;

use crate::eval::codes::LatentCodes;
use crate::eval::report::{fmt_f, Table};

pub const SIMILARITY: &str = "cosine";

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub query: String,
    pub reference: String,
    pub hits: usize,
    pub n: usize,
    pub r_at_1: f64,
}

fn unit_rows(rows: &[Vec<(usize, f64)>]) -> Vec<Vec<(usize, f64)>> {
    rows.iter()
        .map(|r| {
            let norm = r.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.iter().map(|&(j, v)| (j, v / norm)).collect()
            } else {
                Vec::new()
            }
        })
        .collect()
}

/// Cross-stream top-1 retrieval by cosine similarity of codes. Zero-norm
/// codes have similarity 0 to everything; ties go to the lower position.
pub fn retrieval_r_at_1(codes: &LatentCodes, query: usize, reference: usize) -> RetrievalResult {
    let n = codes.len();
    let q = unit_rows(&codes.codes[query]);
    let r = unit_rows(&codes.codes[reference]);
    let mut postings: Vec<Vec<(usize, f64)>> = vec![Vec::new(); codes.latent_dim];
    for (pos, row) in r.iter().enumerate() {
        for &(j, v) in row {
            postings[j].push((pos, v));
        }
    }
    let hits = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0f64; n],
            |scores, i| {
                scores.iter_mut().for_each(|s| *s = 0.0);
                for &(j, v) in &q[i] {
                    for &(pos, w) in &postings[j] {
                        scores[pos] += v * w;
                    }
                }
                let mut best = 0;
                for (pos, &s) in scores.iter().enumerate().skip(1) {
                    if s > scores[best] {
                        best = pos;
                    }
                }
                usize::from(best == i)
            },
        )
        .sum::<usize>();
    RetrievalResult {
        query: codes.streams[query].clone(),
        reference: codes.streams[reference].clone(),
        hits,
        n,
        r_at_1: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
    }
}

/// R@1 for every ordered pair including the diagonal.
pub fn retrieval_matrix(codes: &LatentCodes) -> Vec<RetrievalResult> {
    let m = codes.num_streams();
    (0..m)
        .flat_map(|s| (0..m).map(move |t| (s, t)))
        .map(|(s, t)| retrieval_r_at_1(codes, s, t))
        .collect()
}

pub fn retrieval_table(results: &[RetrievalResult]) -> Table {
    let mut t = Table::new("Retrieval R@1", ["query", "reference", "hits", "n", "R@1"]);
    for r in results {
        t.push([
            r.query.clone(),
            r.reference.clone(),
            r.hits.to_string(),
            r.n.to_string(),
            fmt_f(r.r_at_1, 4),
        ]);
    }
    t.note(format!("similarity: {SIMILARITY}"));
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn codes(a: Vec<Vec<(usize, f64)>>, b: Vec<Vec<(usize, f64)>>) -> LatentCodes {
        LatentCodes {
            latent_dim: 6,
            streams: vec!["a".into(), "b".into()],
            sample_ids: (0..a.len()).collect(),
            codes: vec![a, b],
        }
    }

    /// `(certain hits, certain misses)` under dense cosine search; queries
    /// whose best score is within rounding of another are left undecided.
    fn brute(c: &LatentCodes, s: usize, t: usize) -> (usize, usize) {
        let dense = |row: &Vec<(usize, f64)>| {
            let mut v = vec![0.0; c.latent_dim];
            for &(j, x) in row {
                v[j] = x;
            }
            v
        };
        let norm = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = |a: &[f64], b: &[f64]| {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
            }
        };
        let (mut hits, mut misses) = (0, 0);
        for i in 0..c.len() {
            let q = dense(&c.codes[s][i]);
            let sims: Vec<f64> = c.codes[t].iter().map(|r| cos(&q, &dense(r))).collect();
            let max = sims.iter().copied().fold(f64::MIN, f64::max);
            let near: Vec<usize> = (0..sims.len()).filter(|&p| sims[p] > max - 1e-9).collect();
            let identical = near.iter().all(|&p| c.codes[t][p] == c.codes[t][near[0]]);
            if !near.contains(&i) {
                misses += 1;
            } else if near == [i] || identical && near[0] == i {
                hits += 1;
            } else if identical {
                misses += 1;
            }
        }
        (hits, misses)
    }

    #[test]
    fn self_retrieval_and_identical_codes() {
        let distinct = vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 1.0), (2, 3.0)]];
        let c = codes(distinct.clone(), distinct);
        assert_eq!(retrieval_r_at_1(&c, 0, 0).r_at_1, 1.0);
        let same = vec![vec![(3, 0.5)]; 4];
        let c = codes(same.clone(), same);
        assert_eq!(retrieval_r_at_1(&c, 0, 1).r_at_1, 0.25);
        let zero = vec![vec![]; 5];
        let c = codes(zero.clone(), zero);
        assert_eq!(retrieval_r_at_1(&c, 0, 1).hits, 1);
    }

    fn row() -> impl Strategy<Value = Vec<(usize, f64)>> {
        prop::collection::btree_map(0usize..6, 0.1f64..2.0, 0..4).prop_map(|m| m.into_iter().collect())
    }

    proptest! {
        #[test]
        fn matches_dense_search(a in prop::collection::vec(row(), 1..12), seed in any::<u64>()) {
            let mut b = a.clone();
            let shift = (seed % 6) as usize;
            for r in &mut b {
                for p in r.iter_mut() {
                    p.1 *= 1.0 + ((p.0 + shift) % 3) as f64 * 0.3;
                }
            }
            let c = codes(a, b);
            let (hits, misses) = brute(&c, 0, 1);
            let got = retrieval_r_at_1(&c, 0, 1).hits;
            prop_assert!(got >= hits && got <= c.len() - misses, "{} not in [{}, {}]", got, hits, c.len() - misses);
        }

        #[test]
        fn scaling_a_stream_leaves_recall_unchanged(a in prop::collection::vec(row(), 1..12), b in prop::collection::vec(row(), 12), e in -4i32..4) {
            let b = b[..a.len()].to_vec();
            let mut c = codes(a, b);
            let before = retrieval_r_at_1(&c, 0, 1).hits;
            c.scale_stream(1, 2f64.powi(e));
            prop_assert_eq!(retrieval_r_at_1(&c, 0, 1).hits, before);
            c.scale_stream(0, 2f64.powi(-e));
            prop_assert_eq!(retrieval_r_at_1(&c, 0, 1).hits, before);
        }
    }
}
