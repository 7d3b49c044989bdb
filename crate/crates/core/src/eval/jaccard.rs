use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Result, SparcError};
use crate::eval::codes::LatentCodes;
use crate::eval::report::{fmt_f, Table};
use crate::eval::top_activating::{top_activating_all, TopActivating};
use crate::store::Taxonomy;

pub const DEFAULT_TOP_N: usize = 50;

pub type LabelCounts = BTreeMap<String, f64>;

/// `Σ min(a_c, b_c) / Σ max(a_c, b_c)`; `None` when both are empty.
pub fn generalized_jaccard(a: &LabelCounts, b: &LabelCounts) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, &x) in a {
        let y = b.get(c).copied().unwrap_or(0.0);
        num += x.min(y);
        den += x.max(y);
    }
    for (c, &y) in b {
        if !a.contains_key(c) {
            den += y;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// One count per label occurrence among firing top samples, collapsed to
/// `depth` when a taxonomy is given.
pub fn label_counts(
    top: &TopActivating,
    labels: &[Vec<String>],
    taxonomy: Option<&Taxonomy>,
    depth: Option<usize>,
) -> Result<LabelCounts> {
    let mut counts = LabelCounts::new();
    for pos in top.firing() {
        for label in &labels[pos] {
            let key = match (taxonomy, depth) {
                (Some(t), Some(d)) => t.collapse(label, d)?,
                _ => label.as_str(),
            };
            *counts.entry(key.to_string()).or_insert(0.0) += 1.0;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairAlignment {
    pub streams: (String, String),
    pub mean: f64,
    pub scored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    /// `None` means raw (leaf) labels.
    pub depth: Option<usize>,
    pub n_top: usize,
    /// Mean over every scored `(latent, pair)`.
    pub mean: f64,
    pub pairs: Vec<PairAlignment>,
    /// `(latent, s, t, J)` for every scored entry.
    pub per_latent: Vec<(usize, usize, usize, f64)>,
    pub scored: usize,
    /// Latent dead in both streams of the pair.
    pub excluded_dead: usize,
    /// Both count vectors empty (no labelled firing sample).
    pub excluded_empty: usize,
    /// Latent dead in exactly one stream; scored as 0.
    pub one_sided_dead: usize,
}

/// Concept alignment of every latent across every unordered stream pair.
/// `labels` is indexed by evaluation position.
pub fn jaccard_alignment(
    codes: &LatentCodes,
    labels: &[Vec<String>],
    taxonomy: Option<&Taxonomy>,
    depth: Option<usize>,
    n_top: usize,
) -> Result<AlignmentReport> {
    if labels.len() != codes.len() {
        return Err(SparcError::Shape(format!(
            "{} label lists for {} evaluation samples",
            labels.len(),
            codes.len()
        )));
    }
    if depth.is_some() && taxonomy.is_none() {
        return Err(SparcError::Config("collapsing to a depth needs a taxonomy".into()));
    }
    let m = codes.num_streams();
    let tops: Vec<Vec<TopActivating>> = (0..m)
        .into_par_iter()
        .map(|s| top_activating_all(codes, s, n_top))
        .collect();
    let counts: Vec<Vec<LabelCounts>> = tops
        .par_iter()
        .map(|per_latent| {
            per_latent
                .iter()
                .map(|t| label_counts(t, labels, taxonomy, depth))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut report = AlignmentReport {
        depth,
        n_top,
        mean: 0.0,
        pairs: Vec::new(),
        per_latent: Vec::new(),
        scored: 0,
        excluded_dead: 0,
        excluded_empty: 0,
        one_sided_dead: 0,
    };
    let mut total = 0.0;
    for s in 0..m {
        for t in s + 1..m {
            let mut sum = 0.0;
            let mut scored = 0;
            for j in 0..codes.latent_dim {
                let (ds, dt) = (tops[s][j].dead, tops[t][j].dead);
                let jv = if ds && dt {
                    report.excluded_dead += 1;
                    continue;
                } else if ds || dt {
                    report.one_sided_dead += 1;
                    0.0
                } else {
                    match generalized_jaccard(&counts[s][j], &counts[t][j]) {
                        Some(v) => v,
                        None => {
                            report.excluded_empty += 1;
                            continue;
                        }
                    }
                };
                report.per_latent.push((j, s, t, jv));
                sum += jv;
                scored += 1;
            }
            total += sum;
            report.scored += scored;
            report.pairs.push(PairAlignment {
                streams: (codes.streams[s].clone(), codes.streams[t].clone()),
                mean: if scored > 0 { sum / scored as f64 } else { 0.0 },
                scored,
            });
        }
    }
    report.mean = if report.scored > 0 {
        total / report.scored as f64
    } else {
        0.0
    };
    Ok(report)
}

/// One row per depth, one column per stream pair plus the mean.
pub fn alignment_table(reports: &[AlignmentReport]) -> Table {
    let pair_names: Vec<String> = reports
        .first()
        .map(|r| r.pairs.iter().map(|p| format!("{}-{}", p.streams.0, p.streams.1)).collect())
        .unwrap_or_default();
    let mut headers = vec!["depth".to_string()];
    headers.extend(pair_names);
    headers.extend(["mean", "scored", "excl_dead", "excl_empty", "one_sided_dead"].map(String::from));
    let mut t = Table::new("Concept alignment (generalized Jaccard)", headers);
    for r in reports {
        let mut row = vec![r.depth.map_or("leaf".to_string(), |d| d.to_string())];
        row.extend(r.pairs.iter().map(|p| fmt_f(p.mean, 4)));
        row.push(fmt_f(r.mean, 4));
        row.extend([r.scored, r.excluded_dead, r.excluded_empty, r.one_sided_dead].map(|v| v.to_string()));
        t.push(row);
    }
    if let Some(r) = reports.first() {
        t.note(format!("top-{} activating samples per latent and stream", r.n_top));
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(pairs: &[(&str, f64)]) -> LabelCounts {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn jaccard_examples() {
        let a = counts(&[("human", 40.0), ("cat", 9.0), ("car", 1.0)]);
        let b = counts(&[("human", 50.0)]);
        approx::assert_abs_diff_eq!(generalized_jaccard(&a, &b).unwrap(), 40.0 / 60.0, epsilon = 1e-15);
        assert_eq!(generalized_jaccard(&a, &a), Some(1.0));
        assert_eq!(generalized_jaccard(&counts(&[("x", 2.0)]), &counts(&[("y", 3.0)])), Some(0.0));
        assert_eq!(generalized_jaccard(&LabelCounts::new(), &LabelCounts::new()), None);
    }

    fn tax() -> Taxonomy {
        Taxonomy::from_edges(
            "r",
            [("p", "r"), ("q", "r"), ("a", "p"), ("b", "p"), ("c", "q"), ("d", "q")],
        )
        .unwrap()
    }

    fn rebucket(raw: &[(usize, f64)], depth: usize) -> LabelCounts {
        let leaf = ["a", "b", "c", "d"];
        let parent = ["p", "p", "q", "q"];
        let mut out = LabelCounts::new();
        for &(i, v) in raw {
            let key = match depth {
                0 => "r",
                1 => parent[i],
                _ => leaf[i],
            };
            *out.entry(key.to_string()).or_insert(0.0) += v;
        }
        out
    }

    fn sum_min(a: &LabelCounts, b: &LabelCounts) -> f64 {
        a.iter().map(|(k, &x)| x.min(b.get(k).copied().unwrap_or(0.0))).sum()
    }

    proptest! {
        #[test]
        fn jaccard_is_bounded_and_symmetric(
            a in prop::collection::btree_map("[a-e]", 0.0f64..10.0, 0..5),
            b in prop::collection::btree_map("[a-e]", 0.0f64..10.0, 0..5),
        ) {
            if let Some(j) = generalized_jaccard(&a, &b) {
                prop_assert!((0.0..=1.0).contains(&j));
                prop_assert!((j - generalized_jaccard(&b, &a).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn coarser_depth_never_lowers_overlap(
            a in prop::collection::vec((0usize..4, 1.0f64..5.0), 0..6),
            b in prop::collection::vec((0usize..4, 1.0f64..5.0), 0..6),
        ) {
            let tax = tax();
            for depth in 0..2 {
                prop_assert!(sum_min(&rebucket(&a, depth), &rebucket(&b, depth))
                    >= sum_min(&rebucket(&a, depth + 1), &rebucket(&b, depth + 1)) - 1e-12);
                for (i, &leaf) in ["a", "b", "c", "d"].iter().enumerate() {
                    let expect = rebucket(&[(i, 1.0)], depth);
                    prop_assert!(expect.contains_key(tax.collapse(leaf, depth).unwrap()));
                }
            }
        }
    }

    #[test]
    fn alignment_tallies_dead_and_one_sided_latents() {
        let codes = LatentCodes {
            latent_dim: 3,
            streams: vec!["a".into(), "b".into()],
            sample_ids: vec![0, 1],
            codes: vec![
                vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 0.5)]],
                vec![vec![(0, 2.0)], vec![(0, 0.1)]],
            ],
        };
        let labels = vec![vec!["a".to_string()], vec!["c".to_string()]];
        let r = jaccard_alignment(&codes, &labels, None, None, 50).unwrap();
        assert_eq!(r.excluded_dead, 1);
        assert_eq!(r.one_sided_dead, 1);
        assert_eq!(r.scored, 2);
        assert_eq!(r.mean, 0.5);
        let r0 = jaccard_alignment(&codes, &labels, Some(&tax()), Some(0), 50).unwrap();
        assert_eq!(r0.per_latent[0].3, 1.0);
    }
}
