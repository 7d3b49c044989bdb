use crate::eval::codes::LatentCodes;

/// The `n` samples with the largest activation of one latent.
#[derive(Debug, Clone, PartialEq)]
pub struct TopActivating {
    /// Positions into the evaluation set, best first.
    pub positions: Vec<usize>,
    pub activations: Vec<f64>,
    /// The latent never fired for this stream; every entry is 0.
    pub dead: bool,
}

impl TopActivating {
    /// Positions whose activation is strictly positive.
    pub fn firing(&self) -> impl Iterator<Item = usize> + '_ {
        self.positions
            .iter()
            .zip(&self.activations)
            .filter(|(_, &a)| a > 0.0)
            .map(|(&p, _)| p)
    }
}

/// Ranks `postings` (one latent's firing `(position, activation)` pairs)
/// descending by activation, ties by ascending position; pads with the
/// lowest non-firing positions when fewer than `n` samples fire.
pub fn rank_postings(postings: &[(usize, f64)], n_total: usize, n: usize) -> TopActivating {
    let n = n.min(n_total);
    let mut ranked: Vec<(usize, f64)> = postings.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    let dead = postings.is_empty();
    if ranked.len() < n {
        let mut firing: Vec<usize> = postings.iter().map(|p| p.0).collect();
        firing.sort_unstable();
        let pad = (0..n_total).filter(|p| firing.binary_search(p).is_err());
        let need = n - ranked.len();
        ranked.extend(pad.take(need).map(|p| (p, 0.0)));
    }
    TopActivating {
        positions: ranked.iter().map(|p| p.0).collect(),
        activations: ranked.iter().map(|p| p.1).collect(),
        dead,
    }
}

pub fn top_activating(codes: &LatentCodes, stream: usize, latent: usize, n: usize) -> TopActivating {
    let postings: Vec<(usize, f64)> = codes.codes[stream]
        .iter()
        .enumerate()
        .filter_map(|(pos, row)| {
            row.binary_search_by_key(&latent, |p| p.0)
                .ok()
                .map(|i| (pos, row[i].1))
        })
        .collect();
    rank_postings(&postings, codes.len(), n)
}

/// [`top_activating`] for every latent of `stream`.
pub fn top_activating_all(codes: &LatentCodes, stream: usize, n: usize) -> Vec<TopActivating> {
    codes
        .postings(stream)
        .iter()
        .map(|p| rank_postings(p, codes.len(), n))
        .collect()
}
