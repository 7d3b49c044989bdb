use crate::eval::codes::LatentCodes;
use crate::eval::report::{fmt_f, Table};

/// Fire counts per `(stream, latent)` over an evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStats {
    pub streams: Vec<String>,
    pub n_samples: usize,
    /// `[stream][latent]`: samples with `z > 0`.
    pub fire_counts: Vec<Vec<usize>>,
}

impl ActivationStats {
    pub fn from_codes(codes: &LatentCodes) -> Self {
        let fire_counts = codes
            .codes
            .iter()
            .map(|rows| {
                let mut c = vec![0usize; codes.latent_dim];
                for row in rows {
                    for &(j, _) in row {
                        c[j] += 1;
                    }
                }
                c
            })
            .collect();
        Self {
            streams: codes.streams.clone(),
            n_samples: codes.len(),
            fire_counts,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.fire_counts.first().map_or(0, Vec::len)
    }

    pub fn is_alive(&self, stream: usize, latent: usize) -> bool {
        self.fire_counts[stream][latent] > 0
    }

    /// Number of streams in which `latent` fires at least once.
    pub fn alive_streams(&self, latent: usize) -> usize {
        self.fire_counts.iter().filter(|c| c[latent] > 0).count()
    }

    pub fn summary(&self) -> PatternSummary {
        let m = self.streams.len();
        let l = self.latent_dim();
        let mut counts = vec![0usize; m + 1];
        for j in 0..l {
            counts[self.alive_streams(j)] += 1;
        }
        let pct = |c: usize| if l == 0 { 0.0 } else { 100.0 * c as f64 / l as f64 };
        let by_alive: Vec<f64> = counts.iter().map(|&c| pct(c)).collect();
        let mixed = counts[1..m].iter().sum::<usize>();
        PatternSummary {
            streams: self.streams.clone(),
            latent_dim: l,
            alive_counts: counts.clone(),
            by_alive: by_alive.clone(),
            all_dead: by_alive[0],
            all_alive: by_alive[m],
            mixed: pct(mixed),
            dead_per_stream: self
                .fire_counts
                .iter()
                .map(|c| pct(c.iter().filter(|&&v| v == 0).count()))
                .collect(),
        }
    }
}

/// Percentages of latents by how many streams they are alive in.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSummary {
    pub streams: Vec<String>,
    pub latent_dim: usize,
    /// Index `a`: latents alive in exactly `a` streams.
    pub alive_counts: Vec<usize>,
    pub by_alive: Vec<f64>,
    pub all_dead: f64,
    pub all_alive: f64,
    /// Alive in some but not all streams.
    pub mixed: f64,
    pub dead_per_stream: Vec<f64>,
}

impl PatternSummary {
    pub fn table(&self) -> Table {
        let m = self.streams.len();
        let mut t = Table::new("Activation patterns", ["pattern", "latents", "percent"]);
        for a in (0..=m).rev() {
            let name = match a {
                0 => "all dead".to_string(),
                a if a == m => "all alive".to_string(),
                a => format!("{a}/{m} alive"),
            };
            t.push([name, self.alive_counts[a].to_string(), fmt_f(self.by_alive[a], 2)]);
        }
        t.push([
            "mixed".to_string(),
            self.alive_counts[1..m].iter().sum::<usize>().to_string(),
            fmt_f(self.mixed, 2),
        ]);
        for (s, d) in self.streams.iter().zip(&self.dead_per_stream) {
            t.push([format!("dead in {s}"), String::new(), fmt_f(*d, 2)]);
        }
        t.note(format!("L = {}", self.latent_dim));
        t
    }
}
