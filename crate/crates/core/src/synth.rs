//! Seeded synthetic rating logs with latent-factor taste and Zipf
//! popularity, used as stand-ins for private production datasets.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Interaction, RatingScale, RawDataset};
use crate::seed::{derive_seed, rng_from};

/// First timestamp of the synthetic logs (2001-09-09).
const EPOCH_START: i64 = 1_000_000_000;
const START_SPREAD_SECONDS: f64 = 180.0 * 86_400.0;
/// Within-session and between-session mean gaps.
const SHORT_GAP_SECONDS: f64 = 300.0;
const LONG_GAP_SECONDS: f64 = 3.0 * 86_400.0;
const LONG_GAP_PROBABILITY: f64 = 0.15;
/// Weight of taste affinity against popularity when choosing items.
const AFFINITY_WEIGHT: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Zipf exponent of item popularity.
    pub popularity_skew: f64,
    pub taste_dim: usize,
    pub mean_events_per_user: f64,
    pub rating_noise: f64,
    pub seed: u64,
    #[serde(default = "default_source_id")]
    pub source_id: String,
}

fn default_source_id() -> String {
    "synthetic".to_string()
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_items: 300,
            popularity_skew: 1.0,
            taste_dim: 8,
            mean_events_per_user: 40.0,
            rating_noise: 0.5,
            seed: 0,
            source_id: default_source_id(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0
            || self.n_items == 0
            || self.mean_events_per_user.is_nan()
            || self.mean_events_per_user <= 0.0
        {
            return Err(Error::InvalidArgument("expected event count 0".into()));
        }
        if self.popularity_skew.is_nan() || self.popularity_skew <= 0.0 || self.taste_dim == 0 {
            return Err(Error::InvalidArgument(
                "popularity_skew and taste_dim must be positive".into(),
            ));
        }
        if self.rating_noise.is_nan() || self.rating_noise < 0.0 {
            return Err(Error::InvalidArgument(
                "rating_noise must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Rating for a (scaled) taste affinity: affine map, noise, then clamped to
/// 1..5 and rounded to half stars.
pub fn rating_from_affinity(affinity: f64, noise: f64) -> f64 {
    let raw = 3.0 + 1.5 * affinity + noise;
    ((raw * 2.0).round() / 2.0).clamp(1.0, 5.0)
}

fn gaussian_rows<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn weighted_sample_without_replacement<R: Rng>(
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    // Efraimidis-Spirakis keys: u^(1/w), keep the n largest
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| (rng.gen::<f64>().ln() / w, i))
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.truncate(n);
    keyed.into_iter().map(|(_, i)| i).collect()
}

pub fn generate_synthetic(s: &SynthSpec) -> Result<RawDataset> {
    s.validate()?;
    let mut rng = rng_from(derive_seed(&[s.seed, 0x5747]));
    let users = gaussian_rows(s.n_users, s.taste_dim, &mut rng);
    let items = gaussian_rows(s.n_items, s.taste_dim, &mut rng);
    let scale = 1.0 / (s.taste_dim as f64).sqrt();

    // item popularity rank is a seeded permutation of the catalog
    let mut rank_of: Vec<usize> = (0..s.n_items).collect();
    for i in (1..s.n_items).rev() {
        let j = rng.gen_range(0..=i);
        rank_of.swap(i, j);
    }
    let log_pop: Vec<f64> = rank_of
        .iter()
        .map(|&r| -s.popularity_skew * ((r + 1) as f64).ln())
        .collect();

    let poisson = Poisson::new(s.mean_events_per_user)
        .map_err(|e| Error::InvalidArgument(format!("mean_events_per_user: {e}")))?;
    let short_gap = Exp::new(1.0 / SHORT_GAP_SECONDS).expect("positive rate");
    let long_gap = Exp::new(1.0 / LONG_GAP_SECONDS).expect("positive rate");
    let noise = if s.rating_noise > 0.0 {
        Some(Normal::new(0.0, s.rating_noise).expect("positive sd"))
    } else {
        None
    };

    let mut interactions = Vec::new();
    for (u, taste) in users.iter().enumerate() {
        let mut urng = rng_from(derive_seed(&[s.seed, 0x55, u as u64]));
        let n_events = (poisson.sample(&mut urng) as usize).min(s.n_items);
        if n_events == 0 {
            continue;
        }
        let affinity: Vec<f64> = items
            .iter()
            .map(|v| scale * taste.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let weights: Vec<f64> = log_pop
            .iter()
            .zip(&affinity)
            .map(|(lp, a)| (lp + AFFINITY_WEIGHT * a).exp())
            .collect();
        let chosen = weighted_sample_without_replacement(&weights, n_events, &mut urng);

        let mut t = EPOCH_START + (urng.gen::<f64>() * START_SPREAD_SECONDS) as i64;
        for item in chosen {
            let gap = if urng.gen::<f64>() < LONG_GAP_PROBABILITY {
                long_gap.sample(&mut urng)
            } else {
                short_gap.sample(&mut urng)
            };
            t += 1 + gap as i64;
            let eps = noise.map_or(0.0, |n| n.sample(&mut urng));
            interactions.push(Interaction::new(
                u as u32 + 1,
                item as u32 + 1,
                rating_from_affinity(affinity[item], eps),
                t,
            ));
        }
    }
    if interactions.is_empty() {
        return Err(Error::InvalidArgument("expected event count 0".into()));
    }
    RawDataset::new(s.source_id.clone(), RatingScale::HALF_STARS, interactions)
}

/// Empirical share of the most frequent item among all events.
pub fn top_item_share(d: &RawDataset) -> f64 {
    let mut counts = std::collections::HashMap::new();
    for it in d.interactions() {
        *counts.entry(it.item_id).or_insert(0usize) += 1;
    }
    counts.values().copied().max().unwrap_or(0) as f64 / d.len() as f64
}
