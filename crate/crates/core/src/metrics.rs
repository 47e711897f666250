//! Top-k metrics with binary relevance.
//!
//! Per-pair metrics (precision, recall, MRR, NDCG) are averaged over test
//! pairs. Item coverage and APT are set-level and are computed over the
//! recommendations of the whole test set.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algos::RecModel;
use crate::error::{Error, Result};
use crate::protocol::PDataset;
use crate::seed::derive_seed;
use crate::stats::bootstrap_std_with;

/// Share of train interactions covered by the popular "head" items.
pub const HEAD_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricFamily {
    Precision,
    Recall,
    Mrr,
    Ndcg,
    ItemCoverage,
    Apt,
}

impl MetricFamily {
    pub const ALL: [MetricFamily; 6] = [
        MetricFamily::Precision,
        MetricFamily::Recall,
        MetricFamily::Mrr,
        MetricFamily::Ndcg,
        MetricFamily::ItemCoverage,
        MetricFamily::Apt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricFamily::Precision => "precision",
            MetricFamily::Recall => "recall",
            MetricFamily::Mrr => "mrr",
            MetricFamily::Ndcg => "ndcg",
            MetricFamily::ItemCoverage => "item_coverage",
            MetricFamily::Apt => "apt",
        }
    }

    pub fn is_per_pair(self) -> bool {
        !matches!(self, MetricFamily::ItemCoverage)
    }
}

/// A metric at a cutoff, written `family@k` (e.g. `ndcg@10`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetricId {
    pub family: MetricFamily,
    pub k: usize,
}

impl MetricId {
    pub fn new(family: MetricFamily, k: usize) -> Self {
        Self { family, k }
    }

    /// The full pool: every family at k = 10, 30, 100.
    pub fn default_pool() -> Vec<MetricId> {
        MetricFamily::ALL
            .into_iter()
            .flat_map(|f| [10, 30, 100].map(|k| MetricId::new(f, k)))
            .collect()
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.family.as_str(), self.k)
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid metric `{s}` (expected family@k)"));
        let (family, k) = s.split_once('@').ok_or_else(bad)?;
        let family = MetricFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == family)
            .ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        Ok(MetricId { family, k })
    }
}

impl Serialize for MetricId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn check_rel(rel: &[u32]) -> Result<()> {
    if rel.is_empty() {
        Err(Error::NoRelevantItems)
    } else {
        Ok(())
    }
}

fn top_k(rec: &[u32], k: usize) -> &[u32] {
    &rec[..k.min(rec.len())]
}

fn hits(rec: &[u32], rel: &[u32], k: usize) -> usize {
    top_k(rec, k).iter().filter(|i| rel.contains(i)).count()
}

/// `|top-k ∩ rel| / k`; the denominator stays `k` for short lists.
pub fn precision_at_k(rec: &[u32], rel: &[u32], k: usize) -> Result<f64> {
    check_rel(rel)?;
    Ok(hits(rec, rel, k) as f64 / k as f64)
}

pub fn recall_at_k(rec: &[u32], rel: &[u32], k: usize) -> Result<f64> {
    check_rel(rel)?;
    Ok(hits(rec, rel, k) as f64 / rel.len() as f64)
}

/// Reciprocal rank of the first relevant item in the top k, 0 if none.
pub fn mrr_at_k(rec: &[u32], rel: &[u32], k: usize) -> Result<f64> {
    check_rel(rel)?;
    Ok(top_k(rec, k)
        .iter()
        .position(|i| rel.contains(i))
        .map_or(0.0, |p| 1.0 / (p + 1) as f64))
}

/// Binary-gain NDCG; the ideal list holds `min(|rel|, k)` hits.
pub fn ndcg_at_k(rec: &[u32], rel: &[u32], k: usize) -> Result<f64> {
    check_rel(rel)?;
    let discount = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = top_k(rec, k)
        .iter()
        .enumerate()
        .filter(|(_, i)| rel.contains(i))
        .map(|(p, _)| discount(p))
        .sum();
    let idcg: f64 = (0..rel.len().min(k)).map(discount).sum();
    Ok(dcg / idcg)
}

/// Catalog, train popularity and the derived long-tail set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    pub n_items: usize,
    pub popularity: Vec<u64>,
    pub long_tail: Vec<bool>,
}

impl EvalContext {
    /// The head is the shortest prefix of items sorted by popularity
    /// (descending, ties by index) whose cumulative count reaches
    /// [`HEAD_SHARE`] of all train interactions; the rest is the long tail.
    pub fn from_popularity(popularity: Vec<u64>) -> Self {
        let n_items = popularity.len();
        let total: u64 = popularity.iter().sum();
        let mut order: Vec<usize> = (0..n_items).collect();
        order.sort_by(|&a, &b| popularity[b].cmp(&popularity[a]).then(a.cmp(&b)));
        let mut long_tail = vec![true; n_items];
        let target = HEAD_SHARE * total as f64;
        let mut cumulative = 0u64;
        for &i in &order {
            if cumulative as f64 >= target {
                break;
            }
            long_tail[i] = false;
            cumulative += popularity[i];
        }
        Self {
            n_items,
            popularity,
            long_tail,
        }
    }

    pub fn for_pdataset(d: &PDataset) -> Self {
        Self::from_popularity(d.popularity())
    }

    pub fn long_tail_size(&self) -> usize {
        self.long_tail.iter().filter(|&&t| t).count()
    }
}

/// Fraction of the catalog that appears in at least one top-k list.
pub fn item_coverage_at_k(all_recs: &[&[u32]], ctx: &EvalContext, k: usize) -> Result<f64> {
    if ctx.n_items == 0 {
        return Err(Error::EmptyCatalog);
    }
    let seen: HashSet<u32> = all_recs
        .iter()
        .flat_map(|r| top_k(r, k).iter().copied())
        .collect();
    Ok(seen.len() as f64 / ctx.n_items as f64)
}

fn long_tail_share(rec: &[u32], ctx: &EvalContext, k: usize) -> f64 {
    top_k(rec, k)
        .iter()
        .filter(|&&i| ctx.long_tail.get(i as usize).copied().unwrap_or(false))
        .count() as f64
        / k as f64
}

/// Mean over lists of the share of long-tail items in the top k.
pub fn apt_at_k(all_recs: &[&[u32]], ctx: &EvalContext, k: usize) -> Result<f64> {
    if ctx.long_tail_size() == 0 {
        return Err(Error::DegenerateLongTail);
    }
    if all_recs.is_empty() {
        return Err(Error::InvalidArgument("no recommendation lists".into()));
    }
    Ok(all_recs
        .iter()
        .map(|r| long_tail_share(r, ctx, k))
        .sum::<f64>()
        / all_recs.len() as f64)
}

/// Per-pair value of a per-pair metric (APT counts as per-pair here: its
/// set-level value is the mean of these).
pub fn per_pair_value(
    metric: MetricId,
    rec: &[u32],
    rel: &[u32],
    ctx: &EvalContext,
) -> Result<f64> {
    let k = metric.k;
    match metric.family {
        MetricFamily::Precision => precision_at_k(rec, rel, k),
        MetricFamily::Recall => recall_at_k(rec, rel, k),
        MetricFamily::Mrr => mrr_at_k(rec, rel, k),
        MetricFamily::Ndcg => ndcg_at_k(rec, rel, k),
        MetricFamily::Apt => {
            if ctx.long_tail_size() == 0 {
                return Err(Error::DegenerateLongTail);
            }
            Ok(long_tail_share(rec, ctx, k))
        }
        MetricFamily::ItemCoverage => Err(Error::InvalidArgument(
            "item coverage is a set-level metric".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub metric: MetricId,
    pub algorithm: String,
    pub mean: f64,
    pub std: f64,
}

/// Scores of every (metric, algorithm) combination on one p-dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub entries: Vec<MetricEntry>,
    pub n_test_pairs: usize,
}

impl MetricTable {
    pub fn get(&self, metric: MetricId, algorithm: &str) -> Option<&MetricEntry> {
        self.entries
            .iter()
            .find(|e| e.metric == metric && e.algorithm == algorithm)
    }

    pub fn mean(&self, metric: MetricId, algorithm: &str) -> Result<f64> {
        self.get(metric, algorithm)
            .map(|e| e.mean)
            .ok_or_else(|| Error::MissingEntry {
                metric: metric.to_string(),
                algorithm: algorithm.to_string(),
            })
    }
}

/// Recommendations of one model for every test pair, at the largest k
/// requested.
pub fn recommend_all(d: &PDataset, model: &RecModel, k_max: usize) -> Result<Vec<Vec<u32>>> {
    d.test_pairs
        .iter()
        .map(|pair| {
            let input: Vec<u32> = pair.input.items().collect();
            model.recommend(&input, k_max).map(|r| r.items)
        })
        .collect()
}

/// Metric entries for one model. Bootstrap seeds derive from `seed` and the
/// metric's position in `metric_ids`.
pub fn evaluate_model(
    d: &PDataset,
    ctx: &EvalContext,
    model: &RecModel,
    metric_ids: &[MetricId],
    n_boot: usize,
    seed: u64,
) -> Result<Vec<MetricEntry>> {
    if d.test_pairs.is_empty() {
        return Err(Error::InvalidArgument("no valid test pairs".into()));
    }
    let k_max = metric_ids.iter().map(|m| m.k).max().unwrap_or(1);
    let recs = recommend_all(d, model, k_max)?;

    let mut entries = Vec::with_capacity(metric_ids.len());
    for (mi, &metric) in metric_ids.iter().enumerate() {
        let boot_seed = derive_seed(&[seed, mi as u64]);
        let (mean, std) = if metric.family.is_per_pair() {
            let values: Vec<f64> = recs
                .iter()
                .zip(&d.test_pairs)
                .map(|(rec, pair)| per_pair_value(metric, rec, &pair.output, ctx))
                .collect::<Result<_>>()?;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = bootstrap_std_with(values.len(), n_boot, boot_seed, |idx| {
                idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
            })?;
            (mean, std)
        } else {
            let lists: Vec<&[u32]> = recs.iter().map(Vec::as_slice).collect();
            let mean = item_coverage_at_k(&lists, ctx, metric.k)?;
            let std = bootstrap_std_with(lists.len(), n_boot, boot_seed, |idx| {
                let sample: Vec<&[u32]> = idx.iter().map(|&i| lists[i]).collect();
                item_coverage_at_k(&sample, ctx, metric.k).unwrap_or(0.0)
            })?;
            (mean, std)
        };
        entries.push(MetricEntry {
            metric,
            algorithm: model.spec.name.clone(),
            mean,
            std,
        });
    }
    Ok(entries)
}

/// Evaluates every model under every metric. Entries are ordered
/// metric-major, then by model order.
pub fn evaluate_all(
    d: &PDataset,
    models: &[RecModel],
    metric_ids: &[MetricId],
    n_boot: usize,
    seed: u64,
) -> Result<MetricTable> {
    let ctx = EvalContext::for_pdataset(d);
    let per_model: Vec<Vec<MetricEntry>> = models
        .iter()
        .enumerate()
        .map(|(ai, m)| {
            evaluate_model(
                d,
                &ctx,
                m,
                metric_ids,
                n_boot,
                derive_seed(&[seed, ai as u64]),
            )
        })
        .collect::<Result<_>>()?;
    Ok(assemble_table(
        per_model,
        metric_ids.len(),
        d.test_pairs.len(),
    ))
}

pub fn assemble_table(
    per_model: Vec<Vec<MetricEntry>>,
    n_metrics: usize,
    n_test_pairs: usize,
) -> MetricTable {
    let mut entries = Vec::with_capacity(n_metrics * per_model.len());
    for mi in 0..n_metrics {
        for model_entries in &per_model {
            entries.push(model_entries[mi].clone());
        }
    }
    MetricTable {
        entries,
        n_test_pairs,
    }
}
