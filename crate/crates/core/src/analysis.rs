//! Dataset robustness, p-dataset signatures, signature-based protocol
//! selection and 2-D signature embeddings.
//!
//! Robustness of a dataset under a metric is the 5th percentile (linear
//! interpolation) of the Spearman correlations between the algorithm
//! performance vectors of every pair of p-datasets. Pairs where either
//! vector is constant have no defined correlation; they are skipped and
//! reported rather than scored.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricId, MetricTable};
use crate::seed::rng_from;
use crate::stats::{percentile_linear, spearman};

pub const ROBUSTNESS_PERCENTILE: f64 = 5.0;

/// Means of one metric for each algorithm, in a fixed algorithm order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceVector {
    pub metric: MetricId,
    pub scores: Vec<f64>,
}

pub fn performance_vector(
    t: &MetricTable,
    metric: MetricId,
    algo_order: &[String],
) -> Result<PerformanceVector> {
    let scores = algo_order
        .iter()
        .map(|a| t.mean(metric, a))
        .collect::<Result<Vec<f64>>>()?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(PerformanceVector { metric, scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub protocol_a: String,
    pub protocol_b: String,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub dataset_id: String,
    pub metric: MetricId,
    pub robustness: f64,
    pub n_pdatasets: usize,
    pub pair_correlations: Vec<PairCorrelation>,
    /// Pairs with a constant performance vector on either side.
    pub skipped_pairs: Vec<(String, String)>,
}

/// Robustness over a set of p-datasets, each given as (protocol id,
/// performance vector).
pub fn robustness(
    dataset_id: &str,
    metric: MetricId,
    vectors: &[(String, PerformanceVector)],
) -> Result<RobustnessReport> {
    if vectors.len() < 2 {
        return Err(Error::InsufficientPDatasets);
    }
    let len = vectors[0].1.scores.len();
    if vectors.iter().any(|(_, v)| v.scores.len() != len) {
        return Err(Error::InvalidArgument(
            "performance vectors differ in length".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = (0..vectors.len())
        .flat_map(|i| ((i + 1)..vectors.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<Option<f64>>> = pairs
        .par_iter()
        .map(
            |&(i, j)| match spearman(&vectors[i].1.scores, &vectors[j].1.scores) {
                Ok(rho) => Ok(Some(rho)),
                Err(Error::UndefinedCorrelation) => Ok(None),
                Err(e) => Err(e),
            },
        )
        .collect();

    let mut pair_correlations = Vec::new();
    let mut skipped_pairs = Vec::new();
    for (&(i, j), r) in pairs.iter().zip(results) {
        let (a, b) = (vectors[i].0.clone(), vectors[j].0.clone());
        match r? {
            Some(rho) => pair_correlations.push(PairCorrelation {
                protocol_a: a,
                protocol_b: b,
                rho,
            }),
            None => skipped_pairs.push((a, b)),
        }
    }
    if pair_correlations.is_empty() {
        return Err(Error::InsufficientPDatasets);
    }
    let rhos: Vec<f64> = pair_correlations.iter().map(|p| p.rho).collect();
    Ok(RobustnessReport {
        dataset_id: dataset_id.to_string(),
        metric,
        robustness: percentile_linear(&rhos, ROBUSTNESS_PERCENTILE)?,
        n_pdatasets: vectors.len(),
        pair_correlations,
        skipped_pairs,
    })
}

/// Mean of per-metric robustness values (a separate summary, not a
/// robustness value itself).
pub fn mean_robustness(reports: &[RobustnessReport]) -> Option<f64> {
    if reports.is_empty() {
        None
    } else {
        Some(reports.iter().map(|r| r.robustness).sum::<f64>() / reports.len() as f64)
    }
}

/// Two p-datasets whose algorithm rankings disagree on which algorithm is
/// best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingFlip {
    pub protocol_a: String,
    pub protocol_b: String,
    pub rho: f64,
    pub best_a: Vec<usize>,
    pub best_b: Vec<usize>,
}

fn best_indices(scores: &[f64]) -> Vec<usize> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..scores.len()).filter(|&i| scores[i] == max).collect()
}

/// Pairs with rho < 1 whose sets of top-scoring algorithms are disjoint.
pub fn ranking_flips(vectors: &[(String, PerformanceVector)]) -> Vec<RankingFlip> {
    let mut flips = Vec::new();
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let (a, b) = (&vectors[i].1.scores, &vectors[j].1.scores);
            let Ok(rho) = spearman(a, b) else { continue };
            let (best_a, best_b) = (best_indices(a), best_indices(b));
            if rho < 1.0 && best_a.iter().all(|x| !best_b.contains(x)) {
                flips.push(RankingFlip {
                    protocol_a: vectors[i].0.clone(),
                    protocol_b: vectors[j].0.clone(),
                    rho,
                    best_a,
                    best_b,
                });
            }
        }
    }
    flips
}

/// Flattened metric x algorithm score matrix; `index(i, j) = i * A + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub values: Vec<f64>,
    pub metric_order: Vec<MetricId>,
    pub algo_order: Vec<String>,
}

impl Signature {
    pub fn index(&self, metric: usize, algo: usize) -> usize {
        metric * self.algo_order.len() + algo
    }

    fn comparable(&self, other: &Signature) -> bool {
        self.metric_order == other.metric_order && self.algo_order == other.algo_order
    }

    pub fn distance(&self, other: &Signature) -> Result<f64> {
        if !self.comparable(other) || self.values.len() != other.values.len() {
            return Err(Error::IncomparableSignatures);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

pub fn signature(
    t: &MetricTable,
    metric_order: &[MetricId],
    algo_order: &[String],
) -> Result<Signature> {
    let mut values = Vec::with_capacity(metric_order.len() * algo_order.len());
    for &m in metric_order {
        for a in algo_order {
            values.push(t.mean(m, a)?);
        }
    }
    Ok(Signature {
        values,
        metric_order: metric_order.to_vec(),
        algo_order: algo_order.to_vec(),
    })
}

/// Per-coordinate z-scores with mean and standard deviation taken over the
/// given signatures. Zero-variance coordinates become 0.
pub fn zscore_signatures(signatures: &[Signature]) -> Result<Vec<Signature>> {
    let Some(first) = signatures.first() else {
        return Ok(Vec::new());
    };
    if signatures.iter().any(|s| !s.comparable(first)) {
        return Err(Error::IncomparableSignatures);
    }
    let n = signatures.len() as f64;
    let dim = first.values.len();
    let mut out: Vec<Signature> = signatures.to_vec();
    for c in 0..dim {
        let mean = signatures.iter().map(|s| s.values[c]).sum::<f64>() / n;
        let var = signatures
            .iter()
            .map(|s| (s.values[c] - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        for s in out.iter_mut() {
            s.values[c] = if sd > 0.0 {
                (s.values[c] - mean) / sd
            } else {
                0.0
            };
        }
    }
    Ok(out)
}

/// Nearest pool member by Euclidean distance; ties go to the smaller id.
pub fn select_protocol(target: &Signature, pool: &[(String, Signature)]) -> Result<(String, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for (id, sig) in pool {
        let d = target.distance(sig)?;
        best = match best {
            Some((bid, bd)) if bd < d || (bd == d && bid <= id.as_str()) => Some((bid, bd)),
            _ => Some((id.as_str(), d)),
        };
    }
    best.map(|(id, d)| (id.to_string(), d))
        .ok_or_else(|| Error::InvalidArgument("empty signature pool".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMethod {
    Pca,
    Tsne,
}

impl std::str::FromStr for EmbedMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(EmbedMethod::Pca),
            "tsne" => Ok(EmbedMethod::Tsne),
            other => Err(Error::InvalidArgument(format!(
                "unknown embedding method `{other}`"
            ))),
        }
    }
}

pub const TSNE_ITERATIONS: usize = 1000;

pub fn embed_2d(
    signatures: &[Signature],
    method: EmbedMethod,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let need = match method {
        EmbedMethod::Pca => 3,
        EmbedMethod::Tsne => 5,
    };
    if signatures.len() < need {
        return Err(Error::TooFewPoints {
            got: signatures.len(),
            need,
        });
    }
    let first = &signatures[0];
    if signatures
        .iter()
        .any(|s| !s.comparable(first) || s.values.len() != first.values.len())
    {
        return Err(Error::IncomparableSignatures);
    }
    let x = DMatrix::from_fn(signatures.len(), first.values.len(), |r, c| {
        signatures[r].values[c]
    });
    match method {
        EmbedMethod::Pca => Ok(pca_2d(&x)),
        EmbedMethod::Tsne => {
            let n = signatures.len() as f64;
            let perplexity = 5f64.min((n - 1.0) / 3.0);
            Ok(tsne_exact(&x, perplexity, TSNE_ITERATIONS, seed))
        }
    }
}

/// Projection of the centered rows onto the top two principal axes. Axis
/// signs are fixed so the largest-magnitude loading is positive.
pub fn pca_2d(x: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let (n, d) = (x.nrows(), x.ncols());
    let mut centered = x.clone();
    for c in 0..d {
        let mean = centered.column(c).mean();
        centered.column_mut(c).add_scalar_mut(-mean);
    }
    let mut coords = vec![(0.0, 0.0); n];
    if d == 0 || centered.norm() == 0.0 {
        return coords;
    }
    let svd = centered.clone().svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .total_cmp(&svd.singular_values[i])
            .then(i.cmp(&j))
    });
    for (axis, &comp) in order.iter().take(2).enumerate() {
        if svd.singular_values[comp] <= 1e-12 * svd.singular_values[order[0]] {
            continue;
        }
        let mut v: Vec<f64> = vt.row(comp).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map_or(0, |p| p.0);
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|e| *e = -*e);
        }
        for (r, coord) in coords.iter_mut().enumerate() {
            let p: f64 = centered.row(r).iter().zip(&v).map(|(a, b)| a * b).sum();
            if axis == 0 {
                coord.0 = p;
            } else {
                coord.1 = p;
            }
        }
    }
    coords
}

fn squared_distances(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (x.row(i) - x.row(j)).norm_squared();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional affinities with a per-point bandwidth found by bisection so
/// that each row's entropy matches `ln(perplexity)`; then symmetrized.
fn joint_probabilities(dist: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
        let mut probs = vec![0.0; n];
        for _ in 0..200 {
            let min_d = (0..n)
                .filter(|&j| j != i)
                .map(|j| row[j])
                .fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for j in 0..n {
                probs[j] = if j == i {
                    0.0
                } else {
                    (-(row[j] - min_d) * beta).exp()
                };
                sum += probs[j];
            }
            let mut entropy = 0.0;
            #[allow(clippy::needless_range_loop)]
            for j in 0..n {
                if j != i {
                    probs[j] /= sum;
                    if probs[j] > 0.0 {
                        entropy -= probs[j] * probs[j].ln();
                    }
                }
            }
            let diff = entropy - target;
            if diff.abs() < 1e-10 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() {
                    (beta + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        p[i * n..(i + 1) * n].copy_from_slice(&probs);
    }
    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    joint
}

/// Exact t-SNE: O(n^2) gradient, early exaggeration 12 for the first 250
/// iterations, momentum 0.5 then 0.8, learning rate 200 with adaptive gains.
pub fn tsne_exact(
    x: &DMatrix<f64>,
    perplexity: f64,
    iterations: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let n = x.nrows();
    let p = joint_probabilities(&squared_distances(x), n, perplexity);

    let mut rng = rng_from(seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [init.sample(&mut rng), init.sample(&mut rng)])
        .collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let learning_rate = 200.0;
    let exaggeration_stop = 250.min(iterations);
    let mut num = vec![0.0; n * n];

    for iter in 0..iterations {
        let exaggeration = if iter < exaggeration_stop { 12.0 } else { 1.0 };
        let momentum = if iter < exaggeration_stop { 0.5 } else { 0.8 };

        let mut sum_num = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                num[j * n + i] = v;
                sum_num += 2.0 * v;
            }
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[i * n + j] / sum_num).max(1e-12);
                let mult = 4.0 * (exaggeration * p[i * n + j] - q) * num[i * n + j];
                grad[0] += mult * (y[i][0] - y[j][0]);
                grad[1] += mult * (y[i][1] - y[j][1]);
            }
            for c in 0..2 {
                let same_sign = (grad[c] > 0.0) == (update[i][c] > 0.0);
                gains[i][c] = if same_sign {
                    (gains[i][c] * 0.8).max(0.01)
                } else {
                    gains[i][c] + 0.2
                };
                update[i][c] = momentum * update[i][c] - learning_rate * gains[i][c] * grad[c];
            }
        }
        for i in 0..n {
            y[i][0] += update[i][0];
            y[i][1] += update[i][1];
        }
        let (mx, my) = y
            .iter()
            .fold((0.0, 0.0), |acc, p| (acc.0 + p[0], acc.1 + p[1]));
        for p in y.iter_mut() {
            p[0] -= mx / n as f64;
            p[1] -= my / n as f64;
        }
    }
    y.into_iter().map(|p| (p[0], p[1])).collect()
}

/// Kullback-Leibler divergence between input and embedding affinities, for
/// inspecting t-SNE convergence.
pub fn tsne_kl(x: &DMatrix<f64>, perplexity: f64, y: &[(f64, f64)]) -> f64 {
    let n = x.nrows();
    let p = joint_probabilities(&squared_distances(x), n, perplexity);
    let mut num = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = (y[i].0 - y[j].0).powi(2) + (y[i].1 - y[j].1).powi(2);
                num[i * n + j] = 1.0 / (1.0 + d);
                sum += num[i * n + j];
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (num[i * n + j] / sum).max(1e-12);
                kl += p[i * n + j] * (p[i * n + j] / q).ln();
            }
        }
    }
    kl
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{MetricEntry, MetricFamily};

    fn ndcg10() -> MetricId {
        MetricId::new(MetricFamily::Ndcg, 10)
    }

    fn vectors(vs: &[&[f64]]) -> Vec<(String, PerformanceVector)> {
        vs.iter()
            .enumerate()
            .map(|(i, v)| {
                (
                    format!("p{i:04}"),
                    PerformanceVector {
                        metric: ndcg10(),
                        scores: v.to_vec(),
                    },
                )
            })
            .collect()
    }

    #[test]
    fn robustness_endpoints() {
        let same = vectors(&[&[0.1, 0.5, 0.3], &[0.1, 0.5, 0.3], &[0.1, 0.5, 0.3]]);
        assert_eq!(robustness("d", ndcg10(), &same).unwrap().robustness, 1.0);
        let reversed = vectors(&[&[0.1, 0.2, 0.3], &[0.3, 0.2, 0.1]]);
        assert_eq!(
            robustness("d", ndcg10(), &reversed).unwrap().robustness,
            -1.0
        );
    }

    #[test]
    fn robustness_three_vectors() {
        let v = vectors(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]]);
        let r = robustness("d", ndcg10(), &v).unwrap();
        let rhos: Vec<f64> = r.pair_correlations.iter().map(|p| p.rho).collect();
        assert_eq!(rhos.len(), 3);
        assert!((rhos[0] - 1.0).abs() < 1e-12);
        assert!((rhos[1] - 0.5).abs() < 1e-12);
        assert!((rhos[2] - 0.5).abs() < 1e-12);
        assert!((r.robustness - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_vectors_are_skipped() {
        let v = vectors(&[&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], &[1.0, 3.0, 2.0]]);
        let r = robustness("d", ndcg10(), &v).unwrap();
        assert_eq!(r.skipped_pairs.len(), 2);
        assert_eq!(r.pair_correlations.len(), 1);
        let all_constant = vectors(&[&[1.0, 1.0], &[2.0, 2.0]]);
        assert!(matches!(
            robustness("d", ndcg10(), &all_constant),
            Err(Error::InsufficientPDatasets)
        ));
        assert!(matches!(
            robustness("d", ndcg10(), &vectors(&[&[1.0, 2.0]])),
            Err(Error::InsufficientPDatasets)
        ));
    }

    fn table(rows: &[(&str, &str, f64)]) -> MetricTable {
        MetricTable {
            entries: rows
                .iter()
                .map(|(m, a, v)| MetricEntry {
                    metric: m.parse().unwrap(),
                    algorithm: a.to_string(),
                    mean: *v,
                    std: 0.0,
                })
                .collect(),
            n_test_pairs: 10,
        }
    }

    #[test]
    fn signature_layout_and_vector_extraction() {
        let t = table(&[
            ("ndcg@10", "a", 0.1),
            ("ndcg@10", "b", 0.2),
            ("ndcg@10", "c", 0.3),
            ("recall@10", "a", 0.4),
            ("recall@10", "b", 0.5),
            ("recall@10", "c", 0.6),
        ]);
        let metrics: Vec<MetricId> = vec!["ndcg@10".parse().unwrap(), "recall@10".parse().unwrap()];
        let algos: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let s = signature(&t, &metrics, &algos).unwrap();
        assert_eq!(s.values.len(), 6);
        assert_eq!(s.index(1, 2), 5);
        assert_eq!(s.values[5], 0.6);

        let pv = performance_vector(&t, metrics[1], &algos).unwrap();
        assert_eq!(pv.scores, vec![0.4, 0.5, 0.6]);
        let rev: Vec<String> = algos.iter().rev().cloned().collect();
        assert_eq!(
            performance_vector(&t, metrics[1], &rev).unwrap().scores,
            vec![0.6, 0.5, 0.4]
        );
        assert!(performance_vector(&t, "mrr@10".parse().unwrap(), &algos).is_err());
    }

    fn sig(values: &[f64]) -> Signature {
        Signature {
            values: values.to_vec(),
            metric_order: vec![ndcg10()],
            algo_order: (0..values.len()).map(|i| format!("a{i}")).collect(),
        }
    }

    #[test]
    fn selection_nearest_and_ties() {
        let target = sig(&[0.0, 0.0]);
        let pool = vec![
            ("p2".to_string(), sig(&[0.3, 0.0])),
            ("p1".to_string(), sig(&[0.1, 0.0])),
        ];
        let (id, d) = select_protocol(&target, &pool).unwrap();
        assert_eq!(id, "p1");
        assert!((d - 0.1).abs() < 1e-15);

        let pool = vec![
            ("pb".to_string(), sig(&[0.1, 0.0])),
            ("pa".to_string(), sig(&[0.0, 0.1])),
        ];
        assert_eq!(select_protocol(&target, &pool).unwrap().0, "pa");

        let mut other = sig(&[0.0, 0.0]);
        other.algo_order = vec!["x".into(), "y".into()];
        assert!(matches!(
            select_protocol(&target, &[("p".into(), other)]),
            Err(Error::IncomparableSignatures)
        ));
    }

    #[test]
    fn zscore_normalizes_coordinates() {
        let z = zscore_signatures(&[sig(&[1.0, 5.0]), sig(&[3.0, 5.0])]).unwrap();
        assert_eq!(z[0].values, vec![-1.0, 0.0]);
        assert_eq!(z[1].values, vec![1.0, 0.0]);
    }

    #[test]
    fn pca_identical_points_at_origin() {
        let sigs = vec![sig(&[0.2, 0.4, 0.1]); 4];
        let pts = embed_2d(&sigs, EmbedMethod::Pca, 0).unwrap();
        assert!(pts.iter().all(|&(x, y)| x == 0.0 && y == 0.0));
    }

    #[test]
    fn pca_preserves_planar_distances() {
        // points on a tilted plane in 4-D
        let base = [[0.0, 0.0], [1.0, 0.5], [-0.3, 2.0], [0.7, -1.1], [2.0, 2.0]];
        let sigs: Vec<Signature> = base
            .iter()
            .map(|&[a, b]| sig(&[1.0 + a + b, 2.0 - a, 0.5 * b, 3.0 + 0.2 * a - b]))
            .collect();
        let pts = embed_2d(&sigs, EmbedMethod::Pca, 0).unwrap();
        for i in 0..sigs.len() {
            for j in 0..sigs.len() {
                let orig = sigs[i].distance(&sigs[j]).unwrap();
                let emb = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
                assert!((orig - emb).abs() < 1e-9, "{orig} vs {emb}");
            }
        }
    }

    #[test]
    fn tsne_deterministic_and_separates_clusters() {
        let mut sigs = Vec::new();
        for c in 0..2 {
            for k in 0..5 {
                let off = c as f64 * 10.0;
                sigs.push(sig(&[off + 0.1 * k as f64, off - 0.05 * k as f64, off]));
            }
        }
        let a = embed_2d(&sigs, EmbedMethod::Tsne, 7).unwrap();
        let b = embed_2d(&sigs, EmbedMethod::Tsne, 7).unwrap();
        assert_eq!(a, b);
        let dist =
            |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
        let within = dist(a[0], a[1]).max(dist(a[5], a[6]));
        let across = dist(a[0], a[5]);
        assert!(across > within, "across {across} within {within}");
        assert!(embed_2d(&sigs[..4], EmbedMethod::Tsne, 7).is_err());
        assert!(embed_2d(&sigs[..2], EmbedMethod::Pca, 7).is_err());
    }
}
