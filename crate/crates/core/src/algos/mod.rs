//! The algorithm pool: Random, Best-Of (popularity), ItemKNN, SVD and an
//! MLP scorer behind one fit/recommend contract.
//!
//! Every model scores the whole catalog for a query, then the shared ranking
//! step removes query items and sorts by score (descending) with item index
//! ascending as the tie-break, so recommendations are a total order.

pub mod mlp;
pub mod svd;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::TrainView;
use crate::seed::{derive_seed, rng_from};

use self::mlp::{train_mlp, MlpParams, MlpWeights};
use self::svd::{randomized_svd, BinaryCsr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoKind {
    Random,
    BestOf,
    ItemKnn,
    Svd,
    Mlp,
}

impl AlgoKind {
    pub const ALL: [AlgoKind; 5] = [
        AlgoKind::Random,
        AlgoKind::BestOf,
        AlgoKind::ItemKnn,
        AlgoKind::Svd,
        AlgoKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgoKind::Random => "random",
            AlgoKind::BestOf => "best_of",
            AlgoKind::ItemKnn => "item_knn",
            AlgoKind::Svd => "svd",
            AlgoKind::Mlp => "mlp",
        }
    }

    fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            AlgoKind::Random | AlgoKind::BestOf => &[],
            AlgoKind::ItemKnn => &[("n_neighbors", 50.0)],
            AlgoKind::Svd => &[
                ("rank", 20.0),
                ("n_power_iterations", 2.0),
                ("oversampling", 10.0),
            ],
            AlgoKind::Mlp => &[
                ("hidden_dim", 64.0),
                ("epochs", 10.0),
                ("learning_rate", 0.01),
                ("batch_size", 128.0),
                ("pairs_per_session", 4.0),
            ],
        }
    }
}

impl fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgoKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm kind `{s}`")))
    }
}

/// Algorithm kind, a complete hyperparameter map and a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlgoSpecRepr")]
pub struct AlgoSpec {
    pub name: String,
    pub kind: AlgoKind,
    pub hyperparameters: BTreeMap<String, f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgoSpecRepr {
    name: Option<String>,
    kind: AlgoKind,
    #[serde(default)]
    hyperparameters: BTreeMap<String, f64>,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<AlgoSpecRepr> for AlgoSpec {
    type Error = Error;

    fn try_from(r: AlgoSpecRepr) -> Result<Self> {
        let mut spec = AlgoSpec::new(r.kind, r.hyperparameters, r.seed)?;
        if let Some(name) = r.name {
            spec.name = name;
        }
        Ok(spec)
    }
}

impl AlgoSpec {
    /// Fills defaults for missing hyperparameters, rejects unknown or
    /// non-positive ones.
    pub fn new(kind: AlgoKind, overrides: BTreeMap<String, f64>, seed: u64) -> Result<Self> {
        let defaults = kind.defaults();
        for key in overrides.keys() {
            if !defaults.iter().any(|(k, _)| k == key) {
                return Err(Error::Config(format!(
                    "unknown hyperparameter `{key}` for {kind}"
                )));
            }
        }
        let mut hyperparameters = BTreeMap::new();
        for &(key, default) in defaults {
            let v = overrides.get(key).copied().unwrap_or(default);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "hyperparameter `{key}` for {kind} must be positive, got {v}"
                )));
            }
            let integral = key != "learning_rate";
            if integral && v.fract() != 0.0 {
                return Err(Error::Config(format!(
                    "hyperparameter `{key}` for {kind} must be an integer, got {v}"
                )));
            }
            hyperparameters.insert(key.to_string(), v);
        }
        Ok(Self {
            name: kind.as_str().to_string(),
            kind,
            hyperparameters,
            seed,
        })
    }

    pub fn with_defaults(kind: AlgoKind, seed: u64) -> Self {
        Self::new(kind, BTreeMap::new(), seed).expect("defaults are valid")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    fn count(&self, key: &str) -> usize {
        self.hyperparameters[key] as usize
    }

    fn mlp_params(&self) -> MlpParams {
        MlpParams {
            hidden_dim: self.count("hidden_dim"),
            epochs: self.count("epochs"),
            learning_rate: self.hyperparameters["learning_rate"],
            batch_size: self.count("batch_size"),
            pairs_per_session: self.count("pairs_per_session"),
        }
    }
}

/// Top-k recommendation: items with non-increasing scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub items: Vec<u32>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone)]
enum ModelState {
    Random,
    BestOf {
        popularity: Vec<f64>,
    },
    ItemKnn {
        /// Per item, the retained (neighbor, similarity) pairs.
        neighbors: Vec<Vec<(u32, f64)>>,
    },
    Svd {
        /// `n_items x rank`
        item_factors: DMatrix<f64>,
    },
    Mlp {
        weights: Box<MlpWeights>,
    },
}

/// A fitted recommender. Immutable; `recommend` is pure.
#[derive(Debug, Clone)]
pub struct RecModel {
    pub spec: AlgoSpec,
    pub n_items: usize,
    state: ModelState,
}

/// Per-user item sets of the train sessions (sessions of one user merged).
fn user_item_sets(train: &TrainView<'_>) -> Vec<Vec<u32>> {
    let mut by_user: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for s in train.sessions {
        by_user.entry(s.user_id).or_default().extend(s.items());
    }
    by_user
        .into_values()
        .map(|mut v| {
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect()
}

/// Cosine similarity of binary item vectors over users, keeping the
/// `n_neighbors` most similar items per item (ties by item index).
pub fn item_cosine_neighbors(
    user_items: &[Vec<u32>],
    n_items: usize,
    n_neighbors: usize,
) -> Vec<Vec<(u32, f64)>> {
    let mut item_users: Vec<Vec<u32>> = vec![Vec::new(); n_items];
    for (u, items) in user_items.iter().enumerate() {
        for &i in items {
            item_users[i as usize].push(u as u32);
        }
    }
    let norms: Vec<f64> = item_users.iter().map(|u| (u.len() as f64).sqrt()).collect();
    let mut co = vec![0u32; n_items];
    let mut touched: Vec<u32> = Vec::new();
    let mut out = Vec::with_capacity(n_items);
    for i in 0..n_items {
        for &u in &item_users[i] {
            for &j in &user_items[u as usize] {
                if j as usize != i {
                    if co[j as usize] == 0 {
                        touched.push(j);
                    }
                    co[j as usize] += 1;
                }
            }
        }
        let mut sims: Vec<(u32, f64)> = touched
            .iter()
            .map(|&j| (j, co[j as usize] as f64 / (norms[i] * norms[j as usize])))
            .collect();
        for &j in &touched {
            co[j as usize] = 0;
        }
        touched.clear();
        sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        sims.truncate(n_neighbors);
        out.push(sims);
    }
    out
}

pub fn fit(spec: &AlgoSpec, train: TrainView<'_>) -> Result<RecModel> {
    let n_items = train.n_items;
    if train.sessions.is_empty() {
        return Err(Error::InvalidArgument("empty train set".into()));
    }
    if n_items < 2 {
        return Err(Error::InvalidArgument(format!(
            "catalog of {n_items} item(s); need at least 2"
        )));
    }
    let state = match spec.kind {
        AlgoKind::Random => ModelState::Random,
        AlgoKind::BestOf => {
            let mut popularity = vec![0.0; n_items];
            for s in train.sessions {
                for item in s.items() {
                    popularity[item as usize] += 1.0;
                }
            }
            ModelState::BestOf { popularity }
        }
        AlgoKind::ItemKnn => {
            let users = user_item_sets(&train);
            ModelState::ItemKnn {
                neighbors: item_cosine_neighbors(&users, n_items, spec.count("n_neighbors")),
            }
        }
        AlgoKind::Svd => {
            let users = user_item_sets(&train);
            let rank = spec.count("rank");
            let limit = users.len().min(n_items);
            if rank >= limit {
                return Err(Error::RankTooLarge { rank, limit });
            }
            let matrix = BinaryCsr::from_rows(&users, n_items);
            let mut rng = rng_from(derive_seed(&[spec.seed, 0x5FD]));
            let svd = randomized_svd(
                &matrix,
                rank,
                spec.count("oversampling"),
                spec.count("n_power_iterations"),
                &mut rng,
            )?;
            ModelState::Svd {
                item_factors: svd.vt.transpose(),
            }
        }
        AlgoKind::Mlp => ModelState::Mlp {
            weights: Box::new(train_mlp(train, spec.mlp_params(), spec.seed)?),
        },
    };
    Ok(RecModel {
        spec: spec.clone(),
        n_items,
        state,
    })
}

impl RecModel {
    /// Raw scores for every catalog item given the (known, deduplicated)
    /// input items.
    fn score_all(&self, input: &[u32]) -> Vec<f64> {
        let n = self.n_items;
        match &self.state {
            ModelState::Random => {
                let mut parts = vec![self.spec.seed, 0xAA];
                parts.extend(input.iter().map(|&i| u64::from(i)));
                let mut rng = rng_from(derive_seed(&parts));
                (0..n).map(|_| rng.gen::<f64>()).collect()
            }
            ModelState::BestOf { popularity } => popularity.clone(),
            ModelState::ItemKnn { neighbors } => {
                let mut scores = vec![0.0; n];
                for &i in input {
                    for &(j, sim) in &neighbors[i as usize] {
                        scores[j as usize] += sim;
                    }
                }
                scores
            }
            ModelState::Svd { item_factors } => {
                let rank = item_factors.ncols();
                if input.is_empty() {
                    return vec![0.0; n];
                }
                let mut query = DVector::zeros(rank);
                for &i in input {
                    query += item_factors.row(i as usize).transpose();
                }
                query /= input.len() as f64;
                (item_factors * query).iter().copied().collect()
            }
            ModelState::Mlp { weights } => weights.logits(input),
        }
    }

    pub fn recommend(&self, input: &[u32], k: usize) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let mut known: Vec<u32> = Vec::with_capacity(input.len());
        for &i in input {
            if (i as usize) < self.n_items {
                known.push(i);
            } else {
                log::warn!("ignoring unknown input item {i}");
            }
        }
        known.sort_unstable();
        known.dedup();
        let excluded: HashSet<u32> = known.iter().copied().collect();

        let scores = self.score_all(&known);
        let mut eligible: Vec<(u32, f64)> = (0..self.n_items as u32)
            .filter(|i| !excluded.contains(i))
            .map(|i| (i, scores[i as usize]))
            .collect();
        if eligible.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let order = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        let k = k.min(eligible.len());
        if k < eligible.len() {
            eligible.select_nth_unstable_by(k - 1, order);
            eligible.truncate(k);
        }
        eligible.sort_by(order);
        Ok(RankedList {
            items: eligible.iter().map(|e| e.0).collect(),
            scores: eligible.iter().map(|e| e.1).collect(),
        })
    }

    /// Stored item-item neighbors (ItemKNN only).
    pub fn knn_neighbors(&self) -> Option<&[Vec<(u32, f64)>]> {
        match &self.state {
            ModelState::ItemKnn { neighbors } => Some(neighbors),
            _ => None,
        }
    }

    pub fn mlp_weights(&self) -> Option<&MlpWeights> {
        match &self.state {
            ModelState::Mlp { weights } => Some(weights),
            _ => None,
        }
    }
}

pub fn recommend(model: &RecModel, input: &[u32], k: usize) -> Result<RankedList> {
    model.recommend(input, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Event, OutputStrategy, Session, SplitRule};

    fn sessions(rows: &[(u32, &[u32])]) -> Vec<Session> {
        rows.iter()
            .map(|(u, items)| Session {
                user_id: *u,
                events: items
                    .iter()
                    .enumerate()
                    .map(|(t, &item)| Event {
                        item,
                        rating: 4.0,
                        timestamp: t as i64,
                    })
                    .collect(),
            })
            .collect()
    }

    fn view(s: &[Session], n_items: usize) -> TrainView<'_> {
        TrainView {
            sessions: s,
            n_items,
            split: SplitRule {
                strategy: OutputStrategy::LastN,
                n_out: 1,
            },
        }
    }

    fn check_contract(list: &RankedList, input: &[u32], k: usize, n_items: usize) {
        let set: HashSet<u32> = list.items.iter().copied().collect();
        assert_eq!(set.len(), list.len(), "duplicates");
        assert!(list.items.iter().all(|i| !input.contains(i)));
        let eligible = (0..n_items as u32).filter(|i| !input.contains(i)).count();
        assert_eq!(list.len(), k.min(eligible));
        assert!(list.scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn best_of_ranks_most_popular_first() {
        let s = sessions(&[(1, &[9, 2, 3]), (2, &[9, 4]), (3, &[9, 2])]);
        let m = fit(&AlgoSpec::with_defaults(AlgoKind::BestOf, 0), view(&s, 10)).unwrap();
        let r = m.recommend(&[1], 3).unwrap();
        assert_eq!(r.items, vec![9, 2, 3]);
        let r = m.recommend(&[9], 2).unwrap();
        assert_eq!(r.items, vec![2, 3]);
    }

    #[test]
    fn random_covers_eligible_catalog() {
        let s = sessions(&[(1, &[0, 1]), (2, &[2, 3])]);
        let m = fit(&AlgoSpec::with_defaults(AlgoKind::Random, 5), view(&s, 8)).unwrap();
        let r = m.recommend(&[1, 4], 6).unwrap();
        let mut items = r.items.clone();
        items.sort_unstable();
        assert_eq!(items, vec![0, 2, 3, 5, 6, 7]);
        assert_eq!(m.recommend(&[1, 4], 6).unwrap(), r);
    }

    #[test]
    fn item_knn_toy_similarities() {
        // users: u1 {a,b}, u2 {a,b}, u3 {a,c}, u4 {c}
        // sim(a,b) = 2 / sqrt(3*2) = 0.816, sim(a,c) = 1 / sqrt(3*2) = 0.408
        let s = sessions(&[(1, &[0, 1]), (2, &[0, 1]), (3, &[0, 2]), (4, &[2])]);
        let m = fit(&AlgoSpec::with_defaults(AlgoKind::ItemKnn, 0), view(&s, 3)).unwrap();
        let r = m.recommend(&[0], 2).unwrap();
        assert_eq!(r.items, vec![1, 2]);
        assert!((r.scores[0] - 2.0 / 6f64.sqrt()).abs() < 1e-12);
        assert!((r.scores[1] - 1.0 / 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn svd_rank_limit() {
        let s = sessions(&[(1, &[0, 1]), (2, &[1, 2])]);
        let mut h = BTreeMap::new();
        h.insert("rank".to_string(), 2.0);
        let spec = AlgoSpec::new(AlgoKind::Svd, h, 0).unwrap();
        assert!(matches!(
            fit(&spec, view(&s, 3)),
            Err(Error::RankTooLarge { .. })
        ));
    }

    #[test]
    fn contracts_hold_for_every_kind() {
        let s = sessions(&[
            (1, &[0, 1, 2, 3]),
            (2, &[1, 2, 4]),
            (3, &[0, 5, 6, 7]),
            (4, &[3, 4, 5]),
            (5, &[6, 7, 8, 9]),
            (6, &[0, 2, 4, 6, 8]),
        ]);
        for kind in AlgoKind::ALL {
            let mut h = BTreeMap::new();
            if kind == AlgoKind::Svd {
                h.insert("rank".to_string(), 3.0);
            }
            if kind == AlgoKind::Mlp {
                h.insert("hidden_dim".to_string(), 8.0);
                h.insert("epochs".to_string(), 3.0);
            }
            let spec = AlgoSpec::new(kind, h, 17).unwrap();
            let a = fit(&spec, view(&s, 10)).unwrap();
            let b = fit(&spec, view(&s, 10)).unwrap();
            for input in [&[0u32, 1][..], &[5], &[], &[2, 2, 3]] {
                for k in [1, 4, 20] {
                    let r = a.recommend(input, k).unwrap();
                    check_contract(&r, input, k, 10);
                    assert_eq!(
                        r,
                        b.recommend(input, k).unwrap(),
                        "{kind} not deterministic"
                    );
                }
            }
        }
    }

    #[test]
    fn unknown_items_ignored_and_empty_catalog_errors() {
        let s = sessions(&[(1, &[0, 1])]);
        let m = fit(&AlgoSpec::with_defaults(AlgoKind::BestOf, 0), view(&s, 2)).unwrap();
        assert_eq!(m.recommend(&[0, 99], 5).unwrap().items, vec![1]);
        assert!(matches!(m.recommend(&[0, 1], 5), Err(Error::EmptyCatalog)));
    }

    #[test]
    fn spec_validation() {
        let mut h = BTreeMap::new();
        h.insert("depth".to_string(), 3.0);
        assert!(AlgoSpec::new(AlgoKind::Mlp, h, 0).is_err());
        let mut h = BTreeMap::new();
        h.insert("rank".to_string(), 0.0);
        assert!(AlgoSpec::new(AlgoKind::Svd, h, 0).is_err());
        let spec = AlgoSpec::with_defaults(AlgoKind::Mlp, 0);
        assert_eq!(spec.hyperparameters["hidden_dim"], 64.0);
        assert_eq!(spec.hyperparameters["learning_rate"], 0.01);
    }
}
