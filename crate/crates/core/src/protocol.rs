//! Preprocessing protocols and p-dataset materialization.
//!
//! A [`Protocol`] is a complete recipe turning a [`RawDataset`] into a
//! [`PDataset`]. The pipeline stages always run in this order:
//!
//! 1. rating threshold
//! 2. k-core filter (iterated to a fixpoint unless `kcore_iterate = false`)
//! 3. user subsampling
//! 4. per-user interaction cap (most recent kept)
//! 5. sessionization
//! 6. train/test holdout
//! 7. input/output split of test sessions

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Interaction, RawDataset};
use crate::seed::{derive_seed, rng_from};
use crate::stats::percentile_linear;

pub const DEFAULT_GRID_CAP: usize = 10_000;
pub const MIN_TEST_PAIRS: usize = 10;

const SPLIT_STREAM: u64 = 0x0053_504C_4954;
const HOLDOUT_STREAM: u64 = 0x484F_4C44;
const SUBSAMPLE_STREAM: u64 = 0x5355_4253;

/// A count that may be unbounded. Serialized as an integer or `"unlimited"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "CountOrWord", into = "CountOrWord")]
pub enum Limit {
    Unlimited,
    At(usize),
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Limit::Unlimited => f.write_str("unlimited"),
            Limit::At(n) => write!(f, "{n}"),
        }
    }
}

/// Maximum gap between consecutive events of one session, or no
/// sessionization at all. Serialized as seconds or `"none"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "CountOrWord", into = "CountOrWord")]
pub enum SessionGap {
    None,
    Seconds(i64),
}

impl fmt::Display for SessionGap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionGap::None => f.write_str("none"),
            SessionGap::Seconds(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum CountOrWord {
    Count(u64),
    Word(String),
}

impl TryFrom<CountOrWord> for Limit {
    type Error = String;

    fn try_from(v: CountOrWord) -> std::result::Result<Self, String> {
        match v {
            CountOrWord::Count(n) => Ok(Limit::At(n as usize)),
            CountOrWord::Word(w) if w == "unlimited" || w == "none" => Ok(Limit::Unlimited),
            CountOrWord::Word(w) => Err(format!("expected a count or \"unlimited\", got `{w}`")),
        }
    }
}

impl From<Limit> for CountOrWord {
    fn from(l: Limit) -> Self {
        match l {
            Limit::Unlimited => CountOrWord::Word("unlimited".into()),
            Limit::At(n) => CountOrWord::Count(n as u64),
        }
    }
}

impl TryFrom<CountOrWord> for SessionGap {
    type Error = String;

    fn try_from(v: CountOrWord) -> std::result::Result<Self, String> {
        match v {
            CountOrWord::Count(n) => Ok(SessionGap::Seconds(n as i64)),
            CountOrWord::Word(w) if w == "none" => Ok(SessionGap::None),
            CountOrWord::Word(w) => Err(format!("expected seconds or \"none\", got `{w}`")),
        }
    }
}

impl From<SessionGap> for CountOrWord {
    fn from(g: SessionGap) -> Self {
        match g {
            SessionGap::None => CountOrWord::Word("none".into()),
            SessionGap::Seconds(s) => CountOrWord::Count(s as u64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputStrategy {
    #[serde(rename = "last-n")]
    LastN,
    #[serde(rename = "random-n")]
    RandomN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitStrategy {
    #[serde(rename = "user-holdout")]
    UserHoldout,
    #[serde(rename = "temporal-global")]
    TemporalGlobal,
}

/// How a session is cut into model input and held-out "true" items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRule {
    pub strategy: OutputStrategy,
    pub n_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub rating_threshold: f64,
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
    pub kcore_iterate: bool,
    pub max_interactions_per_user: Limit,
    pub max_users: Limit,
    pub session_gap: SessionGap,
    pub n_output_items: usize,
    pub output_strategy: OutputStrategy,
    pub test_fraction: f64,
    pub split_strategy: SplitStrategy,
    pub seed: u64,
}

impl Default for Protocol {
    /// The most permissive protocol: nothing filtered, one session per user.
    fn default() -> Self {
        Self {
            rating_threshold: 0.0,
            min_user_interactions: 0,
            min_item_interactions: 0,
            kcore_iterate: true,
            max_interactions_per_user: Limit::Unlimited,
            max_users: Limit::Unlimited,
            session_gap: SessionGap::None,
            n_output_items: 1,
            output_strategy: OutputStrategy::LastN,
            test_fraction: 0.2,
            split_strategy: SplitStrategy::UserHoldout,
            seed: 0,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !self.rating_threshold.is_finite() {
            return bad("rating_threshold must be finite");
        }
        if self.n_output_items < 1 {
            return bad("n_output_items must be at least 1");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)");
        }
        if self.max_users == Limit::At(0) {
            return bad("max_users must be at least 1");
        }
        if self.max_interactions_per_user == Limit::At(0) {
            return bad("max_interactions_per_user must be at least 1");
        }
        if let SessionGap::Seconds(s) = self.session_gap {
            if s < 0 {
                return bad("session_gap must be non-negative");
            }
        }
        Ok(())
    }

    pub fn split_rule(&self) -> SplitRule {
        SplitRule {
            strategy: self.output_strategy,
            n_out: self.n_output_items,
        }
    }
}

/// One candidate list per [`Protocol`] field. Omitted keys default to the
/// permissive protocol's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub rating_threshold: Vec<f64>,
    pub min_user_interactions: Vec<usize>,
    pub min_item_interactions: Vec<usize>,
    pub kcore_iterate: Vec<bool>,
    pub max_interactions_per_user: Vec<Limit>,
    pub max_users: Vec<Limit>,
    pub session_gap: Vec<SessionGap>,
    pub n_output_items: Vec<usize>,
    pub output_strategy: Vec<OutputStrategy>,
    pub test_fraction: Vec<f64>,
    pub split_strategy: Vec<SplitStrategy>,
    pub seed: Vec<u64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        let p = Protocol::default();
        Self {
            rating_threshold: vec![p.rating_threshold],
            min_user_interactions: vec![p.min_user_interactions],
            min_item_interactions: vec![p.min_item_interactions],
            kcore_iterate: vec![p.kcore_iterate],
            max_interactions_per_user: vec![p.max_interactions_per_user],
            max_users: vec![p.max_users],
            session_gap: vec![p.session_gap],
            n_output_items: vec![p.n_output_items],
            output_strategy: vec![p.output_strategy],
            test_fraction: vec![p.test_fraction],
            split_strategy: vec![p.split_strategy],
            seed: vec![p.seed],
        }
    }
}

impl GridSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Number of protocols after deduplicating every list.
    pub fn size(&self) -> Option<usize> {
        [
            dedup(&self.rating_threshold).len(),
            dedup(&self.min_user_interactions).len(),
            dedup(&self.min_item_interactions).len(),
            dedup(&self.kcore_iterate).len(),
            dedup(&self.max_interactions_per_user).len(),
            dedup(&self.max_users).len(),
            dedup(&self.session_gap).len(),
            dedup(&self.n_output_items).len(),
            dedup(&self.output_strategy).len(),
            dedup(&self.test_fraction).len(),
            dedup(&self.split_strategy).len(),
            dedup(&self.seed).len(),
        ]
        .into_iter()
        .try_fold(1usize, |acc, n| acc.checked_mul(n))
    }
}

fn dedup<T: PartialEq + Clone>(values: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(values.len());
    for v in values {
        if !out.contains(v) {
            out.push(v.clone());
        }
    }
    out
}

/// Cartesian product of the grid lists. The first field is the most
/// significant position, the last (`seed`) varies fastest.
pub fn enumerate_grid(g: &GridSpec, cap: usize) -> Result<Vec<Protocol>> {
    let size = g.size().unwrap_or(usize::MAX);
    if size == 0 {
        return Err(Error::Config("every grid list must be non-empty".into()));
    }
    if size > cap {
        return Err(Error::GridTooLarge { size, cap });
    }

    let thresholds = dedup(&g.rating_threshold);
    let min_users = dedup(&g.min_user_interactions);
    let min_items = dedup(&g.min_item_interactions);
    let iterate = dedup(&g.kcore_iterate);
    let caps = dedup(&g.max_interactions_per_user);
    let max_users = dedup(&g.max_users);
    let gaps = dedup(&g.session_gap);
    let n_outs = dedup(&g.n_output_items);
    let out_strats = dedup(&g.output_strategy);
    let fractions = dedup(&g.test_fraction);
    let split_strats = dedup(&g.split_strategy);
    let seeds = dedup(&g.seed);

    let mut out = Vec::with_capacity(size);
    for &rating_threshold in &thresholds {
        for &min_user_interactions in &min_users {
            for &min_item_interactions in &min_items {
                for &kcore_iterate in &iterate {
                    for &max_interactions_per_user in &caps {
                        for &max_users in &max_users {
                            for &session_gap in &gaps {
                                for &n_output_items in &n_outs {
                                    for &output_strategy in &out_strats {
                                        for &test_fraction in &fractions {
                                            for &split_strategy in &split_strats {
                                                for &seed in &seeds {
                                                    let p = Protocol {
                                                        rating_threshold,
                                                        min_user_interactions,
                                                        min_item_interactions,
                                                        kcore_iterate,
                                                        max_interactions_per_user,
                                                        max_users,
                                                        session_gap,
                                                        n_output_items,
                                                        output_strategy,
                                                        test_fraction,
                                                        split_strategy,
                                                        seed,
                                                    };
                                                    p.validate()?;
                                                    out.push(p);
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Interaction filters

pub fn apply_rating_threshold(d: &RawDataset, threshold: f64) -> Result<RawDataset> {
    let kept: Vec<Interaction> = d
        .interactions()
        .iter()
        .filter(|i| i.rating >= threshold)
        .copied()
        .collect();
    d.with_interactions(kept)
}

fn count_by<F: Fn(&Interaction) -> u32>(its: &[Interaction], key: F) -> HashMap<u32, usize> {
    let mut counts = HashMap::new();
    for it in its {
        *counts.entry(key(it)).or_insert(0) += 1;
    }
    counts
}

/// Removes users with fewer than `min_user` and items with fewer than
/// `min_item` interactions, repeating until neither rule removes anything.
/// The fixpoint is the largest subset satisfying both minimums.
pub fn kcore_filter(d: &RawDataset, min_user: usize, min_item: usize) -> Result<RawDataset> {
    kcore_filter_with(d, min_user, min_item, true)
}

/// As [`kcore_filter`]; `iterate = false` applies one user pass then one item
/// pass.
pub fn kcore_filter_with(
    d: &RawDataset,
    min_user: usize,
    min_item: usize,
    iterate: bool,
) -> Result<RawDataset> {
    let mut current: Vec<Interaction> = d.interactions().to_vec();
    loop {
        let before = current.len();
        let users = count_by(&current, |i| i.user_id);
        current.retain(|i| users[&i.user_id] >= min_user);
        let items = count_by(&current, |i| i.item_id);
        current.retain(|i| items[&i.item_id] >= min_item);
        if !iterate || current.len() == before || current.is_empty() {
            break;
        }
    }
    d.with_interactions(current)
}

pub fn subsample_users(d: &RawDataset, max_users: usize, seed: u64) -> Result<RawDataset> {
    if max_users == 0 {
        return Err(Error::InvalidArgument(
            "max_users must be at least 1".into(),
        ));
    }
    let users: BTreeSet<u32> = d.interactions().iter().map(|i| i.user_id).collect();
    if users.len() <= max_users {
        return Ok(d.clone());
    }
    let users: Vec<u32> = users.into_iter().collect();
    let mut rng = rng_from(derive_seed(&[seed, SUBSAMPLE_STREAM]));
    let keep: HashSet<u32> = index::sample(&mut rng, users.len(), max_users)
        .into_iter()
        .map(|i| users[i])
        .collect();
    let kept = d
        .interactions()
        .iter()
        .filter(|i| keep.contains(&i.user_id))
        .copied()
        .collect();
    d.with_interactions(kept)
}

/// Keeps each user's `max_n` most recent interactions. Within equal
/// timestamps the larger item id counts as more recent.
pub fn cap_user_interactions(d: &RawDataset, max_n: usize) -> Result<RawDataset> {
    if max_n == 0 {
        return Err(Error::InvalidArgument("max_n must be at least 1".into()));
    }
    let mut kept = Vec::with_capacity(d.len());
    for block in d.interactions().chunk_by(|a, b| a.user_id == b.user_id) {
        let start = block.len().saturating_sub(max_n);
        kept.extend_from_slice(&block[start..]);
    }
    d.with_interactions(kept)
}

// ---------------------------------------------------------------------------
// Sessions

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub item: u32,
    pub rating: f64,
    pub timestamp: i64,
}

/// A timestamp-ordered run of one user's events.
///
/// Inside a [`PDataset`] the `item` field of each event is the dense catalog
/// index, not the source item id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub user_id: u32,
    pub events: Vec<Event>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = u32> + '_ {
        self.events.iter().map(|e| e.item)
    }

    pub fn start(&self) -> i64 {
        self.events.first().map_or(0, |e| e.timestamp)
    }

    pub fn end(&self) -> i64 {
        self.events.last().map_or(0, |e| e.timestamp)
    }
}

pub fn sessionize(d: &RawDataset, gap: SessionGap) -> Vec<Session> {
    let mut sessions = Vec::new();
    for block in d.interactions().chunk_by(|a, b| a.user_id == b.user_id) {
        let mut current: Vec<Event> = Vec::new();
        for it in block {
            if let (SessionGap::Seconds(g), Some(last)) = (gap, current.last()) {
                if it.timestamp - last.timestamp > g {
                    sessions.push(Session {
                        user_id: it.user_id,
                        events: std::mem::take(&mut current),
                    });
                }
            }
            current.push(Event {
                item: it.item_id,
                rating: it.rating,
                timestamp: it.timestamp,
            });
        }
        if !current.is_empty() {
            sessions.push(Session {
                user_id: block[0].user_id,
                events: current,
            });
        }
    }
    sessions
}

/// Cuts a session into model input and a held-out item set. Returns `None`
/// when the session is shorter than `n_out + 1` events or when the held-out
/// events do not contain `n_out` distinct items.
pub fn split_input_output(s: &Session, rule: SplitRule, seed: u64) -> Option<(Session, Vec<u32>)> {
    let n_out = rule.n_out;
    if n_out == 0 || s.len() < n_out + 1 {
        return None;
    }
    let held: Vec<bool> = match rule.strategy {
        OutputStrategy::LastN => (0..s.len()).map(|i| i >= s.len() - n_out).collect(),
        OutputStrategy::RandomN => {
            let mut rng = rng_from(seed);
            let mut mask = vec![false; s.len()];
            for i in index::sample(&mut rng, s.len(), n_out) {
                mask[i] = true;
            }
            mask
        }
    };
    let mut input = Vec::with_capacity(s.len() - n_out);
    let mut output = BTreeSet::new();
    for (e, &h) in s.events.iter().zip(&held) {
        if h {
            output.insert(e.item);
        } else {
            input.push(*e);
        }
    }
    if output.len() < n_out {
        return None;
    }
    Some((
        Session {
            user_id: s.user_id,
            events: input,
        },
        output.into_iter().collect(),
    ))
}

/// Seed for the random-n split of one particular session.
pub fn session_seed(protocol_seed: u64, s: &Session, ordinal: usize) -> u64 {
    derive_seed(&[
        protocol_seed,
        SPLIT_STREAM,
        u64::from(s.user_id),
        s.start() as u64,
        ordinal as u64,
    ])
}

pub fn holdout_split(
    sessions: Vec<Session>,
    strategy: SplitStrategy,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Session>, Vec<Session>)> {
    if sessions.len() < 2 {
        return Err(Error::DegenerateSplit);
    }
    let (train, test): (Vec<Session>, Vec<Session>) = match strategy {
        SplitStrategy::UserHoldout => {
            let users: BTreeSet<u32> = sessions.iter().map(|s| s.user_id).collect();
            let mut rng = rng_from(derive_seed(&[seed, HOLDOUT_STREAM]));
            let held: HashSet<u32> = users
                .into_iter()
                .filter(|_| rng.gen::<f64>() < test_fraction)
                .collect();
            sessions
                .into_iter()
                .partition(|s| !held.contains(&s.user_id))
        }
        SplitStrategy::TemporalGlobal => {
            let ends: Vec<f64> = sessions.iter().map(|s| s.end() as f64).collect();
            let cutoff = percentile_linear(&ends, 100.0 * (1.0 - test_fraction))?;
            sessions
                .into_iter()
                .partition(|s| (s.end() as f64) <= cutoff)
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::DegenerateSplit);
    }
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// P-datasets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPair {
    pub input: Session,
    /// Held-out dense item indices, ascending.
    pub output: Vec<u32>,
}

/// A raw dataset after one protocol. Items are densely re-indexed:
/// `item_ids[idx]` is the source id of catalog index `idx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PDataset {
    pub source_id: String,
    pub protocol: Protocol,
    pub item_ids: Vec<u32>,
    pub train_sessions: Vec<Session>,
    pub test_pairs: Vec<TestPair>,
}

/// Training data as seen by a recommender.
#[derive(Debug, Clone, Copy)]
pub struct TrainView<'a> {
    pub sessions: &'a [Session],
    pub n_items: usize,
    pub split: SplitRule,
}

impl PDataset {
    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn train_view(&self) -> TrainView<'_> {
        TrainView {
            sessions: &self.train_sessions,
            n_items: self.n_items(),
            split: self.protocol.split_rule(),
        }
    }

    /// Train interaction count per catalog index.
    pub fn popularity(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_items()];
        for s in &self.train_sessions {
            for item in s.items() {
                counts[item as usize] += 1;
            }
        }
        counts
    }

    pub fn train_users(&self) -> BTreeSet<u32> {
        self.train_sessions.iter().map(|s| s.user_id).collect()
    }

    pub fn test_users(&self) -> BTreeSet<u32> {
        self.test_pairs.iter().map(|p| p.input.user_id).collect()
    }
}

/// Interaction-level stages 1-4 of the pipeline.
pub fn filter_interactions(d: &RawDataset, p: &Protocol) -> Result<RawDataset> {
    let d = apply_rating_threshold(d, p.rating_threshold)?;
    let d = kcore_filter_with(
        &d,
        p.min_user_interactions,
        p.min_item_interactions,
        p.kcore_iterate,
    )?;
    let d = match p.max_users {
        Limit::Unlimited => d,
        Limit::At(n) => subsample_users(&d, n, p.seed)?,
    };
    match p.max_interactions_per_user {
        Limit::Unlimited => Ok(d),
        Limit::At(n) => cap_user_interactions(&d, n),
    }
}

pub fn build_pdataset(d: &RawDataset, p: &Protocol) -> Result<PDataset> {
    p.validate()?;
    let filtered = filter_interactions(d, p)?;
    let sessions = sessionize(&filtered, p.session_gap);
    let (train, test) = holdout_split(sessions, p.split_strategy, p.test_fraction, p.seed)?;

    let rule = p.split_rule();
    let raw_pairs: Vec<(Session, Vec<u32>)> = test
        .iter()
        .enumerate()
        .filter_map(|(ordinal, s)| split_input_output(s, rule, session_seed(p.seed, s, ordinal)))
        .collect();
    if raw_pairs.len() < MIN_TEST_PAIRS {
        return Err(Error::TestSetTooSmall(raw_pairs.len()));
    }

    let mut catalog: BTreeSet<u32> = BTreeSet::new();
    for s in &train {
        catalog.extend(s.items());
    }
    for (input, output) in &raw_pairs {
        catalog.extend(input.items());
        catalog.extend(output.iter().copied());
    }
    let item_ids: Vec<u32> = catalog.into_iter().collect();
    let dense: HashMap<u32, u32> = item_ids
        .iter()
        .enumerate()
        .map(|(idx, &id)| (id, idx as u32))
        .collect();
    let reindex = |s: Session| Session {
        user_id: s.user_id,
        events: s
            .events
            .into_iter()
            .map(|e| Event {
                item: dense[&e.item],
                ..e
            })
            .collect(),
    };

    let mut test_pairs: Vec<TestPair> = raw_pairs
        .into_iter()
        .map(|(input, output)| {
            let mut output: Vec<u32> = output.iter().map(|id| dense[id]).collect();
            output.sort_unstable();
            TestPair {
                input: reindex(input),
                output,
            }
        })
        .collect();
    test_pairs.shrink_to_fit();

    Ok(PDataset {
        source_id: d.source_id.clone(),
        protocol: p.clone(),
        item_ids,
        train_sessions: train.into_iter().map(reindex).collect(),
        test_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RatingScale;

    fn raw(rows: &[(u32, u32, f64, i64)]) -> RawDataset {
        RawDataset::new(
            "t",
            RatingScale::HALF_STARS,
            rows.iter()
                .map(|&(u, i, r, t)| Interaction::new(u, i, r, t))
                .collect(),
        )
        .unwrap()
    }

    fn triples(d: &RawDataset) -> Vec<(u32, u32, i64)> {
        d.interactions()
            .iter()
            .map(|i| (i.user_id, i.item_id, i.timestamp))
            .collect()
    }

    #[test]
    fn threshold_at_scale_minimum_is_identity() {
        let d = raw(&[(1, 1, 0.5, 1), (1, 2, 3.0, 2), (2, 1, 5.0, 3)]);
        assert_eq!(apply_rating_threshold(&d, 0.5).unwrap(), d);
    }

    #[test]
    fn threshold_keeps_high_ratings() {
        let d = raw(&[(1, 1, 1.0, 1), (1, 2, 3.0, 2), (1, 3, 5.0, 3)]);
        let out = apply_rating_threshold(&d, 4.0).unwrap();
        assert_eq!(triples(&out), vec![(1, 3, 3)]);
        let err = apply_rating_threshold(&d, 5.5).unwrap_err();
        assert_eq!(err.to_string(), "protocol eliminates all interactions");
    }

    #[test]
    fn kcore_zero_is_identity() {
        let d = raw(&[(1, 1, 1.0, 1), (2, 2, 3.0, 2)]);
        assert_eq!(kcore_filter(&d, 0, 0).unwrap(), d);
    }

    #[test]
    fn kcore_cascade_example() {
        // u1: [a, b], u2: [b]; min_user 2 removes u2, items still have >= 1
        let d = raw(&[(1, 10, 4.0, 1), (1, 11, 4.0, 2), (2, 11, 4.0, 3)]);
        let out = kcore_filter(&d, 2, 1).unwrap();
        assert_eq!(triples(&out), vec![(1, 10, 1), (1, 11, 2)]);
    }

    #[test]
    fn kcore_iterated_differs_from_single_pass() {
        // u1:[a,b] u2:[b,c] u3:[c]; min_user 2, min_item 2
        // pass 1 drops u3, then a (count 1) and c (count 1) go, leaving u1:[b], u2:[b]
        // which fails min_user again.
        let d = raw(&[
            (1, 1, 4.0, 1),
            (1, 2, 4.0, 2),
            (2, 2, 4.0, 3),
            (2, 3, 4.0, 4),
            (3, 3, 4.0, 5),
        ]);
        let single = kcore_filter_with(&d, 2, 2, false).unwrap();
        assert_eq!(triples(&single), vec![(1, 2, 2), (2, 2, 3)]);
        assert!(matches!(kcore_filter(&d, 2, 2), Err(Error::AllEliminated)));
    }

    #[test]
    fn subsample_is_deterministic() {
        let rows: Vec<_> = (0..10).map(|u| (u, 1, 4.0, u as i64)).collect();
        let d = raw(&rows);
        let a = subsample_users(&d, 3, 7).unwrap();
        let b = subsample_users(&d, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(subsample_users(&d, 10, 7).unwrap(), d);
    }

    #[test]
    fn subsample_seeds_differ() {
        let rows: Vec<_> = (0..100).map(|u| (u, 1, 4.0, u as i64)).collect();
        let d = raw(&rows);
        let differs = (0..5u64).any(|k| {
            subsample_users(&d, 50, 2 * k).unwrap() != subsample_users(&d, 50, 2 * k + 1).unwrap()
        });
        assert!(differs);
    }

    #[test]
    fn cap_keeps_most_recent() {
        let d = raw(&[(1, 1, 4.0, 10), (1, 2, 4.0, 20), (1, 3, 4.0, 30)]);
        let out = cap_user_interactions(&d, 2).unwrap();
        assert_eq!(triples(&out), vec![(1, 2, 20), (1, 3, 30)]);
        assert_eq!(cap_user_interactions(&d, 3).unwrap(), d);

        let d = raw(&[(1, 7, 4.0, 10), (1, 3, 4.0, 10)]);
        let out = cap_user_interactions(&d, 1).unwrap();
        assert_eq!(triples(&out), vec![(1, 7, 10)]);
    }

    #[test]
    fn sessionize_by_gap() {
        let d = raw(&[(1, 1, 4.0, 0), (1, 2, 4.0, 100), (1, 3, 4.0, 5100)]);
        let lens: Vec<usize> = sessionize(&d, SessionGap::Seconds(3600))
            .iter()
            .map(Session::len)
            .collect();
        assert_eq!(lens, vec![2, 1]);
        let s = sessionize(&d, SessionGap::None);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 3);
    }

    fn session(items: &[u32]) -> Session {
        Session {
            user_id: 1,
            events: items
                .iter()
                .enumerate()
                .map(|(t, &item)| Event {
                    item,
                    rating: 4.0,
                    timestamp: t as i64,
                })
                .collect(),
        }
    }

    #[test]
    fn last_n_split() {
        let rule = SplitRule {
            strategy: OutputStrategy::LastN,
            n_out: 2,
        };
        let (input, output) = split_input_output(&session(&[1, 2, 3, 4]), rule, 0).unwrap();
        assert_eq!(input.items().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(output, vec![3, 4]);
    }

    #[test]
    fn short_session_dropped() {
        let rule = SplitRule {
            strategy: OutputStrategy::LastN,
            n_out: 1,
        };
        assert!(split_input_output(&session(&[1]), rule, 0).is_none());
    }

    #[test]
    fn random_split_conserves_length_and_order() {
        let rule = SplitRule {
            strategy: OutputStrategy::RandomN,
            n_out: 3,
        };
        let s = session(&[10, 11, 12, 13, 14, 15, 16]);
        let (input, output) = split_input_output(&s, rule, 99).unwrap();
        assert_eq!(input.len() + output.len(), s.len());
        let items: Vec<u32> = input.items().collect();
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(items, sorted);
        assert_eq!(split_input_output(&s, rule, 99).unwrap().1, output);
    }

    #[test]
    fn temporal_split_quantile() {
        let sessions: Vec<Session> = (1..=100)
            .map(|t| Session {
                user_id: t as u32,
                events: vec![Event {
                    item: 0,
                    rating: 4.0,
                    timestamp: t,
                }],
            })
            .collect();
        let (train, test) =
            holdout_split(sessions, SplitStrategy::TemporalGlobal, 0.25, 0).unwrap();
        let ends: Vec<i64> = test.iter().map(Session::end).collect();
        assert_eq!(ends, (76..=100).collect::<Vec<_>>());
        assert_eq!(train.len(), 75);
    }

    #[test]
    fn user_holdout_is_disjoint_and_deterministic() {
        let sessions: Vec<Session> = (0..40)
            .map(|k| Session {
                user_id: k / 2,
                events: vec![Event {
                    item: k,
                    rating: 4.0,
                    timestamp: k as i64,
                }],
            })
            .collect();
        let a = holdout_split(sessions.clone(), SplitStrategy::UserHoldout, 0.5, 3).unwrap();
        let b = holdout_split(sessions, SplitStrategy::UserHoldout, 0.5, 3).unwrap();
        assert_eq!(a, b);
        let train: HashSet<u32> = a.0.iter().map(|s| s.user_id).collect();
        assert!(a.1.iter().all(|s| !train.contains(&s.user_id)));
    }

    #[test]
    fn degenerate_split() {
        let one = vec![session(&[1, 2])];
        assert!(matches!(
            holdout_split(one, SplitStrategy::UserHoldout, 0.5, 0),
            Err(Error::DegenerateSplit)
        ));
    }

    #[test]
    fn grid_counting_and_order() {
        let g = GridSpec::default();
        assert_eq!(enumerate_grid(&g, DEFAULT_GRID_CAP).unwrap().len(), 1);

        let g = GridSpec {
            rating_threshold: vec![0.0, 4.0],
            min_item_interactions: vec![1, 5, 10],
            ..GridSpec::default()
        };
        let ps = enumerate_grid(&g, DEFAULT_GRID_CAP).unwrap();
        let pairs: Vec<(f64, usize)> = ps
            .iter()
            .map(|p| (p.rating_threshold, p.min_item_interactions))
            .collect();
        assert_eq!(
            pairs,
            vec![(0.0, 1), (0.0, 5), (0.0, 10), (4.0, 1), (4.0, 5), (4.0, 10)]
        );

        let g = GridSpec {
            seed: vec![1, 1, 2],
            ..GridSpec::default()
        };
        assert_eq!(enumerate_grid(&g, DEFAULT_GRID_CAP).unwrap().len(), 2);
    }

    #[test]
    fn grid_cap_enforced() {
        let g = GridSpec {
            seed: (0..101).collect(),
            test_fraction: (1..=99).map(|k| k as f64 / 100.0).collect(),
            ..GridSpec::default()
        };
        assert_eq!(enumerate_grid(&g, DEFAULT_GRID_CAP).unwrap().len(), 9999);
        let g = GridSpec {
            seed: (0..200).collect(),
            test_fraction: (1..=99).map(|k| k as f64 / 100.0).collect(),
            ..GridSpec::default()
        };
        assert!(matches!(
            enumerate_grid(&g, DEFAULT_GRID_CAP),
            Err(Error::GridTooLarge {
                size: 19800,
                cap: 10_000
            })
        ));
    }

    #[test]
    fn grid_toml_parsing() {
        let g = GridSpec::from_toml(
            r#"
            rating_threshold = [0.0, 4.0]
            max_users = ["unlimited", 500]
            session_gap = ["none", 3600]
            output_strategy = ["last-n", "random-n"]
            split_strategy = ["temporal-global"]
            "#,
        )
        .unwrap();
        assert_eq!(g.max_users, vec![Limit::Unlimited, Limit::At(500)]);
        assert_eq!(
            g.session_gap,
            vec![SessionGap::None, SessionGap::Seconds(3600)]
        );
        assert_eq!(g.size(), Some(16));
        assert!(GridSpec::from_toml("colour = [1]").is_err());
    }
}
