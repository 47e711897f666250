//! Rating-log ingestion: MovieLens release formats and the canonical CSV.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CANONICAL_HEADER: &str = "user_id,item_id,rating,timestamp";
pub const ML_CSV_HEADER: &str = "userId,movieId,rating,timestamp";

/// One rating event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: u32,
    pub item_id: u32,
    pub rating: f64,
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(user_id: u32, item_id: u32, rating: f64, timestamp: i64) -> Self {
        Self {
            user_id,
            item_id,
            rating,
            timestamp,
        }
    }

    fn sort_key(&self) -> (u32, i64, u32) {
        (self.user_id, self.timestamp, self.item_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl RatingScale {
    /// 1..5 stars, whole steps (ML-100K, ML-1M).
    pub const WHOLE_STARS: RatingScale = RatingScale {
        min: 1.0,
        max: 5.0,
        step: 1.0,
    };
    /// 0.5..5 stars, half steps (ML-10M, ML-20M, canonical files).
    pub const HALF_STARS: RatingScale = RatingScale {
        min: 0.5,
        max: 5.0,
        step: 0.5,
    };

    pub fn contains(&self, rating: f64) -> bool {
        if !rating.is_finite() || rating < self.min - 1e-9 || rating > self.max + 1e-9 {
            return false;
        }
        let steps = (rating - self.min) / self.step;
        (steps - steps.round()).abs() < 1e-9
    }
}

/// A raw rating log, sorted by `(user_id, timestamp, item_id)` with no two
/// interactions sharing `(user_id, item_id, timestamp)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    interactions: Vec<Interaction>,
    pub source_id: String,
    pub rating_scale: RatingScale,
}

impl RawDataset {
    /// Sorts, deduplicates (last occurrence wins) and validates the ratings.
    pub fn new(
        source_id: impl Into<String>,
        rating_scale: RatingScale,
        interactions: Vec<Interaction>,
    ) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (idx, it) in interactions.iter().enumerate() {
            if !rating_scale.contains(it.rating) {
                return Err(out_of_scale(idx + 1, it.rating, rating_scale));
            }
            if it.timestamp < 0 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("negative timestamp {}", it.timestamp),
                });
            }
        }
        Ok(Self {
            interactions: sort_dedup(interactions),
            source_id: source_id.into(),
            rating_scale,
        })
    }

    /// Builds a dataset from interactions already known to satisfy the
    /// ordering and uniqueness invariants (e.g. a filtered subsequence).
    pub(crate) fn from_sorted(
        source_id: String,
        rating_scale: RatingScale,
        interactions: Vec<Interaction>,
    ) -> Self {
        debug_assert!(interactions
            .windows(2)
            .all(|w| w[0].sort_key() < w[1].sort_key()));
        Self {
            interactions,
            source_id,
            rating_scale,
        }
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Same metadata, different interaction subset. Errors when `kept` is empty.
    pub(crate) fn with_interactions(&self, kept: Vec<Interaction>) -> Result<Self> {
        if kept.is_empty() {
            return Err(Error::AllEliminated);
        }
        Ok(Self::from_sorted(
            self.source_id.clone(),
            self.rating_scale,
            kept,
        ))
    }
}

fn sort_dedup(interactions: Vec<Interaction>) -> Vec<Interaction> {
    let mut indexed: Vec<(usize, Interaction)> = interactions.into_iter().enumerate().collect();
    indexed.sort_by(|(ia, a), (ib, b)| a.sort_key().cmp(&b.sort_key()).then(ia.cmp(ib)));
    let mut out: Vec<Interaction> = Vec::with_capacity(indexed.len());
    for (_, it) in indexed {
        match out.last_mut() {
            Some(prev) if prev.sort_key() == it.sort_key() => *prev = it,
            _ => out.push(it),
        }
    }
    out
}

fn out_of_scale(line: usize, rating: f64, scale: RatingScale) -> Error {
    Error::RatingOutOfScale {
        line,
        rating,
        min: scale.min,
        max: scale.max,
        step: scale.step,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp` (ML-100K `u.data`).
    #[serde(rename = "ml-100k")]
    Ml100k,
    /// `user::item::rating::timestamp` (ML-1M, ML-10M `ratings.dat`).
    #[serde(rename = "ml-dat")]
    MlDat,
    /// `userId,movieId,rating,timestamp` with a header (ML-20M `ratings.csv`).
    #[serde(rename = "ml-csv")]
    MlCsv,
    #[serde(rename = "canonical")]
    Canonical,
}

impl InputFormat {
    pub fn rating_scale(self) -> RatingScale {
        match self {
            InputFormat::Ml100k | InputFormat::MlDat => RatingScale::WHOLE_STARS,
            InputFormat::MlCsv | InputFormat::Canonical => RatingScale::HALF_STARS,
        }
    }

    fn separator(self) -> &'static str {
        match self {
            InputFormat::Ml100k => "\t",
            InputFormat::MlDat => "::",
            InputFormat::MlCsv | InputFormat::Canonical => ",",
        }
    }

    fn header(self) -> Option<&'static str> {
        match self {
            InputFormat::MlCsv => Some(ML_CSV_HEADER),
            InputFormat::Canonical => Some(CANONICAL_HEADER),
            _ => None,
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::Ml100k => "ml-100k",
            InputFormat::MlDat => "ml-dat",
            InputFormat::MlCsv => "ml-csv",
            InputFormat::Canonical => "canonical",
        })
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml-100k" => Ok(InputFormat::Ml100k),
            "ml-dat" => Ok(InputFormat::MlDat),
            "ml-csv" => Ok(InputFormat::MlCsv),
            "canonical" => Ok(InputFormat::Canonical),
            other => Err(Error::InvalidArgument(format!(
                "unknown format `{other}` (expected ml-100k, ml-dat, ml-csv or canonical)"
            ))),
        }
    }
}

/// Source label derived from a path: the parent directory name when there is
/// one (`data/ml-1m/ratings.dat` -> `ml-1m`), else the file stem.
pub fn source_id_for(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

pub fn parse_interactions(format: InputFormat, path: &Path) -> Result<RawDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    parse_reader(format, reader, source_id_for(path)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses any of the supported formats from an in-memory reader.
pub fn parse_reader<R: BufRead>(
    format: InputFormat,
    reader: R,
    source_id: impl Into<String>,
) -> Result<RawDataset> {
    let scale = format.rating_scale();
    let sep = format.separator();
    let mut interactions = Vec::new();
    let mut header_seen = format.header().is_none();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let line = line.trim_end_matches('\r');
        if !header_seen {
            let expected = format.header().unwrap_or_default();
            if line.trim() != expected {
                return Err(Error::HeaderMismatch {
                    expected: expected.to_string(),
                    found: line.to_string(),
                });
            }
            header_seen = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let it = parse_line(line, sep, line_no)?;
        if !scale.contains(it.rating) {
            return Err(out_of_scale(line_no, it.rating, scale));
        }
        interactions.push(it);
    }

    if interactions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    RawDataset::new(source_id, scale, interactions)
}

fn parse_line(line: &str, sep: &str, line_no: usize) -> Result<Interaction> {
    let fields: Vec<&str> = line.split(sep).collect();
    if fields.len() != 4 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected 4 fields, found {}", fields.len()),
        });
    }
    let bad = |what: &str, raw: &str| Error::Parse {
        line: line_no,
        message: format!("invalid {what} `{raw}`"),
    };
    let user_id = fields[0]
        .trim()
        .parse::<u32>()
        .map_err(|_| bad("user id", fields[0]))?;
    let item_id = fields[1]
        .trim()
        .parse::<u32>()
        .map_err(|_| bad("item id", fields[1]))?;
    let rating = fields[2]
        .trim()
        .parse::<f64>()
        .map_err(|_| bad("rating", fields[2]))?;
    let timestamp = fields[3]
        .trim()
        .parse::<i64>()
        .map_err(|_| bad("timestamp", fields[3]))?;
    if timestamp < 0 {
        return Err(bad("timestamp", fields[3]));
    }
    Ok(Interaction::new(user_id, item_id, rating, timestamp))
}

pub fn write_canonical(d: &RawDataset, path: &Path) -> Result<()> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_canonical_to(d, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_canonical_to<W: Write>(d: &RawDataset, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{CANONICAL_HEADER}")?;
    for it in d.interactions() {
        writeln!(
            w,
            "{},{},{},{}",
            it.user_id, it.item_id, it.rating, it.timestamp
        )?;
    }
    Ok(())
}

/// Reads a canonical file. The canonical format carries no metadata, so the
/// result uses the half-star scale and a source id derived from the path.
pub fn read_canonical(path: &Path) -> Result<RawDataset> {
    parse_interactions(InputFormat::Canonical, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub density: f64,
    pub time_span: (i64, i64),
}

pub fn dataset_stats(d: &RawDataset) -> Result<DatasetStats> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let users: HashSet<u32> = d.interactions().iter().map(|i| i.user_id).collect();
    let items: HashSet<u32> = d.interactions().iter().map(|i| i.item_id).collect();
    let min_ts = d
        .interactions()
        .iter()
        .map(|i| i.timestamp)
        .min()
        .unwrap_or(0);
    let max_ts = d
        .interactions()
        .iter()
        .map(|i| i.timestamp)
        .max()
        .unwrap_or(0);
    let n = d.len();
    Ok(DatasetStats {
        n_users: users.len(),
        n_items: items.len(),
        n_interactions: n,
        density: n as f64 / (users.len() as f64 * items.len() as f64),
        time_span: (min_ts, max_ts),
    })
}
