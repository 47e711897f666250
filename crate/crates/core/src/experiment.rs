//! The full study: grid -> p-datasets -> fits -> evaluations.
//!
//! Every random stream is seeded from `(master_seed, protocol index,
//! algorithm index)`, and results are assembled in grid order after the
//! parallel phase, so the output is byte-identical for any thread count.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algos::{fit, AlgoSpec};
use crate::error::{Error, Result};
use crate::ingest::{parse_interactions, InputFormat, RawDataset};
use crate::metrics::{
    assemble_table, evaluate_model, EvalContext, MetricEntry, MetricId, MetricTable,
};
use crate::protocol::{
    build_pdataset, enumerate_grid, GridSpec, PDataset, Protocol, DEFAULT_GRID_CAP,
};
use crate::seed::{derive_seed, fnv1a64};
use crate::stats::DEFAULT_N_BOOT;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RESULTS_FILE: &str = "results.json";
pub const MANIFEST_FILE: &str = "manifest.json";

const FIT_STREAM: u64 = 0xF17;
const BOOT_STREAM: u64 = 0xB007;

// (protocol index, algorithm index)
type TaskKey = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub format: InputFormat,
    /// Label used in reports; defaults to the name derived from the path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ParallelismRepr", into = "ParallelismRepr")]
pub enum Parallelism {
    Auto,
    Threads(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ParallelismRepr {
    Threads(u64),
    Word(String),
}

impl TryFrom<ParallelismRepr> for Parallelism {
    type Error = String;

    fn try_from(r: ParallelismRepr) -> std::result::Result<Self, String> {
        match r {
            ParallelismRepr::Threads(0) => Err("parallelism must be at least 1".into()),
            ParallelismRepr::Threads(n) => Ok(Parallelism::Threads(n as usize)),
            ParallelismRepr::Word(w) if w == "auto" => Ok(Parallelism::Auto),
            ParallelismRepr::Word(w) => {
                Err(format!("expected a thread count or \"auto\", got `{w}`"))
            }
        }
    }
}

impl From<Parallelism> for ParallelismRepr {
    fn from(p: Parallelism) -> Self {
        match p {
            Parallelism::Auto => ParallelismRepr::Word("auto".into()),
            Parallelism::Threads(n) => ParallelismRepr::Threads(n as u64),
        }
    }
}

fn default_n_boot() -> usize {
    DEFAULT_N_BOOT
}

fn default_parallelism() -> Parallelism {
    Parallelism::Auto
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_grid_cap() -> usize {
    DEFAULT_GRID_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub grid: GridSpec,
    pub algorithms: Vec<AlgoSpec>,
    pub metrics: Vec<MetricId>,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: Parallelism,
    #[serde(default = "default_grid_cap")]
    pub max_grid_size: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; a relative dataset path is resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.dataset.path, &mut cfg.output_dir] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("the algorithm pool is empty".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("the metric pool is empty".into()));
        }
        if self.n_boot < 2 {
            return Err(Error::Config("n_boot must be at least 2".into()));
        }
        let mut names: Vec<&str> = self.algorithms.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(
                "algorithm names must be unique (set `name` to disambiguate)".into(),
            ));
        }
        Ok(())
    }

    pub fn algo_order(&self) -> Vec<String> {
        self.algorithms.iter().map(|a| a.name.clone()).collect()
    }

    /// Hash over everything that influences results (not output location or
    /// thread count).
    pub fn content_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.parallelism = Parallelism::Auto;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }

    pub fn protocols(&self) -> Result<Vec<Protocol>> {
        enumerate_grid(&self.grid, self.max_grid_size)
    }
}

pub fn protocol_id(index: usize) -> String {
    format!("p{index:04}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_hash: String,
    pub dataset_id: String,
    pub protocols: Vec<ManifestEntry>,
}

pub fn manifest_for(config: &RunConfig, dataset_id: &str) -> Result<Manifest> {
    Ok(Manifest {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config.content_hash(),
        dataset_id: dataset_id.to_string(),
        protocols: config
            .protocols()?
            .into_iter()
            .enumerate()
            .map(|(i, protocol)| ManifestEntry {
                id: protocol_id(i),
                protocol,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Ok {
        n_items: usize,
        n_train_sessions: usize,
        table: MetricTable,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub id: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl ProtocolResult {
    pub fn table(&self) -> Option<&MetricTable> {
        match &self.outcome {
            Outcome::Ok { table, .. } => Some(table),
            Outcome::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub tool_version: String,
    pub config_hash: String,
    pub dataset_id: String,
    pub master_seed: u64,
    pub algorithms: Vec<String>,
    pub metrics: Vec<MetricId>,
    pub protocols: Vec<ProtocolResult>,
}

impl RunResults {
    pub fn successful(&self) -> impl Iterator<Item = (&str, &MetricTable)> {
        self.protocols
            .iter()
            .filter_map(|p| p.table().map(|t| (p.id.as_str(), t)))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }
}

fn with_pool<T: Send>(parallelism: Parallelism, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Parallelism::Threads(n) = parallelism {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn fit_and_evaluate(
    d: &PDataset,
    ctx: &EvalContext,
    spec: &AlgoSpec,
    metrics: &[MetricId],
    n_boot: usize,
    task_seed: u64,
) -> Result<Vec<MetricEntry>> {
    let spec = spec.with_seed(derive_seed(&[task_seed, FIT_STREAM]));
    let model = fit(&spec, d.train_view())?;
    evaluate_model(
        d,
        ctx,
        &model,
        metrics,
        n_boot,
        derive_seed(&[task_seed, BOOT_STREAM]),
    )
}

/// Runs the study on an already-loaded dataset.
pub fn run_on_dataset(config: &RunConfig, raw: &RawDataset) -> Result<RunResults> {
    config.validate()?;
    let protocols = config.protocols()?;
    let dataset_id = config
        .dataset
        .id
        .clone()
        .unwrap_or_else(|| raw.source_id.clone());
    let algos = &config.algorithms;
    let metrics = &config.metrics;

    let (built, evaluated) = with_pool(config.parallelism, || {
        let built: Vec<Result<(PDataset, EvalContext)>> = protocols
            .par_iter()
            .map(|p| {
                let d = build_pdataset(raw, p)?;
                let ctx = EvalContext::for_pdataset(&d);
                Ok((d, ctx))
            })
            .collect();

        let tasks: Vec<(usize, usize)> = built
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_ok())
            .flat_map(|(pi, _)| (0..algos.len()).map(move |ai| (pi, ai)))
            .collect();
        let evaluated: Vec<(TaskKey, Result<Vec<MetricEntry>>)> = tasks
            .par_iter()
            .map(|&(pi, ai)| {
                let (d, ctx) = built[pi].as_ref().expect("filtered to successes");
                let seed = derive_seed(&[config.master_seed, pi as u64, ai as u64, algos[ai].seed]);
                let r = fit_and_evaluate(d, ctx, &algos[ai], metrics, config.n_boot, seed);
                ((pi, ai), r)
            })
            .collect();
        (built, evaluated)
    })?;

    let mut per_protocol: Vec<Vec<Option<Result<Vec<MetricEntry>>>>> = (0..protocols.len())
        .map(|_| (0..algos.len()).map(|_| None).collect())
        .collect();
    for ((pi, ai), r) in evaluated {
        per_protocol[pi][ai] = Some(r);
    }

    let mut results = Vec::with_capacity(protocols.len());
    for (pi, b) in built.into_iter().enumerate() {
        let id = protocol_id(pi);
        let outcome = match b {
            Err(e) => Outcome::Skipped {
                reason: e.to_string(),
            },
            Ok((d, _)) => {
                let mut entries = Vec::with_capacity(algos.len());
                let mut failure = None;
                for (ai, slot) in per_protocol[pi].iter_mut().enumerate() {
                    match slot.take().expect("every task ran") {
                        Ok(e) => entries.push(e),
                        Err(e) => {
                            failure = Some(format!("{}: {e}", algos[ai].name));
                            break;
                        }
                    }
                }
                match failure {
                    Some(reason) => Outcome::Skipped { reason },
                    None => Outcome::Ok {
                        n_items: d.n_items(),
                        n_train_sessions: d.train_sessions.len(),
                        table: assemble_table(entries, metrics.len(), d.test_pairs.len()),
                    },
                }
            }
        };
        if let Outcome::Skipped { reason } = &outcome {
            log::info!("{id} skipped: {reason}");
        }
        results.push(ProtocolResult { id, outcome });
    }

    let out = RunResults {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config.content_hash(),
        dataset_id,
        master_seed: config.master_seed,
        algorithms: config.algo_order(),
        metrics: metrics.clone(),
        protocols: results,
    };
    if out.successful().next().is_none() {
        return Err(Error::NoSuccessfulProtocols);
    }
    Ok(out)
}

pub fn run_experiment(config: &RunConfig) -> Result<RunResults> {
    config.validate()?;
    let raw = parse_interactions(config.dataset.format, &config.dataset.path)?;
    run_on_dataset(config, &raw)
}

/// Writes `results.json` and `manifest.json` into `dir`.
pub fn write_outputs(config: &RunConfig, results: &RunResults, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = manifest_for(config, &results.dataset_id)?;
    let mut manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_text.push('\n');
    let rp = dir.join(RESULTS_FILE);
    fs::write(&rp, results.to_json()).map_err(|e| Error::io(&rp, e))?;
    let mp = dir.join(MANIFEST_FILE);
    fs::write(&mp, manifest_text).map_err(|e| Error::io(&mp, e))?;
    Ok(())
}
