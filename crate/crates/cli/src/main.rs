use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use reprobench::analysis::{
    embed_2d, robustness, select_protocol, zscore_signatures, EmbedMethod, PerformanceVector,
    Signature,
};
use reprobench::experiment::{
    manifest_for, run_experiment, write_outputs, Parallelism, RunConfig, RunResults,
};
use reprobench::ingest::{dataset_stats, parse_interactions, write_canonical, InputFormat};
use reprobench::metrics::MetricId;
use reprobench::protocol::{enumerate_grid, GridSpec};
use reprobench::report::{
    embedding_csv, normalized_signatures, performance_vectors, robustness_csv, robustness_reports,
    signatures, write_report,
};
use reprobench::synth::{generate_synthetic, SynthSpec};
use reprobench::Error;

#[derive(Parser)]
#[command(
    name = "reprobench",
    version,
    about = "Preprocessing-robustness study for recommender datasets"
)]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a ratings file into the canonical CSV layout.
    Ingest {
        #[arg(long)]
        format: InputFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic ratings log.
    Synth(SynthArgs),
    /// Enumerate a protocol grid into a manifest.
    Grid {
        /// Run config whose `[grid]` table is enumerated.
        #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
        config: Option<PathBuf>,
        /// Stand-alone grid file (just the grid fields).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the full study described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Thread count or "auto".
        #[arg(long, value_parser = parse_parallelism)]
        parallelism: Option<Parallelism>,
    },
    /// Robustness per metric, from a results file or a table of performance vectors.
    Robustness {
        #[arg(long, required_unless_present = "vectors", conflicts_with = "vectors")]
        results: Option<PathBuf>,
        /// CSV with a `protocol` column followed by one column per algorithm.
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Restrict to one metric (with --vectors, the label of the table).
        #[arg(long)]
        metric: Option<MetricId>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the signatures of the successful p-datasets of a run.
    Signature {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        protocol: Option<String>,
        #[command(flatten)]
        norm: Normalize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Pick the pool protocol whose signature is nearest to the target's.
    Select {
        /// Results of the public dataset runs (the candidate pool).
        #[arg(long, required = true, num_args = 1..)]
        pool: Vec<PathBuf>,
        /// Results of the target dataset.
        #[arg(long)]
        target: PathBuf,
        /// Which p-dataset of the target to use; defaults to its first success.
        #[arg(long)]
        target_protocol: Option<String>,
        #[command(flatten)]
        norm: Normalize,
    },
    /// 2-D embedding of the signatures of a run.
    Embed {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "pca")]
        method: EmbedMethod,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        norm: Normalize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write all tables and figures for a run.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value = "tsne")]
        method: EmbedMethod,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Normalize {
    /// Z-score every signature coordinate across the signatures involved.
    #[arg(long)]
    zscore: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 500)]
    n_users: usize,
    #[arg(long, default_value_t = 300)]
    n_items: usize,
    #[arg(long, default_value_t = 1.0)]
    popularity_skew: f64,
    #[arg(long, default_value_t = 8)]
    taste_dim: usize,
    #[arg(long, default_value_t = 40.0)]
    mean_events_per_user: f64,
    #[arg(long, default_value_t = 0.5)]
    rating_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    source_id: String,
}

fn parse_parallelism(s: &str) -> Result<Parallelism, String> {
    match s {
        "auto" => Ok(Parallelism::Auto),
        n => match n.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!(
                "expected a positive thread count or \"auto\", got `{n}`"
            )),
            Ok(k) => Ok(Parallelism::Threads(k)),
        },
    }
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_vectors(path: &Path, metric: MetricId) -> anyhow::Result<Vec<(String, PerformanceVector)>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.with_context(|| format!("parsing {}", path.display()))?;
        let mut fields = rec.iter();
        let id = fields.next().unwrap_or_default().to_string();
        let scores = fields
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: out.len() + 2,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, Error>>()?;
        out.push((id, PerformanceVector { metric, scores }));
    }
    Ok(out)
}

fn maybe_zscore(
    sigs: Vec<(String, Signature)>,
    on: bool,
) -> anyhow::Result<Vec<(String, Signature)>> {
    if !on {
        return Ok(sigs);
    }
    let (ids, only): (Vec<String>, Vec<Signature>) = sigs.into_iter().unzip();
    Ok(ids.into_iter().zip(zscore_signatures(&only)?).collect())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest {
            format,
            input,
            output,
        } => {
            let d = parse_interactions(format, &input)?;
            write_canonical(&d, &output)?;
            let s = dataset_stats(&d)?;
            println!(
                "{}: {} users, {} items, {} interactions, density {:.6}, timestamps {}..{}",
                d.source_id,
                s.n_users,
                s.n_items,
                s.n_interactions,
                s.density,
                s.time_span.0,
                s.time_span.1
            );
        }
        Command::Synth(a) => {
            let spec = SynthSpec {
                n_users: a.n_users,
                n_items: a.n_items,
                popularity_skew: a.popularity_skew,
                taste_dim: a.taste_dim,
                mean_events_per_user: a.mean_events_per_user,
                rating_noise: a.rating_noise,
                seed: a.seed,
                source_id: a.source_id,
            };
            let d = generate_synthetic(&spec)?;
            write_canonical(&d, &a.output)?;
            println!("{} interactions written to {}", d.len(), a.output.display());
        }
        Command::Grid {
            config,
            spec,
            output,
        } => {
            let text = match (config, spec) {
                (Some(c), _) => {
                    let cfg = RunConfig::load(&c)?;
                    let id =
                        cfg.dataset.id.clone().unwrap_or_else(|| {
                            reprobench::ingest::source_id_for(&cfg.dataset.path)
                        });
                    let m = manifest_for(&cfg, &id)?;
                    serde_json::to_string_pretty(&m)?
                }
                (None, Some(s)) => {
                    let text = fs::read_to_string(&s)
                        .with_context(|| format!("reading {}", s.display()))?;
                    let g = GridSpec::from_toml(&text)?;
                    let protocols = enumerate_grid(&g, reprobench::protocol::DEFAULT_GRID_CAP)?;
                    let entries: Vec<_> = protocols
                        .into_iter()
                        .enumerate()
                        .map(|(i, protocol)| reprobench::experiment::ManifestEntry {
                            id: reprobench::experiment::protocol_id(i),
                            protocol,
                        })
                        .collect();
                    serde_json::to_string_pretty(&serde_json::json!({ "protocols": entries }))?
                }
                (None, None) => bail!("either --config or --spec is required"),
            };
            let n = serde_json::from_str::<serde_json::Value>(&text)?["protocols"]
                .as_array()
                .map_or(0, Vec::len);
            match output {
                Some(p) => {
                    emit(Some(&p), &format!("{text}\n"))?;
                    println!("{n} protocols written to {}", p.display());
                }
                None => emit(None, &format!("{text}\n"))?,
            }
        }
        Command::Run {
            config,
            seed,
            output_dir,
            parallelism,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(p) = parallelism {
                cfg.parallelism = p;
            }
            let dir = output_dir.unwrap_or_else(|| cfg.output_dir.clone());
            let results = run_experiment(&cfg)?;
            write_outputs(&cfg, &results, &dir)?;
            let ok = results.successful().count();
            println!(
                "{ok}/{} protocols succeeded; results in {}",
                results.protocols.len(),
                dir.display()
            );
        }
        Command::Robustness {
            results,
            vectors,
            metric,
            output,
        } => {
            let reports = match (results, vectors) {
                (Some(r), _) => {
                    let res = RunResults::load(&r)?;
                    match metric {
                        Some(m) => {
                            if !res.metrics.contains(&m) {
                                bail!("metric {m} is not part of the run");
                            }
                            vec![robustness(
                                &res.dataset_id,
                                m,
                                &performance_vectors(&res, m)?,
                            )?]
                        }
                        None => robustness_reports(&res)?,
                    }
                }
                (None, Some(v)) => {
                    let m = metric.unwrap_or_else(|| "ndcg@10".parse().expect("valid metric"));
                    let id = reprobench::ingest::source_id_for(&v);
                    vec![robustness(&id, m, &read_vectors(&v, m)?)?]
                }
                (None, None) => bail!("either --results or --vectors is required"),
            };
            emit(output.as_deref(), &robustness_csv(&reports)?)?;
        }
        Command::Signature {
            results,
            protocol,
            norm,
            output,
        } => {
            let res = RunResults::load(&results)?;
            let mut sigs = maybe_zscore(signatures(&res)?, norm.zscore)?;
            if let Some(p) = protocol {
                sigs.retain(|(id, _)| *id == p);
                if sigs.is_empty() {
                    bail!("no successful protocol `{p}` in {}", results.display());
                }
            }
            let json: Vec<_> = sigs
                .iter()
                .map(|(id, s)| serde_json::json!({ "protocol": id, "signature": s }))
                .collect();
            emit(
                output.as_deref(),
                &format!("{}\n", serde_json::to_string_pretty(&json)?),
            )?;
        }
        Command::Select {
            pool,
            target,
            target_protocol,
            norm,
        } => {
            let target_res = RunResults::load(&target)?;
            let target_sigs = signatures(&target_res)?;
            let (tid, tsig) = match &target_protocol {
                Some(p) => target_sigs
                    .into_iter()
                    .find(|(id, _)| id == p)
                    .with_context(|| {
                        format!("no successful protocol `{p}` in {}", target.display())
                    })?,
                None => target_sigs
                    .into_iter()
                    .next()
                    .context("target run has no successful protocol")?,
            };
            let multi = pool.len() > 1;
            let mut candidates = Vec::new();
            for path in &pool {
                let res = RunResults::load(path)?;
                for (id, s) in signatures(&res)? {
                    let label = if multi {
                        format!("{}/{id}", res.dataset_id)
                    } else {
                        id
                    };
                    candidates.push((label, s));
                }
            }
            let (tsig, candidates) = if norm.zscore {
                let mut all: Vec<Signature> = candidates.iter().map(|(_, s)| s.clone()).collect();
                all.push(tsig);
                let mut z = zscore_signatures(&all)?;
                let t = z.pop().expect("target was appended");
                let c = candidates.into_iter().map(|(id, _)| id).zip(z).collect();
                (t, c)
            } else {
                (tsig, candidates)
            };
            let (best, dist) = select_protocol(&tsig, &candidates)?;
            log::info!("target {}/{tid}", target_res.dataset_id);
            println!("{best},{dist}");
        }
        Command::Embed {
            results,
            method,
            seed,
            norm,
            output,
        } => {
            let res = RunResults::load(&results)?;
            let sigs = if norm.zscore {
                normalized_signatures(&res)?
            } else {
                signatures(&res)?
            };
            let (ids, only): (Vec<String>, Vec<Signature>) = sigs.into_iter().unzip();
            let points = embed_2d(&only, method, seed)?;
            emit(output.as_deref(), &embedding_csv(&ids, &points)?)?;
        }
        Command::Report {
            results,
            output_dir,
            method,
            seed,
        } => {
            let res = RunResults::load(&results)?;
            let files = write_report(&res, &output_dir, method, seed)?;
            for r in &files.reports {
                println!("{} {}: {:.4}", r.dataset_id, r.metric, r.robustness);
            }
            for p in &files.written {
                log::info!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::NoSuccessfulProtocols) => 3,
        Some(err) if err.is_data_error() => 2,
        Some(_) => 1,
        None if e.downcast_ref::<csv::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
