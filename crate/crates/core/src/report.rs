//! Tables and figures derived from a finished run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{
    embed_2d, mean_robustness, performance_vector, ranking_flips, robustness, signature,
    zscore_signatures, EmbedMethod, PerformanceVector, RankingFlip, RobustnessReport, Signature,
};
use crate::error::{Error, Result};
use crate::experiment::RunResults;
use crate::metrics::MetricId;

pub fn performance_vectors(
    results: &RunResults,
    metric: MetricId,
) -> Result<Vec<(String, PerformanceVector)>> {
    results
        .successful()
        .map(|(id, t)| {
            Ok((
                id.to_string(),
                performance_vector(t, metric, &results.algorithms)?,
            ))
        })
        .collect()
}

/// One robustness report per metric of the run.
pub fn robustness_reports(results: &RunResults) -> Result<Vec<RobustnessReport>> {
    results
        .metrics
        .iter()
        .map(|&m| robustness(&results.dataset_id, m, &performance_vectors(results, m)?))
        .collect()
}

pub fn signatures(results: &RunResults) -> Result<Vec<(String, Signature)>> {
    results
        .successful()
        .map(|(id, t)| {
            Ok((
                id.to_string(),
                signature(t, &results.metrics, &results.algorithms)?,
            ))
        })
        .collect()
}

/// Signatures z-scored across all successful p-datasets of the run.
pub fn normalized_signatures(results: &RunResults) -> Result<Vec<(String, Signature)>> {
    let raw = signatures(results)?;
    let sigs: Vec<Signature> = raw.iter().map(|(_, s)| s.clone()).collect();
    let z = zscore_signatures(&sigs)?;
    Ok(raw.into_iter().map(|(id, _)| id).zip(z).collect())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

fn ser(e: csv::Error) -> Error {
    Error::Serialization(e.to_string())
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// `dataset,metric,robustness,n_pdatasets,n_pairs,n_skipped_pairs`, then a
/// final `mean` row.
pub fn robustness_csv(reports: &[RobustnessReport]) -> Result<String> {
    let mut w = csv_writer();
    w.write_record([
        "dataset",
        "metric",
        "robustness",
        "n_pdatasets",
        "n_pairs",
        "n_skipped_pairs",
    ])
    .map_err(ser)?;
    for r in reports {
        w.write_record([
            r.dataset_id.clone(),
            r.metric.to_string(),
            num(r.robustness),
            r.n_pdatasets.to_string(),
            r.pair_correlations.len().to_string(),
            r.skipped_pairs.len().to_string(),
        ])
        .map_err(ser)?;
    }
    if let (Some(mean), Some(first)) = (mean_robustness(reports), reports.first()) {
        w.write_record([
            first.dataset_id.clone(),
            "mean".to_string(),
            num(mean),
            first.n_pdatasets.to_string(),
            String::new(),
            String::new(),
        ])
        .map_err(ser)?;
    }
    finish(w)
}

/// Every score of every successful p-dataset, with a normal-approximation
/// 95% interval from the bootstrap std.
pub fn scores_csv(results: &RunResults) -> Result<String> {
    let mut w = csv_writer();
    w.write_record([
        "protocol",
        "metric",
        "algorithm",
        "mean",
        "std",
        "ci_low",
        "ci_high",
        "n_test_pairs",
    ])
    .map_err(ser)?;
    for (id, t) in results.successful() {
        for e in &t.entries {
            w.write_record([
                id.to_string(),
                e.metric.to_string(),
                e.algorithm.clone(),
                num(e.mean),
                num(e.std),
                num(e.mean - 1.96 * e.std),
                num(e.mean + 1.96 * e.std),
                t.n_test_pairs.to_string(),
            ])
            .map_err(ser)?;
        }
    }
    finish(w)
}

pub fn flips_csv(metric: MetricId, flips: &[RankingFlip], algo_order: &[String]) -> Result<String> {
    let names = |idx: &[usize]| {
        idx.iter()
            .map(|&i| algo_order[i].as_str())
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut w = csv_writer();
    w.write_record([
        "metric",
        "protocol_a",
        "protocol_b",
        "rho",
        "best_a",
        "best_b",
    ])
    .map_err(ser)?;
    for f in flips {
        w.write_record([
            metric.to_string(),
            f.protocol_a.clone(),
            f.protocol_b.clone(),
            num(f.rho),
            names(&f.best_a),
            names(&f.best_b),
        ])
        .map_err(ser)?;
    }
    finish(w)
}

pub fn embedding_csv(ids: &[String], points: &[(f64, f64)]) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(["protocol", "x", "y"]).map_err(ser)?;
    for (id, (x, y)) in ids.iter().zip(points) {
        w.write_record([id.clone(), num(*x), num(*y)])
            .map_err(ser)?;
    }
    finish(w)
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Horizontal bars on a -1..1 axis, one per metric.
pub fn robustness_svg(reports: &[RobustnessReport]) -> String {
    let (left, width, row) = (140.0, 400.0, 24.0);
    let height = 40.0 + row * reports.len() as f64;
    let zero = left + width / 2.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        left + width + 60.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{zero}" y1="10" x2="{zero}" y2="{}" stroke="black"/>"#,
        height - 20.0
    );
    for (i, r) in reports.iter().enumerate() {
        let y = 20.0 + row * i as f64;
        let end = zero + r.robustness * width / 2.0;
        let (x, w) = if end < zero {
            (end, zero - end)
        } else {
            (zero, end - zero)
        };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 12.0,
            escape_xml(&r.metric.to_string())
        );
        let _ = writeln!(
            s,
            r##"<rect x="{x:.2}" y="{y}" width="{w:.2}" height="{}" fill="#4a78b5"/>"##,
            row - 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{:.3}</text>"#,
            left + width + 6.0,
            y + 12.0,
            r.robustness
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn embedding_svg(ids: &[String], points: &[(f64, f64)]) -> String {
    let size = 480.0;
    let pad = 30.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let sx = if x1 > x0 {
        (size - 2.0 * pad) / (x1 - x0)
    } else {
        1.0
    };
    let sy = if y1 > y0 {
        (size - 2.0 * pad) / (y1 - y0)
    } else {
        1.0
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="9">"#
    );
    for (id, &(x, y)) in ids.iter().zip(points) {
        let px = pad + (x - x0) * sx;
        let py = size - pad - (y - y0) * sy;
        let _ = writeln!(
            s,
            r##"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="#4a78b5"><title>{}</title></circle>"##,
            escape_xml(id)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub written: Vec<PathBuf>,
    pub reports: Vec<RobustnessReport>,
}

fn put(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(())
}

/// Writes robustness, scores, flips and (with at least three p-datasets) an
/// embedding of the signatures.
pub fn write_report(
    results: &RunResults,
    dir: &Path,
    method: EmbedMethod,
    seed: u64,
) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let reports = robustness_reports(results)?;
    put(
        dir,
        "robustness.csv",
        &robustness_csv(&reports)?,
        &mut written,
    )?;
    put(
        dir,
        "robustness.svg",
        &robustness_svg(&reports),
        &mut written,
    )?;
    put(dir, "scores.csv", &scores_csv(results)?, &mut written)?;

    let mut flips = String::new();
    for (i, &m) in results.metrics.iter().enumerate() {
        let f = ranking_flips(&performance_vectors(results, m)?);
        let text = flips_csv(m, &f, &results.algorithms)?;
        // keep a single header line
        flips.push_str(if i == 0 {
            &text
        } else {
            text.split_once('\n').map_or("", |x| x.1)
        });
    }
    put(dir, "flips.csv", &flips, &mut written)?;

    let sigs = normalized_signatures(results)?;
    if sigs.len() >= 3 {
        let ids: Vec<String> = sigs.iter().map(|(id, _)| id.clone()).collect();
        let only: Vec<Signature> = sigs.into_iter().map(|(_, s)| s).collect();
        let points = embed_2d(&only, method, seed)?;
        put(
            dir,
            "embedding.csv",
            &embedding_csv(&ids, &points)?,
            &mut written,
        )?;
        put(
            dir,
            "embedding.svg",
            &embedding_svg(&ids, &points),
            &mut written,
        )?;
    } else {
        log::warn!("fewer than three p-datasets; skipping the embedding");
    }
    Ok(ReportFiles { written, reports })
}
