use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn reprobench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reprobench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, dataset: &Path, grid: &str) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        format!(
            r#"
master_seed = 3
n_boot = 20
metrics = ["precision@10", "ndcg@10", "item_coverage@10"]

[dataset]
path = "{}"
format = "canonical"

[grid]
{grid}

[[algorithms]]
kind = "random"

[[algorithms]]
kind = "best_of"

[[algorithms]]
kind = "item_knn"
"#,
            dataset.display()
        ),
    )
    .unwrap();
    cfg
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("synthetic.csv");
    let o = reprobench(&[
        "synth",
        "--output",
        p(&data),
        "--n-users",
        "300",
        "--n-items",
        "80",
        "--seed",
        "9",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    data
}

#[test]
fn grid_of_two_by_three() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("grid.toml");
    fs::write(
        &spec,
        "rating_threshold = [0.0, 3.5]\nmin_user_interactions = [1, 5, 10]\n",
    )
    .unwrap();
    let manifest = dir.path().join("manifest.json");
    let o = reprobench(&["grid", "--spec", p(&spec), "--output", p(&manifest)]);
    assert!(o.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    let protocols = m["protocols"].as_array().unwrap();
    assert_eq!(protocols.len(), 6);
    assert_eq!(protocols[1]["protocol"]["min_user_interactions"], 5);
    assert_eq!(protocols[5]["id"], "p0005");
}

#[test]
fn robustness_from_vectors() {
    let dir = TempDir::new().unwrap();
    let v = dir.path().join("vectors.csv");
    fs::write(&v, "protocol,a,b,c\np1,1,2,3\np2,1,2,3\np3,2,1,3\n").unwrap();
    let o = reprobench(&["robustness", "--vectors", p(&v), "--metric", "ndcg@10"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row = out.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[1], "ndcg@10");
    assert_eq!(fields[2].parse::<f64>().unwrap(), 0.5);
}

#[test]
fn run_report_and_select() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path());
    let cfg = write_config(
        dir.path(),
        &data,
        "min_user_interactions = [2, 10]\nsession_gap = [\"none\", 3600]\nrating_threshold = [0.0, 9.0]",
    );
    let out = dir.path().join("out");
    let o = reprobench(&[
        "run",
        "--config",
        p(&cfg),
        "--output-dir",
        p(&out),
        "--parallelism",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = out.join("results.json");
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&results).unwrap()).unwrap();
    let protocols = r["protocols"].as_array().unwrap();
    assert_eq!(protocols.len(), 8);
    // the 9.0 threshold removes everything; those runs are recorded, not fatal
    let skipped: Vec<_> = protocols
        .iter()
        .filter(|p| p["status"] == "skipped")
        .collect();
    assert_eq!(skipped.len(), 4);
    assert!(skipped[0]["reason"]
        .as_str()
        .unwrap()
        .contains("eliminates all interactions"));

    let again = dir.path().join("again");
    let o = reprobench(&[
        "run",
        "--config",
        p(&cfg),
        "--output-dir",
        p(&again),
        "--parallelism",
        "1",
    ]);
    assert!(o.status.success());
    assert_eq!(
        fs::read(&results).unwrap(),
        fs::read(again.join("results.json")).unwrap()
    );

    let report = dir.path().join("report");
    let o = reprobench(&[
        "report",
        "--results",
        p(&results),
        "--output-dir",
        p(&report),
        "--method",
        "pca",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "robustness.csv",
        "robustness.svg",
        "scores.csv",
        "flips.csv",
        "embedding.csv",
        "embedding.svg",
    ] {
        assert!(report.join(f).exists(), "{f} missing");
    }
    let rob = fs::read_to_string(report.join("robustness.csv")).unwrap();
    assert!(rob.lines().last().unwrap().contains(",mean,"));

    let o = reprobench(&[
        "select",
        "--pool",
        p(&results),
        "--target",
        p(&results),
        "--target-protocol",
        "p0001",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "p0001,0");

    let o = reprobench(&["embed", "--results", p(&results), "--method", "tsne"]);
    assert!(
        !o.status.success(),
        "t-SNE needs five points, the run has four"
    );
    let o = reprobench(&["embed", "--results", p(&results)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 5);

    let o = reprobench(&["signature", "--results", p(&results), "--protocol", "p0000"]);
    let sigs: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(sigs[0]["signature"]["values"].as_array().unwrap().len(), 9);
}

#[test]
fn exit_codes() {
    assert_eq!(reprobench(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(reprobench(&[]).status.code(), Some(1));

    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.data");
    let o = reprobench(&[
        "ingest",
        "--format",
        "ml-100k",
        "--input",
        p(&missing),
        "--output",
        "x.csv",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let data = synth(dir.path());
    let cfg = write_config(dir.path(), &data, "rating_threshold = [9.0]");
    let o = reprobench(&[
        "run",
        "--config",
        p(&cfg),
        "--output-dir",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(3));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "metrics = []\n").unwrap();
    assert_eq!(
        reprobench(&["run", "--config", p(&bad)]).status.code(),
        Some(1)
    );
}

#[test]
fn ingest_round_trip() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("u.data");
    fs::write(
        &raw,
        "196\t242\t3\t881250949\n186\t302\t3\t891717742\n196\t377\t1\t878887116\n",
    )
    .unwrap();
    let out = dir.path().join("canonical.csv");
    let o = reprobench(&[
        "ingest",
        "--format",
        "ml-100k",
        "--input",
        p(&raw),
        "--output",
        p(&out),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("2 users, 3 items, 3 interactions"));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "user_id,item_id,rating,timestamp"
    );
    assert_eq!(text.lines().count(), 4);
}
