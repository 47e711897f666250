use reprobench::algos::{fit, AlgoKind, AlgoSpec};
use reprobench::ingest::{Interaction, RatingScale, RawDataset};
use reprobench::metrics::{evaluate_all, MetricFamily, MetricId};
use reprobench::protocol::{
    build_pdataset, Event, Limit, OutputStrategy, PDataset, Protocol, Session, SessionGap,
    SplitStrategy, TestPair,
};

fn traced_dataset() -> RawDataset {
    #[rustfmt::skip]
    let rows: [(u32, u32, f64, i64); 30] = [
        (1, 10, 5.0, 100), (1, 11, 4.0, 200), (1, 12, 2.0, 300), (1, 13, 4.0, 5000), (1, 14, 5.0, 5100),
        (2, 10, 3.0, 150), (2, 13, 4.0, 250), (2, 15, 5.0, 260),
        (3, 16, 5.0, 400), (3, 11, 4.0, 410),
        (4, 10, 4.0, 1000), (4, 11, 4.0, 1010), (4, 12, 5.0, 1020), (4, 13, 5.0, 2500), (4, 14, 4.0, 2510),
        (5, 12, 4.0, 2000), (5, 14, 3.0, 2050), (5, 11, 1.0, 2060), (5, 10, 5.0, 9000), (5, 13, 4.0, 9050),
        (6, 10, 4.0, 3000), (6, 12, 4.0, 3100), (6, 13, 4.0, 7000), (6, 11, 5.0, 7100),
        (7, 14, 5.0, 4000), (7, 10, 4.0, 4500),
        (8, 11, 3.0, 6000), (8, 12, 4.0, 6001), (8, 13, 3.0, 8000), (8, 14, 4.0, 8001),
    ];
    let its = rows
        .iter()
        .map(|&(u, i, r, t)| Interaction::new(u, i, r, t))
        .collect();
    RawDataset::new("trace", RatingScale::HALF_STARS, its).unwrap()
}

fn dense_items(s: &Session) -> Vec<u32> {
    s.items().collect()
}

#[test]
fn thirty_interaction_trace() {
    let p = Protocol {
        rating_threshold: 3.0,
        min_user_interactions: 2,
        min_item_interactions: 2,
        kcore_iterate: true,
        max_interactions_per_user: Limit::At(4),
        max_users: Limit::Unlimited,
        session_gap: SessionGap::Seconds(1000),
        n_output_items: 1,
        output_strategy: OutputStrategy::LastN,
        test_fraction: 0.85,
        split_strategy: SplitStrategy::TemporalGlobal,
        seed: 0,
    };
    let d = build_pdataset(&traced_dataset(), &p).unwrap();

    // 12 and 15/16 drop out (rating, then single-use items), user 3 falls
    // below two interactions, user 4 loses its oldest event to the cap
    assert_eq!(d.item_ids, vec![10, 11, 12, 13, 14]);

    let train: Vec<(u32, Vec<u32>)> = d
        .train_sessions
        .iter()
        .map(|s| (s.user_id, dense_items(s)))
        .collect();
    assert_eq!(train, vec![(1, vec![0, 1]), (2, vec![0, 3])]);

    let test: Vec<(u32, Vec<u32>, Vec<u32>)> = d
        .test_pairs
        .iter()
        .map(|tp| (tp.input.user_id, dense_items(&tp.input), tp.output.clone()))
        .collect();
    let expected = vec![
        (1, vec![3], vec![4]),
        (4, vec![1], vec![2]),
        (4, vec![3], vec![4]),
        (5, vec![2], vec![4]),
        (5, vec![0], vec![3]),
        (6, vec![0], vec![2]),
        (6, vec![3], vec![1]),
        (7, vec![4], vec![0]),
        (8, vec![1], vec![2]),
        (8, vec![3], vec![4]),
    ];
    assert_eq!(test, expected);
}

fn session(user: u32, items: &[u32]) -> Session {
    Session {
        user_id: user,
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
fn best_of_table_on_five_pairs() {
    let pairs = [
        (vec![3], vec![0]),
        (vec![0], vec![1, 2]),
        (vec![1], vec![4]),
        (vec![4], vec![0, 3]),
        (vec![0, 1], vec![2]),
    ];
    let d = PDataset {
        source_id: "toy".into(),
        protocol: Protocol::default(),
        item_ids: (0..5).collect(),
        train_sessions: vec![
            session(1, &[0, 1, 2]),
            session(2, &[0, 1]),
            session(3, &[0]),
        ],
        test_pairs: pairs
            .iter()
            .enumerate()
            .map(|(u, (input, output))| TestPair {
                input: session(10 + u as u32, input),
                output: output.clone(),
            })
            .collect(),
    };
    let model = fit(
        &AlgoSpec::with_defaults(AlgoKind::BestOf, 0),
        d.train_view(),
    )
    .unwrap();
    let p2 = MetricId::new(MetricFamily::Precision, 2);
    let r2 = MetricId::new(MetricFamily::Recall, 2);
    let m2 = MetricId::new(MetricFamily::Mrr, 2);
    let t = evaluate_all(&d, &[model], &[p2, r2, m2], 100, 1).unwrap();
    assert_eq!(t.n_test_pairs, 5);
    assert!((t.mean(p2, "best_of").unwrap() - 0.5).abs() < 1e-12);
    assert!((t.mean(r2, "best_of").unwrap() - 0.7).abs() < 1e-12);
    assert!((t.mean(m2, "best_of").unwrap() - 0.8).abs() < 1e-12);
    assert!(t.entries.iter().all(|e| e.std > 0.0));
}

#[test]
fn single_protocol_single_algorithm_run() {
    use reprobench::experiment::{run_on_dataset, RunConfig};
    use reprobench::synth::{generate_synthetic, SynthSpec};

    let raw = generate_synthetic(&SynthSpec {
        n_users: 150,
        n_items: 60,
        seed: 2,
        ..SynthSpec::default()
    })
    .unwrap();
    let cfg = RunConfig::from_toml(
        r#"
        metrics = ["recall@10"]
        n_boot = 10
        [dataset]
        path = "unused.csv"
        format = "canonical"
        [[algorithms]]
        kind = "best_of"
        "#,
    )
    .unwrap();
    let res = run_on_dataset(&cfg, &raw).unwrap();
    assert_eq!(res.protocols.len(), 1);
    let (id, table) = res.successful().next().unwrap();
    assert_eq!(id, "p0000");
    assert_eq!(table.entries.len(), 1);
    assert_eq!(res.to_json(), run_on_dataset(&cfg, &raw).unwrap().to_json());
}
