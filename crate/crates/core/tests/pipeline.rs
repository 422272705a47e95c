use lrma::experiment::{emit_series, parse_series, run_experiment, run_on_split, ExperimentConfig};
use lrma::synthetic::{locally_low_rank, BlendSpec};
use lrma::{LrmaError, ModelKind, SolverTag};

fn write(dir: &std::path::Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("r.tsv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn ten_entries_rank_one_single_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let text = "u1\ti1\t5\nu1\ti2\t3\nu2\ti1\t4\nu2\ti3\t1\nu3\ti2\t2\n\
                u3\ti3\t5\nu4\ti1\t3\nu4\ti4\t4\nu5\ti2\t1\nu5\ti4\t2\n";
    let mut cfg = ExperimentConfig::new(write(dir.path(), text));
    cfg.format = "tsv".parse().unwrap();
    cfg.ranks = vec![1];
    cfg.anchors = vec![1];
    let rows = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].kind, ModelKind::Global);
    assert_eq!(rows[0].q, 0);
    assert_eq!((rows[1].kind, rows[1].q), (ModelKind::Local, 1));

    let out = dir.path().join("s.csv");
    emit_series(&rows, &out).unwrap();
    let back = parse_series(std::fs::read(&out).unwrap().as_slice()).unwrap();
    assert_eq!(back, rows);

    cfg.anchors = vec![10];
    assert!(matches!(
        run_experiment(&cfg),
        Err(LrmaError::InsufficientEntries { .. })
    ));
}

#[test]
fn parse_errors_surface() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(write(dir.path(), "1::1::5\n1::oops\n"));
    cfg.ranks = vec![1];
    assert!(matches!(
        run_experiment(&cfg),
        Err(LrmaError::Parse { line: 2, .. })
    ));
}

#[test]
fn sweep_covers_every_rank_and_anchor_count() {
    let data = locally_low_rank(&BlendSpec {
        n_rows: 40,
        n_cols: 40,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let mut cfg = ExperimentConfig::new("unused");
    cfg.ranks = vec![1, 2];
    cfg.anchors = vec![2, 5];
    cfg.model.lambda = 0.1;
    let rows = run_on_split(&data.observed, &data.held_out, &cfg).unwrap();
    let keys: Vec<_> = rows.iter().map(|r| (r.kind, r.rank, r.q)).collect();
    assert_eq!(
        keys,
        vec![
            (ModelKind::Global, 1, 0),
            (ModelKind::Global, 2, 0),
            (ModelKind::Local, 1, 2),
            (ModelKind::Local, 1, 5),
            (ModelKind::Local, 2, 2),
            (ModelKind::Local, 2, 5),
        ]
    );
    for r in &rows {
        assert!(r.rmse.is_finite() && (0.0..=1.0).contains(&r.coverage));
    }
}

#[test]
fn nuclear_norm_solver_reports_solution_rank() {
    let data = locally_low_rank(&BlendSpec {
        n_rows: 24,
        n_cols: 24,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let mut cfg = ExperimentConfig::new("unused");
    cfg.ranks = vec![7];
    cfg.anchors = vec![2];
    cfg.model.solver = SolverTag::Svt;
    let rows = run_on_split(&data.observed, &data.held_out, &cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .all(|r| r.rank >= 1 && r.rank <= 24 && r.rmse.is_finite()));
}
