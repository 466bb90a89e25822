use std::path::Path;

use iscap::harness::{
    aggregate, emit_csv, emit_plot, parse_csv, parse_seed_csv, run_sweep, seed_path, strip_timing, Axis, PlotKind,
    SweepResult, SweepSpec,
};
use iscap::Mode;

fn small_spec(axis: Axis, values: Vec<f64>, seeds: usize, modes: Vec<Mode>) -> SweepSpec {
    let mut spec = SweepSpec::new(axis, values);
    spec.n_seeds = seeds;
    spec.modes = modes;
    spec.fixed.insert("n_tx".into(), toml::Value::Integer(2));
    spec.fixed.insert("n_users".into(), toml::Value::Integer(2));
    spec.fixed.insert("n_ers".into(), toml::Value::Integer(1));
    spec.fixed.insert("eh_threshold".into(), toml::Value::Array(vec![toml::Value::Float(0.001)]));
    spec.fixed.insert("max_outer".into(), toml::Value::Integer(3));
    spec.fixed.remove(axis.as_str());
    spec
}

fn svg_doc(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn count_series(text: &str, metric: Option<&str>) -> usize {
    let doc = roxmltree::Document::parse(text).expect("well-formed SVG");
    doc.descendants()
        .filter(|n| n.has_tag_name("g") && n.attribute("class") == Some("series"))
        .filter(|n| metric.is_none_or(|m| n.attribute("data-metric") == Some(m)))
        .count()
}

#[test]
fn degenerate_sweep_has_one_aggregate() {
    let spec = SweepSpec { fixed: toml::Table::new(), ..small_spec(Axis::NTx, vec![2.0], 1, vec![Mode::Rsma]) };
    let result = run_sweep(&spec, Some(1)).unwrap();
    assert_eq!(result.rows.len(), 1);
    assert_eq!(result.aggregates.len(), 1);
    assert_eq!(result.aggregates[0].n_runs, 1);
}

#[test]
fn rows_are_ordered_and_aggregates_recompute() {
    let spec = small_spec(Axis::SnrDb, vec![15.0, 25.0], 3, vec![Mode::Rsma, Mode::Sdma]);
    let result = run_sweep(&spec, Some(2)).unwrap();
    let keys: Vec<(f64, u64, Mode)> = result.rows.iter().map(|r| (r.value, r.seed, r.mode)).collect();
    let mut expected = Vec::new();
    for v in [15.0, 25.0] {
        for s in 0..3 {
            for m in [Mode::Rsma, Mode::Sdma] {
                expected.push((v, s, m));
            }
        }
    }
    assert_eq!(keys, expected);
    assert_eq!(result.aggregates.len(), 4);
    for a in &result.aggregates {
        let ok: Vec<f64> = result
            .rows
            .iter()
            .filter(|r| r.value == a.value && r.mode == a.mode && r.is_ok())
            .map(|r| r.mmf_rate)
            .collect();
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;
        assert!((mean - a.mmf_rate_mean).abs() <= 1e-12 * mean.abs().max(1.0));
    }
    assert_eq!(aggregate(&result.rows), result.aggregates);
}

#[test]
fn failed_cells_are_recorded_not_fatal() {
    // one transmit and one receive antenna leave the angle unidentifiable
    let mut spec = small_spec(Axis::SnrDb, vec![20.0], 2, vec![Mode::Rsma]);
    spec.fixed.insert("n_tx".into(), toml::Value::Integer(1));
    spec.fixed.insert("n_rx".into(), toml::Value::Integer(1));
    let result = run_sweep(&spec, Some(1)).unwrap();
    assert!(result.rows.iter().all(|r| r.status == "singular_fim"), "{:?}", result.rows);
    assert!(result.rows[0].message.contains("singular"));
    assert_eq!(result.aggregates[0].n_failed, 2);
    assert!(result.aggregates[0].mmf_rate_mean.is_nan());
}

#[test]
fn csv_round_trip_and_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(Axis::EhThreshold, vec![0.0005, 0.001, 0.0015, 0.002], 2, vec![Mode::Rsma, Mode::Sdma]);
    let result = run_sweep(&spec, None).unwrap();
    let path = dir.path().join("summary.csv");
    emit_csv(&result, &path).unwrap();
    let back = parse_csv(&path).unwrap();
    assert_eq!(back.len(), 8);
    for (a, b) in back.iter().zip(&result.aggregates) {
        assert_eq!((a.axis, a.mode, a.n_runs, a.n_converged), (b.axis, b.mode, b.n_runs, b.n_converged));
        for (x, y) in [(a.value, b.value), (a.mmf_rate_mean, b.mmf_rate_mean), (a.crb_mean, b.crb_mean), (a.objective_se, b.objective_se)] {
            assert!((x - y).abs() <= 1e-11 * y.abs(), "{x} vs {y}");
        }
    }
    let seeds = parse_seed_csv(&seed_path(&path)).unwrap();
    assert_eq!(seeds.len(), 16);
    // emitting what was parsed reproduces the bytes
    let again = SweepResult { axis: result.axis, rows: seeds, aggregates: back };
    let path2 = dir.path().join("again.csv");
    emit_csv(&again, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    assert_eq!(std::fs::read(seed_path(&path)).unwrap(), std::fs::read(seed_path(&path2)).unwrap());
}

#[test]
fn empty_modes_give_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(Axis::SnrDb, vec![20.0], 1, vec![]);
    let result = run_sweep(&spec, Some(1)).unwrap();
    let path = dir.path().join("s.csv");
    emit_csv(&result, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("axis,value,mode,"));
}

#[test]
fn sweeps_are_reproducible_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(Axis::SnrDb, vec![20.0, 25.0], 2, vec![Mode::Rsma, Mode::Sdma]);
    let mut texts = Vec::new();
    for (i, jobs) in [Some(1), Some(3)].into_iter().enumerate() {
        let path = dir.path().join(format!("run{i}.csv"));
        emit_csv(&run_sweep(&spec, jobs).unwrap(), &path).unwrap();
        texts.push((std::fs::read_to_string(&path).unwrap(), std::fs::read_to_string(seed_path(&path)).unwrap()));
    }
    assert_eq!(strip_timing(&texts[0].0).unwrap(), strip_timing(&texts[1].0).unwrap());
    assert_eq!(strip_timing(&texts[0].1).unwrap(), strip_timing(&texts[1].1).unwrap());
}

#[test]
fn plots_are_well_formed_with_expected_series() {
    let dir = tempfile::tempdir().unwrap();
    let single = run_sweep(&small_spec(Axis::SnrDb, vec![20.0], 1, vec![Mode::Rsma]), Some(1)).unwrap();
    let p = dir.path().join("single.svg");
    emit_plot(&single.aggregates, PlotKind::Objective, &p).unwrap();
    let text = svg_doc(&p);
    assert_eq!(count_series(&text, None), 1);
    assert_eq!(text.matches("class=\"marker\"").count(), 1);

    let four = run_sweep(&small_spec(Axis::EhThreshold, vec![0.0005, 0.001, 0.0015, 0.002], 1, vec![Mode::Rsma, Mode::Sdma]), None)
        .unwrap();
    let p = dir.path().join("dual.svg");
    emit_plot(&four.aggregates, PlotKind::RateAndCrb, &p).unwrap();
    let text = svg_doc(&p);
    assert_eq!(count_series(&text, Some("mmf_rate")), 2);
    assert_eq!(count_series(&text, Some("crb")), 2);
    assert!(text.contains("EH threshold (mW)"));
    assert!(text.contains("class=\"axis y-right\""));
    for kind in [PlotKind::Objective, PlotKind::Time] {
        let p = dir.path().join(format!("{}.svg", kind.as_str()));
        emit_plot(&four.aggregates, kind, &p).unwrap();
        assert_eq!(count_series(&svg_doc(&p), None), 2);
    }
    assert!(emit_plot(&[], PlotKind::Time, &dir.path().join("none.svg")).is_err());
}

#[test]
fn unwritable_paths_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let result = SweepResult { axis: Axis::SnrDb, rows: vec![], aggregates: vec![] };
    let err = emit_csv(&result, &blocker.join("sub").join("s.csv")).unwrap_err();
    assert_eq!(err.kind(), "io");
    assert!(err.to_string().contains("file"));
}
