use gnnlab_bench::report::{
    emit_plot_data, format_report, format_runs, parse_plot_data, parse_report, parse_runs,
    write_atomic, RunRecord, REPORT_HEADER,
};
use gnnlab_bench::ReportRow;
use gnnlab_core::zoo::Variant;
use proptest::prelude::*;

fn row(variant: Variant, depth: usize, mean: f64) -> ReportRow {
    ReportRow { variant, depth, mean_acc: mean, std_acc: 0.01, runs: 10, seconds: 0.0 }
}

fn arb_row() -> impl Strategy<Value = ReportRow> {
    (0usize..8, 0usize..100, 0.0f64..=1.0, 0.0f64..0.5, 1usize..200, prop_oneof![Just(0.0), 0.0f64..1e4])
        .prop_map(|(v, depth, mean_acc, std_acc, runs, seconds)| ReportRow {
            variant: Variant::ALL[v],
            depth,
            mean_acc,
            std_acc,
            runs,
            seconds,
        })
}

#[test]
fn single_row_plot() {
    let text = emit_plot_data(&[row(Variant::Gcn, 4, 0.788)]).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, vec![format!("# {REPORT_HEADER}").as_str(), "gcn,4,0.788,0.01,10,0"]);
    assert!(emit_plot_data(&[]).is_err());
}

#[test]
fn plot_rows_sorted_with_blocks_per_variant() {
    let rows = vec![
        row(Variant::Gcn, 32, 0.6),
        row(Variant::CoGNet, 4, 0.84),
        row(Variant::Gcn, 4, 0.79),
        row(Variant::CoGNet, 32, 0.857),
    ];
    let text = emit_plot_data(&rows).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
    assert_eq!(
        data,
        vec!["cognet,4,0.84,0.01,10,0", "cognet,32,0.857,0.01,10,0", "gcn,4,0.79,0.01,10,0", "gcn,32,0.6,0.01,10,0"]
    );
    // Two blank lines separate gnuplot data blocks.
    assert!(text.contains("0\n\n\ngcn,4"));
}

#[test]
fn runs_round_trip() {
    let runs = vec![
        RunRecord { variant: Variant::Gat, depth: 2, run: 0, seed: u64::MAX, test_acc: 0.813, best_epoch: 41, best_val_acc: 0.79, epochs: 142 },
        RunRecord { variant: Variant::Gat, depth: 2, run: 1, seed: 7, test_acc: 1.0 / 3.0, best_epoch: 0, best_val_acc: 0.0, epochs: 1 },
    ];
    assert_eq!(parse_runs(&format_runs(&runs)).unwrap(), runs);
    assert!(parse_runs("variant\ngcn\n").is_err());
}

#[test]
fn atomic_write_replaces_without_leftovers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/report.csv");
    write_atomic(&path, "first\n").unwrap();
    write_atomic(&path, "second\n").unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "second\n");
    let entries: Vec<_> = std::fs::read_dir(path.parent().unwrap()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

proptest! {
    #[test]
    fn plot_data_round_trips(rows in prop::collection::vec(arb_row(), 1..12)) {
        let back = parse_plot_data(&emit_plot_data(&rows).unwrap()).unwrap();
        let mut expected = rows.clone();
        expected.sort_by(|a, b| (a.variant.name(), a.depth).cmp(&(b.variant.name(), b.depth)));
        prop_assert_eq!(back.len(), expected.len());
        // The sort is stable, so duplicate keys keep input order.
        prop_assert_eq!(back, expected);
    }

    #[test]
    fn report_round_trips(rows in prop::collection::vec(arb_row(), 0..12)) {
        let text = format_report(&rows);
        prop_assert!(text.starts_with(REPORT_HEADER));
        prop_assert_eq!(parse_report(&text).unwrap(), rows);
    }
}
