use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::Deserialize;
use spreadcast::core::deepar::{train, NetworkConfig};
use spreadcast::core::evaluation::QuantileForecasts;
use spreadcast::core::features::FeatureMatrix;
use spreadcast::core::gkg::{assign_trading_day, parse_gkg_instant, GcamValue, TradingCalendar};
use spreadcast::formats::{self, DatedTable, FeatureTable};
use spreadcast::gkg_io::{parse_gkg_text, read_gkg_file};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn day(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

#[derive(Debug, Deserialize)]
struct GoldenRecord {
    record_id: String,
    date: String,
    outlet: String,
    document_id: String,
    wb_themes: Vec<String>,
    gdelt_themes: Vec<String>,
    theme_mentions: Vec<(String, u64)>,
    locations: Vec<String>,
    persons: Vec<String>,
    organizations: Vec<String>,
    gcam: BTreeMap<String, f64>,
    word_count: u64,
}

#[test]
fn gkg_fixture_matches_golden_fields() {
    let parsed = read_gkg_file(&fixture("gkg_200.csv")).unwrap();
    assert!(parsed.errors.is_empty(), "{:?}", parsed.errors.first());
    let golden: Vec<GoldenRecord> =
        serde_json::from_str(&std::fs::read_to_string(fixture("gkg_200_expected.json")).unwrap()).unwrap();
    assert_eq!(parsed.records.len(), 200);
    assert_eq!(golden.len(), 200);
    for (p, g) in parsed.records.iter().zip(&golden) {
        assert!(p.warnings.is_empty(), "{}: {:?}", g.record_id, p.warnings);
        let r = &p.record;
        assert_eq!(r.record_id, g.record_id);
        assert_eq!(r.publish_instant, parse_gkg_instant(&g.date).unwrap());
        assert_eq!(r.outlet, g.outlet);
        assert_eq!(r.document_id, g.document_id);
        assert_eq!(r.wb_themes, g.wb_themes);
        assert_eq!(r.gdelt_themes, g.gdelt_themes);
        let mentions: Vec<(String, u64)> = r.theme_mentions.iter().map(|m| (m.code.clone(), m.offset)).collect();
        assert_eq!(mentions, g.theme_mentions);
        assert_eq!(r.locations, g.locations);
        assert_eq!(r.persons, g.persons);
        assert_eq!(r.organizations, g.organizations);
        assert_eq!(r.word_count, g.word_count);
        assert_eq!(r.gcam_counts.len(), g.gcam.len());
        for (code, v) in &r.gcam_counts {
            let want = g.gcam[code];
            match v {
                GcamValue::Count(c) => assert_eq!(*c as f64, want, "{code}"),
                GcamValue::Score(s) => assert!((s - want).abs() < 1e-12, "{code}"),
            }
        }
    }
}

#[test]
fn gkg_consumed_fields_round_trip() {
    let parsed = read_gkg_file(&fixture("gkg_200.csv")).unwrap();
    let text: String = parsed
        .records
        .iter()
        .map(|p| p.record.to_gkg_line() + "\n")
        .collect();
    let again = parse_gkg_text(&text);
    assert!(again.errors.is_empty());
    let before: Vec<_> = parsed.records.iter().map(|p| &p.record).collect();
    let after: Vec<_> = again.records.iter().map(|p| &p.record).collect();
    assert_eq!(before, after);
}

#[test]
fn gkg_zip_archive_reads_like_plain_text() {
    let dir = tempfile::tempdir().unwrap();
    let zip_path = dir.path().join("20190301000000.gkg.csv.zip");
    let text = std::fs::read(fixture("gkg_200.csv")).unwrap();
    {
        let f = std::fs::File::create(&zip_path).unwrap();
        let mut w = zip::ZipWriter::new(f);
        w.start_file("20190301000000.gkg.csv", zip::write::SimpleFileOptions::default())
            .unwrap();
        std::io::Write::write_all(&mut w, &text).unwrap();
        w.finish().unwrap();
    }
    let plain = read_gkg_file(&fixture("gkg_200.csv")).unwrap();
    let zipped = read_gkg_file(&zip_path).unwrap();
    assert_eq!(plain.records, zipped.records);
}

#[test]
fn malformed_lines_are_reported_with_line_numbers() {
    let good = std::fs::read_to_string(fixture("gkg_200.csv")).unwrap();
    let first = good.lines().next().unwrap();
    let text = format!("{first}\nonly\tthree\tcolumns\n\n{first}\n");
    let parsed = parse_gkg_text(&text);
    assert_eq!(parsed.records.len(), 2);
    assert_eq!(parsed.errors.len(), 1);
    assert_eq!(parsed.errors[0].0, 2);
}

#[test]
fn trading_day_table() {
    let cal = TradingCalendar::new(formats::read_calendar(&fixture("trading_calendar_apr2019.txt")).unwrap())
        .unwrap();
    let mut rdr = csv::Reader::from_path(fixture("trading_day_cases.csv")).unwrap();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let instant = parse_gkg_instant(&rec[0]).unwrap();
        let got = assign_trading_day(instant, &cal).ok();
        let want = (!rec[1].is_empty()).then(|| day(&rec[1]));
        assert_eq!(got, want, "{}", &rec[2]);
        n += 1;
    }
    assert_eq!(n, 19);
}

#[test]
fn dated_table_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let days = vec![day("2020-01-02"), day("2020-01-03"), day("2020-01-06")];
    let t = DatedTable::from_columns(
        days,
        vec![
            ("a".into(), vec![0.1, 1.0 / 3.0, -2.5e-17]),
            ("b".into(), vec![1e300, -0.0, 42.0]),
        ],
    )
    .unwrap();
    formats::write_dated_table(&path, &t).unwrap();
    assert_eq!(formats::read_dated_table(&path).unwrap(), t);
}

#[test]
fn feature_table_round_trip_keeps_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.csv");
    let days = vec![day("2020-01-02"), day("2020-01-03")];
    let matrix = FeatureMatrix::from_columns(
        days,
        vec![
            ("gcam:c2.168".into(), vec![Some(3.0), None]),
            ("org:european central bank".into(), vec![None, Some(1.5)]),
        ],
    )
    .unwrap();
    let t = FeatureTable {
        matrix,
        article_counts: vec![4, 0],
    };
    formats::write_feature_table(&path, &t).unwrap();
    assert!(formats::sidecar_path(&path).exists());
    assert_eq!(formats::read_feature_table(&path).unwrap(), t);
}

#[test]
fn feature_table_rejects_conflicting_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.csv");
    std::fs::write(&path, "trading_day,article_count,gcam:c1.1\n2020-01-02,3,5\n").unwrap();
    std::fs::write(
        formats::sidecar_path(&path),
        r#"{"gcam:c1.1": {"category": "org"}}"#,
    )
    .unwrap();
    assert!(formats::read_feature_table(&path).is_err());
}

#[test]
fn yields_round_trip() {
    let src = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic/yields.csv");
    let panel = formats::read_yields(&src).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("yields.csv");
    formats::write_yields(&path, &panel).unwrap();
    assert_eq!(formats::read_yields(&path).unwrap(), panel);
}

#[test]
fn checkpoint_restores_identical_predictions() {
    let n = 80;
    let y: Vec<f64> = (0..n).map(|t| (t as f64 * 0.3).sin() + 0.01 * t as f64).collect();
    let z: Vec<Vec<f64>> = (0..n).map(|t| vec![(t as f64 * 0.7).cos()]).collect();
    let cfg = NetworkConfig {
        num_layers: 2,
        hidden_size: 4,
        context_length: 10,
        epochs: 20,
        learning_rate: 0.01,
        seed: 3,
        ..NetworkConfig::default()
    };
    let model = train(&y, &z, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.json");
    let names = vec!["pca_1".to_string()];
    formats::write_checkpoint(&path, &model, &names).unwrap();
    let (restored, got_names) = formats::read_checkpoint(&path).unwrap();
    assert_eq!(got_names, names);
    assert_eq!(restored.network, model.network);
    let a = model.predict_next(&y, &z, &[0.2]).unwrap();
    let b = restored.predict_next(&y, &z, &[0.2]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn forecasts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("forecasts.csv");
    let f = QuantileForecasts {
        name: "GB-NoCov".into(),
        quantiles: vec![0.1, 0.5, 0.9],
        days: vec![day("2021-06-01"), day("2021-06-02")],
        values: vec![vec![-0.2, 0.0, 0.3], vec![-0.1, 0.05, 0.2]],
    };
    let actual = vec![0.01, -0.02];
    formats::write_forecasts(&path, &f, &actual).unwrap();
    let (back, got) = formats::read_forecasts(&path, "GB-NoCov").unwrap();
    assert_eq!(back, f);
    assert_eq!(got, actual);
}
