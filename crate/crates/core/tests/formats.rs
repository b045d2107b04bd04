use proptest::prelude::*;

use shrinkdetect::config::RunConfig;
use shrinkdetect::detectors::{decode_snapshot, encode_snapshot, Aggregate, Detector, DetectorSpec};
use shrinkdetect::estimators::EstimatorRule;
use shrinkdetect::models::ModelSpec;
use shrinkdetect::report::{emit_csv, parse_csv, read_csv, CalibratedRow, CellRow, FixedThresholdRow};

fn specs() -> Vec<DetectorSpec> {
    vec![
        DetectorSpec::srrs(EstimatorRule::Mle),
        DetectorSpec::srrs(EstimatorRule::linear(0.5, vec![0.25; 2])),
        DetectorSpec::srrs(EstimatorRule::hard(vec![0.25; 2])),
        DetectorSpec::Sprt { estimator: EstimatorRule::linear(0.3, vec![0.5; 2]) },
        DetectorSpec::KnownSr { mu: vec![1.0, 0.5].into() },
        DetectorSpec::Recursive { delta: 0.9, omega: vec![0.25; 2].into() },
        DetectorSpec::Cusum { mu1: vec![0.5; 2].into(), aggregate: Aggregate::Max },
        DetectorSpec::Cusum { mu1: vec![0.5; 2].into(), aggregate: Aggregate::Sum },
    ]
}

fn observations() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 0..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapshot_resumes_identically(k in 0usize..8, head in observations(), tail in observations()) {
        let model = ModelSpec::gaussian(2);
        let mut live = specs()[k].build(&model, 1e300).unwrap();
        for x in &head {
            live.step(x).unwrap();
        }
        let text = encode_snapshot(&live).unwrap();
        let mut restored = decode_snapshot(text.as_bytes()).unwrap();
        prop_assert_eq!(encode_snapshot(&restored).unwrap(), text);
        for x in &tail {
            let a = live.step(x).unwrap();
            let b = restored.step(x).unwrap();
            prop_assert_eq!(a.statistic.to_bits(), b.statistic.to_bits());
        }
        prop_assert_eq!(live.time(), restored.time());
    }

    #[test]
    fn snapshot_decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        if let Ok(mut d) = decode_snapshot(&bytes) {
            let p = d.model().p;
            let _ = d.step(&vec![0.5; p]);
        }
    }

    #[test]
    fn mutated_snapshot_never_panics(k in 0usize..8, head in observations(), pos in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let model = ModelSpec::gaussian(2);
        let mut d = specs()[k].build(&model, 50.0).unwrap();
        for x in &head {
            if d.step(x).unwrap().alarmed {
                break;
            }
        }
        let mut bytes = encode_snapshot(&d).unwrap().into_bytes();
        let i = pos.index(bytes.len());
        bytes[i] = byte;
        if let Ok(mut d) = decode_snapshot(&bytes) {
            let p = d.model().p;
            let _ = d.step(&vec![0.5; p]);
        }
    }

    #[test]
    fn csv_parse_never_panics(s in "\\PC{0,300}") {
        let _ = parse_csv::<CellRow>(s.as_bytes());
        let _ = parse_csv::<FixedThresholdRow>(s.as_bytes());
        let _ = parse_csv::<CalibratedRow>(s.as_bytes());
    }

    #[test]
    fn fixed_threshold_csv_round_trip(rows in prop::collection::vec((0.01f64..1.1, 1.0f64..1e4, 0.0f64..1e5, 0.0f64..1e3), 0..12)) {
        let rows: Vec<FixedThresholdRow> = rows
            .into_iter()
            .map(|(c, b, m, se)| FixedThresholdRow { c, b, arl_mean: m, arl_se: se, delay_mean: m / 10.0, delay_se: se / 10.0 })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixed.csv");
        emit_csv(&rows, &path).unwrap();
        let back: Vec<FixedThresholdRow> = read_csv(&path).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            // six significant digits on disk
            prop_assert!((a.b - b.b).abs() <= 1e-5 * b.b.abs().max(1e-300));
            prop_assert!((a.arl_mean - b.arl_mean).abs() <= 1e-5 * b.arl_mean.abs() + 1e-300);
        }
    }

    #[test]
    fn config_parse_never_panics(s in "[a-z_\\[\\]=\"0-9., \n]{0,300}") {
        let _ = RunConfig::from_toml_str(&s);
    }
}

#[test]
fn empty_csv_has_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit_csv::<CalibratedRow>(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "c,B_calibrated,achieved_arl,se\n");
    assert!(read_csv::<CalibratedRow>(&path).unwrap().is_empty());
}

#[test]
fn newer_snapshot_schema_rejected() {
    let d = DetectorSpec::srrs(EstimatorRule::Mle).build(&ModelSpec::gaussian(2), 10.0).unwrap();
    let text = encode_snapshot(&d).unwrap().replace("\"schema_version\":1", "\"schema_version\":2");
    assert!(decode_snapshot(text.as_bytes()).is_err());
}
