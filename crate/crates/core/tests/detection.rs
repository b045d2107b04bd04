use shrinkdetect::detectors::DetectorSpec;
use shrinkdetect::estimators::EstimatorRule;
use shrinkdetect::models::{MeanVector, ModelSpec};
use shrinkdetect::montecarlo::{calibrate_threshold, estimate_arl, run_lengths, CalibrationOptions, Scenario};

fn known_sr() -> DetectorSpec {
    DetectorSpec::KnownSr { mu: vec![1.0; 3].into() }
}

#[test]
fn known_sr_null_arl_at_least_threshold() {
    let model = ModelSpec::gaussian(3);
    let b = 100.0;
    let est = estimate_arl(&known_sr(), &model, b, 2000, 41, 200 * b as u64).unwrap();
    assert_eq!(est.censored_fraction, 0.0, "{est}");
    assert!(est.mean - 3.0 * est.std_error >= b, "{est}");
}

#[test]
fn known_sr_calibrated_threshold_below_target() {
    let model = ModelSpec::gaussian(3);
    let res = calibrate_threshold(&known_sr(), &model, &CalibrationOptions::new(100.0, 1000, 42)).unwrap();
    assert!(res.converged);
    assert!(res.threshold_b <= 100.0, "B = {}", res.threshold_b);
    assert!((res.achieved_arl.mean - 100.0).abs() <= 1.0, "{}", res.achieved_arl);
}

fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[test]
fn strong_shrinkage_reduces_delay_spread() {
    // weak, nearly equal post-change shift close to the shrinkage target
    let model = ModelSpec::gaussian(3);
    let mu: MeanVector = vec![0.41, 0.39, 0.34].into();
    let scenario = Scenario::immediate(model, mu, 10_000);
    let spread = |c: f64| {
        let spec = DetectorSpec::srrs(EstimatorRule::linear(c, vec![0.25; 3]));
        let runs = run_lengths(&spec, 200.0, &scenario, 400, 43).unwrap();
        assert!(runs.iter().all(|r| !r.censored));
        sd(&runs.iter().map(|r| r.length as f64).collect::<Vec<_>>())
    };
    let (tight, mle) = (spread(0.1), spread(1.0));
    assert!(tight <= mle, "sd at c=0.1 {tight} vs c=1 {mle}");
}
