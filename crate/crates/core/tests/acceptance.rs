//! Acceptance suite: one verdict line per criterion, nonzero exit on failure.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use shrinkdetect::detectors::{srrs_stat_bruteforce, Detector, DetectorSpec, SrrsState};
use shrinkdetect::estimators::EstimatorRule;
use shrinkdetect::models::{nu_overshoot, oracle_c_theoretical, threshold_moments_gaussian, MeanVector, ModelSpec};
use shrinkdetect::montecarlo::{
    calibrate_threshold, estimate_arl, q_measure_trajectory, replication_rng, run_lengths, shrinkage_coefficients,
    CalibrationOptions, Scenario,
};
use shrinkdetect::report::{compare_cell, reference_table, ExperimentReport, TableId, DEFAULT_REL_TOL};
use shrinkdetect::reproduce::{plan, Scale};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

type Outcome = Result<Verdict, String>;

fn cells(v: &[(&str, &str)]) -> Vec<(String, String)> {
    v.iter().map(|(r, c)| (r.to_string(), c.to_string())).collect()
}

/// Band checks of simulated cells against the published table.
fn band_checks(report: &ExperimentReport, table: TableId, which: &[(&str, &str)], k_se: f64) -> (bool, Vec<String>) {
    let reference = reference_table(table);
    let mut ok = true;
    let mut parts = Vec::new();
    for (row, col) in which {
        let sim = report.cell(row, col).expect("cell simulated").estimate;
        let r = reference.cell(row, col).expect("reference cell");
        let (pass, band) = compare_cell(&sim, r, k_se, DEFAULT_REL_TOL);
        ok &= pass;
        let refs = match r.se {
            Some(se) => format!("{:.2}±{:.2}", r.mean, se),
            None => format!("{:.1}", r.mean),
        };
        parts.push(format!(
            "{row}@{col} {:.2}±{:.2} vs {refs} (band {:.2}) {}",
            sim.mean,
            sim.std_error,
            band,
            if pass { "ok" } else { "OUT" }
        ));
    }
    (ok, parts)
}

fn mean_of(report: &ExperimentReport, row: &str, col: &str) -> f64 {
    report.cell(row, col).expect("cell simulated").estimate.mean
}

fn c1_nu() -> Outcome {
    let t = Instant::now();
    let v = nu_overshoot(3f64.sqrt() * 0.25).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed().as_secs_f64();
    Ok(verdict(
        (0.775..=0.785).contains(&v) && elapsed < 1.0,
        format!("nu(sqrt(3)*0.25) = {v:.5} in [0.775, 0.785], {elapsed:.3}s"),
    ))
}

fn c2_calibration_ratio() -> Outcome {
    let spec = DetectorSpec::srrs(EstimatorRule::linear(0.5, [0.25; 3]));
    let opts = CalibrationOptions::new(500.0, 500, 2024);
    let r = calibrate_threshold(&spec, &ModelSpec::gaussian(3), &opts).map_err(|e| e.to_string())?;
    let ratio = r.threshold_b / 500.0;
    Ok(verdict(
        (0.70..=0.82).contains(&ratio),
        format!("B = {:.1}, B/A = {ratio:.3} in [0.70, 0.82], achieved ARL {}", r.threshold_b, r.achieved_arl),
    ))
}

fn c3_table1() -> Outcome {
    let which = [("c=1", "(1,1,1)"), ("c=0.5", "(0.41,0.39,0.34)"), ("js", "(1,1,1)")];
    let report = plan(TableId::T1, Scale::Desk).run_cells(11, &cells(&which)).map_err(|e| e.to_string())?;
    let (ok, parts) = band_checks(&report, TableId::T1, &which, 3.0);
    Ok(verdict(ok, parts.join("; ")))
}

fn c4_table2() -> Outcome {
    let cols = ["(0.75,0,0)", "(0.5,0,0)"];
    let mut which = Vec::new();
    for row in ["baseline", "soft", "hard"] {
        for col in cols {
            which.push((row, col));
        }
    }
    let report = plan(TableId::T2, Scale::Desk).run_cells(12, &cells(&which)).map_err(|e| e.to_string())?;
    let (mut ok, mut parts) =
        band_checks(&report, TableId::T2, &[("hard", "(0.5,0,0)"), ("baseline", "(0.5,0,0)")], 3.0);
    for col in cols {
        let (h, s, b) = (mean_of(&report, "hard", col), mean_of(&report, "soft", col), mean_of(&report, "baseline", col));
        let ordered = h < s && s < b;
        ok &= ordered;
        parts.push(format!("order@{col} hard {h:.2} < soft {s:.2} < baseline {b:.2} {}", if ordered { "ok" } else { "OUT" }));
    }
    Ok(verdict(ok, parts.join("; ")))
}

fn c5_table3() -> Outcome {
    let which = [("baseline", "(4,4,4)"), ("c=0.5", "(1.5,1.5,1.25)")];
    let report = plan(TableId::T3, Scale::Desk).run_cells(13, &cells(&which)).map_err(|e| e.to_string())?;
    let (ok, parts) = band_checks(&report, TableId::T3, &which, 3.0);
    Ok(verdict(ok, parts.join("; ")))
}

fn c6_table4() -> Outcome {
    let which = [("hard", "(1.5,1,1)"), ("baseline", "(1.5,1,1)")];
    let report = plan(TableId::T4, Scale::Desk).run_cells(14, &cells(&which)).map_err(|e| e.to_string())?;
    let (mut ok, mut parts) = band_checks(&report, TableId::T4, &which, 3.0);
    let (h, b) = (mean_of(&report, "hard", "(1.5,1,1)"), mean_of(&report, "baseline", "(1.5,1,1)"));
    ok &= h < b;
    parts.push(format!("hard {h:.2} < baseline {b:.2} {}", if h < b { "ok" } else { "OUT" }));
    Ok(verdict(ok, parts.join("; ")))
}

fn c7_table5() -> Outcome {
    let which = [("T_B", "mu1=1,r=20"), ("MAX", "mu1=0.5,r=5")];
    let report = plan(TableId::T5, Scale::Desk).run_cells(15, &cells(&which)).map_err(|e| e.to_string())?;
    let (ok, parts) = band_checks(&report, TableId::T5, &which, 3.0);
    Ok(verdict(ok, format!("{} (relative tolerance 10%, 250 reps)", parts.join("; "))))
}

fn c8_arl_lower_bound() -> Outcome {
    let g = ModelSpec::gaussian(3);
    let mut ok = true;
    let mut parts = Vec::new();
    for (c, label) in [(1.0, "c=1"), (0.5, "c=0.5")] {
        let spec = DetectorSpec::srrs(EstimatorRule::linear(c, [0.25; 3]));
        for (b, reps) in [(50.0, 10_000u64), (200.0, 2_000)] {
            let est = estimate_arl(&spec, &g, b, reps, 8 + b as u64, (20.0 * b) as u64).map_err(|e| e.to_string())?;
            let pass = est.mean >= b - 2.0 * est.std_error;
            ok &= pass;
            parts.push(format!("{label} B={b}: ARL {est} {}", if pass { "ok" } else { "OUT" }));
        }
    }
    Ok(verdict(ok, parts.join("; ")))
}

fn c9_sprt_type_one() -> Outcome {
    let g = ModelSpec::gaussian(3);
    let spec = DetectorSpec::Sprt { estimator: EstimatorRule::linear(0.5, [0.25; 3]) };
    let n = 10_000u64;
    let mut ok = true;
    let mut parts = Vec::new();
    for b in [2.0f64, 3.0, 4.0] {
        let runs = run_lengths(&spec, b, &Scenario::null(g, 100_000), n, 90 + b as u64).map_err(|e| e.to_string())?;
        let frac = runs.iter().filter(|r| !r.censored).count() as f64 / n as f64;
        let se = (frac * (1.0 - frac) / n as f64).sqrt();
        let bound = (-b).exp();
        let pass = frac <= bound + 3.0 * se;
        ok &= pass;
        parts.push(format!("b={b}: {frac:.4} <= {bound:.4} + 3*{se:.4} {}", if pass { "ok" } else { "OUT" }));
    }
    Ok(verdict(ok, parts.join("; ")))
}

fn c10_bruteforce() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    let mut instances = 0;
    let mut covered = std::collections::BTreeSet::new();
    for i in 0..50 {
        let poisson = i % 2 == 1;
        let p = 3 + rng.gen_range(0..4);
        let n = 8 + rng.gen_range(0..25);
        let (model, base) =
            if poisson { (ModelSpec::poisson(1.0, p).map_err(|e| e.to_string())?, 1.25) } else { (ModelSpec::gaussian(p), 0.25) };
        let omega: Vec<f64> = (0..p).map(|_| base + rng.gen_range(0.0..0.25)).collect();
        let rule = match (i / 2) % 6 {
            0 => EstimatorRule::Mle,
            1 => EstimatorRule::linear(rng.gen_range(0.0..1.0), omega.clone()),
            2 => EstimatorRule::js(omega.clone()),
            3 => EstimatorRule::hard(omega.clone()),
            4 => EstimatorRule::soft(omega.clone()),
            _ => EstimatorRule::AffineThreshold {
                omega: omega.clone().into(),
                a: MeanVector((0..p).map(|_| rng.gen_range(0.0..0.3)).collect()),
                b: rng.gen_range(0.5..1.2),
                c0: model.mu0,
            },
        };
        let shift = rng.gen_range(0.0..0.8);
        let data: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..p)
                    .map(|_| {
                        if poisson {
                            Poisson::new(1.0 + shift).expect("positive rate").sample(&mut rng)
                        } else {
                            shift + rng.sample::<f64, _>(StandardNormal)
                        }
                    })
                    .collect()
            })
            .collect();
        let brute = srrs_stat_bruteforce(&data, &rule, &model).map_err(|e| e.to_string())?;
        let mut det = SrrsState::new(model, rule.clone(), f64::MAX).map_err(|e| e.to_string())?;
        for (x, b) in data.iter().zip(&brute) {
            let got = det.step(x).map_err(|e| e.to_string())?.statistic.exp();
            worst = worst.max((got - b).abs() / b.abs());
        }
        covered.insert(format!("{}/{}", rule.name(), if poisson { "poisson" } else { "gaussian" }));
        instances += 1;
    }
    Ok(verdict(
        worst <= 1e-10 && covered.len() == 12,
        format!("{instances} instances, {} rule/model pairs, worst relative error {worst:.2e}", covered.len()),
    ))
}

fn c11_martingale() -> Outcome {
    let g = ModelSpec::gaussian(3);
    let reps = 100_000u64;
    let mut ok = true;
    let mut parts = Vec::new();
    for rule in [EstimatorRule::Mle, EstimatorRule::linear(0.5, [0.25; 3])] {
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for i in 0..reps {
            let mut rng = replication_rng(11, i);
            let mut det = SrrsState::new(g, rule.clone(), f64::MAX).map_err(|e| e.to_string())?;
            let mut last = 0.0;
            for _ in 0..10 {
                let x: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                last = det.step(&x).map_err(|e| e.to_string())?.statistic;
            }
            let v = last.exp();
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / reps as f64;
        let se = ((sum_sq / reps as f64 - mean * mean) * reps as f64 / (reps - 1) as f64 / reps as f64).sqrt();
        let pass = (mean - 10.0).abs() <= 4.0 * se;
        ok &= pass;
        parts.push(format!("{}: {mean:.3} ± {se:.3} {}", rule.name(), if pass { "ok" } else { "OUT" }));
    }
    Ok(verdict(ok, parts.join("; ")))
}

fn c12_q_measure() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();

    let mut close = 0;
    for seed in 0..100 {
        let t = q_measure_trajectory(0.5, 1.0, 100_000, seed).map_err(|e| e.to_string())?;
        if (t.last().expect("nonempty") - 1.0).abs() < 0.05 {
            close += 1;
        }
    }
    ok &= close >= 95;
    parts.push(format!("{close}/100 paths within 0.05 of omega"));

    for c in [0.3, 0.5, 0.9] {
        let s: Vec<f64> = [100u64, 1_000, 10_000]
            .iter()
            .map(|&n| shrinkage_coefficients(n, c).map(|r| r.sum_sq))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let dec = s[0] > s[1] && s[1] > s[2];
        ok &= dec;
        parts.push(format!("c={c} sum_sq {:.4e} > {:.4e} > {:.4e}", s[0], s[1], s[2]));
    }

    let n = 10_000u64;
    let terminal: Vec<f64> = (0..n)
        .map(|seed| q_measure_trajectory(1.0, 0.0, 1_000, 1_000_000 + seed).map(|t| *t.last().expect("nonempty")))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mean = terminal.iter().sum::<f64>() / n as f64;
    let var = terminal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let target = std::f64::consts::PI.powi(2) / 6.0;
    let pass = (var - target).abs() <= 0.05;
    ok &= pass;
    parts.push(format!("c=1 terminal variance {var:.4} vs pi^2/6 = {target:.4}"));
    Ok(verdict(ok, parts.join("; ")))
}

fn c13_threshold_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 1_000_000usize;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mu = rng.gen_range(-1.0..2.0);
        let omega = rng.gen_range(0.0..1.0);
        let sigma = rng.gen_range(0.2..1.5);
        let (m1, m2) = threshold_moments_gaussian(mu, omega, sigma).map_err(|e| e.to_string())?;
        let base = if mu >= omega { mu } else { 0.0 };
        let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let y = mu + sigma * rng.sample::<f64, _>(StandardNormal);
            let d = if y >= omega { y } else { 0.0 } - base;
            let d2 = d * d;
            s1 += d;
            s2 += d2;
            s3 += d2;
            s4 += d2 * d2;
        }
        let nf = n as f64;
        let (e1, e2) = (s1 / nf, s2 / nf);
        let se1 = ((s3 / nf - e1 * e1) / nf).sqrt();
        let se2 = ((s4 / nf - e2 * e2) / nf).sqrt();
        worst = worst.max((e1 - m1).abs() / se1).max((e2 - m2).abs() / se2);
    }
    Ok(verdict(worst <= 4.0, format!("20 triples, worst deviation {worst:.2} standard errors (limit 4)")))
}

fn c14_oracle_c() -> Outcome {
    let cols = [[0.41, 0.39, 0.34], [0.58, 0.53, 0.39], [0.65, 0.68, 0.79], [1.0, 1.0, 1.0]];
    let want = [0.14, 0.32, 0.51, 0.68];
    let mut ok = true;
    let mut got = Vec::new();
    for (mu, w) in cols.iter().zip(want) {
        let c = oracle_c_theoretical(mu, &[0.25; 3], 500.0).map_err(|e| e.to_string())?;
        ok &= (c - w).abs() <= 0.02 + 1e-12;
        got.push(format!("{c:.2} (want {w:.2})"));
    }
    Ok(verdict(ok, got.join(", ")))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 14] = [
        (1, "overshoot constant", c1_nu),
        (2, "calibration ratio", c2_calibration_ratio),
        (3, "table 1 spot cells", c3_table1),
        (4, "table 2 spot cells", c4_table2),
        (5, "table 3 spot cells", c5_table3),
        (6, "table 4 spot cells", c6_table4),
        (7, "table 5 at published thresholds", c7_table5),
        (8, "null ARL lower bound", c8_arl_lower_bound),
        (9, "SPRT false-alarm bound", c9_sprt_type_one),
        (10, "incremental vs brute force", c10_bruteforce),
        (11, "martingale mean", c11_martingale),
        (12, "plug-in measure convergence", c12_q_measure),
        (13, "thresholding moments", c13_threshold_moments),
        (14, "oracle shrinkage factors", c14_oracle_c),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match run() {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
