use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use shrinkdetect::config::RunConfig;
use shrinkdetect::detectors::DetectorSpec;
use shrinkdetect::error::Error;
use shrinkdetect::estimators::EstimatorRule;
use shrinkdetect::models::{nu_overshoot, oracle_c_point_estimation, oracle_c_theoretical};
use shrinkdetect::montecarlo::{
    calibrate_threshold, derive_seed, estimate_arl, estimate_delay, q_measure_trajectory, shrinkage_coefficients,
    CalibrationOptions, CalibrationResult,
};
use shrinkdetect::report::{
    compare_to_reference, emit_csv, emit_json, reference_table, write_report, CalibratedRow, CalibrationRecord,
    ExperimentReport, FixedThresholdRow, ReportCell,
};
use shrinkdetect::reproduce::plan;

use crate::{Cli, Command, RunArgs};

pub enum CliError {
    Validation(String),
    Runtime(String),
    Comparison(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Comparison(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) | CliError::Comparison(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::Toml(_)
            | Error::Domain(_)
            | Error::DimensionMismatch { .. }
            | Error::UnsupportedModel(_)
            | Error::RuleInapplicable(_)
            | Error::NoFeasibleFactor => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let out = cli.out_dir.clone();
    match cli.command {
        Command::Calibrate(args) => calibrate(&load(&args)?, out),
        Command::Arl(args) => arl(&load(&args)?, out),
        Command::Delay(args) => delay(&load(&args)?, out),
        Command::SweepC(args) => sweep_c(&load(&args)?, out),
        Command::Reproduce { table, scale, seed } => {
            let p = plan(table, scale);
            let report = p.run(seed)?;
            let comparison = compare_to_reference(&report, &reference_table(table), p.settings.k_se)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
            write_report(&report, &dir)?;
            emit_json(&comparison, &dir.join(format!("reproduce_{table}_{seed}_comparison.json")))?;
            for v in &comparison.verdicts {
                let reference = match v.reference.se {
                    Some(se) => format!("{:.2} ± {:.2}", v.reference.mean, se),
                    None => format!("{:.2}", v.reference.mean),
                };
                println!(
                    "{} {:<10} {:<18} sim {:>8.2} ± {:<6.2} ref {:<14} band {:.2}",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.row,
                    v.column,
                    v.simulated.mean,
                    v.simulated.std_error,
                    reference,
                    v.band
                );
            }
            let failed = comparison.failures();
            println!("{table}: {} of {} cells within band (k_se = {})", comparison.verdicts.len() - failed, comparison.verdicts.len(), comparison.k_se);
            if failed > 0 {
                return Err(CliError::Comparison(format!("{failed} cells outside their reference band")));
            }
            Ok(())
        }
        Command::OracleC { mu, omega, arl } => {
            let omega = if omega.len() == 1 { vec![omega[0]; mu.len()] } else { omega };
            let c = oracle_c_theoretical(&mu, &omega, arl)?;
            let point = oracle_c_point_estimation(&mu, &omega, 1.0)?;
            println!("oracle c (detection, A = {arl}): {c:.2}");
            println!("oracle c (point estimation):     {point:.4}");
            Ok(())
        }
        Command::Nu { x } => {
            println!("{:.9}", nu_overshoot(x)?);
            Ok(())
        }
        Command::Qcheck { c, omega, steps, seeds, tol } => qcheck(c, omega, steps, seeds, tol),
    }
}

fn load(args: &RunArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::from_path(&args.config).map_err(|e| match e {
        Error::Io { .. } => CliError::Validation(e.to_string()),
        other => other.into(),
    })?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = flag.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn calibration_options(cfg: &RunConfig, target: f64, seed: u64) -> CalibrationOptions {
    let mut o = CalibrationOptions::new(target, cfg.replications, seed);
    o.rel_tol = cfg.rel_tol;
    o.bracket = cfg.bracket;
    o.horizon_cap = cfg.caps.null;
    o
}

#[derive(Serialize)]
struct CalibrationOutput<'a> {
    experiment: &'a str,
    detector: String,
    seed: u64,
    replications: u64,
    result: &'a CalibrationResult,
}

fn calibrate(cfg: &RunConfig, flag: Option<PathBuf>) -> CliResult<()> {
    let target = cfg.require_target()?;
    let result = calibrate_threshold(&cfg.detector, &cfg.model, &calibration_options(cfg, target, cfg.seed))?;
    let dir = out_dir(cfg, flag)?;
    let path = dir.join(format!("{}_calibrate_{}.json", cfg.experiment, cfg.seed));
    emit_json(
        &CalibrationOutput {
            experiment: &cfg.experiment,
            detector: cfg.detector.label(),
            seed: cfg.seed,
            replications: cfg.replications,
            result: &result,
        },
        &path,
    )?;
    println!(
        "threshold {:.4} achieves ARL {} (target {target}, {} evaluations{})",
        result.threshold_b,
        result.achieved_arl,
        result.evaluations,
        if result.converged { "" } else { ", NOT CONVERGED" }
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn finish(mut report: ExperimentReport, cfg: &RunConfig, flag: Option<PathBuf>, start: std::time::Instant) -> CliResult<()> {
    report.wall_time_secs = start.elapsed().as_secs_f64();
    let dir = out_dir(cfg, flag)?;
    let path = write_report(&report, &dir)?;
    for c in &report.cells {
        println!("{:<24} {:<20} {}", c.row, c.column, c.estimate);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn arl(cfg: &RunConfig, flag: Option<PathBuf>) -> CliResult<()> {
    let start = std::time::Instant::now();
    let threshold = cfg
        .fixed_threshold
        .ok_or_else(|| CliError::Validation("invalid configuration at `fixed_threshold`: arl needs a fixed threshold".into()))?;
    let reference = if cfg.detector.scale() == shrinkdetect::detectors::ThresholdScale::Log { threshold } else { threshold.exp() };
    let est = estimate_arl(&cfg.detector, &cfg.model, threshold, cfg.replications, cfg.seed, cfg.null_cap(reference))?;
    let mut report = ExperimentReport::new(&cfg.experiment, None, cfg.seed, cfg.replications);
    report.cells.push(ReportCell { row: cfg.detector.label(), column: "null".into(), estimate: est, c: None });
    finish(report, cfg, flag, start)
}

fn delay(cfg: &RunConfig, flag: Option<PathBuf>) -> CliResult<()> {
    let start = std::time::Instant::now();
    let mut report = ExperimentReport::new(&cfg.experiment, None, cfg.seed, cfg.replications);
    let threshold = match (cfg.fixed_threshold, cfg.target_arl) {
        (Some(b), _) => b,
        (None, Some(a)) => {
            let cal = calibrate_threshold(&cfg.detector, &cfg.model, &calibration_options(cfg, a, derive_seed(cfg.seed, 0)))?;
            let b = cal.threshold_b;
            report.calibrations.push(CalibrationRecord { row: cfg.detector.label(), column: None, result: cal });
            b
        }
        (None, None) => {
            return Err(CliError::Validation(
                "invalid configuration at `target_arl`: delay needs target_arl or fixed_threshold".into(),
            ))
        }
    };
    for (i, s) in cfg.scenarios.iter().enumerate() {
        let est = estimate_delay(
            &cfg.detector,
            &cfg.model,
            threshold,
            &s.mu_post,
            cfg.replications,
            derive_seed(cfg.seed, 1 + i as u64),
            cfg.delay_cap(),
        )?;
        report.cells.push(ReportCell { row: cfg.detector.label(), column: s.label(), estimate: est, c: None });
    }
    finish(report, cfg, flag, start)
}

fn sweep_c(cfg: &RunConfig, flag: Option<PathBuf>) -> CliResult<()> {
    let sweep = cfg.require_sweep()?;
    let grid = sweep.grid();
    let dir = out_dir(cfg, flag)?;
    let mut wrote = Vec::new();

    if !sweep.fixed_thresholds.is_empty() {
        let scenario = cfg.scenarios.first().ok_or_else(|| {
            CliError::Validation("invalid configuration at `scenarios`: the fixed-threshold sweep needs a scenario".into())
        })?;
        let mut rows = Vec::new();
        for &b in &sweep.fixed_thresholds {
            for (i, &c) in grid.iter().enumerate() {
                let spec = DetectorSpec::srrs(EstimatorRule::linear(c, sweep.omega.clone()));
                // common random numbers across c at each threshold
                let arl = estimate_arl(&spec, &cfg.model, b, cfg.replications, derive_seed(cfg.seed, 1), cfg.null_cap(b))?;
                let d = estimate_delay(&spec, &cfg.model, b, &scenario.mu_post, cfg.replications, derive_seed(cfg.seed, 2), cfg.delay_cap())?;
                log::info!("B = {b}, c = {c}: ARL {arl}, delay {d} ({}/{})", i + 1, grid.len());
                rows.push(FixedThresholdRow { c, b, arl_mean: arl.mean, arl_se: arl.std_error, delay_mean: d.mean, delay_se: d.std_error });
            }
        }
        let path = dir.join(format!("{}_fig1_{}.csv", cfg.experiment, cfg.seed));
        emit_csv(&rows, &path)?;
        wrote.push(path);
    }
    if let Some(a) = cfg.target_arl {
        let mut rows = Vec::new();
        for &c in &grid {
            let spec = DetectorSpec::srrs(EstimatorRule::linear(c, sweep.omega.clone()));
            let cal = calibrate_threshold(&spec, &cfg.model, &calibration_options(cfg, a, derive_seed(cfg.seed, 3)))?;
            rows.push(CalibratedRow {
                c,
                b_calibrated: cal.threshold_b,
                achieved_arl: cal.achieved_arl.mean,
                se: cal.achieved_arl.std_error,
            });
        }
        let path = dir.join(format!("{}_fig2_{}.csv", cfg.experiment, cfg.seed));
        emit_csv(&rows, &path)?;
        wrote.push(path);
    }
    if wrote.is_empty() {
        return Err(CliError::Validation(
            "invalid configuration at `sweep.fixed_thresholds`: nothing to sweep (set fixed_thresholds or target_arl)".into(),
        ));
    }
    for p in wrote {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn qcheck(c: f64, omega: f64, steps: u64, seeds: u64, tol: f64) -> CliResult<()> {
    if seeds == 0 || steps == 0 {
        return Err(CliError::Validation("--steps and --seeds must be positive".into()));
    }
    let mut close = 0;
    for seed in 0..seeds {
        let t = q_measure_trajectory(c, omega, steps, seed)?;
        if (t.last().expect("nonempty path") - omega).abs() < tol {
            close += 1;
        }
    }
    println!("{close}/{seeds} paths end within {tol} of omega = {omega} after {steps} steps (c = {c})");
    if c > 0.0 {
        for n in [100u64, 1_000, 10_000] {
            println!("sum of squared coefficients at n = {n}: {:.6e}", shrinkage_coefficients(n, c)?.sum_sq);
        }
    }
    Ok(())
}
