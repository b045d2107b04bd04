//! Reproducible Monte Carlo engine: run lengths, ARL and delay estimation,
//! threshold calibration and the shrinkage-factor sweep.
//!
//! Replication `i` draws all of its observations from a ChaCha8 generator
//! keyed by the base seed with stream `i`, so results do not depend on thread
//! count or scheduling. Within a replication the `p` coordinates of each
//! observation are drawn in stream order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{Detector, DetectorSpec, ThresholdScale};
use crate::error::{check_len, domain, Error, Result};
use crate::estimators::EstimatorRule;
use crate::models::{Family, MeanVector, ModelSpec};

/// Default horizon cap for delay runs.
pub const DELAY_CAP: u64 = 10_000;
/// Null runs are capped at this multiple of the target ARL.
pub const NULL_CAP_FACTOR: f64 = 20.0;
/// Default calibration bracket as multiples of the target ARL.
pub const BRACKET: (f64, f64) = (0.05, 1.5);
pub const MAX_BRACKET_EXPANSIONS: u32 = 3;
/// A null SPRT path whose log-likelihood ratio falls this far below the
/// stopping level is treated as never alarming; by the martingale maximal
/// inequality the error is below `e^-30`.
pub const SPRT_FUTILITY_MARGIN: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeTime {
    At(u64),
    Never,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: ModelSpec,
    pub mu_post: MeanVector,
    pub change_time: ChangeTime,
    pub horizon_cap: u64,
}

impl Scenario {
    pub fn null(model: ModelSpec, horizon_cap: u64) -> Self {
        Scenario { mu_post: model.null_mean(), model, change_time: ChangeTime::Never, horizon_cap }
    }

    /// Change at time 1, the worst case for the equalizer schemes here.
    pub fn immediate(model: ModelSpec, mu_post: impl Into<MeanVector>, horizon_cap: u64) -> Self {
        Scenario { model, mu_post: mu_post.into(), change_time: ChangeTime::At(1), horizon_cap }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        check_len(self.model.p, self.mu_post.len())?;
        if self.horizon_cap == 0 {
            return Err(domain("horizon cap must be at least 1"));
        }
        if self.change_time == ChangeTime::At(0) {
            return Err(domain("change time is 1-based"));
        }
        for &m in self.mu_post.iter() {
            let ok = match self.model.family {
                Family::GaussianUnitVar => m.is_finite(),
                Family::Poisson => m.is_finite() && m > 0.0,
            };
            if !ok {
                return Err(domain(format!("invalid post-change mean {m}")));
            }
        }
        Ok(())
    }

    fn is_null(&self) -> bool {
        self.change_time == ChangeTime::Never
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replications: u64,
    pub censored_fraction: f64,
}

impl McEstimate {
    pub fn from_lengths(runs: &[RunLength]) -> Self {
        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.length as f64).sum::<f64>() / n;
        let var = if runs.len() > 1 {
            runs.iter().map(|r| (r.length as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            std_error: (var / n).sqrt(),
            replications: runs.len() as u64,
            censored_fraction: runs.iter().filter(|r| r.censored).count() as f64 / n,
        }
    }

    pub fn is_censored(&self) -> bool {
        self.censored_fraction > 0.0
    }
}

impl std::fmt::Display for McEstimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2} (n={})", self.mean, self.std_error, self.replications)?;
        if self.is_censored() {
            write!(f, " [CENSORED {:.1}%]", 100.0 * self.censored_fraction)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLength {
    pub length: u64,
    pub censored: bool,
}

/// Generator for replication `index` under `seed_base`.
pub fn replication_rng(seed_base: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_base);
    rng.set_stream(index);
    rng
}

/// Derives an independent base seed for a sub-experiment.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum Gen {
    Normal(f64),
    Poisson(Poisson<f64>),
}

impl Gen {
    fn new(family: Family, mean: f64) -> Result<Self> {
        Ok(match family {
            Family::GaussianUnitVar => Gen::Normal(mean),
            Family::Poisson => Gen::Poisson(Poisson::new(mean).map_err(|e| domain(format!("poisson mean {mean}: {e}")))?),
        })
    }

    #[inline]
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Gen::Normal(m) => m + rng.sample::<f64, _>(StandardNormal),
            Gen::Poisson(d) => d.sample(rng),
        }
    }
}

struct Sampler {
    pre: Vec<Gen>,
    post: Vec<Gen>,
    change: u64,
}

impl Sampler {
    fn new(scenario: &Scenario) -> Result<Self> {
        let f = scenario.model.family;
        let mu0 = scenario.model.mu0;
        Ok(Sampler {
            pre: (0..scenario.model.p).map(|_| Gen::new(f, mu0)).collect::<Result<_>>()?,
            post: scenario.mu_post.iter().map(|&m| Gen::new(f, m)).collect::<Result<_>>()?,
            change: match scenario.change_time {
                ChangeTime::At(nu) => nu,
                ChangeTime::Never => u64::MAX,
            },
        })
    }

    #[inline]
    fn fill(&self, t: u64, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let gens = if t >= self.change { &self.post } else { &self.pre };
        for (o, g) in out.iter_mut().zip(gens) {
            *o = g.sample(rng);
        }
    }
}

/// Running-maximum record of one simulated statistic path.
///
/// The path of every detector here is independent of its threshold, so one
/// simulation answers "when would it have alarmed" for every level up to the
/// one the path was run to.
#[derive(Clone, Debug, Default)]
pub struct Ladder {
    records: Vec<(u64, f64)>,
}

impl Ladder {
    /// Alarm time at `level`, or a censored run at `cap`.
    pub fn run_length(&self, level: f64, cap: u64) -> RunLength {
        let i = self.records.partition_point(|&(_, l)| l < level);
        match self.records.get(i) {
            Some(&(t, _)) => RunLength { length: t, censored: false },
            None => RunLength { length: cap, censored: true },
        }
    }
}

fn simulate_ladder(
    spec: &DetectorSpec,
    scenario: &Scenario,
    stop_level: f64,
    rng: &mut ChaCha8Rng,
    futility: Option<f64>,
) -> Result<Ladder> {
    let mut det = spec.build(&scenario.model, f64::INFINITY)?;
    let sampler = Sampler::new(scenario)?;
    let mut x = vec![0.0; scenario.model.p];
    let mut ladder = Ladder::default();
    let mut best = f64::NEG_INFINITY;
    for t in 1..=scenario.horizon_cap {
        sampler.fill(t, rng, &mut x);
        let s = det.step(&x)?.statistic;
        if s > best {
            best = s;
            ladder.records.push((t, s));
            if s >= stop_level {
                break;
            }
        }
        if let Some(margin) = futility {
            if s < stop_level - margin {
                break;
            }
        }
    }
    Ok(ladder)
}

fn futility_for(spec: &DetectorSpec, scenario: &Scenario) -> Option<f64> {
    (scenario.is_null() && matches!(spec, DetectorSpec::Sprt { .. })).then_some(SPRT_FUTILITY_MARGIN)
}

/// Simulates all replications up to `stop_level`, in parallel, indexed.
pub fn simulate_ladders(
    spec: &DetectorSpec,
    scenario: &Scenario,
    stop_level: f64,
    replications: u64,
    seed_base: u64,
) -> Result<Vec<Ladder>> {
    scenario.validate()?;
    spec.validate(&scenario.model)?;
    let futility = futility_for(spec, scenario);
    (0..replications)
        .into_par_iter()
        .map(|i| simulate_ladder(spec, scenario, stop_level, &mut replication_rng(seed_base, i), futility))
        .collect()
}

fn level_of(spec: &DetectorSpec, threshold: f64) -> Result<f64> {
    if threshold.is_nan() || (spec.scale() == ThresholdScale::Log && !(threshold > 0.0)) {
        return Err(domain(format!("invalid threshold {threshold} for {}", spec.label())));
    }
    Ok(spec.scale().level(threshold))
}

/// One run of `spec` at `threshold`: replication 0 under `seed`.
pub fn simulate_run_length(spec: &DetectorSpec, threshold: f64, scenario: &Scenario, seed: u64) -> Result<RunLength> {
    scenario.validate()?;
    let level = level_of(spec, threshold)?;
    let ladder = simulate_ladder(spec, scenario, level, &mut replication_rng(seed, 0), futility_for(spec, scenario))?;
    Ok(ladder.run_length(level, scenario.horizon_cap))
}

/// Run lengths of `replications` independent runs at a fixed threshold.
pub fn run_lengths(
    spec: &DetectorSpec,
    threshold: f64,
    scenario: &Scenario,
    replications: u64,
    seed_base: u64,
) -> Result<Vec<RunLength>> {
    if replications < 2 {
        return Err(domain("at least 2 replications are required"));
    }
    let level = level_of(spec, threshold)?;
    let ladders = simulate_ladders(spec, scenario, level, replications, seed_base)?;
    Ok(ladders.iter().map(|l| l.run_length(level, scenario.horizon_cap)).collect())
}

pub fn estimate_run_length(
    spec: &DetectorSpec,
    threshold: f64,
    scenario: &Scenario,
    replications: u64,
    seed_base: u64,
) -> Result<McEstimate> {
    let runs = run_lengths(spec, threshold, scenario, replications, seed_base)?;
    let est = McEstimate::from_lengths(&runs);
    if est.is_censored() {
        log::warn!("{}: {:.1}% of runs hit the horizon cap {}", spec.label(), 100.0 * est.censored_fraction, scenario.horizon_cap);
    }
    Ok(est)
}

/// Null average run length at `threshold`.
pub fn estimate_arl(
    spec: &DetectorSpec,
    model: &ModelSpec,
    threshold: f64,
    replications: u64,
    seed_base: u64,
    horizon_cap: u64,
) -> Result<McEstimate> {
    estimate_run_length(spec, threshold, &Scenario::null(*model, horizon_cap), replications, seed_base)
}

/// Detection delay under a change at time 1.
pub fn estimate_delay(
    spec: &DetectorSpec,
    model: &ModelSpec,
    threshold: f64,
    mu_post: &MeanVector,
    replications: u64,
    seed_base: u64,
    horizon_cap: u64,
) -> Result<McEstimate> {
    let scenario = Scenario::immediate(*model, mu_post.clone(), horizon_cap);
    estimate_run_length(spec, threshold, &scenario, replications, seed_base)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub target_a: f64,
    pub rel_tol: f64,
    pub replications: u64,
    pub seed: u64,
    /// Initial bracket on the threshold scale; defaults to `[0.05 A, 1.5 A]`
    /// for `B`, and its logarithm for `b`.
    #[serde(default)]
    pub bracket: Option<(f64, f64)>,
    #[serde(default)]
    pub horizon_cap: Option<u64>,
}

impl CalibrationOptions {
    pub fn new(target_a: f64, replications: u64, seed: u64) -> Self {
        CalibrationOptions { target_a, rel_tol: 0.01, replications, seed, bracket: None, horizon_cap: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub threshold_b: f64,
    pub achieved_arl: McEstimate,
    pub target_a: f64,
    pub evaluations: u32,
    pub bracket: (f64, f64),
    pub converged: bool,
}

/// Finds a threshold whose null ARL is within `rel_tol` of `target_a`.
///
/// Every replication is simulated once, to the top of the bracket, and the
/// ARL at any lower threshold is read off the running-maximum ladders. The
/// same random numbers therefore serve every bisection step, so the search
/// runs on a deterministic, monotone function of the threshold.
pub fn calibrate_threshold(spec: &DetectorSpec, model: &ModelSpec, opts: &CalibrationOptions) -> Result<CalibrationResult> {
    let a = opts.target_a;
    if !(a > 1.0 && a.is_finite()) {
        return Err(domain(format!("target ARL must exceed 1, got {a}")));
    }
    if !(opts.rel_tol > 0.0 && opts.rel_tol <= 0.2) {
        return Err(domain(format!("rel_tol must lie in (0, 0.2], got {}", opts.rel_tol)));
    }
    if opts.replications < 2 {
        return Err(domain("at least 2 replications are required"));
    }
    let scale = spec.scale();
    let (mut lo, mut hi) = match opts.bracket {
        Some((l, h)) => (level_of(spec, l)?, level_of(spec, h)?),
        None => ((BRACKET.0 * a).ln(), (BRACKET.1 * a).ln()),
    };
    if !(lo < hi) {
        return Err(domain("calibration bracket must satisfy low < high"));
    }
    let cap = opts.horizon_cap.unwrap_or((NULL_CAP_FACTOR * a).ceil() as u64);
    let scenario = Scenario::null(*model, cap);
    let mut evaluations = 0u32;
    let arl_at = |ladders: &[Ladder], level: f64| {
        let runs: Vec<RunLength> = ladders.iter().map(|l| l.run_length(level, cap)).collect();
        McEstimate::from_lengths(&runs)
    };
    let within = |m: f64| (m - a).abs() / a <= opts.rel_tol;

    let mut ladders = simulate_ladders(spec, &scenario, hi, opts.replications, opts.seed)?;
    let mut expansions = 0;
    loop {
        let (arl_lo, arl_hi) = (arl_at(&ladders, lo), arl_at(&ladders, hi));
        evaluations += 2;
        let too_low = arl_hi.mean < a && !within(arl_hi.mean);
        let too_high = arl_lo.mean > a && !within(arl_lo.mean);
        if !too_low && !too_high {
            break;
        }
        if expansions == MAX_BRACKET_EXPANSIONS {
            return Err(Error::BracketFailure {
                expansions,
                low: scale.threshold(lo),
                high: scale.threshold(hi),
                arl_low: arl_lo.mean,
                arl_high: arl_hi.mean,
                target: a,
            });
        }
        expansions += 1;
        let width = hi - lo;
        if too_low {
            lo = hi;
            hi += 2.0 * width;
            log::info!("{}: expanding bracket upward to {:.4}", spec.label(), scale.threshold(hi));
            ladders = simulate_ladders(spec, &scenario, hi, opts.replications, opts.seed)?;
        } else {
            hi = lo;
            lo -= 2.0 * width;
            log::info!("{}: expanding bracket downward to {:.4}", spec.label(), scale.threshold(lo));
        }
    }
    let bracket = (scale.threshold(lo), scale.threshold(hi));

    let (mut best_level, mut best) = (hi, arl_at(&ladders, hi));
    let lo_est = arl_at(&ladders, lo);
    if (lo_est.mean - a).abs() < (best.mean - a).abs() {
        best_level = lo;
        best = lo_est;
    }
    let mut converged = within(best.mean);
    let (mut l, mut h) = (lo, hi);
    while !converged && h - l > 1e-12 * h.abs().max(1.0) {
        let mid = 0.5 * (l + h);
        let est = arl_at(&ladders, mid);
        evaluations += 1;
        if (est.mean - a).abs() < (best.mean - a).abs() {
            best_level = mid;
            best = est;
        }
        if within(est.mean) {
            converged = true;
        } else if est.mean < a {
            l = mid;
        } else {
            h = mid;
        }
    }
    if !converged {
        log::warn!("{}: calibration stalled at ARL {:.2} (target {a})", spec.label(), best.mean);
    }
    log::info!("{}: threshold {:.4} gives ARL {}", spec.label(), scale.threshold(best_level), best);
    Ok(CalibrationResult {
        threshold_b: scale.threshold(best_level),
        achieved_arl: best,
        target_a: a,
        evaluations,
        bracket,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    pub calibration: CalibrationResult,
    pub delay: McEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalC {
    pub c_opt: f64,
    pub delay: McEstimate,
    pub table: Vec<SweepRow>,
}

/// Calibrates the linear-shrinkage SRRS scheme at each `c` in `grid` and
/// returns the factor with the smallest simulated delay.
pub fn optimal_c_simulation(
    model: &ModelSpec,
    omega: &MeanVector,
    mu_post: &MeanVector,
    grid: &[f64],
    calibration: &CalibrationOptions,
    delay_replications: u64,
) -> Result<OptimalC> {
    if grid.is_empty() {
        return Err(domain("shrinkage grid is empty"));
    }
    let mut table = Vec::with_capacity(grid.len());
    for (i, &c) in grid.iter().enumerate() {
        let spec = DetectorSpec::srrs(EstimatorRule::linear(c, omega.clone()));
        let cal = calibrate_threshold(&spec, model, calibration)?;
        let delay = estimate_delay(
            &spec,
            model,
            cal.threshold_b,
            mu_post,
            delay_replications,
            derive_seed(calibration.seed, 1_000 + i as u64),
            DELAY_CAP,
        )?;
        log::info!("c = {c:.2}: B = {:.2}, delay {delay}", cal.threshold_b);
        table.push(SweepRow { c, calibration: cal, delay });
    }
    let best = table
        .iter()
        .min_by(|x, y| x.delay.mean.total_cmp(&y.delay.mean))
        .expect("grid is nonempty");
    Ok(OptimalC { c_opt: best.c, delay: best.delay, table: table.clone() })
}

/// Single-stream path under the plug-in measure `Q`, where each observation
/// is centred at its own one-step-ahead linear-shrinkage estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct QPath {
    /// `mu_hat_1 ..= mu_hat_{n+1}`, starting from `mu_hat_1 = 0`.
    pub mu_hat: Vec<f64>,
    /// The standard normal innovations `Z_1 ..= Z_n`.
    pub z: Vec<f64>,
}

pub fn q_measure_path(c: f64, omega: f64, n_steps: u64, seed: u64) -> Result<QPath> {
    if !(0.0..=1.0).contains(&c) || !omega.is_finite() {
        return Err(domain("q-measure path needs 0 <= c <= 1 and finite omega"));
    }
    let mut rng = replication_rng(seed, 0);
    let mut mu_hat = Vec::with_capacity(n_steps as usize + 1);
    let mut z = Vec::with_capacity(n_steps as usize);
    let mut current = 0.0;
    let mut sum = 0.0;
    mu_hat.push(current);
    for n in 1..=n_steps {
        let zn: f64 = rng.sample(StandardNormal);
        sum += current + zn;
        current = (1.0 - c) * omega + c * (sum / n as f64);
        z.push(zn);
        mu_hat.push(current);
    }
    Ok(QPath { mu_hat, z })
}

pub fn q_measure_trajectory(c: f64, omega: f64, n_steps: u64, seed: u64) -> Result<Vec<f64>> {
    Ok(q_measure_path(c, omega, n_steps, seed)?.mu_hat)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShrinkageCoefficients {
    /// `a_{n,0} ..= a_{n,n}`.
    pub a: Vec<f64>,
    /// `sum_{i=1}^{n} a_{n,i}^2`.
    pub sum_sq: f64,
}

/// Coefficients expressing `mu_hat_{n+1} - omega` as
/// `a_{n0} (mu_hat_1 - omega) + sum_i a_{ni} Z_i` under `Q`.
pub fn shrinkage_coefficients(n: u64, c: f64) -> Result<ShrinkageCoefficients> {
    if !(1..=1_000_000).contains(&n) {
        return Err(domain(format!("n must lie in [1, 1e6], got {n}")));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(domain(format!("c must lie in (0, 1], got {c}")));
    }
    let nf = n as f64;
    let n_us = n as usize;
    let mut a = vec![0.0; n_us + 1];
    let log_a0: f64 = (1..=n).map(|j| ((j as f64 - 1.0 + c) / j as f64).ln()).sum();
    a[0] = log_a0.exp();
    let log_base = (c / nf).ln();
    let mut log_prod = 0.0;
    let mut sum_sq = 0.0;
    a[n_us] = c / nf;
    sum_sq += a[n_us] * a[n_us];
    for i in (1..n_us).rev() {
        log_prod += (c / i as f64).ln_1p();
        let v = (log_base + log_prod).exp();
        a[i] = v;
        sum_sq += v * v;
    }
    Ok(ShrinkageCoefficients { a, sum_sq })
}
