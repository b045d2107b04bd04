//! Streaming stopping rules.
//!
//! Every detector consumes one observation vector per call to
//! [`Detector::step`] and reports its monitoring statistic on the scale it is
//! compared against the threshold. Shiryaev-Roberts type statistics are kept
//! as logarithms throughout, so `statistic` is `log R_n` and the alarm fires
//! when it reaches `log B`. The SPRT and CUSUM statistics are already on the
//! log-likelihood scale and are compared against `b` directly.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, domain, Error, Result};
use crate::estimators::{EstimatorRule, RunningStats};
use crate::models::{Family, MeanVector, ModelSpec};

/// Current schema version of serialized detector snapshots.
pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// Outcome of a single detector step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub statistic: f64,
    pub alarmed: bool,
}

pub trait Detector {
    fn step(&mut self, x: &[f64]) -> Result<Step>;

    /// Number of observations consumed.
    fn time(&self) -> u64;
}

/// `log(1 + e^v)` with `v = -inf` mapping to 0.
#[inline]
fn log1p_exp(v: f64) -> f64 {
    if v == f64::NEG_INFINITY {
        0.0
    } else if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Max-shifted `log sum exp`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn ensure_not_alarmed(alarmed: bool) -> Result<()> {
    if alarmed {
        Err(Error::InvalidState("detector already raised an alarm".into()))
    } else {
        Ok(())
    }
}

/// What to do when the SRRS candidate bank would exceed its cap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    #[default]
    Error,
    DropOldest,
}

/// Shiryaev-Roberts-Robbins-Siegmund detector: a bank of plug-in likelihood
/// ratios `Lambda_{n,m}`, one per candidate change time `m`.
///
/// Candidates are stored flat. Candidate `i` was born at `first_birth + i`;
/// its sums cover `X_m ..= X_n` after step `n`, and the estimate it uses at
/// step `n + 1` is built from exactly those `n - m + 1` observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrrsState {
    pub model: ModelSpec,
    pub rule: EstimatorRule,
    pub log_threshold: f64,
    pub time: u64,
    pub first_birth: u64,
    pub sums: Vec<f64>,
    pub log_lambda: Vec<f64>,
    #[serde(default)]
    pub max_candidates: Option<usize>,
    #[serde(default)]
    pub on_overflow: OverflowPolicy,
    #[serde(default)]
    pub dropped: u64,
    #[serde(default)]
    pub floored: u64,
    #[serde(default)]
    pub alarmed: bool,
    #[serde(skip)]
    scratch: Vec<f64>,
}

impl SrrsState {
    pub fn new(model: ModelSpec, rule: EstimatorRule, threshold_b: f64) -> Result<Self> {
        model.validate()?;
        rule.validate(&model)?;
        if matches!(rule, EstimatorRule::Ewma { .. }) {
            return Err(Error::RuleInapplicable("SRRS needs a window estimator".into()));
        }
        if !(threshold_b > 0.0) {
            return Err(domain("SRRS threshold B must be positive"));
        }
        Ok(SrrsState {
            model,
            rule,
            log_threshold: threshold_b.ln(),
            time: 0,
            first_birth: 1,
            sums: Vec::new(),
            log_lambda: Vec::new(),
            max_candidates: None,
            on_overflow: OverflowPolicy::Error,
            dropped: 0,
            floored: 0,
            alarmed: false,
            scratch: Vec::new(),
        })
    }

    /// Caps the bank at `max` candidates.
    pub fn with_pruning(mut self, max: usize, policy: OverflowPolicy) -> Self {
        self.max_candidates = Some(max.max(1));
        self.on_overflow = policy;
        self
    }

    pub fn candidates(&self) -> usize {
        self.log_lambda.len()
    }

    /// Birth time, observation window and log-likelihood ratio of candidate `i`.
    pub fn candidate(&self, i: usize) -> (u64, RunningStats, f64) {
        let p = self.model.p;
        let m = self.first_birth + i as u64;
        let stats = RunningStats {
            sums: self.sums[i * p..(i + 1) * p].to_vec(),
            count: self.time + 1 - m,
        };
        (m, stats, self.log_lambda[i])
    }

    pub fn statistic(&self) -> f64 {
        log_sum_exp(&self.log_lambda)
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.rule.validate(&self.model)?;
        let p = self.model.p;
        let k = self.log_lambda.len();
        if self.sums.len() != k * p {
            return Err(Error::InvalidState("candidate sums do not match the bank size".into()));
        }
        if self.first_birth == 0 || self.first_birth + k as u64 != self.time + 1 {
            return Err(Error::InvalidState("candidate births are inconsistent with time".into()));
        }
        if self.log_lambda.iter().any(|v| v.is_nan()) || self.log_threshold.is_nan() {
            return Err(Error::InvalidState("NaN in SRRS state".into()));
        }
        Ok(())
    }
}

impl Detector for SrrsState {
    fn step(&mut self, x: &[f64]) -> Result<Step> {
        ensure_not_alarmed(self.alarmed)?;
        let p = self.model.p;
        check_len(p, x.len())?;
        let n = self.time + 1;
        let mu0 = self.model.mu0;
        self.scratch.resize(p, 0.0);
        let mut max = 0.0f64; // the newborn candidate contributes log 1
        for (i, (chunk, ll)) in self.sums.chunks_exact_mut(p).zip(self.log_lambda.iter_mut()).enumerate() {
            let count = n - (self.first_birth + i as u64);
            self.rule.estimate_into(chunk, count, mu0, &mut self.scratch)?;
            let (inc, floored) = self.model.llr_sum(&self.scratch, x);
            self.floored += floored as u64;
            *ll += inc;
            if *ll > max {
                max = *ll;
            }
            for (s, v) in chunk.iter_mut().zip(x) {
                *s += v;
            }
        }
        self.sums.extend_from_slice(x);
        self.log_lambda.push(0.0);
        self.time = n;

        if let Some(cap) = self.max_candidates {
            let excess = self.log_lambda.len().saturating_sub(cap);
            if excess > 0 {
                match self.on_overflow {
                    OverflowPolicy::Error => return Err(Error::CandidateOverflow(self.log_lambda.len())),
                    OverflowPolicy::DropOldest => {
                        self.log_lambda.drain(..excess);
                        self.sums.drain(..excess * p);
                        self.first_birth += excess as u64;
                        self.dropped += excess as u64;
                        max = self.log_lambda.iter().cloned().fold(0.0, f64::max);
                    }
                }
            }
        }

        let total: f64 = self.log_lambda.iter().map(|v| (v - max).exp()).sum();
        let statistic = max + total.ln();
        let alarmed = statistic >= self.log_threshold;
        self.alarmed = alarmed;
        Ok(Step { statistic, alarmed })
    }

    fn time(&self) -> u64 {
        self.time
    }
}

/// Robbins-Siegmund open-ended SPRT with plug-in estimates from all past data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SprtState {
    pub model: ModelSpec,
    pub rule: EstimatorRule,
    pub b: f64,
    pub stats: RunningStats,
    pub log_lambda: f64,
    pub time: u64,
    #[serde(default)]
    pub floored: u64,
    #[serde(default)]
    pub alarmed: bool,
    #[serde(skip)]
    scratch: Vec<f64>,
}

impl SprtState {
    pub fn new(model: ModelSpec, rule: EstimatorRule, b: f64) -> Result<Self> {
        model.validate()?;
        rule.validate(&model)?;
        if matches!(rule, EstimatorRule::Ewma { .. }) {
            return Err(Error::RuleInapplicable("SPRT needs a window estimator".into()));
        }
        if b.is_nan() {
            return Err(domain("SPRT threshold is NaN"));
        }
        Ok(SprtState {
            stats: RunningStats::new(model.p),
            model,
            rule,
            b,
            log_lambda: 0.0,
            time: 0,
            floored: 0,
            alarmed: false,
            scratch: Vec::new(),
        })
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.rule.validate(&self.model)?;
        check_len(self.model.p, self.stats.sums.len())?;
        if self.stats.count != self.time || self.log_lambda.is_nan() || self.b.is_nan() {
            return Err(Error::InvalidState("SPRT state is inconsistent".into()));
        }
        Ok(())
    }
}

impl Detector for SprtState {
    fn step(&mut self, x: &[f64]) -> Result<Step> {
        ensure_not_alarmed(self.alarmed)?;
        check_len(self.model.p, x.len())?;
        self.scratch.resize(self.model.p, 0.0);
        self.rule
            .estimate_into(&self.stats.sums, self.stats.count, self.model.mu0, &mut self.scratch)?;
        let (inc, floored) = self.model.llr_sum(&self.scratch, x);
        self.floored += floored as u64;
        self.log_lambda += inc;
        self.stats.update(x)?;
        self.time += 1;
        self.alarmed = self.log_lambda >= self.b;
        Ok(Step { statistic: self.log_lambda, alarmed: self.alarmed })
    }

    fn time(&self) -> u64 {
        self.time
    }
}

/// Shiryaev-Roberts procedure with fully specified post-change means,
/// `R_n = (1 + R_{n-1}) prod_k f_{mu_k}(X_{k,n}) / f_{mu0}(X_{k,n})`, `R_0 = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownSrState {
    pub model: ModelSpec,
    pub mu: MeanVector,
    pub log_threshold: f64,
    pub log_r: f64,
    pub time: u64,
    #[serde(default)]
    pub alarmed: bool,
}

impl KnownSrState {
    pub fn new(model: ModelSpec, mu: MeanVector, threshold_b: f64) -> Result<Self> {
        model.validate()?;
        check_len(model.p, mu.len())?;
        if !(threshold_b > 0.0) {
            return Err(domain("SR threshold B must be positive"));
        }
        Ok(KnownSrState {
            model,
            mu,
            log_threshold: threshold_b.ln(),
            log_r: f64::NEG_INFINITY,
            time: 0,
            alarmed: false,
        })
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        check_len(self.model.p, self.mu.len())?;
        if self.log_r.is_nan() || self.log_r == f64::INFINITY {
            return Err(Error::InvalidState("SR statistic is not a valid log value".into()));
        }
        Ok(())
    }
}

impl Detector for KnownSrState {
    fn step(&mut self, x: &[f64]) -> Result<Step> {
        ensure_not_alarmed(self.alarmed)?;
        check_len(self.model.p, x.len())?;
        let (inc, _) = self.model.llr_sum(&self.mu, x);
        self.log_r = log1p_exp(self.log_r) + inc;
        self.time += 1;
        self.alarmed = self.log_r >= self.log_threshold;
        Ok(Step { statistic: self.log_r, alarmed: self.alarmed })
    }

    fn time(&self) -> u64 {
        self.time
    }
}

/// O(p)-memory Shiryaev-Roberts scheme with hard-thresholded EWMA estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursiveState {
    pub model: ModelSpec,
    pub delta: f64,
    pub omega: MeanVector,
    pub log_threshold: f64,
    /// `log R_n`; `-inf` encodes `R_n = 0`.
    pub log_r: f64,
    pub mu_tilde: MeanVector,
    pub time: u64,
    #[serde(default)]
    pub floored: u64,
    #[serde(default)]
    pub alarmed: bool,
    #[serde(skip)]
    scratch: Vec<f64>,
}

impl RecursiveState {
    pub fn new(model: ModelSpec, delta: f64, omega: MeanVector, threshold_b: f64) -> Result<Self> {
        model.validate()?;
        EstimatorRule::Ewma { delta, omega: omega.clone() }.validate(&model)?;
        if !(threshold_b > 0.0) {
            return Err(domain("recursive threshold B must be positive"));
        }
        Ok(RecursiveState {
            mu_tilde: model.null_mean(),
            model,
            delta,
            omega,
            log_threshold: threshold_b.ln(),
            log_r: f64::NEG_INFINITY,
            time: 0,
            floored: 0,
            alarmed: false,
            scratch: Vec::new(),
        })
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        EstimatorRule::Ewma { delta: self.delta, omega: self.omega.clone() }.validate(&self.model)?;
        check_len(self.model.p, self.mu_tilde.len())?;
        if self.log_r.is_nan() || self.log_r == f64::INFINITY || self.mu_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("recursive state holds invalid values".into()));
        }
        Ok(())
    }
}

impl Detector for RecursiveState {
    fn step(&mut self, x: &[f64]) -> Result<Step> {
        ensure_not_alarmed(self.alarmed)?;
        check_len(self.model.p, x.len())?;
        let n = self.time + 1;
        if n == 1 {
            self.log_r = f64::NEG_INFINITY;
        } else {
            let mu0 = self.model.mu0;
            self.scratch.clear();
            self.scratch.extend(
                self.mu_tilde.iter().zip(self.omega.iter()).map(|(&m, &w)| if m >= w { m } else { mu0 }),
            );
            let (inc, floored) = self.model.llr_sum(&self.scratch, x);
            self.floored += floored as u64;
            self.log_r = log1p_exp(self.log_r) + inc;
        }
        let d = self.delta;
        for (m, v) in self.mu_tilde.0.iter_mut().zip(x) {
            *m = d * *m + (1.0 - d) * v;
        }
        self.time = n;
        self.alarmed = self.log_r >= self.log_threshold;
        Ok(Step { statistic: self.log_r, alarmed: self.alarmed })
    }

    fn time(&self) -> u64 {
        self.time
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Max,
    Sum,
}

/// Per-stream CUSUM with a known post-change mean, aggregated by max or sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CusumState {
    pub model: ModelSpec,
    pub mu1: MeanVector,
    pub aggregate: Aggregate,
    pub b: f64,
    pub w: Vec<f64>,
    pub time: u64,
    #[serde(default)]
    pub alarmed: bool,
}

impl CusumState {
    pub fn new(model: ModelSpec, mu1: MeanVector, aggregate: Aggregate, b: f64) -> Result<Self> {
        model.validate()?;
        check_len(model.p, mu1.len())?;
        if b.is_nan() {
            return Err(domain("CUSUM threshold is NaN"));
        }
        Ok(CusumState { w: vec![0.0; model.p], model, mu1, aggregate, b, time: 0, alarmed: false })
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        check_len(self.model.p, self.mu1.len())?;
        check_len(self.model.p, self.w.len())?;
        if self.w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidState("CUSUM statistics must be nonnegative".into()));
        }
        Ok(())
    }

    fn aggregate_value(&self) -> f64 {
        match self.aggregate {
            Aggregate::Max => self.w.iter().cloned().fold(0.0, f64::max),
            Aggregate::Sum => self.w.iter().sum(),
        }
    }
}

impl Detector for CusumState {
    fn step(&mut self, x: &[f64]) -> Result<Step> {
        ensure_not_alarmed(self.alarmed)?;
        check_len(self.model.p, x.len())?;
        for ((w, &m), &v) in self.w.iter_mut().zip(self.mu1.iter()).zip(x) {
            *w = (*w + self.model.llr(m, v).0).max(0.0);
        }
        self.time += 1;
        let statistic = self.aggregate_value();
        self.alarmed = statistic >= self.b;
        Ok(Step { statistic, alarmed: self.alarmed })
    }

    fn time(&self) -> u64 {
        self.time
    }
}

/// How a detector's threshold maps onto its statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdScale {
    /// Threshold `B` on the likelihood scale; the statistic is `log R_n`.
    Log,
    /// Threshold `b` compared with the statistic directly.
    Linear,
}

impl ThresholdScale {
    pub fn level(self, threshold: f64) -> f64 {
        match self {
            ThresholdScale::Log => threshold.ln(),
            ThresholdScale::Linear => threshold,
        }
    }

    pub fn threshold(self, level: f64) -> f64 {
        match self {
            ThresholdScale::Log => level.exp(),
            ThresholdScale::Linear => level,
        }
    }
}

/// Declarative description of a detector, independent of its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorSpec {
    Srrs {
        estimator: EstimatorRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_candidates: Option<usize>,
        #[serde(default)]
        on_overflow: OverflowPolicy,
    },
    Sprt {
        estimator: EstimatorRule,
    },
    KnownSr {
        mu: MeanVector,
    },
    Recursive {
        delta: f64,
        omega: MeanVector,
    },
    Cusum {
        mu1: MeanVector,
        aggregate: Aggregate,
    },
}

impl DetectorSpec {
    pub fn srrs(estimator: EstimatorRule) -> Self {
        DetectorSpec::Srrs { estimator, max_candidates: None, on_overflow: OverflowPolicy::Error }
    }

    pub fn scale(&self) -> ThresholdScale {
        match self {
            DetectorSpec::Sprt { .. } | DetectorSpec::Cusum { .. } => ThresholdScale::Linear,
            _ => ThresholdScale::Log,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DetectorSpec::Srrs { estimator, .. } => format!("srrs/{}", estimator.name()),
            DetectorSpec::Sprt { estimator } => format!("sprt/{}", estimator.name()),
            DetectorSpec::KnownSr { .. } => "known_sr".into(),
            DetectorSpec::Recursive { .. } => "recursive".into(),
            DetectorSpec::Cusum { aggregate: Aggregate::Max, .. } => "cusum_max".into(),
            DetectorSpec::Cusum { aggregate: Aggregate::Sum, .. } => "cusum_sum".into(),
        }
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        // building with a dummy threshold runs every check
        self.build(model, 1.0).map(|_| ())
    }

    pub fn build(&self, model: &ModelSpec, threshold: f64) -> Result<AnyDetector> {
        Ok(match self {
            DetectorSpec::Srrs { estimator, max_candidates, on_overflow } => {
                let mut s = SrrsState::new(*model, estimator.clone(), threshold)?;
                if let Some(cap) = max_candidates {
                    s = s.with_pruning(*cap, *on_overflow);
                }
                AnyDetector::Srrs(s)
            }
            DetectorSpec::Sprt { estimator } => {
                AnyDetector::Sprt(SprtState::new(*model, estimator.clone(), threshold)?)
            }
            DetectorSpec::KnownSr { mu } => AnyDetector::KnownSr(KnownSrState::new(*model, mu.clone(), threshold)?),
            DetectorSpec::Recursive { delta, omega } => {
                AnyDetector::Recursive(RecursiveState::new(*model, *delta, omega.clone(), threshold)?)
            }
            DetectorSpec::Cusum { mu1, aggregate } => {
                AnyDetector::Cusum(CusumState::new(*model, mu1.clone(), *aggregate, threshold)?)
            }
        })
    }
}

/// Any detector state, dispatched statically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyDetector {
    Srrs(SrrsState),
    Sprt(SprtState),
    KnownSr(KnownSrState),
    Recursive(RecursiveState),
    Cusum(CusumState),
}

impl AnyDetector {
    fn validate(&self) -> Result<()> {
        match self {
            AnyDetector::Srrs(s) => s.validate(),
            AnyDetector::Sprt(s) => s.validate(),
            AnyDetector::KnownSr(s) => s.validate(),
            AnyDetector::Recursive(s) => s.validate(),
            AnyDetector::Cusum(s) => s.validate(),
        }
    }

    pub fn model(&self) -> &ModelSpec {
        match self {
            AnyDetector::Srrs(s) => &s.model,
            AnyDetector::Sprt(s) => &s.model,
            AnyDetector::KnownSr(s) => &s.model,
            AnyDetector::Recursive(s) => &s.model,
            AnyDetector::Cusum(s) => &s.model,
        }
    }
}

impl Detector for AnyDetector {
    #[inline]
    fn step(&mut self, x: &[f64]) -> Result<Step> {
        match self {
            AnyDetector::Srrs(s) => s.step(x),
            AnyDetector::Sprt(s) => s.step(x),
            AnyDetector::KnownSr(s) => s.step(x),
            AnyDetector::Recursive(s) => s.step(x),
            AnyDetector::Cusum(s) => s.step(x),
        }
    }

    fn time(&self) -> u64 {
        match self {
            AnyDetector::Srrs(s) => s.time,
            AnyDetector::Sprt(s) => s.time,
            AnyDetector::KnownSr(s) => s.time,
            AnyDetector::Recursive(s) => s.time,
            AnyDetector::Cusum(s) => s.time,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotEnvelope<T> {
    schema_version: u32,
    detector: T,
}

/// Serializes a detector into a versioned JSON checkpoint.
pub fn encode_snapshot(detector: &AnyDetector) -> Result<String> {
    Ok(serde_json::to_string(&SnapshotEnvelope {
        schema_version: SNAPSHOT_SCHEMA_VERSION,
        detector,
    })?)
}

/// Restores a detector from a checkpoint, rejecting newer schemas and
/// internally inconsistent states. Unknown fields are ignored.
pub fn decode_snapshot(bytes: &[u8]) -> Result<AnyDetector> {
    let env: SnapshotEnvelope<AnyDetector> = serde_json::from_slice(bytes)?;
    if env.schema_version == 0 || env.schema_version > SNAPSHOT_SCHEMA_VERSION {
        return Err(Error::SnapshotVersion { found: env.schema_version, supported: SNAPSHOT_SCHEMA_VERSION });
    }
    env.detector.validate()?;
    Ok(env.detector)
}

/// Recomputes `sum_{m=1}^{n} Lambda_{n,m}` for every `n` directly from the raw
/// observations, with no incremental state. Quadratic-by-cubic cost; meant for
/// short test sequences.
pub fn srrs_stat_bruteforce(observations: &[Vec<f64>], rule: &EstimatorRule, model: &ModelSpec) -> Result<Vec<f64>> {
    model.validate()?;
    rule.validate(model)?;
    let p = model.p;
    let ratio = |mu_hat: f64, x: f64| -> f64 {
        match model.family {
            Family::GaussianUnitVar => (-0.5 * (x - mu_hat).powi(2)).exp() / (-0.5 * x * x).exp(),
            Family::Poisson => {
                let m = if x > 0.0 { mu_hat.max(crate::models::POISSON_RATE_FLOOR) } else { mu_hat };
                (m / model.mu0).powf(x) * (-(m - model.mu0)).exp()
            }
        }
    };
    let mut out = Vec::with_capacity(observations.len());
    let mut mu_hat = vec![0.0; p];
    for n in 1..=observations.len() {
        let mut total = 0.0;
        for m in 1..=n {
            let mut lambda = 1.0;
            for l in m..=n {
                let mut sums = vec![0.0; p];
                for obs in &observations[m - 1..l - 1] {
                    check_len(p, obs.len())?;
                    for (s, v) in sums.iter_mut().zip(obs) {
                        *s += v;
                    }
                }
                rule.estimate_into(&sums, (l - m) as u64, model.mu0, &mut mu_hat)?;
                let x = &observations[l - 1];
                check_len(p, x.len())?;
                for k in 0..p {
                    lambda *= ratio(mu_hat[k], x[k]);
                }
            }
            total += lambda;
        }
        out.push(total);
    }
    Ok(out)
}
