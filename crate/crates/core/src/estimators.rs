//! Running sufficient statistics and the post-change mean estimators applied
//! to them.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, domain, Error, Result};
use crate::models::{MeanVector, ModelSpec, MAX_SHRINKAGE};

/// Post-change estimator rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EstimatorRule {
    /// Sample mean.
    Mle,
    /// `omega + c (Y - omega)`.
    LinearShrink { c: f64, omega: MeanVector },
    /// Linear shrinkage with a data-driven James-Stein factor.
    JsAdaptive {
        omega: MeanVector,
        #[serde(default = "default_true")]
        clamp: bool,
    },
    /// `Y` if `Y >= omega`, else `mu0`.
    HardThreshold { omega: MeanVector },
    /// `Y - omega` if `Y >= omega`, else `mu0`.
    SoftThreshold { omega: MeanVector },
    /// `a_k + b Y` if `Y >= omega`, else `c0`.
    AffineThreshold {
        omega: MeanVector,
        a: MeanVector,
        b: f64,
        c0: f64,
    },
    /// Exponentially weighted mean with hard thresholding; only usable by the
    /// recursive detector.
    Ewma { delta: f64, omega: MeanVector },
}

fn default_true() -> bool {
    true
}

impl EstimatorRule {
    pub fn linear(c: f64, omega: impl Into<MeanVector>) -> Self {
        EstimatorRule::LinearShrink { c, omega: omega.into() }
    }

    pub fn hard(omega: impl Into<MeanVector>) -> Self {
        EstimatorRule::HardThreshold { omega: omega.into() }
    }

    pub fn soft(omega: impl Into<MeanVector>) -> Self {
        EstimatorRule::SoftThreshold { omega: omega.into() }
    }

    pub fn js(omega: impl Into<MeanVector>) -> Self {
        EstimatorRule::JsAdaptive { omega: omega.into(), clamp: true }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorRule::Mle => "mle",
            EstimatorRule::LinearShrink { .. } => "linear_shrink",
            EstimatorRule::JsAdaptive { .. } => "js_adaptive",
            EstimatorRule::HardThreshold { .. } => "hard_threshold",
            EstimatorRule::SoftThreshold { .. } => "soft_threshold",
            EstimatorRule::AffineThreshold { .. } => "affine_threshold",
            EstimatorRule::Ewma { .. } => "ewma",
        }
    }

    pub fn omega(&self) -> Option<&MeanVector> {
        match self {
            EstimatorRule::Mle => None,
            EstimatorRule::LinearShrink { omega, .. }
            | EstimatorRule::JsAdaptive { omega, .. }
            | EstimatorRule::HardThreshold { omega }
            | EstimatorRule::SoftThreshold { omega }
            | EstimatorRule::AffineThreshold { omega, .. }
            | EstimatorRule::Ewma { omega, .. } => Some(omega),
        }
    }

    /// True when a linear shrinkage factor above 1 is configured.
    pub fn outside_theorem_range(&self) -> bool {
        matches!(self, EstimatorRule::LinearShrink { c, .. } if *c > 1.0)
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if let Some(omega) = self.omega() {
            check_len(model.p, omega.len())?;
            if omega.iter().any(|w| !w.is_finite()) {
                return Err(domain("omega entries must be finite"));
            }
        }
        let positive_omega = |omega: &MeanVector| {
            if omega.iter().all(|&w| w > 0.0) {
                Ok(())
            } else {
                Err(domain("thresholds omega must be positive"))
            }
        };
        match self {
            EstimatorRule::LinearShrink { c, .. } => {
                if !(0.0..=MAX_SHRINKAGE).contains(c) {
                    return Err(domain(format!("shrinkage factor {c} outside [0, {MAX_SHRINKAGE}]")));
                }
            }
            EstimatorRule::JsAdaptive { .. } => {
                if model.p < 3 {
                    return Err(Error::RuleInapplicable(
                        "james-stein factor needs at least 3 streams".into(),
                    ));
                }
            }
            EstimatorRule::HardThreshold { omega } | EstimatorRule::SoftThreshold { omega } => {
                positive_omega(omega)?
            }
            EstimatorRule::AffineThreshold { omega, a, b, c0 } => {
                positive_omega(omega)?;
                check_len(model.p, a.len())?;
                if !(b.is_finite() && c0.is_finite()) {
                    return Err(domain("affine coefficients must be finite"));
                }
            }
            EstimatorRule::Ewma { delta, omega } => {
                if !(0.0..=1.0).contains(delta) {
                    return Err(domain(format!("ewma delta {delta} outside [0, 1]")));
                }
                positive_omega(omega)?
            }
            EstimatorRule::Mle => {}
        }
        Ok(())
    }

    /// Writes the estimate for a window with the given per-stream sums and
    /// observation count into `out`. An empty window yields `mu0` everywhere.
    #[inline]
    pub fn estimate_into(&self, sums: &[f64], count: u64, mu0: f64, out: &mut [f64]) -> Result<()> {
        if count == 0 {
            out.fill(mu0);
            return Ok(());
        }
        let inv = 1.0 / count as f64;
        match self {
            EstimatorRule::Mle => {
                for (o, s) in out.iter_mut().zip(sums) {
                    *o = s * inv;
                }
            }
            EstimatorRule::LinearShrink { c, omega } => {
                let keep = 1.0 - c;
                for ((o, s), w) in out.iter_mut().zip(sums).zip(omega.iter()) {
                    *o = keep * w + c * (s * inv);
                }
            }
            EstimatorRule::JsAdaptive { omega, clamp } => {
                let p = sums.len();
                if p < 3 {
                    return Err(Error::RuleInapplicable(
                        "james-stein factor needs at least 3 streams".into(),
                    ));
                }
                let dist: f64 = sums.iter().zip(omega.iter()).map(|(s, w)| (s * inv - w).powi(2)).sum();
                let mut factor = if dist > 0.0 {
                    1.0 - ((p as f64 - 2.0) * inv) / dist
                } else {
                    0.0
                };
                if *clamp {
                    factor = factor.clamp(0.0, 1.0);
                }
                for ((o, s), w) in out.iter_mut().zip(sums).zip(omega.iter()) {
                    *o = w + factor * (s * inv - w);
                }
            }
            EstimatorRule::HardThreshold { omega } => {
                for ((o, s), w) in out.iter_mut().zip(sums).zip(omega.iter()) {
                    let y = s * inv;
                    *o = if y >= *w { y } else { mu0 };
                }
            }
            EstimatorRule::SoftThreshold { omega } => {
                for ((o, s), w) in out.iter_mut().zip(sums).zip(omega.iter()) {
                    let y = s * inv;
                    *o = if y >= *w { y - w } else { mu0 };
                }
            }
            EstimatorRule::AffineThreshold { omega, a, b, c0 } => {
                for (((o, s), w), ak) in out.iter_mut().zip(sums).zip(omega.iter()).zip(a.iter()) {
                    let y = s * inv;
                    *o = if y >= *w { ak + b * y } else { *c0 };
                }
            }
            EstimatorRule::Ewma { .. } => {
                return Err(Error::RuleInapplicable(
                    "the ewma rule carries its own recursive state; use ewma_update".into(),
                ))
            }
        }
        Ok(())
    }
}

/// Per-stream sums and count of the observations in an estimation window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub sums: Vec<f64>,
    pub count: u64,
}

impl RunningStats {
    pub fn new(p: usize) -> Self {
        RunningStats { sums: vec![0.0; p], count: 0 }
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        check_len(self.sums.len(), x.len())?;
        for (s, v) in self.sums.iter_mut().zip(x) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    /// Value-returning form of [`RunningStats::update`].
    pub fn updated(&self, x: &[f64]) -> Result<RunningStats> {
        let mut next = self.clone();
        next.update(x)?;
        Ok(next)
    }

    pub fn means(&self) -> Option<Vec<f64>> {
        (self.count > 0).then(|| self.sums.iter().map(|s| s / self.count as f64).collect())
    }
}

pub fn stats_update(stats: &RunningStats, x: &[f64]) -> Result<RunningStats> {
    stats.updated(x)
}

/// Applies `rule` to `stats`.
pub fn estimate(rule: &EstimatorRule, stats: &RunningStats, model: &ModelSpec) -> Result<MeanVector> {
    check_len(model.p, stats.sums.len())?;
    rule.validate(model)?;
    let mut out = vec![0.0; model.p];
    rule.estimate_into(&stats.sums, stats.count, model.mu0, &mut out)?;
    Ok(MeanVector(out))
}

/// One step of the exponentially weighted mean `delta * current + (1 - delta) * x`.
pub fn ewma_update(current: &[f64], x: &[f64], delta: f64) -> Result<MeanVector> {
    check_len(current.len(), x.len())?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(domain(format!("ewma delta {delta} outside [0, 1]")));
    }
    Ok(MeanVector(
        current.iter().zip(x).map(|(c, v)| delta * c + (1.0 - delta) * v).collect(),
    ))
}

/// Hard-thresholded EWMA estimate: entries below `omega` fall back to `mu0`.
pub fn ewma_threshold(current: &[f64], omega: &[f64], model: &ModelSpec) -> Result<MeanVector> {
    check_len(current.len(), omega.len())?;
    Ok(MeanVector(
        current
            .iter()
            .zip(omega)
            .map(|(&c, &w)| if c >= w { c } else { model.mu0 })
            .collect(),
    ))
}
