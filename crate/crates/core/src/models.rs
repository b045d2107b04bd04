//! Distribution families, log-likelihood-ratio increments, information numbers,
//! renewal overshoot constants and the closed forms used to check simulations.

use std::ops::Deref;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, domain, Error, Result};
use crate::normal;

/// Smallest Poisson rate used inside a logarithm.
pub const POISSON_RATE_FLOOR: f64 = 1e-8;

/// Largest shrinkage factor accepted anywhere (the simulation grid's upper end).
pub const MAX_SHRINKAGE: f64 = 1.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GaussianUnitVar,
    Poisson,
}

/// Observation model shared by every stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub mu0: f64,
    pub p: usize,
}

impl ModelSpec {
    pub fn new(family: Family, mu0: f64, p: usize) -> Result<Self> {
        let model = ModelSpec { family, mu0, p };
        model.validate()?;
        Ok(model)
    }

    /// Unit-variance normal streams with pre-change mean 0.
    pub fn gaussian(p: usize) -> Self {
        ModelSpec { family: Family::GaussianUnitVar, mu0: 0.0, p }
    }

    pub fn poisson(mu0: f64, p: usize) -> Result<Self> {
        Self::new(Family::Poisson, mu0, p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(domain("stream count p must be at least 1"));
        }
        match self.family {
            Family::GaussianUnitVar if self.mu0 != 0.0 => {
                Err(domain("gaussian model requires mu0 = 0"))
            }
            Family::Poisson if !(self.mu0 > 0.0 && self.mu0.is_finite()) => {
                Err(domain("poisson model requires a finite mu0 > 0"))
            }
            _ => Ok(()),
        }
    }

    /// Pre-change mean broadcast over all streams.
    pub fn null_mean(&self) -> MeanVector {
        MeanVector(vec![self.mu0; self.p])
    }

    /// Unchecked log-likelihood ratio `log f_{mu_hat}(x) / f_{mu0}(x)` with the
    /// Poisson zero-rate floor applied. The flag reports whether flooring fired.
    #[inline]
    pub fn llr(&self, mu_hat: f64, x: f64) -> (f64, bool) {
        match self.family {
            Family::GaussianUnitVar => (mu_hat * x - 0.5 * mu_hat * mu_hat, false),
            Family::Poisson => {
                if x == 0.0 {
                    (-(mu_hat - self.mu0), false)
                } else if mu_hat < POISSON_RATE_FLOOR {
                    let m = POISSON_RATE_FLOOR;
                    (x * (m / self.mu0).ln() - (m - self.mu0), true)
                } else {
                    (x * (mu_hat / self.mu0).ln() - (mu_hat - self.mu0), false)
                }
            }
        }
    }

    /// Summed log-likelihood ratio over streams. Returns the number of floored terms.
    #[inline]
    pub fn llr_sum(&self, mu_hat: &[f64], x: &[f64]) -> (f64, u32) {
        let mut total = 0.0;
        let mut floored = 0;
        match self.family {
            Family::GaussianUnitVar => {
                for (&m, &xk) in mu_hat.iter().zip(x) {
                    total += m * (xk - 0.5 * m);
                }
            }
            Family::Poisson => {
                for (&m, &xk) in mu_hat.iter().zip(x) {
                    let (v, f) = self.llr(m, xk);
                    total += v;
                    floored += f as u32;
                }
            }
        }
        (total, floored)
    }
}

/// Per-stream vector of means (true post-change means, shrinkage targets,
/// limits of estimators).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeanVector(pub Vec<f64>);

impl MeanVector {
    pub fn splat(value: f64, p: usize) -> Self {
        MeanVector(vec![value; p])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

impl Deref for MeanVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for MeanVector {
    fn from(v: Vec<f64>) -> Self {
        MeanVector(v)
    }
}

impl<const N: usize> From<[f64; N]> for MeanVector {
    fn from(v: [f64; N]) -> Self {
        MeanVector(v.to_vec())
    }
}

/// Checked single-stream log-likelihood-ratio increment.
pub fn llr_increment(model: &ModelSpec, mu_hat: f64, x: f64) -> Result<f64> {
    if model.family == Family::Poisson {
        if !(x >= 0.0 && x.fract() == 0.0 && x.is_finite()) {
            return Err(domain(format!("poisson observation must be a nonnegative integer, got {x}")));
        }
        if !(mu_hat >= 0.0) {
            return Err(domain(format!("poisson rate estimate must be >= 0, got {mu_hat}")));
        }
    }
    Ok(model.llr(mu_hat, x).0)
}

/// Expected per-step log-likelihood drift `E_mu log f_{mu*}(X) / f_phi(X)`.
pub fn info_number(model: &ModelSpec, mu_star: &[f64], phi: &[f64], mu: &[f64]) -> Result<f64> {
    check_len(model.p, mu_star.len())?;
    check_len(model.p, phi.len())?;
    check_len(model.p, mu.len())?;
    match model.family {
        Family::GaussianUnitVar => Ok(-0.5
            * mu_star
                .iter()
                .zip(phi)
                .zip(mu)
                .map(|((&s, &f), &m)| (s - f) * (s + f - 2.0 * m))
                .sum::<f64>()),
        Family::Poisson => {
            let mut total = 0.0;
            for ((&s, &f), &m) in mu_star.iter().zip(phi).zip(mu) {
                if !(s > 0.0 && f > 0.0) {
                    return Err(domain("poisson information number needs positive rates"));
                }
                total += m * (s / f).ln() - (s - f);
            }
            Ok(total)
        }
    }
}

fn check_shrinkage(c: f64) -> Result<()> {
    if !(0.0..=MAX_SHRINKAGE).contains(&c) {
        return Err(domain(format!("shrinkage factor {c} outside [0, {MAX_SHRINKAGE}]")));
    }
    if c > 1.0 {
        log::warn!("shrinkage factor {c} > 1 lies outside the range covered by the delay expansions");
    }
    Ok(())
}

/// Limit `mu* = c mu + (1 - c) omega` of the linear-shrinkage estimator.
pub fn shrinkage_limit(mu: &[f64], omega: &[f64], c: f64) -> Vec<f64> {
    mu.iter().zip(omega).map(|(&m, &w)| c * m + (1.0 - c) * w).collect()
}

/// Information against the null for the linear-shrinkage limit.
pub fn info_vs_null_linear(model: &ModelSpec, mu: &[f64], omega: &[f64], c: f64) -> Result<f64> {
    check_shrinkage(c)?;
    check_len(model.p, mu.len())?;
    check_len(model.p, omega.len())?;
    let mu_star = shrinkage_limit(mu, omega, c);
    if model.family == Family::Poisson && mu_star.iter().any(|&s| s <= 0.0) {
        return Err(domain("poisson shrinkage limit must be positive in every stream"));
    }
    info_number(model, &mu_star, &model.null_mean(), mu)
}

/// Information against the null for the hard-thresholding limit, summing over
/// the streams with `mu_k >= omega_k`.
pub fn info_vs_null_threshold(model: &ModelSpec, mu: &[f64], omega: &[f64]) -> Result<f64> {
    check_len(model.p, mu.len())?;
    check_len(model.p, omega.len())?;
    if omega.iter().any(|&w| !(w > 0.0)) {
        return Err(domain("thresholds must be positive"));
    }
    let active = mu.iter().zip(omega).filter(|(m, w)| m >= w).map(|(&m, _)| m);
    match model.family {
        Family::GaussianUnitVar => Ok(0.5 * active.map(|m| m * m).sum::<f64>()),
        Family::Poisson => {
            if model.mu0 != 1.0 {
                return Err(Error::UnsupportedModel(
                    "thresholded poisson information is only defined for mu0 = 1".into(),
                ));
            }
            Ok(active.map(|m| m * m.ln() - m + 1.0).sum())
        }
    }
}

/// Renewal-theoretic overshoot function
/// `nu(x) = 2 x^-2 exp(-2 sum_n n^-1 Phi(-x sqrt(n) / 2))`.
pub fn nu_overshoot(x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(domain(format!("overshoot argument must be positive, got {x}")));
    }
    const MAX_TERMS: u32 = 1_000_000;
    let half = 0.5 * x;
    let mut sum = 0.0;
    for n in 1..=MAX_TERMS {
        let nf = n as f64;
        let term = normal::cdf(-half * nf.sqrt()) / nf;
        sum += term;
        if term < 1e-12 {
            break;
        }
    }
    Ok(2.0 / (x * x) * (-2.0 * sum).exp())
}

/// Overshoot correction `gamma` for the linear-shrinkage SPRT/SRRS under the
/// Gaussian model. Constant `nu(||omega||)` for `c < 1`; for `c = 1` a Monte
/// Carlo average of `nu(||y||)` with `y_k ~ N(0, pi^2 / 6)`.
pub fn gamma_factor(
    model: &ModelSpec,
    c: f64,
    omega: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<f64> {
    if model.family != Family::GaussianUnitVar {
        return Err(Error::UnsupportedModel(
            "the overshoot factor has no closed form for poisson streams".into(),
        ));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(domain(format!("gamma factor needs 0 <= c <= 1, got {c}")));
    }
    check_len(model.p, omega.len())?;
    if c < 1.0 {
        let norm = omega.iter().map(|w| w * w).sum::<f64>().sqrt();
        return nu_overshoot(norm);
    }
    if mc_samples == 0 {
        return Err(domain("gamma factor at c = 1 needs at least one sample"));
    }
    let sd = (std::f64::consts::PI.powi(2) / 6.0).sqrt();
    let dist = Normal::new(0.0, sd).expect("finite sd");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..mc_samples {
        let norm_sq: f64 = (0..model.p).map(|_| dist.sample(&mut rng).powi(2)).sum();
        // a zero draw has probability zero; nu(0+) = 1
        total += if norm_sq > 0.0 { nu_overshoot(norm_sq.sqrt())? } else { 1.0 };
    }
    Ok(total / mc_samples as f64)
}

/// Shared first/second-order expected stopping-time form
/// `(b + q log b - q log I) / I`.
pub fn expansion_expected_stop(b: f64, q: f64, info: f64) -> Result<f64> {
    if !(info > 0.0) {
        return Err(domain("information number must be positive"));
    }
    if !(b > 0.0) || !(q >= 0.0) {
        return Err(domain("expansion needs b > 0 and q >= 0"));
    }
    Ok((b + q * b.ln() - q * info.ln()) / info)
}

/// Poisson analogue of the second-order coefficient `p c^2 / 2`.
pub fn q_star_poisson(c: f64, mu: &[f64], omega: &[f64]) -> Result<f64> {
    check_len(mu.len(), omega.len())?;
    let mut total = 0.0;
    for (&m, &w) in mu.iter().zip(omega) {
        let denom = c * m + (1.0 - c) * w;
        if denom <= 0.0 {
            return Err(domain("q* denominator c mu + (1 - c) omega must be positive"));
        }
        total += (c * m / denom).powi(2);
    }
    Ok(0.5 * total)
}

/// Chernoff bound `e^-mu (e mu)^k / k^k` on `P(Y >= k)` for `Y ~ Poisson(mu)`.
pub fn poisson_tail_bound(mu: f64, k: u64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(domain("poisson mean must be positive"));
    }
    let kf = k as f64;
    if kf < mu {
        return Err(domain(format!("tail bound requires k >= mu (k = {k}, mu = {mu})")));
    }
    Ok((kf - mu - kf * (kf / mu).ln()).exp())
}

/// Mean and second moment of `Delta = Y 1{Y >= omega} - mu 1{mu >= omega}`
/// for `Y ~ N(mu, sigma^2)`.
pub fn threshold_moments_gaussian(mu: f64, omega: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(domain("sigma must be positive"));
    }
    if mu == omega {
        return Err(domain("threshold moments are degenerate at mu = omega"));
    }
    let lambda = (omega - mu).abs() / sigma;
    let tail = normal::sf(lambda);
    let dens = normal::pdf(lambda);
    let s2 = sigma * sigma;
    if mu < omega {
        Ok((
            mu * tail + sigma * dens,
            (mu * mu + s2) * tail + (2.0 * mu * sigma + lambda * s2) * dens,
        ))
    } else {
        Ok((
            -mu * tail + sigma * dens,
            (mu * mu - s2) * tail - s2 * lambda * dens + s2,
        ))
    }
}

/// Grid of shrinkage factors `0.01, 0.02, ..., 1.10`.
pub fn default_c_grid() -> Vec<f64> {
    (1..=110).map(|i| i as f64 / 100.0).collect()
}

/// Delay bound being minimized by the theoretical oracle factor, with `B = A`.
pub fn oracle_c_objective(mu: &[f64], omega: &[f64], a: f64, c: f64) -> Option<f64> {
    let p = mu.len() as f64;
    let norm_mu: f64 = mu.iter().map(|m| m * m).sum();
    let dist: f64 = mu.iter().zip(omega).map(|(m, w)| (m - w) * (m - w)).sum();
    let info = 0.5 * (norm_mu - (1.0 - c).powi(2) * dist);
    if !(info > 0.0) {
        return None;
    }
    let q = c * c * p / 2.0;
    Some((a.ln() + q * a.ln().ln() - q * info.ln()) / info)
}

/// Shrinkage factor on the default grid minimizing the delay bound. Ties go to
/// the smaller factor.
pub fn oracle_c_theoretical(mu: &[f64], omega: &[f64], a: f64) -> Result<f64> {
    check_len(mu.len(), omega.len())?;
    if !(a > 1.0) {
        return Err(domain("ARL target must exceed 1"));
    }
    let mut best: Option<(f64, f64)> = None;
    for c in default_c_grid() {
        if let Some(v) = oracle_c_objective(mu, omega, a, c) {
            if best.map_or(true, |(_, bv)| v < bv) {
                best = Some((c, v));
            }
        }
    }
    best.map(|(c, _)| c).ok_or(Error::NoFeasibleFactor)
}

/// MSE-optimal linear shrinkage factor for point estimation.
pub fn oracle_c_point_estimation(mu: &[f64], omega: &[f64], sigma_sq: f64) -> Result<f64> {
    check_len(mu.len(), omega.len())?;
    if !(sigma_sq > 0.0) {
        return Err(domain("sigma^2 must be positive"));
    }
    let dist: f64 = mu.iter().zip(omega).map(|(m, w)| (w - m) * (w - m)).sum();
    Ok(dist / (mu.len() as f64 * sigma_sq + dist))
}

/// Risk `c^2 p sigma^2 + (1 - c)^2 ||omega - mu||^2` of the linear-shrinkage estimator.
pub fn mse_linear_shrinkage(mu: &[f64], omega: &[f64], sigma_sq: f64, c: f64) -> Result<f64> {
    check_len(mu.len(), omega.len())?;
    if !(sigma_sq > 0.0) {
        return Err(domain("sigma^2 must be positive"));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(domain(format!("shrinkage factor must be in [0, 1], got {c}")));
    }
    let dist: f64 = mu.iter().zip(omega).map(|(m, w)| (w - m) * (w - m)).sum();
    Ok(c * c * mu.len() as f64 * sigma_sq + (1.0 - c).powi(2) * dist)
}
