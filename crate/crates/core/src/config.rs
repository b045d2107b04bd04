//! TOML run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorSpec;
use crate::error::{Error, Result};
use crate::estimators::EstimatorRule;
use crate::models::{MeanVector, ModelSpec, MAX_SHRINKAGE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mu_post: MeanVector,
}

impl ScenarioConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let parts: Vec<String> = self.mu_post.iter().map(|v| format!("{v}")).collect();
            format!("({})", parts.join(","))
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<u64>,
}

/// Grid over the linear shrinkage factor for `sweep-c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_c_start")]
    pub c_start: f64,
    #[serde(default = "default_c_stop")]
    pub c_stop: f64,
    #[serde(default = "default_c_step")]
    pub c_step: f64,
    pub omega: MeanVector,
    /// Thresholds for the fixed-B sweep.
    #[serde(default)]
    pub fixed_thresholds: Vec<f64>,
}

fn default_c_start() -> f64 {
    0.01
}
fn default_c_stop() -> f64 {
    MAX_SHRINKAGE
}
fn default_c_step() -> f64 {
    0.01
}

impl SweepConfig {
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.c_stop - self.c_start) / self.c_step + 1e-9).floor() as usize;
        (0..=n).map(|i| ((self.c_start + i as f64 * self.c_step) * 1e10).round() / 1e10).collect()
    }
}

fn default_experiment() -> String {
    "run".into()
}
fn default_replications() -> u64 {
    500
}
fn default_seed() -> u64 {
    1
}
fn default_rel_tol() -> f64 {
    0.01
}

/// A single experiment: model, detector, threshold or ARL target, scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    pub model: ModelSpec,
    pub detector: DetectorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_arl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_threshold: Option<f64>,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

fn check_vec(field: &str, v: &MeanVector, p: usize) -> Result<()> {
    if v.len() != p {
        return Err(invalid(field, format!("expected {p} values, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(field, "values must be finite"));
    }
    Ok(())
}

fn estimator_vectors(rule: &EstimatorRule) -> Vec<(&'static str, &MeanVector)> {
    match rule {
        EstimatorRule::Mle => vec![],
        EstimatorRule::LinearShrink { omega, .. }
        | EstimatorRule::JsAdaptive { omega, .. }
        | EstimatorRule::HardThreshold { omega }
        | EstimatorRule::SoftThreshold { omega }
        | EstimatorRule::Ewma { omega, .. } => vec![("omega", omega)],
        EstimatorRule::AffineThreshold { omega, a, .. } => vec![("omega", omega), ("a", a)],
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| invalid("model", e.to_string()))?;
        let p = self.model.p;
        match &self.detector {
            DetectorSpec::Srrs { estimator, .. } | DetectorSpec::Sprt { estimator } => {
                for (name, v) in estimator_vectors(estimator) {
                    check_vec(&format!("detector.estimator.{name}"), v, p)?;
                }
            }
            DetectorSpec::KnownSr { mu } => check_vec("detector.mu", mu, p)?,
            DetectorSpec::Recursive { omega, .. } => check_vec("detector.omega", omega, p)?,
            DetectorSpec::Cusum { mu1, .. } => check_vec("detector.mu1", mu1, p)?,
        }
        self.detector.validate(&self.model).map_err(|e| invalid("detector", e.to_string()))?;

        match (self.target_arl, self.fixed_threshold) {
            // a sweep with its own fixed thresholds needs neither
            (None, None) if self.sweep.as_ref().is_some_and(|s| !s.fixed_thresholds.is_empty()) => {}
            (Some(_), Some(_)) | (None, None) => {
                return Err(invalid("target_arl", "exactly one of target_arl or fixed_threshold must be set"))
            }
            (Some(a), None) if !(a > 1.0 && a.is_finite()) => return Err(invalid("target_arl", "must be a finite value > 1")),
            (None, Some(b)) if b.is_nan() || b.is_infinite() => return Err(invalid("fixed_threshold", "must be finite")),
            _ => {}
        }
        if self.replications < 2 {
            return Err(invalid("replications", "at least 2 replications are required"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must fit in a signed 64-bit integer"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 0.2) {
            return Err(invalid("rel_tol", "must lie in (0, 0.2]"));
        }
        if let Some((lo, hi)) = self.bracket {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(invalid("bracket", "must be [low, high] with low < high"));
            }
        }
        for (name, cap) in [("caps.null", self.caps.null), ("caps.delay", self.caps.delay)] {
            if cap == Some(0) {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            check_vec(&format!("scenarios[{i}].mu_post"), &s.mu_post, p)?;
            if self.model.family == crate::models::Family::Poisson && s.mu_post.iter().any(|&m| m <= 0.0) {
                return Err(invalid(format!("scenarios[{i}].mu_post"), "poisson means must be positive"));
            }
        }
        if let Some(sw) = &self.sweep {
            if !(sw.c_step > 0.0) || !sw.c_step.is_finite() {
                return Err(invalid("sweep.c_step", "must be positive"));
            }
            if !(0.0 <= sw.c_start && sw.c_start <= sw.c_stop && sw.c_stop <= MAX_SHRINKAGE) {
                return Err(invalid("sweep.c_start", format!("need 0 <= c_start <= c_stop <= {MAX_SHRINKAGE}")));
            }
            if sw.grid().len() > 100_000 {
                return Err(invalid("sweep.c_step", "grid is too fine"));
            }
            check_vec("sweep.omega", &sw.omega, p)?;
            if sw.fixed_thresholds.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
                return Err(invalid("sweep.fixed_thresholds", "thresholds must be positive"));
            }
        }
        Ok(())
    }

    /// Target ARL, or a validation error naming the missing field.
    pub fn require_target(&self) -> Result<f64> {
        self.target_arl.ok_or_else(|| invalid("target_arl", "this command needs target_arl"))
    }

    pub fn require_sweep(&self) -> Result<&SweepConfig> {
        self.sweep.as_ref().ok_or_else(|| invalid("sweep", "this command needs a [sweep] table"))
    }

    pub fn null_cap(&self, reference: f64) -> u64 {
        self.caps
            .null
            .unwrap_or((crate::montecarlo::NULL_CAP_FACTOR * reference.max(1.0)).ceil() as u64)
    }

    pub fn delay_cap(&self) -> u64 {
        self.caps.delay.unwrap_or(crate::montecarlo::DELAY_CAP)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BASIC: &str = r#"
experiment = "consensus"
target_arl = 500.0
replications = 500
seed = 7

[model]
family = "gaussian_unit_var"
mu0 = 0.0
p = 3

[detector]
kind = "srrs"

[detector.estimator]
rule = "linear_shrink"
c = 0.5
omega = [0.25, 0.25, 0.25]

[[scenarios]]
mu_post = [1.0, 1.0, 1.0]
"#;

    fn field_of(r: Result<RunConfig>) -> String {
        match r {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_basic_config() {
        let c = RunConfig::from_toml_str(BASIC).unwrap();
        assert_eq!(c.model.p, 3);
        assert_eq!(c.require_target().unwrap(), 500.0);
        assert_eq!(c.scenarios[0].label(), "(1,1,1)");
        assert_eq!(c.rel_tol, 0.01);
        assert_eq!(c.null_cap(500.0), 10_000);
    }

    #[test]
    fn validation_names_fields() {
        let missing = BASIC.replace("target_arl = 500.0\n", "");
        assert_eq!(field_of(RunConfig::from_toml_str(&missing)), "target_arl");
        let both = BASIC.replace("target_arl = 500.0", "target_arl = 500.0\nfixed_threshold = 3.0");
        assert_eq!(field_of(RunConfig::from_toml_str(&both)), "target_arl");
        let short = BASIC.replace("omega = [0.25, 0.25, 0.25]", "omega = [0.25, 0.25]");
        assert_eq!(field_of(RunConfig::from_toml_str(&short)), "detector.estimator.omega");
        let scen = BASIC.replace("mu_post = [1.0, 1.0, 1.0]", "mu_post = [1.0]");
        assert_eq!(field_of(RunConfig::from_toml_str(&scen)), "scenarios[0].mu_post");
        let reps = BASIC.replace("replications = 500", "replications = 1");
        assert_eq!(field_of(RunConfig::from_toml_str(&reps)), "replications");
        let sweep = format!("{BASIC}\n[sweep]\nc_step = 0.0\nomega = [0.25, 0.25, 0.25]\n");
        assert_eq!(field_of(RunConfig::from_toml_str(&sweep)), "sweep.c_step");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = BASIC.replace("seed = 7", "sede = 7");
        assert!(matches!(RunConfig::from_toml_str(&typo), Err(Error::Toml(_))));
    }

    #[test]
    fn fixed_sweep_needs_no_threshold() {
        let base = BASIC.replace("target_arl = 500.0\n", "");
        assert_eq!(field_of(RunConfig::from_toml_str(&base)), "target_arl");
        let empty = format!("{base}\n[sweep]\nomega = [0.25, 0.25, 0.25]\n");
        assert_eq!(field_of(RunConfig::from_toml_str(&empty)), "target_arl");
        let fixed = format!("{base}\n[sweep]\nomega = [0.25, 0.25, 0.25]\nfixed_thresholds = [100.0]\n");
        RunConfig::from_toml_str(&fixed).unwrap();
    }

    #[test]
    fn default_sweep_grid() {
        let sw = SweepConfig { c_start: 0.01, c_stop: 1.10, c_step: 0.01, omega: vec![0.25; 3].into(), fixed_thresholds: vec![] };
        let g = sw.grid();
        assert_eq!(g.len(), 110);
        assert_eq!(g[0], 0.01);
        assert_eq!(*g.last().unwrap(), 1.1);
        assert_eq!(g[49], 0.5);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            1usize..6,
            0.0f64..1.1,
            prop::option::of(1.5f64..1e4),
            0u64..(i64::MAX as u64),
            2u64..5000,
            prop::collection::vec(-3.0f64..3.0, 0..4),
            prop::bool::ANY,
        )
            .prop_map(|(p, c, target, seed, reps, means, sweep)| RunConfig {
                experiment: "prop".into(),
                model: ModelSpec::gaussian(p),
                detector: DetectorSpec::srrs(EstimatorRule::linear(c, vec![0.25; p])),
                fixed_threshold: if target.is_none() { Some(100.0) } else { None },
                target_arl: target,
                replications: reps,
                seed,
                rel_tol: 0.02,
                bracket: None,
                caps: Caps { null: Some(1000), delay: None },
                out_dir: Some("out".into()),
                scenarios: means
                    .iter()
                    .map(|&m| ScenarioConfig { name: None, mu_post: vec![m; p].into() })
                    .collect(),
                sweep: sweep.then(|| SweepConfig {
                    c_start: 0.1,
                    c_stop: 1.0,
                    c_step: 0.1,
                    omega: vec![0.25; p].into(),
                    fixed_thresholds: vec![100.0, 300.0],
                }),
            })
    }

    proptest! {
        #[test]
        fn config_round_trip(cfg in arb_config()) {
            let text = cfg.to_toml_string().unwrap();
            let back = RunConfig::from_toml_str(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }

        #[test]
        fn arbitrary_text_never_panics(s in "\\PC{0,200}") {
            let _ = RunConfig::from_toml_str(&s);
        }
    }
}
