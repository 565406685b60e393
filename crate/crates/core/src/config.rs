//! Scenario description: plant, sensors, channel and experiment settings.
//!
//! A scenario is read from a TOML file with four sections:
//!
//! ```toml
//! [system]
//! a = 1.3
//! b = 1.0
//! sigma_p2 = 0.1
//! q = 1.0
//! r = 1.0
//!
//! [channel]
//! t_d = 1
//!
//! [[sensor]]
//! sigma_o2 = 0.05
//! p_obs = 1.0
//!
//! [experiment]
//! horizon = 10000
//! x0 = 1.0
//! policy = "sliding:4"
//! seeds = [1, 2, 3]
//! ```
//!
//! Unknown keys are rejected. [`validate_scenario`] collects every violation
//! instead of stopping at the first one.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_AGE_CAP: u32 = 64;
pub const DEFAULT_DP_AGE_CAP: u32 = 16;
pub const DEFAULT_GAIN: f64 = 0.5;

/// Plant, cost and process-noise constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Plant coefficient.
    pub a: f64,
    /// Input coefficient.
    pub b: f64,
    /// Process-noise variance.
    pub sigma_p2: f64,
    /// State cost weight.
    #[serde(rename = "q")]
    pub q_weight: f64,
    /// Input cost weight.
    #[serde(rename = "r")]
    pub r_weight: f64,
}

impl SystemParams {
    /// Plant and weights used by every scheduling study: a=1.3, b=1, Q=R=1, σ_p²=0.1.
    pub fn reference() -> Self {
        Self {
            a: 1.3,
            b: 1.0,
            sigma_p2: 0.1,
            q_weight: 1.0,
            r_weight: 1.0,
        }
    }

    pub fn with_sigma_p2(mut self, sigma_p2: f64) -> Self {
        self.sigma_p2 = sigma_p2;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    /// Observation-noise variance.
    pub sigma_o2: f64,
    /// Probability of taking a new observation in a slot.
    pub p_obs: f64,
}

impl SensorSpec {
    pub fn new(sigma_o2: f64, p_obs: f64) -> Self {
        Self { sigma_o2, p_obs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Fixed transmission delay in slots.
    pub t_d: u32,
}

/// How the estimator picks k(t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainMode {
    /// The configured gain on every update.
    #[default]
    Constant,
    /// Per-slot minimiser of the one-step mean-square error.
    Minimizing,
}

/// Which weight sits next to b²P in the control gain and the cost coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlGainForm {
    /// L = −abP/(R + b²P), the certainty-equivalent LQR gain.
    #[default]
    InputWeight,
    /// L = −abP/(Q + b²P).
    StateWeight,
}

/// Estimate the controller starts from at slot 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialEstimate {
    #[default]
    TrueState,
    Zero,
}

/// Scheduling policy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Random,
    AgeMinimal,
    VarianceMinimal,
    Greedy,
    SlidingWindow { window: u32 },
}

impl PolicyKind {
    pub fn window(self) -> Option<u32> {
        match self {
            PolicyKind::Greedy => Some(1),
            PolicyKind::SlidingWindow { window } => Some(window),
            _ => None,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Random => f.write_str("random"),
            PolicyKind::AgeMinimal => f.write_str("age-min"),
            PolicyKind::VarianceMinimal => f.write_str("var-min"),
            PolicyKind::Greedy => f.write_str("greedy"),
            PolicyKind::SlidingWindow { window } => write!(f, "sliding:{window}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown policy `{0}` (expected random, age-min, var-min, greedy or sliding:N)")]
pub struct ParsePolicyError(String);

impl FromStr for PolicyKind {
    type Err = ParsePolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(PolicyKind::Random),
            "age-min" => Ok(PolicyKind::AgeMinimal),
            "var-min" => Ok(PolicyKind::VarianceMinimal),
            "greedy" => Ok(PolicyKind::Greedy),
            other => other
                .strip_prefix("sliding:")
                .and_then(|n| n.parse::<u32>().ok())
                .map(|window| PolicyKind::SlidingWindow { window })
                .ok_or_else(|| ParsePolicyError(s.to_string())),
        }
    }
}

impl Serialize for PolicyKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicyKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_age_cap() -> u32 {
    DEFAULT_AGE_CAP
}

fn default_dp_age_cap() -> u32 {
    DEFAULT_DP_AGE_CAP
}

fn default_gain() -> f64 {
    DEFAULT_GAIN
}

fn default_policy() -> PolicyKind {
    PolicyKind::SlidingWindow { window: 4 }
}

/// Run-level settings of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Horizon T in slots.
    pub horizon: u64,
    /// Initial plant state x(0).
    pub x0: f64,
    #[serde(default)]
    pub initial_estimate: InitialEstimate,
    #[serde(default)]
    pub gain_mode: GainMode,
    /// Constant gain k; also the gain assumed inside the scheduling window.
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default)]
    pub control_gain_form: ControlGainForm,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    /// Saturation cap Δ_max for ages tracked by the simulator.
    #[serde(default = "default_age_cap")]
    pub age_cap: u32,
    /// Saturation cap for ages inside the scheduling dynamic program.
    #[serde(default = "default_dp_age_cap")]
    pub dp_age_cap: u32,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemParams,
    pub channel: ChannelSpec,
    #[serde(rename = "sensor")]
    pub sensors: Vec<SensorSpec>,
    pub experiment: ExperimentSpec,
}

impl ScenarioConfig {
    /// Four-sensor scheduling scenario: sensor 1 always observes, the rest
    /// observe with probability `p`.
    pub fn scheduling_reference(sigma_o2: [f64; 4], p: f64, policy: PolicyKind) -> Self {
        let sensors = sigma_o2
            .iter()
            .enumerate()
            .map(|(m, &s)| SensorSpec::new(s, if m == 0 { 1.0 } else { p }))
            .collect();
        Self {
            system: SystemParams::reference(),
            channel: ChannelSpec { t_d: 1 },
            sensors,
            experiment: ExperimentSpec {
                horizon: 10_000,
                x0: 1.0,
                initial_estimate: InitialEstimate::TrueState,
                gain_mode: GainMode::Constant,
                gain: DEFAULT_GAIN,
                control_gain_form: ControlGainForm::InputWeight,
                policy,
                age_cap: DEFAULT_AGE_CAP,
                dp_age_cap: DEFAULT_DP_AGE_CAP,
                seeds: (1..=200).collect(),
            },
        }
    }

    pub fn with_policy(mut self, policy: PolicyKind) -> Self {
        self.experiment.policy = policy;
        self
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises to TOML")
    }

    /// Short content hash of everything except the seed list.
    pub fn config_hash(&self) -> String {
        let mut stripped = self.clone();
        stripped.experiment.seeds.clear();
        let digest = Sha256::digest(stripped.to_toml_string().as_bytes());
        hex::encode(&digest[..6])
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario:\n{0}")]
    Invalid(ValidationErrors),
}

/// A single broken invariant, with the offending field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<Violation>);

impl ValidationErrors {
    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.0.iter().any(|v| v.message.contains(needle))
    }
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.0 {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

/// Checks every invariant of the scenario and returns it unchanged when all hold.
pub fn validate_scenario(cfg: ScenarioConfig) -> Result<ScenarioConfig, ValidationErrors> {
    let mut out = Vec::new();
    let mut push = |field: String, message: &str| {
        out.push(Violation {
            field,
            message: message.to_string(),
        })
    };

    let sys = &cfg.system;
    for (name, v) in [("system.a", sys.a), ("system.b", sys.b)] {
        if !v.is_finite() {
            push(name.into(), "must be finite");
        }
    }
    if !(sys.sigma_p2 > 0.0 && sys.sigma_p2.is_finite()) {
        push("system.sigma_p2".into(), "process-noise variance must be positive");
    }
    if !(sys.q_weight >= 0.0 && sys.q_weight.is_finite()) {
        push("system.q".into(), "state weight must be nonnegative");
    }
    if !(sys.r_weight > 0.0 && sys.r_weight.is_finite()) {
        push("system.r".into(), "input weight must be positive");
    }

    if cfg.sensors.is_empty() {
        push("sensor".into(), "at least one sensor is required");
    }
    for (m, s) in cfg.sensors.iter().enumerate() {
        if !(s.sigma_o2 >= 0.0 && s.sigma_o2.is_finite()) {
            push(
                format!("sensor[{m}].sigma_o2"),
                "observation-noise variance must be nonnegative",
            );
        }
        if !(s.p_obs > 0.0 && s.p_obs <= 1.0) {
            push(format!("sensor[{m}].p_obs"), "probability must be in (0,1]");
        }
    }

    let exp = &cfg.experiment;
    let t_d = cfg.channel.t_d;
    if exp.horizon == 0 {
        push("experiment.horizon".into(), "horizon must be positive");
    }
    if !exp.x0.is_finite() {
        push("experiment.x0".into(), "must be finite");
    }
    if !exp.gain.is_finite() {
        push("experiment.gain".into(), "gain must be finite");
    }
    if let Some(window) = exp.policy.window() {
        if window < 1 {
            push("experiment.policy".into(), "window size N must be at least 1");
        }
    }
    if exp.age_cap < t_d + 1 {
        push("experiment.age_cap".into(), "age cap must be at least t_d + 1");
    }
    if exp.dp_age_cap < t_d + 1 {
        push("experiment.dp_age_cap".into(), "age cap must be at least t_d + 1");
    }

    if out.is_empty() {
        Ok(cfg)
    } else {
        Err(ValidationErrors(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2b() -> ScenarioConfig {
        ScenarioConfig::scheduling_reference([0.3, 0.02, 0.05, 0.2], 0.4, PolicyKind::Greedy)
    }

    #[test]
    fn reference_scenario_is_valid() {
        let cfg = fig2b();
        assert_eq!(validate_scenario(cfg.clone()).unwrap(), cfg);
    }

    #[test]
    fn zero_probability_is_rejected() {
        let mut cfg = fig2b();
        cfg.sensors[2].p_obs = 0.0;
        let errs = validate_scenario(cfg).unwrap_err();
        assert!(errs.mentions("probability must be in (0,1]"));
        assert_eq!(errs.0[0].field, "sensor[2].p_obs");
    }

    #[test]
    fn negative_process_noise_is_rejected() {
        let mut cfg = fig2b();
        cfg.system.sigma_p2 = -0.1;
        let errs = validate_scenario(cfg).unwrap_err();
        assert!(errs.mentions("process-noise variance must be positive"));
    }

    #[test]
    fn all_violations_are_reported() {
        let mut cfg = fig2b();
        cfg.system.sigma_p2 = 0.0;
        cfg.sensors[1].p_obs = 1.5;
        cfg.experiment.policy = PolicyKind::SlidingWindow { window: 0 };
        cfg.experiment.age_cap = 1;
        let errs = validate_scenario(cfg).unwrap_err();
        assert_eq!(errs.len(), 4, "{errs}");

        let mut empty = fig2b();
        empty.sensors.clear();
        assert!(validate_scenario(empty)
            .unwrap_err()
            .mentions("at least one sensor"));
    }

    #[test]
    fn validation_is_idempotent() {
        let once = validate_scenario(fig2b()).unwrap();
        assert_eq!(validate_scenario(once.clone()).unwrap(), once);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [
            PolicyKind::Random,
            PolicyKind::AgeMinimal,
            PolicyKind::VarianceMinimal,
            PolicyKind::Greedy,
            PolicyKind::SlidingWindow { window: 3 },
        ] {
            assert_eq!(p.to_string().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("sliding:x".parse::<PolicyKind>().is_err());
        assert!("best".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = fig2b();
        let text = cfg.to_toml_string();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);

        let bad = text.replace("[channel]", "[channel]\njitter = 2");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&bad),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let text = r#"
            [system]
            a = 1.3
            b = 1.0
            sigma_p2 = 0.1
            q = 1.0
            r = 1.0

            [channel]
            t_d = 1

            [[sensor]]
            sigma_o2 = 0.05
            p_obs = 1.0

            [experiment]
            horizon = 100
            x0 = 1.0
            seeds = [7]
        "#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.experiment.age_cap, DEFAULT_AGE_CAP);
        assert_eq!(cfg.experiment.gain, 0.5);
        assert_eq!(cfg.experiment.gain_mode, GainMode::Constant);
        assert_eq!(cfg.experiment.policy, PolicyKind::SlidingWindow { window: 4 });
        validate_scenario(cfg).unwrap();
    }

    #[test]
    fn hash_ignores_seeds() {
        let a = fig2b();
        let mut b = a.clone();
        b.experiment.seeds = vec![99];
        assert_eq!(a.config_hash(), b.config_hash());
        let c = a.clone().with_policy(PolicyKind::Random);
        assert_ne!(a.config_hash(), c.config_hash());
    }
}
