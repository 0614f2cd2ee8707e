//! Experiment configuration as read from JSON files and CLI flags, and its
//! resolution into concrete parameters.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use privsel_core::beta::{anticoncentration_beta_choice, hypothesis_testing_beta_choice, BetaParams};
use privsel_core::instance::AccuracyReference;
use privsel_core::mechanisms::{Mechanism, MechanismSpec};
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

pub const DEFAULT_TRIALS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Verify,
    Topk,
    Mht,
    Mean,
    Trace,
    Sweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::Verify,
        Self::Topk,
        Self::Mht,
        Self::Mean,
        Self::Trace,
        Self::Sweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::Topk => "topk",
            Self::Mht => "mht",
            Self::Mean => "mean",
            Self::Trace => "trace",
            Self::Sweep => "sweep",
        }
    }

    fn default_mechanism(&self) -> Mechanism {
        match self {
            Self::Mht => Mechanism::SparseVector,
            Self::Mean => Mechanism::GaussianMean,
            _ => Mechanism::Peeling,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::config("kind", format!("unknown experiment kind `{s}`")))
    }
}

/// JSON shape shared by the keyword-or-number settings.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawSetting {
    Number(f64),
    Keyword(String),
}

macro_rules! keyword_setting {
    ($(#[$doc:meta])* $name:ident, $keyword:ident, $text:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(try_from = "RawSetting", into = "RawSetting")]
        pub enum $name {
            $keyword,
            Value(f64),
        }

        impl TryFrom<RawSetting> for $name {
            type Error = String;

            fn try_from(raw: RawSetting) -> std::result::Result<Self, String> {
                match raw {
                    RawSetting::Number(v) => Ok(Self::Value(v)),
                    RawSetting::Keyword(k) if k == $text => Ok(Self::$keyword),
                    RawSetting::Keyword(k) => Err(format!(concat!("expected a number or \"", $text, "\", got \"{}\""), k)),
                }
            }
        }

        impl From<$name> for RawSetting {
            fn from(s: $name) -> Self {
                match s {
                    $name::$keyword => RawSetting::Keyword($text.to_string()),
                    $name::Value(v) => RawSetting::Number(v),
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                if s == $text {
                    return Ok(Self::$keyword);
                }
                s.parse::<f64>()
                    .map(Self::Value)
                    .map_err(|_| format!(concat!("expected a number or `", $text, "`, got `{}`"), s))
            }
        }
    };
}

keyword_setting!(
    /// Prior parameter: a number, or `auto` for the instance-specific choice.
    BetaSetting,
    Auto,
    "auto"
);

keyword_setting!(
    /// A privacy parameter: a number, or `paper` for the regime default.
    RegimeSetting,
    Regime,
    "paper"
);

/// Parameters that a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    N,
    K,
    D,
    Epsilon,
    BetaSym,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::N => "n",
            Self::K => "k",
            Self::D => "d",
            Self::Epsilon => "epsilon",
            Self::BetaSym => "beta_sym",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        [Self::N, Self::K, Self::D, Self::Epsilon, Self::BetaSym]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                HarnessError::config("axis", format!("unknown axis `{s}` (expected n|k|d|epsilon|beta_sym)"))
            })
    }
}

fn default_d() -> usize {
    1024
}

fn default_k() -> usize {
    8
}

fn default_n() -> usize {
    2200
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_epsilon() -> RegimeSetting {
    RegimeSetting::Value(1.0)
}

fn default_delta() -> RegimeSetting {
    RegimeSetting::Regime
}

fn default_beta() -> BetaSetting {
    BetaSetting::Auto
}

fn default_reference() -> String {
    AccuracyReference::default().label().to_string()
}

/// An experiment request. Field names are the JSON config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_beta")]
    pub beta_sym: BetaSetting,
    /// Defaults to `svt` for `mht`, `gauss-mean` for `mean`, else `peeling`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<String>,
    #[serde(default = "default_epsilon")]
    pub epsilon: RegimeSetting,
    #[serde(default = "default_delta")]
    pub delta: RegimeSetting,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_reference")]
    pub reference: String,
    /// Sweep only: the parameter to vary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    /// Sweep only: the values it takes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// Sweep only: the experiment run at each value (default `topk`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_kind: Option<ExperimentKind>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            d: default_d(),
            k: default_k(),
            n: default_n(),
            beta_sym: default_beta(),
            mechanism: None,
            epsilon: default_epsilon(),
            delta: default_delta(),
            trials: default_trials(),
            master_seed: 0,
            reference: default_reference(),
            axis: None,
            values: None,
            base_kind: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// The experiment each record comes from: `base_kind` for sweeps.
    pub fn effective_kind(&self) -> Result<ExperimentKind> {
        match self.kind {
            ExperimentKind::Sweep => match self.base_kind.unwrap_or(ExperimentKind::Topk) {
                ExperimentKind::Sweep | ExperimentKind::Verify => Err(HarnessError::config(
                    "base_kind",
                    "a sweep must run topk, mht, mean or trace",
                )),
                k => Ok(k),
            },
            k => Ok(k),
        }
    }

    /// Sweep axis and values, validated.
    pub fn sweep_plan(&self) -> Result<(SweepAxis, Vec<f64>)> {
        let axis: SweepAxis = self
            .axis
            .as_deref()
            .ok_or_else(|| HarnessError::config("axis", "a sweep needs an axis"))?
            .parse()?;
        let values = self.values.clone().unwrap_or_default();
        if values.is_empty() {
            return Err(HarnessError::config("values", "a sweep needs at least one value"));
        }
        Ok((axis, values))
    }

    /// Copy of this config with `axis` set to `value`, as a single run of the
    /// sweep's base experiment.
    pub fn at_axis_value(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        c.kind = self.effective_kind()?;
        c.axis = None;
        c.values = None;
        c.base_kind = None;
        let count = |field: &'static str| -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(HarnessError::config(field, format!("sweep value {value} is not a positive integer")))
            }
        };
        match axis {
            SweepAxis::N => c.n = count("n")?,
            SweepAxis::K => c.k = count("k")?,
            SweepAxis::D => c.d = count("d")?,
            SweepAxis::Epsilon => c.epsilon = RegimeSetting::Value(value),
            SweepAxis::BetaSym => c.beta_sym = BetaSetting::Value(value),
        }
        Ok(c)
    }

    /// Validates every field and fills in `auto` and `paper` settings.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let kind = self.effective_kind()?;
        let (d, k, n) = (self.d, self.k, self.n);
        if d == 0 {
            return Err(HarnessError::config("d", "must be at least 1"));
        }
        if n == 0 {
            return Err(HarnessError::config("n", "must be at least 1"));
        }
        if k == 0 || k > d {
            return Err(HarnessError::config("k", format!("need 1 <= k <= d = {d}, got {k}")));
        }
        if self.trials < 2 {
            return Err(HarnessError::config("trials", "need at least 2 trials for a confidence interval"));
        }

        let mechanism = match &self.mechanism {
            Some(name) => name
                .parse::<Mechanism>()
                .map_err(|e| HarnessError::config("mechanism", e.to_string()))?,
            None => kind.default_mechanism(),
        };
        let compatible = match kind {
            ExperimentKind::Topk => mechanism.is_top_k(),
            ExperimentKind::Mht => mechanism != Mechanism::GaussianMean,
            ExperimentKind::Mean => mechanism == Mechanism::GaussianMean,
            _ => true,
        };
        if !compatible {
            return Err(HarnessError::config(
                "mechanism",
                format!("`{mechanism}` cannot run a {kind} experiment"),
            ));
        }

        let epsilon = match self.epsilon {
            RegimeSetting::Regime => 1.0,
            RegimeSetting::Value(e) if e > 0.0 && e.is_finite() => e,
            RegimeSetting::Value(e) => return Err(HarnessError::config("epsilon", format!("must be > 0, got {e}"))),
        };

        let beta_sym = match self.beta_sym {
            BetaSetting::Auto => match kind {
                ExperimentKind::Mht => hypothesis_testing_beta_choice(d, k),
                ExperimentKind::Mean => Ok(1.0),
                _ => anticoncentration_beta_choice(d, k),
            }
            .map_err(|e| HarnessError::config("beta_sym", e.to_string()))?,
            BetaSetting::Value(b) if b > 0.0 && b.is_finite() => b,
            BetaSetting::Value(b) => return Err(HarnessError::config("beta_sym", format!("must be > 0, got {b}"))),
        };

        let delta = match self.delta {
            RegimeSetting::Regime => match kind {
                ExperimentKind::Mht => 1.0 / (8.0 * n as f64 * d as f64),
                ExperimentKind::Mean => 1.0 / (10.0 * n as f64),
                _ => 1.0 / (n as f64 * d as f64),
            },
            RegimeSetting::Value(v) if (0.0..1.0).contains(&v) => v,
            RegimeSetting::Value(v) => return Err(HarnessError::config("delta", format!("must be in [0, 1), got {v}"))),
        };
        if delta == 0.0 && matches!(mechanism, Mechanism::Peeling | Mechanism::GaussianMean) {
            return Err(HarnessError::config(
                "delta",
                format!("`{mechanism}` needs delta > 0; use rnm or svt for pure epsilon"),
            ));
        }

        let reference: AccuracyReference = self
            .reference
            .parse()
            .map_err(|e: privsel_core::Error| HarnessError::config("reference", e.to_string()))?;

        Ok(ResolvedConfig {
            kind,
            d,
            k,
            n,
            beta_sym,
            mechanism: mechanism.name().to_string(),
            epsilon,
            delta,
            trials: self.trials,
            master_seed: self.master_seed,
            reference: reference.label().to_string(),
        })
    }
}

/// A validated configuration with every setting made concrete; echoed in
/// each result record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub kind: ExperimentKind,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub beta_sym: f64,
    pub mechanism: String,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub reference: String,
}

impl ResolvedConfig {
    pub fn mechanism(&self) -> Mechanism {
        self.mechanism.parse().expect("validated mechanism name")
    }

    pub fn reference(&self) -> AccuracyReference {
        self.reference.parse().expect("validated reference")
    }

    pub fn prior(&self) -> BetaParams {
        BetaParams::symmetric(self.beta_sym).expect("validated beta")
    }

    pub fn mechanism_spec(&self) -> MechanismSpec {
        MechanismSpec::new(self.mechanism(), self.epsilon, self.delta)
    }
}
