//! Variable declarations for a study: which columns are interventional
//! ratios, which are observed metrics, and how a change in each metric is
//! judged.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NEUTRAL_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    /// Exogenous ratio in [0, 1]; never has parents.
    Interventional,
    Observational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Data,
    Train,
    Test,
    Hyper,
}

impl Tier {
    /// Position in the pipeline; edges may only go from lower to equal or higher rank.
    pub fn rank(self) -> u8 {
        match self {
            Tier::Hyper | Tier::Data => 0,
            Tier::Train => 1,
            Tier::Test => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Maximize,
    Minimize,
    Target(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSign", into = "RawSign")]
pub struct SignSpec {
    pub objective: Objective,
    pub neutral_band: f64,
}

impl SignSpec {
    pub fn new(objective: Objective, neutral_band: f64) -> Result<Self> {
        if !(neutral_band >= 0.0) || !neutral_band.is_finite() {
            return Err(Error::Config(format!(
                "neutral band must be a finite non-negative real, got {neutral_band}"
            )));
        }
        if let Objective::Target(t) = objective {
            if !t.is_finite() {
                return Err(Error::Config(format!("sign target must be finite, got {t}")));
            }
        }
        Ok(Self {
            objective,
            neutral_band,
        })
    }

    pub fn maximize() -> Self {
        Self {
            objective: Objective::Maximize,
            neutral_band: DEFAULT_NEUTRAL_BAND,
        }
    }

    pub fn minimize() -> Self {
        Self {
            objective: Objective::Minimize,
            neutral_band: DEFAULT_NEUTRAL_BAND,
        }
    }

    pub fn target(t: f64) -> Self {
        Self {
            objective: Objective::Target(t),
            neutral_band: DEFAULT_NEUTRAL_BAND,
        }
    }

    pub fn with_band(self, band: f64) -> Result<Self> {
        Self::new(self.objective, band)
    }
}

impl Default for SignSpec {
    fn default() -> Self {
        Self::maximize()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSign {
    objective: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    neutral_band: Option<f64>,
}

impl TryFrom<RawSign> for SignSpec {
    type Error = Error;

    fn try_from(raw: RawSign) -> Result<Self> {
        let objective = match (raw.objective.as_str(), raw.value) {
            ("maximize", _) => Objective::Maximize,
            ("minimize", _) => Objective::Minimize,
            ("target", Some(t)) => Objective::Target(t),
            ("target", None) => return Err(Error::Config("target objective requires a `value`".into())),
            (other, _) => return Err(Error::Config(format!("unknown objective `{other}`"))),
        };
        SignSpec::new(objective, raw.neutral_band.unwrap_or(DEFAULT_NEUTRAL_BAND))
    }
}

impl From<SignSpec> for RawSign {
    fn from(spec: SignSpec) -> Self {
        let (objective, value) = match spec.objective {
            Objective::Maximize => ("maximize", None),
            Objective::Minimize => ("minimize", None),
            Objective::Target(t) => ("target", Some(t)),
        };
        let neutral_band = (spec.neutral_band != DEFAULT_NEUTRAL_BAND).then_some(spec.neutral_band);
        RawSign {
            objective: objective.to_string(),
            value,
            neutral_band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default)]
    pub sign: SignSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<Tier>,
}

impl VariableSpec {
    pub fn interventional(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Interventional,
            sign: SignSpec::default(),
            tier: None,
        }
    }

    pub fn observational(name: impl Into<String>, sign: SignSpec) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Observational,
            sign,
            tier: None,
        }
    }

    pub fn with_tier(mut self, tier: Tier) -> Self {
        self.tier = Some(tier);
        self
    }

    pub fn is_interventional(&self) -> bool {
        self.kind == VariableKind::Interventional
    }
}

/// The study configuration document: an ordered list of declared variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Study {
    pub variables: Vec<VariableSpec>,
}

impl Study {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        check_unique(&variables)?;
        Ok(Self { variables })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let study: Study = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        check_unique(&study.variables)?;
        Ok(study)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("study serializes");
        s.push('\n');
        s
    }

    pub fn get(&self, name: &str) -> Result<&VariableSpec> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }
}

pub(crate) fn check_unique(variables: &[VariableSpec]) -> Result<()> {
    let mut seen = HashSet::new();
    for v in variables {
        if !seen.insert(v.name.as_str()) {
            return Err(Error::DuplicateName(v.name.clone()));
        }
    }
    Ok(())
}
