//! Variable definitions, population schemas and the small recodes used
//! throughout the pipeline.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VariableKind {
    /// Ordered labels; the first one is the reference level.
    Categorical { levels: Vec<String> },
    Continuous {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
    /// Integer percentile group, 1..=100.
    Percentile,
    /// Real value in [0, 1].
    Probability,
}

impl VariableKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, VariableKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match self {
            VariableKind::Categorical { levels } => Some(levels),
            _ => None,
        }
    }

    /// Checks a numeric value against the kind constraints.
    pub fn check_numeric(&self, value: f64) -> std::result::Result<(), String> {
        if !value.is_finite() {
            return Err(format!("non-finite value {value}"));
        }
        match *self {
            VariableKind::Categorical { .. } => Err("categorical variable given a number".into()),
            VariableKind::Continuous { min, max } => {
                if let Some(lo) = min {
                    if value < lo {
                        return Err(format!("value {value} below minimum {lo}"));
                    }
                }
                if let Some(hi) = max {
                    if value > hi {
                        return Err(format!("value {value} above maximum {hi}"));
                    }
                }
                Ok(())
            }
            VariableKind::Percentile => {
                if value.fract() != 0.0 || !(1.0..=100.0).contains(&value) {
                    Err(format!("percentile {value} is not an integer in 1..=100"))
                } else {
                    Ok(())
                }
            }
            VariableKind::Probability => {
                if (0.0..=1.0).contains(&value) {
                    Ok(())
                } else {
                    Err(format!("probability {value} outside [0, 1]"))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    #[default]
    Registry,
    Survey,
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default)]
    pub source_tag: SourceTag,
}

impl VariableSpec {
    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
            source_tag: SourceTag::Registry,
        }
    }

    pub fn continuous(name: &str, min: Option<f64>, max: Option<f64>) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Continuous { min, max },
            source_tag: SourceTag::Registry,
        }
    }

    pub fn percentile(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Percentile,
            source_tag: SourceTag::Registry,
        }
    }

    pub fn probability(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Probability,
            source_tag: SourceTag::Derived,
        }
    }

    pub fn with_source(mut self, tag: SourceTag) -> Self {
        self.source_tag = tag;
        self
    }
}

/// Ordered variables plus the names of the four seed variables
/// (age, gender, region, urbanity) in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSchema {
    pub variables: Vec<VariableSpec>,
    pub seed_names: Vec<String>,
}

impl PopulationSchema {
    pub fn new(variables: Vec<VariableSpec>, seed_names: Vec<String>) -> Result<Self> {
        let schema = Self {
            variables,
            seed_names,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for v in &self.variables {
            if v.name.is_empty() {
                return Err(Error::Schema("empty variable name".into()));
            }
            if !seen.insert(v.name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable `{}`", v.name)));
            }
            match &v.kind {
                VariableKind::Categorical { levels } => {
                    if levels.is_empty() {
                        return Err(Error::Schema(format!("`{}` has no levels", v.name)));
                    }
                    let mut ls = HashSet::new();
                    for l in levels {
                        if l.is_empty() {
                            return Err(Error::Schema(format!("`{}` has an empty level", v.name)));
                        }
                        if !ls.insert(l.as_str()) {
                            return Err(Error::Schema(format!(
                                "`{}` repeats level `{l}`",
                                v.name
                            )));
                        }
                    }
                }
                VariableKind::Continuous {
                    min: Some(lo),
                    max: Some(hi),
                } if lo > hi => {
                    return Err(Error::Schema(format!("`{}` has min > max", v.name)));
                }
                _ => {}
            }
        }
        if self.seed_names.len() != 4 {
            return Err(Error::Schema(format!(
                "expected 4 seed variables (age, gender, region, urbanity), got {}",
                self.seed_names.len()
            )));
        }
        for (i, name) in self.seed_names.iter().enumerate() {
            let spec = self
                .variable(name)
                .ok_or_else(|| Error::Schema(format!("seed variable `{name}` not in schema")))?;
            let ok = if i == 0 {
                matches!(spec.kind, VariableKind::Continuous { .. })
            } else {
                spec.kind.is_categorical()
            };
            if !ok {
                return Err(Error::Schema(format!(
                    "seed variable `{name}` has the wrong kind"
                )));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn age_name(&self) -> &str {
        &self.seed_names[0]
    }

    pub fn gender_name(&self) -> &str {
        &self.seed_names[1]
    }

    pub fn region_name(&self) -> &str {
        &self.seed_names[2]
    }

    pub fn urbanity_name(&self) -> &str {
        &self.seed_names[3]
    }

    pub fn is_seed(&self, name: &str) -> bool {
        self.seed_names.iter().any(|s| s == name)
    }

    /// Stable content hash of the schema (hex sha256 over canonical JSON).
    pub fn content_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("schema serialises");
        let bytes = serde_json::to_vec(&value).expect("schema serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// A stratum cell identified by (variable, level) pairs, kept sorted by
/// variable name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StratumKey(pub Vec<(String, String)>);

impl StratumKey {
    pub fn new(mut pairs: Vec<(String, String)>) -> Self {
        pairs.sort();
        Self(pairs)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn level_of(&self, variable: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(v, _)| v == variable)
            .map(|(_, l)| l.as_str())
    }
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "(all)");
        }
        let parts: Vec<String> = self.0.iter().map(|(v, l)| format!("{v}={l}")).collect();
        write!(f, "{}", parts.join("|"))
    }
}

/// Eight-level age class: <20, 20-29, ..., 70-79, 80+.
pub fn recode_age_class(age: i64) -> Result<u8> {
    if !(0..=105).contains(&age) {
        return Err(Error::InvalidArgument(format!("age {age} outside 0..=105")));
    }
    Ok(age_class_lenient(age as f64))
}

/// Same classes as [`recode_age_class`] without the range check; ages
/// above 105 land in class 8.
pub fn age_class_lenient(age: f64) -> u8 {
    if age < 20.0 {
        1
    } else if age >= 80.0 {
        8
    } else {
        (age / 10.0).floor() as u8
    }
}

/// Linear standardisation parameters for a percentile column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: f64,
    pub sd: f64,
}

impl ZScore {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !sd.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "z-score needs finite mean and sd > 0 (got mean {mean}, sd {sd})"
            )));
        }
        Ok(Self { mean, sd })
    }

    /// Sample mean and (n-1) standard deviation of the values.
    pub fn from_sample(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least two values to standardise".into(),
            ));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Self::new(mean, (ss / (n - 1.0)).sqrt())
    }

    pub fn forward(&self, p: f64) -> f64 {
        (p - self.mean) / self.sd
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.mean + self.sd * z
    }
}

pub fn percentile_to_zscore(p: f64, mean: f64, sd: f64) -> Result<f64> {
    Ok(ZScore::new(mean, sd)?.forward(p))
}
