use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{PopulationSchema, VariableKind, ZScore};
use crate::spline::SplineDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Logistic,
    Multinomial,
    LogitLinear,
}

impl Family {
    pub fn is_categorical(self) -> bool {
        matches!(self, Family::Logistic | Family::Multinomial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Transform {
    /// Natural spline; the chain's age spline unless knots are given.
    Spline {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        knots: Option<Vec<f64>>,
    },
    /// Standardise, then natural spline on the z-score knots unless given.
    ZscoreSpline {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        knots: Option<Vec<f64>>,
    },
    Raw,
    /// One indicator per integer value present.
    Factor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOp {
    Gt,
    Ge,
    Lt,
    Le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationFilter {
    pub variable: String,
    pub op: FilterOp,
    pub value: f64,
}

impl PopulationFilter {
    pub fn new(variable: &str, op: FilterOp, value: f64) -> Self {
        Self {
            variable: variable.to_string(),
            op,
            value,
        }
    }

    /// Missing values never pass.
    pub fn accepts(&self, x: Option<f64>) -> bool {
        match x {
            None => false,
            Some(x) => match self.op {
                FilterOp::Gt => x > self.value,
                FilterOp::Ge => x >= self.value,
                FilterOp::Lt => x < self.value,
                FilterOp::Le => x <= self.value,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    CompleteCase,
    MissingIndicator,
    ImputedReplicates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpecEntry {
    pub dependent: String,
    pub family: Family,
    #[serde(default)]
    pub stratifiers: Vec<String>,
    /// Explicit predictor list; when absent the seeds and all earlier
    /// dependents are used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictors: Option<Vec<String>>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub transforms: BTreeMap<String, Transform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_filter: Option<PopulationFilter>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
    /// Model the dependent on the z-score scale.
    #[serde(default)]
    pub standardize_response: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub comment: String,
}

impl ModelSpecEntry {
    pub fn new(dependent: &str, family: Family) -> Self {
        Self {
            dependent: dependent.to_string(),
            family,
            stratifiers: Vec::new(),
            predictors: None,
            exclude: Vec::new(),
            transforms: BTreeMap::new(),
            population_filter: None,
            missing_policy: MissingPolicy::CompleteCase,
            standardize_response: false,
            comment: String::new(),
        }
    }

    pub fn stratified(mut self, by: &[&str]) -> Self {
        self.stratifiers = by.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn filter(mut self, f: PopulationFilter) -> Self {
        self.population_filter = Some(f);
        self
    }

    pub fn policy(mut self, p: MissingPolicy) -> Self {
        self.missing_policy = p;
        self
    }

    pub fn transform(mut self, var: &str, t: Transform) -> Self {
        self.transforms.insert(var.to_string(), t);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ZScoreMode {
    /// Sample mean and sd of the observed source column.
    #[default]
    Sample,
    Fixed { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePolicy {
    Fail,
    MergeAdjacentAge,
    #[default]
    KeepFlagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub entries: Vec<ModelSpecEntry>,
    pub seed_names: Vec<String>,
    pub age_spline: SplineDef,
    pub zscore_spline: SplineDef,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    #[serde(default)]
    pub gate_policy: GatePolicy,
    #[serde(default)]
    pub zscore: ZScoreMode,
}

fn default_min_count() -> u64 {
    10
}

/// Fully resolved transform for one predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Dummies,
    Spline(SplineDef),
    ZscoreSpline(SplineDef),
    Raw,
    Factor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub name: String,
    pub index: usize,
    pub transform: Resolved,
}

impl ChainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn entry_index(&self, dependent: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.dependent == dependent)
    }

    /// Variables available to entry `idx`: seeds, then earlier dependents.
    pub fn available(&self, idx: usize) -> Vec<&str> {
        self.seed_names
            .iter()
            .map(String::as_str)
            .chain(self.entries[..idx].iter().map(|e| e.dependent.as_str()))
            .collect()
    }

    pub fn zscore_for(&self, values: &[f64]) -> Result<ZScore> {
        match self.zscore {
            ZScoreMode::Sample => ZScore::from_sample(values),
            ZScoreMode::Fixed { mean, sd } => ZScore::new(mean, sd),
        }
    }

    pub fn validate(&self, schema: &PopulationSchema) -> Result<()> {
        if self.seed_names != schema.seed_names {
            return Err(Error::Config(format!(
                "chain seed variables {:?} differ from schema seeds {:?}",
                self.seed_names, schema.seed_names
            )));
        }
        self.age_spline.validate()?;
        self.zscore_spline.validate()?;
        if let ZScoreMode::Fixed { mean, sd } = self.zscore {
            ZScore::new(mean, sd)?;
        }
        let mut seen: HashSet<&str> = HashSet::new();
        for (idx, entry) in self.entries.iter().enumerate() {
            let ctx = |msg: String| Error::Config(format!("entry `{}`: {msg}", entry.dependent));
            let spec = schema
                .variable(&entry.dependent)
                .ok_or_else(|| ctx("dependent not in schema".into()))?;
            if schema.is_seed(&entry.dependent) {
                return Err(ctx("seed variables are copied, not modelled".into()));
            }
            if !seen.insert(&entry.dependent) {
                return Err(ctx("dependent modelled twice".into()));
            }
            match (entry.family, &spec.kind) {
                (Family::Linear, VariableKind::Continuous { .. } | VariableKind::Percentile) => {}
                (Family::LogitLinear, VariableKind::Probability) => {}
                (Family::Logistic, VariableKind::Categorical { levels }) if levels.len() == 2 => {}
                (Family::Multinomial, VariableKind::Categorical { levels }) if levels.len() >= 2 => {}
                (family, kind) => {
                    return Err(ctx(format!("family {family:?} cannot model a {kind:?} variable")))
                }
            }
            if entry.standardize_response && entry.family != Family::Linear {
                return Err(ctx("only linear entries can standardise the response".into()));
            }
            let available = self.available(idx);
            let check = |name: &str, role: &str| -> Result<()> {
                if name == entry.dependent {
                    return Err(ctx(format!("{role} `{name}` is the dependent itself")));
                }
                if !available.contains(&name) {
                    return Err(ctx(format!(
                        "{role} `{name}` is neither a seed nor modelled earlier in the chain"
                    )));
                }
                Ok(())
            };
            for s in &entry.stratifiers {
                check(s, "stratifier")?;
                if !schema.variable(s).is_some_and(|v| v.kind.is_categorical()) {
                    return Err(ctx(format!("stratifier `{s}` is not categorical")));
                }
            }
            if let Some(list) = &entry.predictors {
                for p in list {
                    check(p, "predictor")?;
                }
            }
            for p in &entry.exclude {
                check(p, "excluded predictor")?;
            }
            for (var, t) in &entry.transforms {
                check(var, "transformed predictor")?;
                if schema.variable(var).is_some_and(|v| v.kind.is_categorical()) {
                    return Err(ctx(format!("transform {t:?} on categorical `{var}`")));
                }
                if let Transform::Spline { knots: Some(k) } | Transform::ZscoreSpline { knots: Some(k) } = t {
                    SplineDef::new(k.clone())?;
                }
            }
            if let Some(f) = &entry.population_filter {
                check(&f.variable, "filter variable")?;
                if schema.variable(&f.variable).is_some_and(|v| v.kind.is_categorical()) {
                    return Err(ctx(format!("filter variable `{}` is categorical", f.variable)));
                }
            }
        }
        Ok(())
    }

    /// Predictors of entry `idx` with resolved transforms, stratifiers and
    /// exclusions removed.
    pub fn predictors(&self, idx: usize, schema: &PopulationSchema) -> Result<Vec<Predictor>> {
        let entry = &self.entries[idx];
        let names: Vec<&str> = match &entry.predictors {
            Some(list) => list.iter().map(String::as_str).collect(),
            None => self.available(idx),
        };
        let mut out = Vec::new();
        for name in names {
            if entry.stratifiers.iter().any(|s| s == name) || entry.exclude.iter().any(|s| s == name) {
                continue;
            }
            let index = schema.require(name)?;
            let kind = &schema.variables[index].kind;
            let transform = match (entry.transforms.get(name), kind) {
                (_, VariableKind::Categorical { .. }) => Resolved::Dummies,
                (Some(Transform::Spline { knots }), _) => Resolved::Spline(match knots {
                    Some(k) => SplineDef::new(k.clone())?,
                    None => self.age_spline.clone(),
                }),
                (Some(Transform::ZscoreSpline { knots }), _) => Resolved::ZscoreSpline(match knots {
                    Some(k) => SplineDef::new(k.clone())?,
                    None => self.zscore_spline.clone(),
                }),
                (Some(Transform::Raw), _) => Resolved::Raw,
                (Some(Transform::Factor), _) => Resolved::Factor,
                (None, _) if name == schema.age_name() => Resolved::Spline(self.age_spline.clone()),
                (None, VariableKind::Percentile) => Resolved::ZscoreSpline(self.zscore_spline.clone()),
                (None, _) => Resolved::Raw,
            };
            out.push(Predictor {
                name: name.to_string(),
                index,
                transform,
            });
        }
        Ok(out)
    }
}

pub const INCOME_SOURCE_LEVELS: [&str; 14] = [
    "Employee",
    "Civil servant",
    "Salary as company director",
    "Other income from labour",
    "Income as company owner",
    "Income from property",
    "Unemployment benefits",
    "Disability pension",
    "Retirement pension",
    "Social assistance benefits",
    "Other social security",
    "Study grant",
    "Other",
    "no income",
];
pub const HOUSEHOLD_TYPE_LEVELS: [&str; 2] = ["non-institutional", "institutional"];
pub const HOUSEHOLD_SIZE_LEVELS: [&str; 6] = ["1", "2", "3", "4", "5", "6+"];
pub const ETHNIC_GROUP_LEVELS: [&str; 7] = [
    "Dutch",
    "Moroccan",
    "Turkish",
    "Surinam",
    "Netherlands Antilles and Aruba",
    "Other non-Western",
    "Other Western",
];
pub const EDUCATION_LEVELS: [&str; 5] = [
    "Primary or less",
    "Lower secondary",
    "Higher secondary",
    "Lower tertiary",
    "Higher tertiary",
];
pub const SMOKING_LEVELS: [&str; 4] = ["never", "former", "current", "heavy"];
pub const NO_YES: [&str; 2] = ["no", "yes"];

/// Variable names of the default chain, in chain order.
pub const DEFAULT_CHAIN_VARIABLES: [&str; 16] = [
    "income_source",
    "income_pct",
    "capital_pct",
    "household_type",
    "household_size",
    "ethnic_group",
    "education",
    "smoking",
    "bmi",
    "physical_activity",
    "pancreas_cancer",
    "lung_cancer",
    "chd",
    "stroke",
    "diabetes",
    "copd",
];

/// The sixteen-model chain: income, household and background variables
/// on registry data, lifestyle on the survey subsample, then cancers and
/// chronic-disease probabilities.
pub fn default_chain() -> ChainConfig {
    use Family::*;
    use MissingPolicy::*;
    let adult = || PopulationFilter::new("age", FilterOp::Gt, 18.0);
    let mut entries = vec![
        ModelSpecEntry::new("income_source", Multinomial).stratified(&["gender", "region"]),
        ModelSpecEntry::new("income_pct", Linear).stratified(&["gender"]),
        ModelSpecEntry::new("capital_pct", Linear).stratified(&["gender"]),
        ModelSpecEntry::new("household_type", Logistic).stratified(&["gender"]),
        ModelSpecEntry::new("household_size", Multinomial).stratified(&["gender", "household_type"]),
        ModelSpecEntry::new("ethnic_group", Multinomial).stratified(&["gender", "household_type"]),
        ModelSpecEntry::new("education", Multinomial)
            .stratified(&["gender"])
            .filter(PopulationFilter::new("age", FilterOp::Ge, 15.0)),
        ModelSpecEntry::new("smoking", Multinomial)
            .stratified(&["gender"])
            .filter(adult())
            .policy(ImputedReplicates),
        ModelSpecEntry::new("bmi", Linear)
            .stratified(&["gender"])
            .filter(adult())
            .policy(ImputedReplicates),
        ModelSpecEntry::new("physical_activity", Multinomial)
            .stratified(&["gender"])
            .filter(adult())
            .policy(ImputedReplicates),
        ModelSpecEntry::new("pancreas_cancer", Logistic)
            .stratified(&["gender"])
            .policy(MissingIndicator),
        ModelSpecEntry::new("lung_cancer", Logistic)
            .stratified(&["gender"])
            .policy(MissingIndicator),
    ];
    for disease in ["chd", "stroke", "diabetes", "copd"] {
        entries.push(
            ModelSpecEntry::new(disease, LogitLinear)
                .stratified(&["gender"])
                .filter(adult())
                .policy(ImputedReplicates)
                .transform("age", Transform::Factor),
        );
    }
    entries[1].standardize_response = true;
    entries[2].standardize_response = true;
    entries[3].comment = "household size is modelled after household type and is therefore not \
                          a predictor here"
        .into();
    ChainConfig {
        entries,
        seed_names: ["age", "gender", "region", "urbanity"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        age_spline: SplineDef::age(),
        zscore_spline: SplineDef::zscore(),
        min_count: 10,
        gate_policy: GatePolicy::KeepFlagged,
        zscore: ZScoreMode::Sample,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_shape() {
        let c = default_chain();
        assert_eq!(c.entries.len(), 16);
        let names: Vec<&str> = c.entries.iter().map(|e| e.dependent.as_str()).collect();
        assert_eq!(names, DEFAULT_CHAIN_VARIABLES);
        assert_eq!(c.entries[12].family, Family::LogitLinear);
        assert_eq!(SMOKING_LEVELS, ["never", "former", "current", "heavy"]);
        let text = c.to_json_pretty();
        assert_eq!(ChainConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn filter_semantics() {
        let f = PopulationFilter::new("age", FilterOp::Gt, 18.0);
        assert!(!f.accepts(Some(18.0)));
        assert!(f.accepts(Some(19.0)));
        assert!(!f.accepts(None));
    }
}
