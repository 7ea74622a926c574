//! Ground-truth populations with known conditional laws.
//!
//! A [`FauxSpec`] lists generative rules in chain order. Every rule is in a
//! family the chain can fit, so a chain fitted on faux data is correctly
//! specified and its errors are sampling noise only.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::chain::{
    default_chain, ChainConfig, Family, FilterOp, MissingPolicy, ModelSpecEntry, PopulationFilter,
    EDUCATION_LEVELS, ETHNIC_GROUP_LEVELS, HOUSEHOLD_SIZE_LEVELS, HOUSEHOLD_TYPE_LEVELS,
    INCOME_SOURCE_LEVELS, NO_YES, SMOKING_LEVELS,
};
use crate::error::{Error, Result};
use crate::generator::gauss_hermite;
use crate::glm::sigmoid;
use crate::rng::{positioned, RngContract};
use crate::schema::{PopulationSchema, SourceTag, VariableKind, VariableSpec};
use crate::table::{Column, PopulationTable, MISSING_CODE};

pub const GENDER_LEVELS: [&str; 2] = ["male", "female"];
pub const SEED_NAMES: [&str; 4] = ["age", "gender", "region", "urbanity"];
/// Default share of rows in the survey subsample.
pub const SURVEY_RATE: f64 = 0.02;
pub const PRESETS: [&str; 3] = ["paperlike-small", "paperlike-full", "paperlike-skewed-bmi"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedShape {
    /// Ages are drawn from 0..=age_max.
    pub age_max: u32,
    /// Age weights are flat up to here, then fall linearly to 2% at age_max.
    pub age_plateau: u32,
    pub regions: usize,
    pub urbanity_levels: usize,
    pub male_share: f64,
}

impl SeedShape {
    pub fn age_weights(&self) -> Vec<f64> {
        let (p, m) = (self.age_plateau as f64, self.age_max as f64);
        let raw: Vec<f64> = (0..=self.age_max)
            .map(|a| {
                let a = a as f64;
                if a <= p || m <= p {
                    1.0
                } else {
                    1.0 - 0.98 * (a - p) / (m - p)
                }
            })
            .collect();
        normalise(raw)
    }

    /// Region r has weight proportional to 1 / (1 + 0.15 r).
    pub fn region_weights(&self) -> Vec<f64> {
        normalise((0..self.regions).map(|r| 1.0 / (1.0 + 0.15 * r as f64)).collect())
    }

    pub fn urbanity_weights(&self) -> Vec<f64> {
        normalise((0..self.urbanity_levels).map(|u| 1.0 + 0.1 * u as f64).collect())
    }

    pub fn region_labels(&self) -> Vec<String> {
        (1..=self.regions).map(|r| format!("R{r:02}")).collect()
    }

    pub fn urbanity_labels(&self) -> Vec<String> {
        (1..=self.urbanity_levels).map(|u| format!("U{u}")).collect()
    }
}

fn normalise(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// One additive contribution to a linear predictor. Missing predictor
/// values contribute nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Effect {
    Constant { value: f64 },
    /// `per_unit * (x - center)` for a numeric variable.
    Slope { variable: String, per_unit: f64, center: f64 },
    /// One value per level code of a categorical variable.
    Level { variable: String, values: Vec<f64> },
}

impl Effect {
    pub fn constant(value: f64) -> Self {
        Effect::Constant { value }
    }

    pub fn slope(variable: &str, per_unit: f64, center: f64) -> Self {
        Effect::Slope {
            variable: variable.into(),
            per_unit,
            center,
        }
    }

    pub fn level(variable: &str, values: &[f64]) -> Self {
        Effect::Level {
            variable: variable.into(),
            values: values.to_vec(),
        }
    }

    fn variable(&self) -> Option<&str> {
        match self {
            Effect::Constant { .. } => None,
            Effect::Slope { variable, .. } | Effect::Level { variable, .. } => Some(variable),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Residual {
    #[default]
    Normal,
    /// Standardized Gamma(shape) residual: skewness 2/sqrt(shape), excess
    /// kurtosis 6/shape.
    Gamma { shape: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Rule {
    /// Softmax over per-level predictors; the first level's list must be
    /// empty (reference).
    Categorical { logits: Vec<Vec<Effect>> },
    /// `P(level 1) = sigmoid(eta)`.
    Logistic { effects: Vec<Effect> },
    Linear {
        effects: Vec<Effect>,
        sigma: f64,
        #[serde(default)]
        residual: Residual,
    },
    /// `sigmoid(eta + sigma * z)`.
    LogitLinear { effects: Vec<Effect>, sigma: f64 },
    /// Deterministic value (level code for categoricals).
    Fixed { value: f64 },
}

impl Rule {
    fn effects(&self) -> Vec<&Effect> {
        match self {
            Rule::Categorical { logits } => logits.iter().flatten().collect(),
            Rule::Logistic { effects } | Rule::Linear { effects, .. } | Rule::LogitLinear { effects, .. } => {
                effects.iter().collect()
            }
            Rule::Fixed { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FauxVariable {
    pub name: String,
    pub kind: VariableKind,
    pub rule: Rule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<PopulationFilter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FauxSpec {
    pub n: usize,
    pub seeds: SeedShape,
    pub variables: Vec<FauxVariable>,
    #[serde(default = "default_survey_rate")]
    pub survey_rate: f64,
    /// Variables observed only in the survey subsample.
    #[serde(default)]
    pub survey_variables: Vec<String>,
    /// Missing-completely-at-random rate per variable.
    #[serde(default)]
    pub mcar: BTreeMap<String, f64>,
}

fn default_survey_rate() -> f64 {
    SURVEY_RATE
}

/// Rule effects resolved against column positions.
#[derive(Debug, Clone)]
enum Compiled {
    Constant(f64),
    Slope(usize, f64, f64),
    Level(usize, Vec<f64>),
}

fn compile(effects: &[Effect], index: &HashMap<&str, usize>) -> Vec<Compiled> {
    effects
        .iter()
        .map(|e| match e {
            Effect::Constant { value } => Compiled::Constant(*value),
            Effect::Slope {
                variable,
                per_unit,
                center,
            } => Compiled::Slope(index[variable.as_str()], *per_unit, *center),
            Effect::Level { variable, values } => Compiled::Level(index[variable.as_str()], values.clone()),
        })
        .collect()
}

fn eval(effects: &[Compiled], values: &[f64]) -> f64 {
    effects
        .iter()
        .map(|e| match e {
            Compiled::Constant(v) => *v,
            Compiled::Slope(i, b, c) => {
                let x = values[*i];
                if x.is_nan() {
                    0.0
                } else {
                    b * (x - c)
                }
            }
            Compiled::Level(i, vals) => {
                let x = values[*i];
                if x.is_nan() {
                    0.0
                } else {
                    vals[x as usize]
                }
            }
        })
        .sum()
}

#[derive(Debug, Clone)]
enum CompiledRule {
    Categorical(Vec<Vec<Compiled>>),
    Logistic(Vec<Compiled>),
    Linear(Vec<Compiled>, f64, Residual),
    LogitLinear(Vec<Compiled>, f64),
    Fixed(f64),
}

struct CompiledSpec {
    rules: Vec<CompiledRule>,
    filters: Vec<Option<(usize, PopulationFilter)>>,
    kinds: Vec<VariableKind>,
}

impl FauxSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paperlike-small" => Ok(paperlike_small()),
            "paperlike-full" => Ok(paperlike_full()),
            "paperlike-skewed-bmi" => Ok(paperlike_skewed_bmi()),
            _ => Err(Error::InvalidArgument(format!(
                "unknown preset `{name}`; available: {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn schema(&self) -> Result<PopulationSchema> {
        let s = &self.seeds;
        let regions = s.region_labels();
        let urb = s.urbanity_labels();
        let strs = |v: &[String]| -> Vec<String> { v.to_vec() };
        let mut vars = vec![
            VariableSpec::continuous("age", Some(0.0), None),
            VariableSpec::categorical("gender", &GENDER_LEVELS),
            VariableSpec {
                name: "region".into(),
                kind: VariableKind::Categorical { levels: strs(&regions) },
                source_tag: SourceTag::Registry,
            },
            VariableSpec {
                name: "urbanity".into(),
                kind: VariableKind::Categorical { levels: strs(&urb) },
                source_tag: SourceTag::Registry,
            },
        ];
        for v in &self.variables {
            let tag = if self.survey_variables.contains(&v.name) {
                SourceTag::Survey
            } else if v.kind == VariableKind::Probability {
                SourceTag::Derived
            } else {
                SourceTag::Registry
            };
            vars.push(VariableSpec {
                name: v.name.clone(),
                kind: v.kind.clone(),
                source_tag: tag,
            });
        }
        PopulationSchema::new(vars, SEED_NAMES.iter().map(|s| s.to_string()).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let schema = self.schema()?;
        let s = &self.seeds;
        if s.regions == 0 || s.urbanity_levels == 0 || !(0.0..=1.0).contains(&s.male_share) {
            return Err(Error::Config("seed shape needs regions, urbanity levels and a share in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.survey_rate) {
            return Err(Error::Config("survey_rate must lie in [0, 1]".into()));
        }
        let mut known: HashSet<&str> = SEED_NAMES.into_iter().collect();
        for v in &self.variables {
            let bad = |m: String| Error::Config(format!("faux rule for `{}`: {m}", v.name));
            for e in v.rule.effects() {
                if let Some(p) = e.variable() {
                    if !known.contains(p) {
                        return Err(bad(format!("`{p}` is not a seed or earlier variable")));
                    }
                    let kind = &schema.variable(p).expect("known").kind;
                    match (e, kind) {
                        (Effect::Level { values, .. }, VariableKind::Categorical { levels }) => {
                            if values.len() != levels.len() {
                                return Err(bad(format!("`{p}` has {} levels, got {} values", levels.len(), values.len())));
                            }
                        }
                        (Effect::Slope { .. }, k) if !k.is_categorical() => {}
                        _ => return Err(bad(format!("effect type does not fit the kind of `{p}`"))),
                    }
                }
            }
            if let Some(f) = &v.filter {
                if !known.contains(f.variable.as_str()) {
                    return Err(bad(format!("filter variable `{}` is not available", f.variable)));
                }
            }
            match (&v.rule, &v.kind) {
                (Rule::Categorical { logits }, VariableKind::Categorical { levels }) => {
                    if logits.len() != levels.len() || !logits[0].is_empty() {
                        return Err(bad("needs one logit list per level, the first empty".into()));
                    }
                }
                (Rule::Logistic { .. }, VariableKind::Categorical { levels }) if levels.len() == 2 => {}
                (Rule::Linear { sigma, residual, .. }, VariableKind::Continuous { .. } | VariableKind::Percentile) => {
                    if *sigma < 0.0 {
                        return Err(bad("sigma must be non-negative".into()));
                    }
                    if let Residual::Gamma { shape } = residual {
                        if *shape <= 0.0 {
                            return Err(bad("gamma shape must be positive".into()));
                        }
                    }
                }
                (Rule::LogitLinear { sigma, .. }, VariableKind::Probability) if *sigma >= 0.0 => {}
                (Rule::Fixed { value }, VariableKind::Categorical { levels }) if (*value as usize) < levels.len() => {}
                (Rule::Fixed { .. }, k) if !k.is_categorical() => {}
                _ => return Err(bad("rule family does not fit the variable kind".into())),
            }
            known.insert(&v.name);
        }
        for (name, rate) in &self.mcar {
            if SEED_NAMES.contains(&name.as_str()) {
                return Err(Error::Config(format!("missingness may not touch seed `{name}`")));
            }
            if !known.contains(name.as_str()) || !(0.0..=1.0).contains(rate) {
                return Err(Error::Config(format!("bad MCAR entry `{name}` = {rate}")));
            }
        }
        for name in &self.survey_variables {
            if !known.contains(name.as_str()) || SEED_NAMES.contains(&name.as_str()) {
                return Err(Error::Config(format!("bad survey variable `{name}`")));
            }
        }
        Ok(())
    }

    fn compiled(&self) -> CompiledSpec {
        let mut index: HashMap<&str, usize> = SEED_NAMES.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        for (i, v) in self.variables.iter().enumerate() {
            index.insert(&v.name, 4 + i);
        }
        let rules = self
            .variables
            .iter()
            .map(|v| match &v.rule {
                Rule::Categorical { logits } => {
                    CompiledRule::Categorical(logits.iter().map(|l| compile(l, &index)).collect())
                }
                Rule::Logistic { effects } => CompiledRule::Logistic(compile(effects, &index)),
                Rule::Linear {
                    effects,
                    sigma,
                    residual,
                } => CompiledRule::Linear(compile(effects, &index), *sigma, *residual),
                Rule::LogitLinear { effects, sigma } => CompiledRule::LogitLinear(compile(effects, &index), *sigma),
                Rule::Fixed { value } => CompiledRule::Fixed(*value),
            })
            .collect();
        let filters = self
            .variables
            .iter()
            .map(|v| v.filter.clone().map(|f| (index[f.variable.as_str()], f)))
            .collect();
        CompiledSpec {
            rules,
            filters,
            kinds: self.variables.iter().map(|v| v.kind.clone()).collect(),
        }
    }

    /// Chain matching this spec: default-chain entries where they exist
    /// (stratifiers absent from the spec removed), otherwise a gender-
    /// stratified entry of the rule's family.
    pub fn chain(&self) -> ChainConfig {
        let mut chain = default_chain();
        let present: HashSet<&str> = SEED_NAMES
            .into_iter()
            .chain(self.variables.iter().map(|v| v.name.as_str()))
            .collect();
        let default_entries = std::mem::take(&mut chain.entries);
        for v in &self.variables {
            let mut entry = default_entries
                .iter()
                .find(|e| e.dependent == v.name)
                .cloned()
                .unwrap_or_else(|| {
                    let family = match (&v.rule, &v.kind) {
                        (Rule::Logistic { .. }, _) => Family::Logistic,
                        (Rule::LogitLinear { .. }, _) => Family::LogitLinear,
                        (_, VariableKind::Categorical { .. }) => Family::Multinomial,
                        _ => Family::Linear,
                    };
                    let mut e = ModelSpecEntry::new(&v.name, family).stratified(&["gender"]);
                    e.population_filter = v.filter.clone();
                    e
                });
            entry.stratifiers.retain(|s| present.contains(s.as_str()));
            if self.survey_variables.contains(&v.name) {
                entry.missing_policy = MissingPolicy::ImputedReplicates;
            }
            chain.entries.push(entry);
        }
        chain
    }

    /// Variables the hot-deck imputer should fill: survey variables and
    /// MCAR-affected variables of imputed entries.
    pub fn imputation_targets(&self) -> Vec<String> {
        self.variables
            .iter()
            .map(|v| v.name.clone())
            .filter(|n| {
                let survey = self.survey_variables.contains(n);
                let mcar = self.mcar.get(n).is_some_and(|&r| r > 0.0);
                (survey && !self.is_probability(n)) || (mcar && !self.survey_variables.is_empty())
            })
            .collect()
    }

    fn is_probability(&self, name: &str) -> bool {
        self.variables
            .iter()
            .any(|v| v.name == name && v.kind == VariableKind::Probability)
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Seeds = 0,
    Survey = 1,
    Mcar = 2,
    Variables = 3,
}

fn categorical_draw(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn cdf_draw(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn softmax(eta: &mut [f64]) {
    let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for e in eta.iter_mut() {
        *e = (*e - m).exp();
        s += *e;
    }
    eta.iter_mut().for_each(|e| *e /= s);
}

fn post_process(kind: &VariableKind, y: f64) -> f64 {
    match kind {
        VariableKind::Percentile => y.round().clamp(1.0, 100.0),
        VariableKind::Continuous { min, max } => {
            let y = min.map_or(y, |m| y.max(m));
            max.map_or(y, |m| y.min(m))
        }
        _ => y,
    }
}

struct Sampler {
    compiled: CompiledSpec,
    age_cdf: Vec<f64>,
    region_cdf: Vec<f64>,
    urbanity_cdf: Vec<f64>,
    male_share: f64,
    base: rand_chacha::ChaCha8Rng,
}

impl Sampler {
    fn new(spec: &FauxSpec, rng: &RngContract) -> Self {
        Self {
            compiled: spec.compiled(),
            age_cdf: cumulative(&spec.seeds.age_weights()),
            region_cdf: cumulative(&spec.seeds.region_weights()),
            urbanity_cdf: cumulative(&spec.seeds.urbanity_weights()),
            male_share: spec.seeds.male_share,
            base: rng.base(),
        }
    }

    /// Latent values of one record: seeds then every variable, NaN where a
    /// filter excludes the record. Categorical codes are stored as f64.
    fn record(&self, row: u64, out: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        out.clear();
        let mut r = positioned(&self.base, row, Slot::Seeds as u64);
        out.push(cdf_draw(&self.age_cdf, r.random()) as f64);
        out.push(if r.random::<f64>() < self.male_share { 0.0 } else { 1.0 });
        out.push(cdf_draw(&self.region_cdf, r.random()) as f64);
        out.push(cdf_draw(&self.urbanity_cdf, r.random()) as f64);
        let c = &self.compiled;
        for (v, rule) in c.rules.iter().enumerate() {
            if let Some((i, f)) = &c.filters[v] {
                let x = out[*i];
                if !f.accepts((!x.is_nan()).then_some(x)) {
                    out.push(f64::NAN);
                    continue;
                }
            }
            let mut r = positioned(&self.base, row, Slot::Variables as u64 + v as u64);
            let value = match rule {
                CompiledRule::Categorical(logits) => {
                    scratch.clear();
                    scratch.extend(logits.iter().map(|l| eval(l, out)));
                    softmax(scratch);
                    categorical_draw(scratch, r.random()) as f64
                }
                CompiledRule::Logistic(effects) => {
                    let p = sigmoid(eval(effects, out));
                    (r.random::<f64>() < p) as u8 as f64
                }
                CompiledRule::Linear(effects, sigma, residual) => {
                    let e = match residual {
                        Residual::Normal => r.sample::<f64, _>(StandardNormal),
                        Residual::Gamma { shape } => {
                            let g: f64 = r.sample(Gamma::new(*shape, 1.0).expect("validated shape"));
                            (g - shape) / shape.sqrt()
                        }
                    };
                    post_process(&c.kinds[v], eval(effects, out) + sigma * e)
                }
                CompiledRule::LogitLinear(effects, sigma) => {
                    let z: f64 = r.sample(StandardNormal);
                    sigmoid(eval(effects, out) + sigma * z)
                }
                CompiledRule::Fixed(value) => *value,
            };
            out.push(value);
        }
    }
}

fn to_columns(schema: &PopulationSchema, rows: &[Vec<f64>]) -> Vec<Column> {
    schema
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| match v.kind {
            VariableKind::Categorical { .. } => Column::Categorical(
                rows.iter()
                    .map(|r| if r[j].is_nan() { MISSING_CODE } else { r[j] as u32 })
                    .collect(),
            ),
            _ => Column::Numeric(rows.iter().map(|r| r[j]).collect()),
        })
        .collect()
}

/// Draws the faux population: latent values from the rules, then survey
/// and MCAR masks. Deterministic in the master seed for any thread count.
pub fn generate_faux(spec: &FauxSpec, rng: &RngContract) -> Result<PopulationTable> {
    spec.validate()?;
    let schema = Arc::new(spec.schema()?);
    let sampler = Sampler::new(spec, rng);
    let survey: Vec<usize> = spec
        .survey_variables
        .iter()
        .map(|n| schema.require(n))
        .collect::<Result<_>>()?;
    let mcar: Vec<(usize, f64)> = spec
        .mcar
        .iter()
        .map(|(n, &r)| Ok((schema.require(n)?, r)))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = (0..spec.n as u64)
        .into_par_iter()
        .map_init(Vec::new, |scratch, row| {
            let mut out = Vec::with_capacity(schema.variables.len());
            sampler.record(row, &mut out, scratch);
            let in_survey = positioned(&sampler.base, row, Slot::Survey as u64).random::<f64>() < spec.survey_rate;
            if !in_survey {
                for &i in &survey {
                    out[i] = f64::NAN;
                }
            }
            let mut r = positioned(&sampler.base, row, Slot::Mcar as u64);
            for &(i, rate) in &mcar {
                if r.random::<f64>() < rate {
                    out[i] = f64::NAN;
                }
            }
            out
        })
        .collect();
    PopulationTable::from_columns(schema.clone(), to_columns(&schema, &rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OracleMethod {
    Exact,
    MonteCarlo { draws: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelShare {
    pub level: String,
    pub share: f64,
    /// Monte-Carlo standard error; 0 for exact values.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub variable: String,
    /// Share of the population inside the variable's filter.
    pub domain: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<LevelShare>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(default)]
    pub mean_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMarginals {
    pub method: OracleMethod,
    pub variables: Vec<Marginal>,
}

impl OracleMarginals {
    pub fn get(&self, name: &str) -> Option<&Marginal> {
        self.variables.iter().find(|m| m.variable == name)
    }
}

/// Draws used when exact propagation is not possible.
pub const BRUTE_FORCE_DRAWS: usize = 10_000_000;

/// Expected marginals of the latent population (masks are MCAR and do not
/// change them). Exact forward propagation over the finite seed-cell
/// distribution when every rule composes in closed form, otherwise a
/// brute-force sample of [`BRUTE_FORCE_DRAWS`] records.
pub fn oracle_marginals(spec: &FauxSpec) -> Result<OracleMarginals> {
    spec.validate()?;
    match exact_marginals(spec)? {
        Some(m) => Ok(m),
        None => brute_force_marginals(spec, BRUTE_FORCE_DRAWS, &RngContract::new(0x0ac1e)),
    }
}

/// Sample means and shares of `draws` latent records with their standard
/// errors.
pub fn brute_force_marginals(spec: &FauxSpec, draws: usize, rng: &RngContract) -> Result<OracleMarginals> {
    spec.validate()?;
    let schema = spec.schema()?;
    let sampler = Sampler::new(spec, rng);
    let width = schema.variables.len();
    #[derive(Clone)]
    struct Acc {
        count: Vec<f64>,
        sum: Vec<f64>,
        sumsq: Vec<f64>,
        levels: Vec<Vec<f64>>,
    }
    let sizes: Vec<usize> = schema
        .variables
        .iter()
        .map(|v| v.kind.levels().map_or(0, |l| l.len()))
        .collect();
    let empty = Acc {
        count: vec![0.0; width],
        sum: vec![0.0; width],
        sumsq: vec![0.0; width],
        levels: sizes.iter().map(|&s| vec![0.0; s]).collect(),
    };
    let parts = crate::glm::kernel::map_chunks(draws, |range| {
        let mut acc = empty.clone();
        let (mut out, mut scratch) = (Vec::new(), Vec::new());
        for row in range {
            sampler.record(row as u64, &mut out, &mut scratch);
            for (j, &x) in out.iter().enumerate() {
                if x.is_nan() {
                    continue;
                }
                acc.count[j] += 1.0;
                if sizes[j] > 0 {
                    acc.levels[j][x as usize] += 1.0;
                } else {
                    acc.sum[j] += x;
                    acc.sumsq[j] += x * x;
                }
            }
        }
        acc
    });
    let mut total = empty;
    for p in parts {
        for j in 0..width {
            total.count[j] += p.count[j];
            total.sum[j] += p.sum[j];
            total.sumsq[j] += p.sumsq[j];
            for (a, b) in total.levels[j].iter_mut().zip(&p.levels[j]) {
                *a += b;
            }
        }
    }
    let variables = schema
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let n = total.count[j];
            let mut m = Marginal {
                variable: v.name.clone(),
                domain: n / draws as f64,
                levels: Vec::new(),
                mean: None,
                sd: None,
                mean_se: 0.0,
            };
            if let Some(levels) = v.kind.levels() {
                m.levels = levels
                    .iter()
                    .zip(&total.levels[j])
                    .map(|(l, &c)| {
                        let p = c / n;
                        LevelShare {
                            level: l.clone(),
                            share: p,
                            se: (p * (1.0 - p) / n).sqrt(),
                        }
                    })
                    .collect();
            } else if n > 1.0 {
                let mean = total.sum[j] / n;
                let var = ((total.sumsq[j] - n * mean * mean) / (n - 1.0)).max(0.0);
                m.mean = Some(mean);
                m.sd = Some(var.sqrt());
                m.mean_se = (var / n).sqrt();
            }
            m
        })
        .collect();
    Ok(OracleMarginals {
        method: OracleMethod::MonteCarlo { draws },
        variables,
    })
}

/// First two moments of `post(mu + sigma Z)` for a normal residual.
fn normal_moments(kind: &VariableKind, mu: f64, sigma: f64) -> (f64, f64) {
    if sigma == 0.0 {
        let y = post_process(kind, mu);
        return (y, y * y);
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    match kind {
        VariableKind::Percentile => {
            let cdf = |x: f64| std.cdf((x - mu) / sigma);
            let (mut m1, mut m2) = (0.0, 0.0);
            for k in 1..=100 {
                let lo = if k == 1 { 0.0 } else { cdf(k as f64 - 0.5) };
                let hi = if k == 100 { 1.0 } else { cdf(k as f64 + 0.5) };
                let p = hi - lo;
                m1 += p * k as f64;
                m2 += p * (k * k) as f64;
            }
            (m1, m2)
        }
        VariableKind::Continuous { min, max } => {
            let (a, b) = (min.unwrap_or(f64::NEG_INFINITY), max.unwrap_or(f64::INFINITY));
            let (al, be) = ((a - mu) / sigma, (b - mu) / sigma);
            let (fa, fb) = (std.cdf(al), std.cdf(be));
            let pdf = |z: f64| if z.is_finite() { std.pdf(z) } else { 0.0 };
            let (pa, pb) = (pdf(al), pdf(be));
            let zpdf = |z: f64, p: f64| if z.is_finite() { z * p } else { 0.0 };
            let tail_lo = if a.is_finite() { fa } else { 0.0 };
            let tail_hi = if b.is_finite() { 1.0 - fb } else { 0.0 };
            let m1 = if a.is_finite() { a * tail_lo } else { 0.0 }
                + if b.is_finite() { b * tail_hi } else { 0.0 }
                + mu * (fb - fa)
                + sigma * (pa - pb);
            let m2 = if a.is_finite() { a * a * tail_lo } else { 0.0 }
                + if b.is_finite() { b * b * tail_hi } else { 0.0 }
                + (mu * mu + sigma * sigma) * (fb - fa)
                + 2.0 * mu * sigma * (pa - pb)
                + sigma * sigma * (zpdf(al, pa) - zpdf(be, pb));
            (m1, m2)
        }
        _ => (mu, mu * mu + sigma * sigma),
    }
}

/// Exact propagation; `None` when a rule needs a non-seed numeric
/// predictor or otherwise has no closed form.
fn exact_marginals(spec: &FauxSpec) -> Result<Option<OracleMarginals>> {
    let schema = spec.schema()?;
    let seeds = &spec.seeds;
    let nvar = schema.variables.len();
    let compiled = spec.compiled();
    // Variables whose values later rules or filters read.
    let mut needed_from: Vec<HashSet<usize>> = vec![HashSet::new(); spec.variables.len() + 1];
    for v in (0..spec.variables.len()).rev() {
        let mut set = needed_from[v + 1].clone();
        let fv = &spec.variables[v];
        for e in fv.rule.effects() {
            if let Some(p) = e.variable() {
                set.insert(schema.require(p)?);
            }
        }
        if let Some(f) = &fv.filter {
            set.insert(schema.require(&f.variable)?);
        }
        needed_from[v] = set;
    }
    for (v, fv) in spec.variables.iter().enumerate() {
        let j = 4 + v;
        let numeric = !fv.kind.is_categorical();
        if numeric && needed_from[v + 1].contains(&j) {
            return Ok(None);
        }
        if matches!(fv.rule, Rule::Linear { residual: Residual::Gamma { .. }, .. })
            && !matches!(fv.kind, VariableKind::Continuous { min: None, max: None })
        {
            return Ok(None);
        }
    }

    let mut marginals: Vec<Marginal> = Vec::with_capacity(nvar);
    let ages = seeds.age_weights();
    let genders = [seeds.male_share, 1.0 - seeds.male_share];
    let regions = seeds.region_weights();
    let urb = seeds.urbanity_weights();
    let mean_age: f64 = ages.iter().enumerate().map(|(a, w)| a as f64 * w).sum();
    let m2_age: f64 = ages.iter().enumerate().map(|(a, w)| (a * a) as f64 * w).sum();
    marginals.push(Marginal {
        variable: "age".into(),
        domain: 1.0,
        levels: Vec::new(),
        mean: Some(mean_age),
        sd: Some((m2_age - mean_age * mean_age).max(0.0).sqrt()),
        mean_se: 0.0,
    });
    for (name, w) in [("gender", &genders[..]), ("region", &regions[..]), ("urbanity", &urb[..])] {
        let levels = schema.variable(name).and_then(|v| v.kind.levels()).expect("seed levels");
        marginals.push(Marginal {
            variable: name.into(),
            domain: 1.0,
            levels: levels
                .iter()
                .zip(w)
                .map(|(l, &p)| LevelShare {
                    level: l.clone(),
                    share: p,
                    se: 0.0,
                })
                .collect(),
            mean: None,
            sd: None,
            mean_se: 0.0,
        });
    }

    // Atoms over the needed variables; other positions hold NaN.
    let live0 = &needed_from[0];
    let mut state: HashMap<Vec<u64>, f64> = HashMap::new();
    let key_of = |values: &[f64], live: &HashSet<usize>| -> Vec<u64> {
        (0..nvar)
            .map(|j| if live.contains(&j) { values[j].to_bits() } else { f64::NAN.to_bits() })
            .collect()
    };
    let mut values = vec![f64::NAN; nvar];
    for (a, &wa) in ages.iter().enumerate() {
        for (g, &wg) in genders.iter().enumerate() {
            for (r, &wr) in regions.iter().enumerate() {
                for (u, &wu) in urb.iter().enumerate() {
                    values[0] = a as f64;
                    values[1] = g as f64;
                    values[2] = r as f64;
                    values[3] = u as f64;
                    *state.entry(key_of(&values, live0)).or_default() += wa * wg * wr * wu;
                }
            }
        }
    }
    let (gh_nodes, gh_weights) = gauss_hermite(32);
    let mut scratch = Vec::new();
    for (v, fv) in spec.variables.iter().enumerate() {
        let j = 4 + v;
        let live = &needed_from[v + 1];
        let mut next: HashMap<Vec<u64>, f64> = HashMap::new();
        let nlev = fv.kind.levels().map_or(0, |l| l.len());
        let mut level_mass = vec![0.0; nlev];
        let (mut domain, mut m1, mut m2) = (0.0, 0.0, 0.0);
        // Keys in sorted order so sums do not depend on hash order.
        let mut atoms: Vec<(Vec<u64>, f64)> = state.into_iter().collect();
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        for (key, w) in atoms {
            let vals: Vec<f64> = key.iter().map(|&b| f64::from_bits(b)).collect();
            let admitted = compiled.filters[v]
                .as_ref()
                .is_none_or(|(i, f)| f.accepts((!vals[*i].is_nan()).then_some(vals[*i])));
            let push = |value: f64, mass: f64, next: &mut HashMap<Vec<u64>, f64>| {
                let mut nv = vals.clone();
                nv[j] = value;
                *next.entry(key_of(&nv, live)).or_default() += mass;
            };
            if !admitted {
                push(f64::NAN, w, &mut next);
                continue;
            }
            domain += w;
            match &compiled.rules[v] {
                CompiledRule::Categorical(logits) => {
                    scratch.clear();
                    scratch.extend(logits.iter().map(|l| eval(l, &vals)));
                    softmax(&mut scratch);
                    for (c, &p) in scratch.iter().enumerate() {
                        level_mass[c] += w * p;
                        push(c as f64, w * p, &mut next);
                    }
                }
                CompiledRule::Logistic(effects) => {
                    let p = sigmoid(eval(effects, &vals));
                    level_mass[0] += w * (1.0 - p);
                    level_mass[1] += w * p;
                    push(0.0, w * (1.0 - p), &mut next);
                    push(1.0, w * p, &mut next);
                }
                CompiledRule::Fixed(value) => {
                    if nlev > 0 {
                        level_mass[*value as usize] += w;
                    } else {
                        m1 += w * value;
                        m2 += w * value * value;
                    }
                    push(*value, w, &mut next);
                }
                CompiledRule::Linear(effects, sigma, _) => {
                    let (a, b) = normal_moments(&fv.kind, eval(effects, &vals), *sigma);
                    m1 += w * a;
                    m2 += w * b;
                    push(f64::NAN, w, &mut next);
                }
                CompiledRule::LogitLinear(effects, sigma) => {
                    let mu = eval(effects, &vals);
                    let (mut a, mut b) = (0.0, 0.0);
                    for (z, q) in gh_nodes.iter().zip(&gh_weights) {
                        let p = sigmoid(mu + sigma * z);
                        a += q * p;
                        b += q * p * p;
                    }
                    m1 += w * a;
                    m2 += w * b;
                    push(f64::NAN, w, &mut next);
                }
            }
        }
        let mut m = Marginal {
            variable: fv.name.clone(),
            domain,
            levels: Vec::new(),
            mean: None,
            sd: None,
            mean_se: 0.0,
        };
        if let Some(levels) = fv.kind.levels() {
            m.levels = levels
                .iter()
                .zip(&level_mass)
                .map(|(l, &p)| LevelShare {
                    level: l.clone(),
                    share: if domain > 0.0 { p / domain } else { 0.0 },
                    se: 0.0,
                })
                .collect();
        } else if domain > 0.0 {
            let mean = m1 / domain;
            m.mean = Some(mean);
            m.sd = Some((m2 / domain - mean * mean).max(0.0).sqrt());
        }
        marginals.push(m);
        state = next;
    }
    Ok(Some(OracleMarginals {
        method: OracleMethod::Exact,
        variables: marginals,
    }))
}

fn log_ratios(percent: &[f64]) -> Vec<f64> {
    percent.iter().map(|p| (p / percent[0]).ln()).collect()
}

fn levels_of(labels: &[&str]) -> VariableKind {
    VariableKind::Categorical {
        levels: labels.iter().map(|s| s.to_string()).collect(),
    }
}

/// Per-level logit lists: constant log-odds plus extra effects per level.
fn logits(percent: &[f64], mut extra: impl FnMut(usize) -> Vec<Effect>) -> Vec<Vec<Effect>> {
    log_ratios(percent)
        .into_iter()
        .enumerate()
        .map(|(j, c)| {
            if j == 0 {
                Vec::new()
            } else {
                let mut v = vec![Effect::constant(c)];
                v.extend(extra(j));
                v
            }
        })
        .collect()
}

fn spaced(n: usize, step: f64) -> Vec<f64> {
    (0..n).map(|i| step * i as f64).collect()
}

fn adult() -> PopulationFilter {
    PopulationFilter::new("age", FilterOp::Gt, 18.0)
}

fn income_source(regions: usize) -> FauxVariable {
    let pct = [47.0, 7.4, 2.4, 0.3, 14.7, 0.4, 1.0, 2.9, 17.8, 3.2, 1.0, 0.8, 0.1, 1.0];
    FauxVariable {
        name: "income_source".into(),
        kind: levels_of(&INCOME_SOURCE_LEVELS),
        rule: Rule::Categorical {
            logits: logits(&pct, |j| match j {
                8 => vec![Effect::slope("age", 0.06, 42.0)],
                11 => vec![Effect::slope("age", -0.05, 42.0)],
                13 => vec![Effect::slope("age", -0.02, 42.0)],
                4 => vec![
                    Effect::level("gender", &[0.0, -0.4]),
                    Effect::level("region", &spaced(regions, 0.04)),
                ],
                5 => vec![Effect::level("region", &spaced(regions, -0.05))],
                1 => vec![Effect::level("gender", &[0.0, 0.3])],
                _ => Vec::new(),
            }),
        },
        filter: None,
    }
}

fn income_pct() -> FauxVariable {
    let by_source = [5.0, 10.0, 20.0, 0.0, 8.0, 15.0, -15.0, -12.0, -5.0, -20.0, -10.0, -18.0, 0.0, -25.0];
    FauxVariable {
        name: "income_pct".into(),
        kind: VariableKind::Percentile,
        rule: Rule::Linear {
            effects: vec![
                Effect::constant(52.0),
                Effect::slope("age", 0.12, 42.0),
                Effect::level("income_source", &by_source),
                Effect::level("gender", &[0.0, -3.0]),
            ],
            sigma: 16.0,
            residual: Residual::Normal,
        },
        filter: None,
    }
}

fn capital_pct(urbanity: usize) -> FauxVariable {
    let by_source = [0.0, 3.0, 12.0, 0.0, 10.0, 20.0, -8.0, -6.0, 4.0, -12.0, -5.0, -10.0, 0.0, -10.0];
    FauxVariable {
        name: "capital_pct".into(),
        kind: VariableKind::Percentile,
        rule: Rule::Linear {
            effects: vec![
                Effect::constant(47.0),
                Effect::slope("age", 0.2, 42.0),
                Effect::level("income_source", &by_source),
                Effect::level("urbanity", &spaced(urbanity, 1.5)),
            ],
            sigma: 17.0,
            residual: Residual::Normal,
        },
        filter: None,
    }
}

fn household_type() -> FauxVariable {
    let mut by_source = [0.0; 14];
    by_source[7] = 1.0;
    by_source[8] = 0.4;
    FauxVariable {
        name: "household_type".into(),
        kind: levels_of(&HOUSEHOLD_TYPE_LEVELS),
        rule: Rule::Logistic {
            effects: vec![
                Effect::constant(-5.2),
                Effect::slope("age", 0.055, 42.0),
                Effect::level("income_source", &by_source),
            ],
        },
        filter: None,
    }
}

fn household_size() -> FauxVariable {
    let pct = [17.5, 29.7, 16.4, 23.1, 9.4, 3.9];
    FauxVariable {
        name: "household_size".into(),
        kind: levels_of(&HOUSEHOLD_SIZE_LEVELS),
        rule: Rule::Categorical {
            logits: logits(&pct, |j| {
                let mut v = vec![Effect::level("household_type", &[0.0, -2.5])];
                v.push(if j == 1 {
                    Effect::slope("age", 0.012, 42.0)
                } else {
                    Effect::slope("age", -0.018, 42.0)
                });
                v
            }),
        },
        filter: None,
    }
}

fn ethnic_group(regions: usize, urbanity: usize) -> FauxVariable {
    let pct = [78.9, 2.2, 2.4, 2.1, 0.9, 4.2, 9.4];
    let mut urban = vec![0.0; urbanity];
    urban[0] = 0.8;
    FauxVariable {
        name: "ethnic_group".into(),
        kind: levels_of(&ETHNIC_GROUP_LEVELS),
        rule: Rule::Categorical {
            logits: logits(&pct, |j| {
                let mut v = vec![Effect::slope("age", -0.012, 42.0)];
                if j < 6 {
                    v.push(Effect::level("urbanity", &urban));
                    v.push(Effect::level("region", &spaced(regions, 0.03)));
                }
                v
            }),
        },
        filter: None,
    }
}

fn education(background: bool) -> FauxVariable {
    let pct = [12.8, 18.8, 41.8, 18.2, 8.4];
    let mut by_ethnic = [0.0; 7];
    by_ethnic[1..6].fill(-0.3);
    let mut by_source = [0.0; 14];
    by_source[1] = 0.8;
    by_source[2] = 0.6;
    FauxVariable {
        name: "education".into(),
        kind: levels_of(&EDUCATION_LEVELS),
        rule: Rule::Categorical {
            logits: logits(&pct, |j| {
                let mut v = vec![Effect::slope("age", -0.005 * j as f64, 42.0)];
                if j >= 3 && background {
                    v.push(Effect::level("ethnic_group", &by_ethnic));
                    v.push(Effect::level("income_source", &by_source));
                }
                v
            }),
        },
        filter: Some(PopulationFilter::new("age", FilterOp::Ge, 15.0)),
    }
}

fn smoking() -> FauxVariable {
    let pct = [41.6, 41.4, 13.3, 3.7];
    FauxVariable {
        name: "smoking".into(),
        kind: levels_of(&SMOKING_LEVELS),
        rule: Rule::Categorical {
            logits: logits(&pct, |j| match j {
                1 => vec![Effect::slope("age", 0.02, 45.0)],
                2 => vec![
                    Effect::slope("age", -0.01, 45.0),
                    Effect::level("education", &[0.0, 0.0, -0.2, -0.4, -0.6]),
                ],
                _ => vec![
                    Effect::level("gender", &[0.0, -0.3]),
                    Effect::level("education", &[0.0, 0.0, -0.3, -0.5, -0.7]),
                ],
            }),
        },
        filter: Some(adult()),
    }
}

fn bmi(residual: Residual) -> FauxVariable {
    FauxVariable {
        name: "bmi".into(),
        kind: VariableKind::Continuous {
            min: Some(10.0),
            max: Some(70.0),
        },
        rule: Rule::Linear {
            effects: vec![
                Effect::constant(25.5),
                Effect::slope("age", 0.04, 45.0),
                Effect::level("smoking", &[0.0, 0.5, -0.5, -0.8]),
                Effect::level("education", &[1.0, 0.6, 0.0, -0.6, -1.0]),
            ],
            sigma: 3.8,
            residual,
        },
        filter: Some(adult()),
    }
}

fn physical_activity() -> FauxVariable {
    FauxVariable {
        name: "physical_activity".into(),
        kind: levels_of(&NO_YES),
        rule: Rule::Categorical {
            logits: vec![
                Vec::new(),
                vec![
                    Effect::constant(0.5),
                    Effect::slope("age", -0.015, 45.0),
                    Effect::level("smoking", &[0.0, 0.0, -0.2, -0.5]),
                    Effect::level("education", &spaced(5, 0.1)),
                ],
            ],
        },
        filter: Some(adult()),
    }
}

fn cancer(name: &str, intercept: f64, per_year: f64, by_smoking: [f64; 4]) -> FauxVariable {
    FauxVariable {
        name: name.into(),
        kind: levels_of(&NO_YES),
        rule: Rule::Logistic {
            effects: vec![
                Effect::constant(intercept),
                Effect::slope("age", per_year, 45.0),
                Effect::level("smoking", &by_smoking),
            ],
        },
        filter: None,
    }
}

fn chronic(name: &str, intercept: f64, extra: Vec<Effect>) -> FauxVariable {
    let mut effects = vec![
        Effect::constant(intercept),
        Effect::slope("age", 0.045, 45.0),
        Effect::level("gender", &[0.0, -0.3]),
    ];
    effects.extend(extra);
    FauxVariable {
        name: name.into(),
        kind: VariableKind::Probability,
        rule: Rule::LogitLinear { effects, sigma: 0.7 },
        filter: Some(adult()),
    }
}

/// Registry part of the chain: 100k rows, six chained variables.
fn paperlike_small() -> FauxSpec {
    let seeds = SeedShape {
        age_max: 107,
        age_plateau: 60,
        regions: 4,
        urbanity_levels: 5,
        male_share: 0.49,
    };
    FauxSpec {
        n: 100_000,
        variables: vec![
            income_source(seeds.regions),
            income_pct(),
            capital_pct(seeds.urbanity_levels),
            household_type(),
            household_size(),
            ethnic_group(seeds.regions, seeds.urbanity_levels),
        ],
        seeds,
        survey_rate: SURVEY_RATE,
        survey_variables: Vec::new(),
        mcar: BTreeMap::new(),
    }
}

/// All sixteen chained variables on 1M rows with a 2% survey subsample.
fn paperlike_full() -> FauxSpec {
    let seeds = SeedShape {
        age_max: 107,
        age_plateau: 60,
        regions: 12,
        urbanity_levels: 5,
        male_share: 0.49,
    };
    let mut spec = FauxSpec {
        n: 1_000_000,
        variables: vec![
            income_source(seeds.regions),
            income_pct(),
            capital_pct(seeds.urbanity_levels),
            household_type(),
            household_size(),
            ethnic_group(seeds.regions, seeds.urbanity_levels),
            education(true),
            smoking(),
            bmi(Residual::Normal),
            physical_activity(),
            cancer("pancreas_cancer", -9.0, 0.06, [0.0, 0.2, 0.5, 0.7]),
            cancer("lung_cancer", -7.4, 0.07, [0.0, 0.8, 1.8, 2.5]),
            chronic("chd", -3.0, vec![Effect::level("smoking", &[0.0, 0.2, 0.4, 0.6])]),
            chronic("stroke", -3.4, vec![Effect::level("smoking", &[0.0, 0.1, 0.3, 0.4])]),
            chronic("diabetes", -2.7, vec![Effect::level("physical_activity", &[0.0, -0.4])]),
            chronic("copd", -3.3, vec![Effect::level("smoking", &[0.0, 0.5, 1.2, 1.6])]),
        ],
        seeds,
        survey_rate: SURVEY_RATE,
        survey_variables: ["smoking", "bmi", "physical_activity", "chd", "stroke", "diabetes", "copd"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        mcar: BTreeMap::new(),
    };
    spec.mcar.insert("education".into(), 0.03);
    spec.mcar.insert("bmi".into(), 0.05);
    spec
}

/// BMI with Gamma(2) residuals (skewness 1.41, excess kurtosis 3), observed
/// for everyone; the chain's normal residuals cannot reproduce its shape.
fn paperlike_skewed_bmi() -> FauxSpec {
    let seeds = SeedShape {
        age_max: 104,
        age_plateau: 60,
        regions: 4,
        urbanity_levels: 3,
        male_share: 0.49,
    };
    FauxSpec {
        n: 1_000_000,
        variables: vec![education(false), smoking(), bmi(Residual::Gamma { shape: 2.0 })],
        seeds,
        survey_rate: 1.0,
        survey_variables: Vec::new(),
        mcar: BTreeMap::new(),
    }
}
