use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synthpop::{ChainConfig, Error, GatePolicy, Result};

/// Environment variables that override the path fields of a run config.
pub const PATH_ENV: [(&str, PathField); 6] = [
    ("SYNTHPOP_INPUT", PathField::Input),
    ("SYNTHPOP_SCHEMA", PathField::Schema),
    ("SYNTHPOP_PACK", PathField::Pack),
    ("SYNTHPOP_OUTPUT_DIR", PathField::OutputDir),
    ("SYNTHPOP_SOURCE", PathField::Source),
    ("SYNTHPOP_SYNTHETIC", PathField::Synthetic),
];

#[derive(Debug, Clone, Copy)]
pub enum PathField {
    Input,
    Schema,
    Pack,
    OutputDir,
    Source,
    Synthetic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// Pre-built imputation replicates (CSV, same schema as the input).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub imputations: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pack: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<PathBuf>,
}

impl Paths {
    pub fn set(&mut self, field: PathField, value: PathBuf) {
        let slot = match field {
            PathField::Input => &mut self.input,
            PathField::Schema => &mut self.schema,
            PathField::Pack => &mut self.pack,
            PathField::OutputDir => &mut self.output_dir,
            PathField::Source => &mut self.source,
            PathField::Synthetic => &mut self.synthetic,
        };
        *slot = Some(value);
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for p in [
            &mut self.input,
            &mut self.schema,
            &mut self.pack,
            &mut self.output_dir,
            &mut self.source,
            &mut self.synthetic,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        self.imputations.iter_mut().for_each(fix);
    }
}

/// A path to a chain JSON file or the chain itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainRef {
    Path(PathBuf),
    Inline(Box<ChainConfig>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disclosure {
    pub policy: GatePolicy,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
}

fn default_min_count() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTarget {
    pub variable: String,
    pub target: f64,
}

impl CalibrationTarget {
    /// Parses `variable=target`.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let (v, t) = text
            .split_once('=')
            .ok_or_else(|| format!("expected <variable>=<prevalence>, got `{text}`"))?;
        let target = t
            .trim()
            .parse()
            .map_err(|_| format!("`{t}` is not a number"))?;
        Ok(Self {
            variable: v.trim().to_string(),
            target,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluation {
    /// `variable` (mean) or `variable=level` (prevalence).
    pub targets: Vec<String>,
    /// Stratum variables; the age variable is recoded to age classes.
    pub strata: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Imputation {
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Variables to fill; defaults to the dependents of imputed-replicate
    /// entries that are not probabilities.
    #[serde(default)]
    pub variables: Vec<String>,
    /// Rows take part when any of these is observed; defaults to `variables`.
    #[serde(default)]
    pub participation: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disclosure: Option<Disclosure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub calibrations: Vec<CalibrationTarget>,
    pub evaluation: Evaluation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub imputation: Option<Imputation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_draws: Option<usize>,
    pub presence: bool,
}

impl RunConfig {
    /// Reads `path` (relative paths resolve against its directory), then
    /// applies environment path overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let mut c: RunConfig = serde_json::from_str(&text)
                    .map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))?;
                let dir = p.parent().unwrap_or(Path::new("."));
                c.paths.rebase(dir);
                if let Some(ChainRef::Path(cp)) = &mut c.chain {
                    if cp.is_relative() {
                        *cp = dir.join(&*cp);
                    }
                }
                c
            }
            None => RunConfig::default(),
        };
        for (var, field) in PATH_ENV {
            if let Some(v) = env::var_os(var).filter(|v| !v.is_empty()) {
                config.paths.set(field, PathBuf::from(v));
            }
        }
        Ok(config)
    }

    pub fn chain(&self) -> Result<Option<ChainConfig>> {
        match &self.chain {
            None => Ok(None),
            Some(ChainRef::Inline(c)) => Ok(Some((**c).clone())),
            Some(ChainRef::Path(p)) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                ChainConfig::from_json(&text)
                    .map(Some)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }
}

/// Fails when `path` is unset or does not exist.
pub fn require_path<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("no {what} path given (config, flag or environment)")))?;
    if !p.exists() {
        return Err(Error::InvalidArgument(format!("{what} path `{}` does not exist", p.display())));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_targets_parse() {
        let t = CalibrationTarget::parse("lung_cancer=0.0014").unwrap();
        assert_eq!(t.variable, "lung_cancer");
        assert_eq!(t.target, 0.0014);
        assert!(CalibrationTarget::parse("lung_cancer").is_err());
        assert!(CalibrationTarget::parse("x=abc").is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "chain": "c.json"}"#).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.chain, Some(ChainRef::Path("c.json".into())));
    }
}
