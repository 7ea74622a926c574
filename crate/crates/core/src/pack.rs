//! The exportable model pack: seed-stratum counts, fitted equations and
//! their covariances, with canonical serialisation and a disclosure audit.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::chain::{ChainConfig, Family, GatePolicy, PopulationFilter};
use crate::design::{BoundDesign, DesignSpec};
use crate::error::{Error, Result};
use crate::glm::{kernel::dot, sigmoid, softmax_with_reference};
use crate::linalg::LowerTriangular;
use crate::schema::{PopulationSchema, StratumKey, VariableSpec, ZScore};
use crate::table::PopulationTable;

pub const PACK_VERSION: u64 = 1;
pub const PACK_EXTENSION: &str = ".synthpack.json";

/// Tolerance for the positive semi-definiteness check on covariance blocks.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EquationModel {
    Linear {
        coefficients: Vec<f64>,
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<LowerTriangular>,
    },
    /// Probability of the second level of a two-level variable.
    Logistic {
        coefficients: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<LowerTriangular>,
    },
    /// `levels` are the outcome labels fitted in this stratum; the first is
    /// the reference and has no coefficient vector.
    Multinomial {
        levels: Vec<String>,
        coefficients: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<LowerTriangular>,
    },
}

impl EquationModel {
    pub fn covariance(&self) -> Option<&LowerTriangular> {
        match self {
            EquationModel::Linear { covariance, .. }
            | EquationModel::Logistic { covariance, .. }
            | EquationModel::Multinomial { covariance, .. } => covariance.as_ref(),
        }
    }

    /// Flattened coefficients in covariance order.
    pub fn stacked_coefficients(&self) -> Vec<f64> {
        match self {
            EquationModel::Linear { coefficients, .. }
            | EquationModel::Logistic { coefficients, .. } => coefficients.clone(),
            EquationModel::Multinomial { coefficients, .. } => {
                coefficients.iter().flatten().copied().collect()
            }
        }
    }

    pub fn set_stacked_coefficients(&mut self, values: &[f64]) {
        match self {
            EquationModel::Linear { coefficients, .. }
            | EquationModel::Logistic { coefficients, .. } => coefficients.copy_from_slice(values),
            EquationModel::Multinomial { coefficients, .. } => {
                let mut it = values.iter();
                for c in coefficients.iter_mut() {
                    for v in c.iter_mut() {
                        *v = *it.next().expect("conformable coefficients");
                    }
                }
            }
        }
    }

    /// Adds `shift` to the intercept column (of every non-reference level).
    pub fn shift_intercept(&mut self, column: usize, shift: f64) {
        match self {
            EquationModel::Linear { coefficients, .. }
            | EquationModel::Logistic { coefficients, .. } => coefficients[column] += shift,
            EquationModel::Multinomial { coefficients, .. } => {
                for c in coefficients {
                    c[column] += shift;
                }
            }
        }
    }

    fn columns(&self) -> Vec<usize> {
        match self {
            EquationModel::Linear { coefficients, .. }
            | EquationModel::Logistic { coefficients, .. } => vec![coefficients.len()],
            EquationModel::Multinomial { coefficients, .. } => {
                coefficients.iter().map(Vec::len).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub penalty: f64,
    pub dropped: Vec<usize>,
    /// Linear fit with vanishing residuals (sigma forced to 0).
    #[serde(default)]
    pub degenerate: bool,
    /// Number of imputation replicates pooled into this equation.
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equation {
    pub design: DesignSpec,
    pub model: EquationModel,
    /// Rows the equation was estimated on.
    pub n: usize,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumFit {
    pub key: StratumKey,
    /// Training rows in this stratum.
    pub n: usize,
    /// Set when the stratum uses the entry's pooled equation.
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equation: Option<Equation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFit {
    pub dependent: String,
    pub family: Family,
    pub stratifiers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_zscore: Option<ZScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_filter: Option<PopulationFilter>,
    /// Whether a missing predictor without an indicator column leaves the
    /// generated value missing.
    #[serde(default)]
    pub complete_case: bool,
    pub strata: Vec<StratumFit>,
    /// Unstratified fit with stratifiers as dummies, used by fallback strata.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<Equation>,
}

impl EntryFit {
    pub fn equations(&self) -> impl Iterator<Item = &Equation> {
        self.strata
            .iter()
            .filter_map(|s| s.equation.as_ref())
            .chain(self.pooled.iter())
    }

    pub fn equations_mut(&mut self) -> impl Iterator<Item = &mut Equation> {
        self.strata
            .iter_mut()
            .filter_map(|s| s.equation.as_mut())
            .chain(self.pooled.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStratum {
    pub age_from: i64,
    pub age_to: i64,
    pub gender: String,
    pub region: String,
    pub urbanity: String,
    pub count: u64,
    #[serde(default)]
    pub flagged: bool,
}

impl SeedStratum {
    pub fn age_label(&self) -> String {
        if self.age_from == self.age_to {
            self.age_from.to_string()
        } else {
            format!("{}-{}", self.age_from, self.age_to)
        }
    }

    fn cell_label(&self) -> String {
        format!(
            "age={}|gender={}|region={}|urbanity={}",
            self.age_label(),
            self.gender,
            self.region,
            self.urbanity
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStrataTable {
    pub policy: GatePolicy,
    pub min_count: u64,
    pub rows: Vec<SeedStratum>,
}

impl SeedStrataTable {
    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.count).sum()
    }

    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.flagged).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["age", "gender", "region", "urbanity", "count", "flag"])?;
        for r in &self.rows {
            out.write_record([
                r.age_label(),
                r.gender.clone(),
                r.region.clone(),
                r.urbanity.clone(),
                r.count.to_string(),
                (r.flagged as u8).to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<seed strata csv>", e))?;
        Ok(())
    }
}

/// Counts source records per seed cell and applies the disclosure gate.
pub fn export_seed_strata(
    table: &PopulationTable,
    min_count: u64,
    policy: GatePolicy,
) -> Result<SeedStrataTable> {
    let schema = table.schema();
    let idx = |name: &str| schema.require(name);
    let (ai, gi, ri, ui) = (
        idx(schema.age_name())?,
        idx(schema.gender_name())?,
        idx(schema.region_name())?,
        idx(schema.urbanity_name())?,
    );
    let mut counts: BTreeMap<(u32, u32, u32, i64), u64> = BTreeMap::new();
    for row in 0..table.nrows() {
        let age = table.column(ai).value(row).ok_or(Error::MissingSeed {
            row,
            column: schema.age_name().to_string(),
        })?;
        let code = |c: usize, name: &str| {
            table.column(c).code(row).ok_or(Error::MissingSeed {
                row,
                column: name.to_string(),
            })
        };
        let key = (
            code(gi, schema.gender_name())?,
            code(ri, schema.region_name())?,
            code(ui, schema.urbanity_name())?,
            age.round() as i64,
        );
        *counts.entry(key).or_default() += 1;
    }
    let label = |var: usize, code: u32| -> String {
        schema.variables[var].kind.levels().expect("categorical seed")[code as usize].clone()
    };
    let make = |g: u32, r: u32, u: u32, from: i64, to: i64, count: u64| SeedStratum {
        age_from: from,
        age_to: to,
        gender: label(gi, g),
        region: label(ri, r),
        urbanity: label(ui, u),
        count,
        flagged: count < min_count,
    };
    let mut rows = Vec::with_capacity(counts.len());
    match policy {
        GatePolicy::Fail => {
            for (&(g, r, u, a), &c) in &counts {
                let s = make(g, r, u, a, a, c);
                if s.flagged {
                    return Err(Error::Gate {
                        cell: s.cell_label(),
                        count: c,
                        min: min_count,
                    });
                }
                rows.push(s);
            }
        }
        GatePolicy::KeepFlagged => {
            for (&(g, r, u, a), &c) in &counts {
                rows.push(make(g, r, u, a, a, c));
            }
        }
        GatePolicy::MergeAdjacentAge => {
            let mut groups: BTreeMap<(u32, u32, u32), Vec<(i64, u64)>> = BTreeMap::new();
            for (&(g, r, u, a), &c) in &counts {
                groups.entry((g, r, u)).or_default().push((a, c));
            }
            for ((g, r, u), ages) in groups {
                let mut merged: Vec<(i64, i64, u64)> = Vec::new();
                let mut open: Option<(i64, i64, u64)> = None;
                for (a, c) in ages {
                    let cur = match open {
                        Some((from, _, n)) => (from, a, n + c),
                        None => (a, a, c),
                    };
                    if cur.2 >= min_count {
                        merged.push(cur);
                        open = None;
                    } else {
                        open = Some(cur);
                    }
                }
                if let Some((from, to, n)) = open {
                    match merged.last_mut() {
                        Some(last) => {
                            last.1 = to;
                            last.2 += n;
                        }
                        None => {
                            let s = make(g, r, u, from, to, n);
                            return Err(Error::Gate {
                                cell: s.cell_label(),
                                count: n,
                                min: min_count,
                            });
                        }
                    }
                }
                for (from, to, n) in merged {
                    rows.push(make(g, r, u, from, to, n));
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.age_from, a.age_to)
            .cmp(&(b.age_from, b.age_to))
            .then_with(|| seed_order(schema, a).cmp(&seed_order(schema, b)))
    });
    Ok(SeedStrataTable {
        policy,
        min_count,
        rows,
    })
}

fn seed_order(schema: &PopulationSchema, s: &SeedStratum) -> (usize, usize, usize) {
    let pos = |name: &str, label: &str| {
        schema
            .variable(name)
            .and_then(|v| v.kind.levels())
            .and_then(|l| l.iter().position(|x| x == label))
            .unwrap_or(usize::MAX)
    };
    (
        pos(schema.gender_name(), &s.gender),
        pos(schema.region_name(), &s.region),
        pos(schema.urbanity_name(), &s.urbanity),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSnapshot {
    pub hash: String,
    pub variables: Vec<VariableSpec>,
    pub seed_names: Vec<String>,
}

impl SchemaSnapshot {
    pub fn of(schema: &PopulationSchema) -> Self {
        Self {
            hash: schema.content_hash(),
            variables: schema.variables.clone(),
            seed_names: schema.seed_names.clone(),
        }
    }

    pub fn to_schema(&self) -> Result<PopulationSchema> {
        PopulationSchema::new(self.variables.clone(), self.seed_names.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPack {
    pub version: u64,
    pub schema: SchemaSnapshot,
    pub chain: ChainConfig,
    pub seed_strata: SeedStrataTable,
    pub equations: Vec<EntryFit>,
}

fn byte_offset(text: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

fn parse_value(bytes: &[u8]) -> Result<Value> {
    serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })
}

impl ModelPack {
    pub fn schema(&self) -> Result<PopulationSchema> {
        self.schema.to_schema()
    }

    /// Canonical JSON: sorted keys, compact, shortest round-trip floats.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_vec(&value)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let value = parse_value(bytes)?;
        Self::from_value(value)
    }

    fn from_value(value: Value) -> Result<Self> {
        let version = value
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Parse {
                offset: 0,
                message: "missing numeric `version`".into(),
            })?;
        if version != PACK_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: PACK_VERSION,
            });
        }
        let pack: ModelPack = serde_json::from_value(value)?;
        let computed = pack.schema()?.content_hash();
        if computed != pack.schema.hash {
            return Err(Error::SchemaHashMismatch {
                recorded: pack.schema.hash.clone(),
                computed,
            });
        }
        pack.validate()?;
        Ok(pack)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }

    /// Structural checks: designs bind against the schema, coefficient
    /// shapes match designs and covariances are symmetric PSD.
    pub fn validate(&self) -> Result<()> {
        let schema = self.schema()?;
        self.chain.validate(&schema)?;
        if self.equations.len() != self.chain.entries.len() {
            return Err(Error::Schema(format!(
                "{} fitted entries for {} chain entries",
                self.equations.len(),
                self.chain.entries.len()
            )));
        }
        for (entry, spec) in self.equations.iter().zip(&self.chain.entries) {
            if entry.dependent != spec.dependent {
                return Err(Error::Schema(format!(
                    "fitted entry `{}` out of chain order (expected `{}`)",
                    entry.dependent, spec.dependent
                )));
            }
            for s in &entry.strata {
                if s.fallback != s.equation.is_none() {
                    return Err(Error::Schema(format!(
                        "stratum {} of `{}`: fallback flag inconsistent with equation",
                        s.key, entry.dependent
                    )));
                }
                if s.fallback && entry.pooled.is_none() {
                    return Err(Error::Schema(format!(
                        "stratum {} of `{}` falls back but no pooled equation exists",
                        s.key, entry.dependent
                    )));
                }
            }
            for eq in entry.equations() {
                let bound = eq.design.bind(&schema)?;
                let k = bound.ncols();
                if eq.model.columns().iter().any(|&c| c != k) {
                    return Err(Error::Schema(format!(
                        "equation of `{}` has coefficients not matching {k} design columns",
                        entry.dependent
                    )));
                }
                if let Some(cov) = eq.model.covariance() {
                    let p = eq.model.stacked_coefficients().len();
                    if cov.dim != p || cov.values.len() != p * (p + 1) / 2 {
                        return Err(Error::Schema(format!(
                            "covariance of `{}` has wrong dimension",
                            entry.dependent
                        )));
                    }
                    if !cov.is_finite() {
                        return Err(Error::Schema(format!(
                            "non-finite covariance in `{}`",
                            entry.dependent
                        )));
                    }
                    let scale = cov.diagonal().iter().fold(1.0f64, |m, v| m.max(v.abs()));
                    if cov.min_eigenvalue() < -PSD_TOL * scale {
                        return Err(Error::Schema(format!(
                            "covariance of `{}` is not positive semi-definite",
                            entry.dependent
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-entry, per-stratum fit summary as JSON lines.
    pub fn fit_log(&self) -> Vec<Value> {
        let mut out = Vec::new();
        for entry in &self.equations {
            for s in &entry.strata {
                let eq = s.equation.as_ref().or(entry.pooled.as_ref());
                out.push(serde_json::json!({
                    "entry": entry.dependent,
                    "stratum": s.key.to_string(),
                    "n": s.n,
                    "fallback": s.fallback,
                    "converged": eq.map(|e| e.diagnostics.converged),
                    "iterations": eq.map(|e| e.diagnostics.iterations),
                    "penalty": eq.map(|e| e.diagnostics.penalty),
                    "dropped_columns": eq.map(|e| e.diagnostics.dropped.len()),
                    "replicates": eq.map(|e| e.diagnostics.replicates),
                }));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditViolation {
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub passed: bool,
    /// Seed strata below the minimum kept under the waiver policy.
    pub flagged_strata: usize,
    pub violations: Vec<AuditViolation>,
}

/// Audits a pack document as stored: any content the typed pack does not
/// account for counts as a record-level payload.
pub fn audit_document(bytes: &[u8]) -> AuditReport {
    let violation = |rule: &str, detail: String| AuditReport {
        passed: false,
        flagged_strata: 0,
        violations: vec![AuditViolation {
            rule: rule.into(),
            detail,
        }],
    };
    let raw = match parse_value(bytes) {
        Ok(v) => v,
        Err(e) => return violation("format", e.to_string()),
    };
    let pack: ModelPack = match serde_json::from_value(raw.clone()) {
        Ok(p) => p,
        Err(e) => return violation("format", e.to_string()),
    };
    let typed = match serde_json::to_value(&pack) {
        Ok(v) => v,
        Err(e) => return violation("format", e.to_string()),
    };
    let mut report = disclosure_audit(&pack);
    let mut extra = Vec::new();
    unexplained_paths(&raw, &typed, "$", &mut extra);
    for path in extra {
        report.violations.push(AuditViolation {
            rule: "record_payload".into(),
            detail: format!("unrecognised content at {path}"),
        });
    }
    report.passed = report.violations.is_empty();
    report
}

fn unexplained_paths(raw: &Value, typed: &Value, path: &str, out: &mut Vec<String>) {
    match (raw, typed) {
        (Value::Object(r), Value::Object(t)) => {
            for (k, v) in r {
                let p = format!("{path}.{k}");
                match t.get(k) {
                    Some(tv) => unexplained_paths(v, tv, &p, out),
                    None if v.is_null() => {}
                    None => out.push(p),
                }
            }
        }
        (Value::Array(r), Value::Array(t)) => {
            if r.len() > t.len() {
                out.push(format!("{path}[{}..]", t.len()));
            }
            for (i, (rv, tv)) in r.iter().zip(t).enumerate() {
                unexplained_paths(rv, tv, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

/// Gate and stratum-size rules on a typed pack.
pub fn disclosure_audit(pack: &ModelPack) -> AuditReport {
    let mut violations = Vec::new();
    let mut push = |rule: &str, detail: String| {
        violations.push(AuditViolation {
            rule: rule.into(),
            detail,
        })
    };
    let strata = &pack.seed_strata;
    for row in &strata.rows {
        let below = row.count < strata.min_count;
        if below && !row.flagged {
            push("gate", format!("seed cell {} has count {} without flag", row.cell_label(), row.count));
        }
        if below && strata.policy != GatePolicy::KeepFlagged {
            push(
                "gate",
                format!(
                    "seed cell {} has count {} under policy {:?}",
                    row.cell_label(),
                    row.count,
                    strata.policy
                ),
            );
        }
        if row.flagged && !below {
            push("gate", format!("seed cell {} flagged but not below minimum", row.cell_label()));
        }
    }
    for entry in &pack.equations {
        for s in &entry.strata {
            if s.n == 0 {
                push("stratum_size", format!("stratum {} of `{}` records no n", s.key, entry.dependent));
            }
            if let Some(eq) = &s.equation {
                if eq.n != s.n {
                    push(
                        "stratum_size",
                        format!(
                            "stratum {} of `{}`: equation n {} differs from stratum n {}",
                            s.key, entry.dependent, eq.n, s.n
                        ),
                    );
                }
                let k = eq.design.ncols();
                if eq.n < k + 2 {
                    push(
                        "stratum_size",
                        format!(
                            "stratum {} of `{}`: n {} below fallback threshold {} without fallback",
                            s.key,
                            entry.dependent,
                            eq.n,
                            k + 2
                        ),
                    );
                }
            }
        }
        if let Some(p) = &entry.pooled {
            if p.n == 0 {
                push("stratum_size", format!("pooled equation of `{}` records no n", entry.dependent));
            }
        }
    }
    AuditReport {
        passed: violations.is_empty(),
        flagged_strata: strata.flagged(),
        violations,
    }
}

/// An equation bound to a schema, ready to evaluate design rows.
#[derive(Debug, Clone)]
pub struct BoundEquation {
    pub design: BoundDesign,
    pub model: EquationModel,
    /// Schema codes of the multinomial levels, in model order.
    pub level_codes: Vec<u32>,
}

impl BoundEquation {
    pub fn new(eq: &Equation, schema: &PopulationSchema, dependent: usize) -> Result<Self> {
        let level_codes = match &eq.model {
            EquationModel::Multinomial { levels, .. } => {
                let all = schema.variables[dependent].kind.levels().ok_or_else(|| {
                    Error::Schema("multinomial dependent is not categorical".into())
                })?;
                levels
                    .iter()
                    .map(|l| {
                        all.iter()
                            .position(|a| a == l)
                            .map(|p| p as u32)
                            .ok_or_else(|| Error::Schema(format!("unknown level `{l}`")))
                    })
                    .collect::<Result<_>>()?
            }
            _ => Vec::new(),
        };
        Ok(Self {
            design: eq.design.bind(schema)?,
            model: eq.model.clone(),
            level_codes,
        })
    }

    /// Linear predictor (linear, logistic) of a filled design row.
    pub fn eta(&self, x: &[f64]) -> f64 {
        match &self.model {
            EquationModel::Linear { coefficients, .. }
            | EquationModel::Logistic { coefficients, .. } => dot(x, coefficients),
            EquationModel::Multinomial { .. } => f64::NAN,
        }
    }

    /// Class probabilities (multinomial) written to `out`, one per level.
    pub fn class_probabilities(&self, x: &[f64], eta: &mut Vec<f64>, out: &mut Vec<f64>) {
        match &self.model {
            EquationModel::Multinomial { coefficients, .. } => {
                eta.clear();
                eta.extend(coefficients.iter().map(|c| dot(x, c)));
                out.resize(eta.len() + 1, 0.0);
                softmax_with_reference(eta, out);
            }
            EquationModel::Logistic { coefficients, .. } => {
                let p = sigmoid(dot(x, coefficients));
                out.clear();
                out.extend([1.0 - p, p]);
            }
            EquationModel::Linear { .. } => out.clear(),
        }
    }
}

/// Stratum lookup and bound equations for one fitted entry.
#[derive(Debug, Clone)]
pub struct BoundEntry {
    pub dependent: usize,
    pub family: Family,
    pub response_zscore: Option<ZScore>,
    pub filter: Option<(usize, PopulationFilter)>,
    pub complete_case: bool,
    stratifiers: Vec<usize>,
    lookup: HashMap<Vec<u32>, usize>,
    pub equations: Vec<BoundEquation>,
    pooled: Option<usize>,
}

impl BoundEntry {
    pub fn new(entry: &EntryFit, schema: &PopulationSchema) -> Result<Self> {
        let dependent = schema.require(&entry.dependent)?;
        let stratifiers: Vec<usize> = entry
            .stratifiers
            .iter()
            .map(|s| schema.require(s))
            .collect::<Result<_>>()?;
        let mut equations = Vec::new();
        let mut lookup = HashMap::new();
        let pooled = match &entry.pooled {
            Some(eq) => {
                equations.push(BoundEquation::new(eq, schema, dependent)?);
                Some(0)
            }
            None => None,
        };
        for s in &entry.strata {
            let mut codes = Vec::with_capacity(stratifiers.len());
            for &v in &stratifiers {
                let name = &schema.variables[v].name;
                let label = s.key.level_of(name).ok_or_else(|| {
                    Error::Schema(format!("stratum key {} lacks `{name}`", s.key))
                })?;
                let code = schema.variables[v]
                    .kind
                    .levels()
                    .and_then(|l| l.iter().position(|x| x == label))
                    .ok_or_else(|| Error::Schema(format!("unknown level `{label}` of `{name}`")))?;
                codes.push(code as u32);
            }
            let index = match &s.equation {
                Some(eq) => {
                    equations.push(BoundEquation::new(eq, schema, dependent)?);
                    equations.len() - 1
                }
                None => pooled.ok_or_else(|| Error::NoEquation {
                    entry: entry.dependent.clone(),
                    stratum: s.key.to_string(),
                })?,
            };
            lookup.insert(codes, index);
        }
        let filter = match &entry.population_filter {
            Some(f) => Some((schema.require(&f.variable)?, f.clone())),
            None => None,
        };
        Ok(Self {
            dependent,
            family: entry.family,
            response_zscore: entry.response_zscore,
            filter,
            complete_case: entry.complete_case,
            stratifiers,
            lookup,
            equations,
            pooled,
        })
    }

    pub fn in_filter(&self, table: &PopulationTable, row: usize) -> bool {
        match &self.filter {
            Some((v, f)) => f.accepts(table.column(*v).value(row)),
            None => true,
        }
    }

    /// Equation for the record's stratum, falling back to the pooled one.
    pub fn equation_for(&self, table: &PopulationTable, row: usize, codes: &mut Vec<u32>) -> Option<&BoundEquation> {
        codes.clear();
        for &v in &self.stratifiers {
            match table.column(v).code(row) {
                Some(c) => codes.push(c),
                None => return self.pooled.map(|p| &self.equations[p]),
            }
        }
        self.lookup
            .get(codes.as_slice())
            .or(self.pooled.as_ref())
            .map(|&i| &self.equations[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::VariableSpec;
    use crate::table::Column;
    use std::sync::Arc;

    pub(crate) fn seed_schema() -> Arc<PopulationSchema> {
        Arc::new(
            PopulationSchema::new(
                vec![
                    VariableSpec::continuous("age", Some(0.0), None),
                    VariableSpec::categorical("gender", &["M", "F"]),
                    VariableSpec::categorical("region", &["R1", "R2"]),
                    VariableSpec::categorical("urbanity", &["U1", "U2", "U3"]),
                ],
                ["age", "gender", "region", "urbanity"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            )
            .unwrap(),
        )
    }

    fn seeds(rows: &[(f64, u32, u32, u32, usize)]) -> PopulationTable {
        let mut cols = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        let mut age = Vec::new();
        for &(a, g, r, u, count) in rows {
            for _ in 0..count {
                age.push(a);
                cols[1].push(g);
                cols[2].push(r);
                cols[3].push(u);
            }
        }
        let [_, g, r, u] = cols;
        PopulationTable::from_columns(
            seed_schema(),
            vec![
                Column::Numeric(age),
                Column::Categorical(g),
                Column::Categorical(r),
                Column::Categorical(u),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identical_rows_form_one_stratum() {
        let t = seeds(&[(40.0, 0, 0, 2, 100)]);
        let s = export_seed_strata(&t, 10, GatePolicy::Fail).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].count, 100);
        assert_eq!(s.total(), 100);
    }

    #[test]
    fn fail_policy_names_cell() {
        let t = seeds(&[(40.0, 0, 0, 2, 100), (41.0, 1, 1, 0, 9)]);
        match export_seed_strata(&t, 10, GatePolicy::Fail) {
            Err(Error::Gate { cell, count, min }) => {
                assert_eq!(count, 9);
                assert_eq!(min, 10);
                assert!(cell.contains("age=41") && cell.contains("gender=F"));
            }
            other => panic!("expected gate error, got {other:?}"),
        }
    }

    #[test]
    fn merge_combines_adjacent_ages() {
        let t = seeds(&[(30.0, 0, 0, 0, 9), (31.0, 0, 0, 0, 14), (50.0, 0, 0, 0, 20), (51.0, 0, 0, 0, 3)]);
        let s = export_seed_strata(&t, 10, GatePolicy::MergeAdjacentAge).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert_eq!((s.rows[0].age_from, s.rows[0].age_to, s.rows[0].count), (30, 31, 23));
        assert_eq!((s.rows[1].age_from, s.rows[1].age_to, s.rows[1].count), (50, 51, 23));
        assert_eq!(s.total(), 46);
        assert!(s.rows.iter().all(|r| r.count >= 10 && !r.flagged));
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("age,gender,region,urbanity,count,flag\n30-31,M,R1,U1,23,0\n"));
    }

    #[test]
    fn keep_flagged_marks_small_cells() {
        let t = seeds(&[(40.0, 0, 0, 2, 100), (41.0, 1, 1, 0, 7)]);
        let s = export_seed_strata(&t, 10, GatePolicy::KeepFlagged).unwrap();
        assert_eq!(s.flagged(), 1);
        assert_eq!(s.total(), 107);
    }

    #[test]
    fn byte_offsets() {
        assert_eq!(byte_offset(b"abc\ndef", 2, 2), 5);
        let text = b"{\"a\": [1, 2";
        match parse_value(text) {
            Err(Error::Parse { offset, .. }) => assert!((9..=text.len()).contains(&offset)),
            other => panic!("expected a parse error, got {other:?}"),
        }
        match parse_value(b"{\"a\": 1,\n \"b\": x}") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 15),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }
}
