//! Synthetic population construction from a model pack.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::Family;
use crate::error::{Error, Result};
use crate::glm::kernel::map_chunks;
use crate::glm::sigmoid;
use crate::pack::{BoundEntry, ModelPack, SeedStrataTable, PSD_TOL};
use crate::rng::{positioned, RngContract};
use crate::schema::{PopulationSchema, SourceTag, VariableKind, VariableSpec};
use crate::table::{Column, PopulationTable, MISSING_CODE};

pub const MAX_AGE: i64 = 105;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionCounts {
    /// Sum of all stratum counts.
    pub records_in: u64,
    pub records_out: u64,
    /// Records dropped for ages outside 0..=105.
    pub excluded_age: u64,
}

/// Emits `count` seed records per stratum; merged age ranges are spread
/// round-robin over their years.
pub fn expand_seed(
    strata: &SeedStrataTable,
    schema: Arc<PopulationSchema>,
) -> Result<(PopulationTable, ExpansionCounts)> {
    let idx = |name: &str| schema.require(name);
    let (ai, gi, ri, ui) = (
        idx(schema.age_name())?,
        idx(schema.gender_name())?,
        idx(schema.region_name())?,
        idx(schema.urbanity_name())?,
    );
    let code = |var: usize, label: &str| -> Result<u32> {
        schema.variables[var]
            .kind
            .levels()
            .and_then(|l| l.iter().position(|x| x == label))
            .map(|p| p as u32)
            .ok_or_else(|| Error::Schema(format!("unknown seed level `{label}`")))
    };
    let mut age = Vec::new();
    let (mut g, mut r, mut u) = (Vec::new(), Vec::new(), Vec::new());
    let mut counts = ExpansionCounts {
        records_in: 0,
        records_out: 0,
        excluded_age: 0,
    };
    for row in &strata.rows {
        let (gc, rc, uc) = (
            code(gi, &row.gender)?,
            code(ri, &row.region)?,
            code(ui, &row.urbanity)?,
        );
        let span = (row.age_to - row.age_from + 1).max(1) as u64;
        counts.records_in += row.count;
        for k in 0..row.count {
            let a = row.age_from + (k % span) as i64;
            if !(0..=MAX_AGE).contains(&a) {
                counts.excluded_age += 1;
                continue;
            }
            age.push(a as f64);
            g.push(gc);
            r.push(rc);
            u.push(uc);
        }
    }
    let n = age.len();
    counts.records_out = n as u64;
    let mut table = PopulationTable::empty(schema, n);
    *table.column_mut(ai) = Column::Numeric(age);
    *table.column_mut(gi) = Column::Categorical(g);
    *table.column_mut(ri) = Column::Categorical(r);
    *table.column_mut(ui) = Column::Categorical(u);
    Ok((table, counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleOptions {
    /// Also emit a `<variable>_present` Bernoulli draw for logit-linear
    /// (probability) entries.
    pub presence: bool,
    /// Stop before this entry index.
    pub until: Option<usize>,
}

#[derive(Clone, Copy)]
enum Drawn {
    Missing,
    Code(u32),
    Value(f64),
}

fn bind_entries(pack: &ModelPack, schema: &PopulationSchema) -> Result<Vec<BoundEntry>> {
    pack.equations
        .iter()
        .map(|e| BoundEntry::new(e, schema))
        .collect()
}

fn check_seed_schema(pack: &ModelPack, seeds: &PopulationTable) -> Result<()> {
    let computed = seeds.schema().content_hash();
    if computed != pack.schema.hash {
        return Err(Error::SchemaHashMismatch {
            recorded: pack.schema.hash.clone(),
            computed,
        });
    }
    Ok(())
}

/// Samples every chained variable in order for each record.
pub fn sample_chain(
    pack: &ModelPack,
    seeds: &PopulationTable,
    rng: &RngContract,
    options: SampleOptions,
) -> Result<PopulationTable> {
    check_seed_schema(pack, seeds)?;
    let schema = seeds.schema_arc().clone();
    let entries = bind_entries(pack, &schema)?;
    let mut table = seeds.clone();
    for seed in &schema.seed_names {
        let i = schema.require(seed)?;
        if table.column(i).missing_count() > 0 {
            return Err(Error::MissingSeed {
                row: (0..table.nrows()).find(|&r| table.column(i).is_missing(r)).unwrap_or(0),
                column: seed.clone(),
            });
        }
    }
    let base = rng.base();
    let until = options.until.unwrap_or(entries.len()).min(entries.len());
    for (e, entry) in entries.iter().enumerate().take(until) {
        let kind = &schema.variables[entry.dependent].kind;
        let drawn: Vec<Result<Drawn>> = (0..table.nrows())
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new(), Vec::new(), Vec::new()),
                |(x, codes, eta, probs), row| {
                    if !entry.in_filter(&table, row) {
                        return Ok(Drawn::Missing);
                    }
                    let Some(eq) = entry.equation_for(&table, row, codes) else {
                        return Err(Error::NoEquation {
                            entry: schema.variables[entry.dependent].name.clone(),
                            stratum: format!("record {row}"),
                        });
                    };
                    x.resize(eq.design.ncols(), 0.0);
                    let complete = eq.design.fill_row(&table, row, x);
                    if !complete && entry.complete_case {
                        return Ok(Drawn::Missing);
                    }
                    let mut r = positioned(&base, row as u64, e as u64);
                    Ok(match entry.family {
                        Family::Linear | Family::LogitLinear => {
                            let sigma = match &eq.model {
                                crate::pack::EquationModel::Linear { sigma, .. } => *sigma,
                                _ => 0.0,
                            };
                            let z: f64 = r.sample(StandardNormal);
                            let y = eq.eta(x) + sigma * z;
                            if entry.family == Family::LogitLinear {
                                Drawn::Value(sigmoid(y).clamp(0.0, 1.0))
                            } else {
                                let y = entry.response_zscore.map_or(y, |zs| zs.inverse(y));
                                Drawn::Value(post_process(kind, y))
                            }
                        }
                        Family::Logistic => {
                            let p = sigmoid(eq.eta(x));
                            let u: f64 = r.random();
                            Drawn::Code((u < p) as u32)
                        }
                        Family::Multinomial => {
                            eq.class_probabilities(x, eta, probs);
                            let u: f64 = r.random();
                            let mut acc = 0.0;
                            let mut pick = probs.len() - 1;
                            for (i, p) in probs.iter().enumerate() {
                                acc += p;
                                if u < acc {
                                    pick = i;
                                    break;
                                }
                            }
                            Drawn::Code(eq.level_codes[pick])
                        }
                    })
                },
            )
            .collect();
        let column = match kind {
            VariableKind::Categorical { .. } => Column::Categorical(
                drawn
                    .into_iter()
                    .map(|d| {
                        d.map(|d| match d {
                            Drawn::Code(c) => c,
                            _ => MISSING_CODE,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            _ => Column::Numeric(
                drawn
                    .into_iter()
                    .map(|d| {
                        d.map(|d| match d {
                            Drawn::Value(v) => v,
                            _ => f64::NAN,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        *table.column_mut(entry.dependent) = column;
    }
    if options.presence {
        table = add_presence_columns(table, &entries[..until], &base)?;
    }
    Ok(table)
}

fn post_process(kind: &VariableKind, y: f64) -> f64 {
    match kind {
        VariableKind::Percentile => y.round().clamp(1.0, 100.0),
        VariableKind::Continuous { min, max } => {
            let y = min.map_or(y, |m| y.max(m));
            max.map_or(y, |m| y.min(m))
        }
        VariableKind::Probability => y.clamp(0.0, 1.0),
        VariableKind::Categorical { .. } => y,
    }
}

pub const PRESENCE_SUFFIX: &str = "_present";

/// The `<name>_present` no/yes column emitted for a probability variable.
pub fn presence_variable(name: &str) -> VariableSpec {
    VariableSpec::categorical(&format!("{name}{PRESENCE_SUFFIX}"), &["no", "yes"]).with_source(SourceTag::Derived)
}

/// `schema` extended with presence columns for every `<p>_present` name in
/// `columns` whose base `p` is a probability variable.
pub fn schema_with_presence(schema: &PopulationSchema, columns: &[&str]) -> Result<PopulationSchema> {
    let mut variables = schema.variables.clone();
    for c in columns {
        if schema.index_of(c).is_some() {
            continue;
        }
        let base = c.strip_suffix(PRESENCE_SUFFIX).and_then(|b| schema.variable(b));
        match base {
            Some(v) if v.kind == VariableKind::Probability => variables.push(presence_variable(&v.name)),
            _ => return Err(Error::UnknownColumn(c.to_string())),
        }
    }
    PopulationSchema::new(variables, schema.seed_names.clone())
}

/// Presence draws use slots after the chain entries.
fn add_presence_columns(
    table: PopulationTable,
    entries: &[BoundEntry],
    base: &rand_chacha::ChaCha8Rng,
) -> Result<PopulationTable> {
    let schema = table.schema();
    let mut variables = schema.variables.clone();
    let mut columns: Vec<Column> = table.columns().to_vec();
    let probability: Vec<&BoundEntry> = entries
        .iter()
        .filter(|e| e.family == Family::LogitLinear)
        .collect();
    for (j, entry) in probability.iter().enumerate() {
        variables.push(presence_variable(&schema.variables[entry.dependent].name));
        let src = table.column(entry.dependent);
        let slot = (entries.len() + j) as u64;
        let codes: Vec<u32> = (0..table.nrows())
            .into_par_iter()
            .map(|row| match src.value(row) {
                Some(p) => {
                    let u: f64 = positioned(base, row as u64, slot).random();
                    (u < p) as u32
                }
                None => MISSING_CODE,
            })
            .collect();
        columns.push(Column::Categorical(codes));
    }
    let schema = Arc::new(PopulationSchema::new(variables, schema.seed_names.clone())?);
    PopulationTable::from_columns(schema, columns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawReport {
    pub equations: usize,
    /// Equations whose covariance had negative eigenvalues clipped to 0.
    pub repaired: usize,
    pub min_eigenvalue: f64,
}

/// Replaces every coefficient vector by a draw from its sampling
/// distribution `N(beta, covariance)`.
pub fn draw_parameters(pack: &ModelPack, rng: &RngContract) -> Result<(ModelPack, DrawReport)> {
    let mut out = pack.clone();
    let base = rng.base();
    let mut report = DrawReport {
        equations: 0,
        repaired: 0,
        min_eigenvalue: f64::INFINITY,
    };
    for (e, entry) in out.equations.iter_mut().enumerate() {
        let name = entry.dependent.clone();
        for (q, eq) in entry.equations_mut().enumerate() {
            let cov = eq
                .model
                .covariance()
                .ok_or_else(|| Error::MissingCovariance(name.clone()))?
                .clone();
            let p = cov.dim;
            if p == 0 {
                continue;
            }
            report.equations += 1;
            let eig = SymmetricEigen::new(DMatrix::from_row_slice(p, p, &cov.to_full()));
            let mut clipped = false;
            let largest = eig.eigenvalues.amax();
            let scales: Vec<f64> = eig
                .eigenvalues
                .iter()
                .map(|&l| {
                    report.min_eigenvalue = report.min_eigenvalue.min(l);
                    if l < 0.0 {
                        // Rounding noise around zero eigenvalues is not a repair.
                        clipped |= l < -PSD_TOL * largest;
                        0.0
                    } else {
                        l.sqrt()
                    }
                })
                .collect();
            report.repaired += clipped as usize;
            let mut r = positioned(&base, e as u64, q as u64);
            let z: Vec<f64> = (0..p).map(|_| r.sample(StandardNormal)).collect();
            let mut beta = eq.model.stacked_coefficients();
            for (i, b) in beta.iter_mut().enumerate() {
                let mut shift = 0.0;
                for (k, (&s, &zk)) in scales.iter().zip(&z).enumerate() {
                    if s != 0.0 {
                        shift += eig.eigenvectors[(i, k)] * s * zk;
                    }
                }
                *b += shift;
            }
            eq.model.set_stacked_coefficients(&beta);
        }
    }
    if report.equations == 0 {
        report.min_eigenvalue = 0.0;
    }
    Ok((out, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAdjustment {
    pub variable: String,
    pub target: f64,
    /// Odds multiplier; its log was added to every intercept of the entry.
    pub multiplier: f64,
    pub expected_before: f64,
    pub achieved: f64,
}

pub const CALIBRATION_TOL: f64 = 1e-4;
const GAUSS_HERMITE_NODES: usize = 32;
const LOG_C_RANGE: f64 = 13.815_510_557_964_274; // ln 1e6

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)` (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Finds the odds multiplier that makes the expected generated prevalence
/// of `variable` equal `target`, and returns the adjusted pack.
pub fn calibrate_marginal(
    pack: &ModelPack,
    variable: &str,
    target: f64,
    seeds: &PopulationTable,
    rng: &RngContract,
    tol: f64,
) -> Result<(CalibrationAdjustment, ModelPack)> {
    let idx = pack
        .chain
        .entry_index(variable)
        .ok_or_else(|| Error::InvalidArgument(format!("`{variable}` is not a chain entry")))?;
    let family = pack.equations[idx].family;
    if !matches!(family, Family::Logistic | Family::LogitLinear) {
        return Err(Error::InvalidArgument(format!(
            "`{variable}` has family {family:?}; calibration needs logistic or logit_linear"
        )));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument(format!("target {target} outside (0, 1)")));
    }
    let table = sample_chain(
        pack,
        seeds,
        rng,
        SampleOptions {
            presence: false,
            until: Some(idx),
        },
    )?;
    let schema = table.schema();
    let entry = BoundEntry::new(&pack.equations[idx], schema)?;
    // (eta, sigma) per record the entry applies to.
    let parts: Vec<Result<Vec<(f64, f64)>>> = map_chunks(table.nrows(), |range| {
        let mut out = Vec::new();
        let mut x = Vec::new();
        let mut codes = Vec::new();
        for row in range {
            if !entry.in_filter(&table, row) {
                continue;
            }
            let Some(eq) = entry.equation_for(&table, row, &mut codes) else {
                return Err(Error::NoEquation {
                    entry: variable.to_string(),
                    stratum: format!("record {row}"),
                });
            };
            x.resize(eq.design.ncols(), 0.0);
            if !eq.design.fill_row(&table, row, &mut x) && entry.complete_case {
                continue;
            }
            let sigma = match &eq.model {
                crate::pack::EquationModel::Linear { sigma, .. } => *sigma,
                _ => 0.0,
            };
            out.push((eq.eta(&x), sigma));
        }
        Ok(out)
    });
    let mut points = Vec::new();
    for p in parts {
        points.extend(p?);
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no generated record is eligible for `{variable}`"
        )));
    }
    let (nodes, weights) = gauss_hermite(GAUSS_HERMITE_NODES);
    let n = points.len() as f64;
    let expected = |shift: f64| -> f64 {
        let total: f64 = map_chunks(points.len(), |range| {
            points[range]
                .iter()
                .map(|&(eta, sigma)| {
                    if family == Family::Logistic || sigma == 0.0 {
                        sigmoid(eta + shift)
                    } else {
                        nodes
                            .iter()
                            .zip(&weights)
                            .map(|(z, w)| w * sigmoid(eta + shift + sigma * z))
                            .sum()
                    }
                })
                .sum::<f64>()
        })
        .into_iter()
        .sum();
        total / n
    };
    let before = expected(0.0);
    let (mut lo, mut hi) = (-LOG_C_RANGE, LOG_C_RANGE);
    let (flo, fhi) = (expected(lo), expected(hi));
    if target < flo || target > fhi {
        return Err(Error::Unreachable {
            variable: variable.to_string(),
            target,
            low: flo,
            high: fhi,
        });
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shift = 0.5 * (lo + hi);
    let achieved = expected(shift);
    if (achieved - target).abs() >= tol {
        return Err(Error::Numeric(format!(
            "calibration of `{variable}` reached {achieved}, target {target}"
        )));
    }
    let mut adjusted = pack.clone();
    for eq in adjusted.equations[idx].equations_mut() {
        let col = eq.design.intercept_column().ok_or_else(|| {
            Error::InvalidArgument(format!("an equation of `{variable}` has no intercept"))
        })?;
        eq.model.shift_intercept(col, shift);
    }
    Ok((
        CalibrationAdjustment {
            variable: variable.to_string(),
            target,
            multiplier: shift.exp(),
            expected_before: before,
            achieved,
        },
        adjusted,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub master_seed: u64,
    pub pack_sha256: String,
    pub counts: ExpansionCounts,
    pub calibrations: Vec<CalibrationAdjustment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_draw: Option<DrawReport>,
    pub presence_columns: bool,
}
