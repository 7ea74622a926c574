use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use super::config::{ChainConfig, Family, MissingPolicy, ModelSpecEntry, Predictor, Resolved};
use super::pool::pool_rubin;
use crate::design::{DesignSpec, Term};
use crate::error::{Error, ErrorClass, Result};
use crate::glm::{fit_linear, fit_logistic, fit_multinomial, logit, FitOptions};
use crate::linalg::LowerTriangular;
use crate::pack::{
    export_seed_strata, EntryFit, Equation, EquationModel, FitDiagnostics, ModelPack,
    SchemaSnapshot, StratumFit, PACK_VERSION,
};
use crate::schema::{PopulationSchema, StratumKey, ZScore};
use crate::table::PopulationTable;

/// Probabilities are clamped to this distance from 0 and 1 before the logit.
pub const LOGIT_CLAMP: f64 = 1e-6;

/// Replicate tables that differ only in originally missing cells.
#[derive(Debug, Clone)]
pub struct ImputationSet {
    replicates: Vec<PopulationTable>,
}

impl ImputationSet {
    pub fn new(replicates: Vec<PopulationTable>) -> Result<Self> {
        let first = replicates
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty imputation set".into()))?;
        for (r, t) in replicates.iter().enumerate().skip(1) {
            if t.nrows() != first.nrows() {
                return Err(Error::Dimension(format!(
                    "replicate {r} has {} rows, replicate 0 has {}",
                    t.nrows(),
                    first.nrows()
                )));
            }
            if t.schema() != first.schema() {
                return Err(Error::Schema(format!("replicate {r} has a different schema")));
            }
            for seed in &first.schema().seed_names {
                let i = first.schema().require(seed)?;
                if t.column(i) != first.column(i) {
                    return Err(Error::InvalidArgument(format!(
                        "replicate {r} differs from replicate 0 in seed column `{seed}`"
                    )));
                }
            }
        }
        Ok(Self { replicates })
    }

    pub fn replicates(&self) -> &[PopulationTable] {
        &self.replicates
    }

    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum FitData<'a> {
    Table(&'a PopulationTable),
    Imputed(&'a ImputationSet),
}

impl<'a> FitData<'a> {
    pub fn tables(&self) -> Vec<&'a PopulationTable> {
        match self {
            FitData::Table(t) => vec![*t],
            FitData::Imputed(s) => s.replicates.iter().collect(),
        }
    }
}

/// Fits every entry of the chain and assembles the model pack, including
/// the gated seed-stratum counts.
pub fn fit_chain(data: FitData<'_>, config: &ChainConfig) -> Result<ModelPack> {
    let tables = data.tables();
    let schema = tables[0].schema();
    config.validate(schema)?;
    let seed_strata = export_seed_strata(tables[0], config.min_count, config.gate_policy)?;
    let mut equations = Vec::with_capacity(config.entries.len());
    for idx in 0..config.entries.len() {
        equations.push(fit_entry(&tables, config, idx, None)?);
    }
    let pack = ModelPack {
        version: PACK_VERSION,
        schema: SchemaSnapshot::of(schema),
        chain: config.clone(),
        seed_strata,
        equations,
    };
    Ok(pack)
}

pub(crate) struct EntryContext<'a> {
    pub entry: &'a ModelSpecEntry,
    pub schema: &'a PopulationSchema,
    pub dependent: usize,
    pub predictors: Vec<Predictor>,
    zscores: HashMap<usize, ZScore>,
    pub response_zscore: Option<ZScore>,
    /// Replicates actually used by this entry.
    pub tables: Vec<&'a PopulationTable>,
    pub stratifiers: Vec<usize>,
}

impl<'a> EntryContext<'a> {
    pub fn new(tables: &[&'a PopulationTable], config: &'a ChainConfig, idx: usize) -> Result<Self> {
        let entry = &config.entries[idx];
        let schema = tables[0].schema();
        let dependent = schema.require(&entry.dependent)?;
        let predictors = config.predictors(idx, schema)?;
        let available = config.available(idx);
        if let Some(p) = predictors.iter().find(|p| !available.contains(&p.name.as_str())) {
            return Err(Error::Config(format!(
                "entry `{}` would use `{}`, which is modelled later",
                entry.dependent, p.name
            )));
        }
        let mut zscores = HashMap::new();
        for p in &predictors {
            if matches!(p.transform, Resolved::ZscoreSpline(_)) {
                let values = tables[0].observed_values(&p.name)?;
                zscores.insert(p.index, config.zscore_for(&values)?);
            }
        }
        let response_zscore = if entry.standardize_response {
            Some(config.zscore_for(&tables[0].observed_values(&entry.dependent)?)?)
        } else {
            None
        };
        let used = if entry.missing_policy == MissingPolicy::ImputedReplicates {
            tables.len()
        } else {
            1
        };
        let stratifiers = entry
            .stratifiers
            .iter()
            .map(|s| schema.require(s))
            .collect::<Result<_>>()?;
        Ok(Self {
            entry,
            schema,
            dependent,
            predictors,
            zscores,
            response_zscore,
            tables: tables[..used].to_vec(),
            stratifiers,
        })
    }

    fn complete_case(&self) -> bool {
        self.entry.missing_policy != MissingPolicy::MissingIndicator
    }

    /// Rows usable for fitting, grouped by stratifier codes.
    pub fn eligible(&self, table: &PopulationTable, rows: Option<&[usize]>) -> BTreeMap<Vec<u32>, Vec<usize>> {
        let filter = self
            .entry
            .population_filter
            .as_ref()
            .map(|f| (self.schema.require(&f.variable).expect("validated filter"), f));
        let check = |row: usize| -> Option<Vec<u32>> {
            if let Some((v, f)) = &filter {
                if !f.accepts(table.column(*v).value(row)) {
                    return None;
                }
            }
            if table.column(self.dependent).is_missing(row) {
                return None;
            }
            if self.complete_case()
                && self.predictors.iter().any(|p| table.column(p.index).is_missing(row))
            {
                return None;
            }
            self.stratifiers
                .iter()
                .map(|&s| table.column(s).code(row))
                .collect()
        };
        let mut groups: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
        let mut visit = |row: usize| {
            if let Some(key) = check(row) {
                groups.entry(key).or_default().push(row);
            }
        };
        match rows {
            Some(rows) => rows.iter().copied().for_each(&mut visit),
            None => (0..table.nrows()).for_each(&mut visit),
        }
        groups
    }

    pub fn stratum_key(&self, codes: &[u32]) -> StratumKey {
        StratumKey::new(
            self.stratifiers
                .iter()
                .zip(codes)
                .map(|(&v, &c)| {
                    let spec = &self.schema.variables[v];
                    (spec.name.clone(), spec.kind.levels().expect("categorical")[c as usize].clone())
                })
                .collect(),
        )
    }

    /// Response on the model scale for linear, logit-linear and logistic
    /// entries.
    pub fn response(&self, table: &PopulationTable, row: usize) -> f64 {
        let col = table.column(self.dependent);
        match self.entry.family {
            Family::Linear => {
                let y = col.value(row).expect("eligible row");
                self.response_zscore.map_or(y, |z| z.forward(y))
            }
            Family::LogitLinear => {
                let p = col.value(row).expect("eligible row");
                logit(p.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP))
            }
            Family::Logistic => col.code(row).expect("eligible row") as f64,
            Family::Multinomial => f64::NAN,
        }
    }

    fn design(&self, predictors: &[Predictor], rows: &[&[usize]]) -> DesignSpec {
        let mut terms = vec![Term::Intercept];
        let indicator = !self.complete_case();
        for p in predictors {
            let any_missing = indicator
                && self
                    .tables
                    .iter()
                    .zip(rows)
                    .any(|(t, rs)| rs.iter().any(|&r| t.column(p.index).is_missing(r)));
            let variable = p.name.clone();
            let term = match &p.transform {
                Resolved::Dummies => Term::Categorical {
                    variable,
                    levels: self.schema.variables[p.index].kind.levels().expect("categorical")[1..].to_vec(),
                    missing_level: any_missing,
                },
                Resolved::Spline(def) => Term::Spline {
                    variable,
                    spline: def.clone(),
                    zscore: None,
                    missing_indicator: any_missing,
                },
                Resolved::ZscoreSpline(def) => Term::Spline {
                    variable,
                    spline: def.clone(),
                    zscore: self.zscores.get(&p.index).copied(),
                    missing_indicator: any_missing,
                },
                Resolved::Raw => Term::Raw {
                    variable,
                    missing_indicator: any_missing,
                },
                Resolved::Factor => {
                    let mut values = BTreeSet::new();
                    for (t, rs) in self.tables.iter().zip(rows) {
                        for &r in rs.iter() {
                            if let Some(v) = t.column(p.index).value(r) {
                                values.insert(v.round() as i64);
                            }
                        }
                    }
                    Term::Factor {
                        variable,
                        values: values.into_iter().collect(),
                        missing_level: any_missing,
                    }
                }
            };
            terms.push(term);
        }
        DesignSpec { terms }
    }
}

enum CellOutcome {
    Fitted(Equation),
    Fallback(String),
}

struct ReplicateFit {
    coefficients: Vec<f64>,
    covariance: LowerTriangular,
    sigma: f64,
    diagnostics: FitDiagnostics,
}

fn numeric_or<T>(r: Result<T>) -> Result<std::result::Result<T, String>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e) if e.class() == ErrorClass::Numeric => Ok(Err(e.to_string())),
        Err(e) => Err(e),
    }
}

fn fit_cell(ctx: &EntryContext<'_>, predictors: &[Predictor], rows: &[&[usize]]) -> Result<CellOutcome> {
    let n = rows.iter().map(|r| r.len()).min().unwrap_or(0);
    let spec = ctx.design(predictors, rows);
    let k = spec.ncols();
    if n < k + 2 {
        return Ok(CellOutcome::Fallback(format!("n = {n} below k + 2 = {}", k + 2)));
    }
    let bound = spec.bind(ctx.schema)?;
    let opts = FitOptions::default();

    // Multinomial strata fit only the outcome levels present.
    let mut levels: Vec<u32> = Vec::new();
    if ctx.entry.family == Family::Multinomial {
        let mut present = BTreeSet::new();
        for (t, rs) in ctx.tables.iter().zip(rows) {
            let col = t.column(ctx.dependent);
            present.extend(rs.iter().map(|&r| col.code(r).expect("eligible row")));
        }
        levels = present.into_iter().collect();
        if levels.len() == 1 {
            let label = ctx.schema.variables[ctx.dependent].kind.levels().expect("categorical")
                [levels[0] as usize]
                .clone();
            return Ok(CellOutcome::Fitted(Equation {
                design: spec,
                model: EquationModel::Multinomial {
                    levels: vec![label],
                    coefficients: Vec::new(),
                    covariance: Some(LowerTriangular::zeros(0)),
                },
                n,
                diagnostics: FitDiagnostics {
                    converged: true,
                    replicates: rows.len(),
                    ..Default::default()
                },
            }));
        }
    }

    let mut fits = Vec::with_capacity(rows.len());
    for (t, rs) in ctx.tables.iter().zip(rows) {
        let x = bound.matrix(t, rs);
        let fitted = match ctx.entry.family {
            Family::Linear | Family::LogitLinear => {
                let y: Vec<f64> = rs.iter().map(|&r| ctx.response(t, r)).collect();
                numeric_or(fit_linear(&x, &y))?.map(|f| ReplicateFit {
                    coefficients: f.coefficients,
                    covariance: f.covariance,
                    sigma: f.sigma,
                    diagnostics: FitDiagnostics {
                        converged: true,
                        iterations: 1,
                        penalty: 0.0,
                        dropped: f.dropped,
                        degenerate: f.degenerate,
                        replicates: 1,
                    },
                })
            }
            Family::Logistic => {
                let y: Vec<f64> = rs.iter().map(|&r| ctx.response(t, r)).collect();
                numeric_or(fit_logistic(&x, &y, opts))?.map(|f| ReplicateFit {
                    coefficients: f.coefficients,
                    covariance: f.covariance,
                    sigma: 0.0,
                    diagnostics: FitDiagnostics {
                        converged: f.converged,
                        iterations: f.iterations,
                        penalty: f.penalty,
                        dropped: f.dropped,
                        degenerate: false,
                        replicates: 1,
                    },
                })
            }
            Family::Multinomial => {
                let col = t.column(ctx.dependent);
                let y: Vec<u32> = rs
                    .iter()
                    .map(|&r| {
                        let c = col.code(r).expect("eligible row");
                        levels.binary_search(&c).expect("present level") as u32
                    })
                    .collect();
                numeric_or(fit_multinomial(&x, &y, levels.len(), opts))?.map(|f| ReplicateFit {
                    coefficients: f.coefficients.concat(),
                    covariance: f.covariance,
                    sigma: 0.0,
                    diagnostics: FitDiagnostics {
                        converged: f.converged,
                        iterations: f.iterations,
                        penalty: f.penalty,
                        dropped: f.dropped,
                        degenerate: false,
                        replicates: 1,
                    },
                })
            }
        };
        match fitted {
            Ok(f) => fits.push(f),
            Err(reason) => return Ok(CellOutcome::Fallback(reason)),
        }
    }

    let (coefficients, covariance, sigma, diagnostics) = if fits.len() == 1 {
        let f = fits.pop().expect("one fit");
        (f.coefficients, f.covariance, f.sigma, f.diagnostics)
    } else {
        let est: Vec<Vec<f64>> = fits.iter().map(|f| f.coefficients.clone()).collect();
        let cov: Vec<LowerTriangular> = fits.iter().map(|f| f.covariance.clone()).collect();
        let (b, t) = pool_rubin(&est, &cov)?;
        let m = fits.len() as f64;
        let sigma = (fits.iter().map(|f| f.sigma * f.sigma).sum::<f64>() / m).sqrt();
        let dropped: BTreeSet<usize> = fits.iter().flat_map(|f| f.diagnostics.dropped.iter().copied()).collect();
        let diagnostics = FitDiagnostics {
            converged: fits.iter().all(|f| f.diagnostics.converged),
            iterations: fits.iter().map(|f| f.diagnostics.iterations).max().unwrap_or(0),
            penalty: fits.iter().map(|f| f.diagnostics.penalty).fold(0.0, f64::max),
            dropped: dropped.into_iter().collect(),
            degenerate: fits.iter().all(|f| f.diagnostics.degenerate),
            replicates: fits.len(),
        };
        (b, t, sigma, diagnostics)
    };
    let model = match ctx.entry.family {
        Family::Linear | Family::LogitLinear => EquationModel::Linear {
            coefficients,
            sigma,
            covariance: Some(covariance),
        },
        Family::Logistic => EquationModel::Logistic {
            coefficients,
            covariance: Some(covariance),
        },
        Family::Multinomial => {
            let all = ctx.schema.variables[ctx.dependent].kind.levels().expect("categorical");
            EquationModel::Multinomial {
                levels: levels.iter().map(|&c| all[c as usize].clone()).collect(),
                coefficients: coefficients.chunks(k).map(<[f64]>::to_vec).collect(),
                covariance: Some(covariance),
            }
        }
    };
    Ok(CellOutcome::Fitted(Equation {
        design: spec,
        model,
        n,
        diagnostics,
    }))
}

/// Fits one chain entry, optionally restricted to a subset of rows.
pub(crate) fn fit_entry(
    tables: &[&PopulationTable],
    config: &ChainConfig,
    idx: usize,
    rows: Option<&[usize]>,
) -> Result<EntryFit> {
    let ctx = EntryContext::new(tables, config, idx)?;
    let groups: Vec<BTreeMap<Vec<u32>, Vec<usize>>> =
        ctx.tables.iter().map(|t| ctx.eligible(t, rows)).collect();
    let cells: BTreeSet<&Vec<u32>> = groups.iter().flat_map(|g| g.keys()).collect();
    if cells.is_empty() {
        return Err(Error::EntryFit {
            entry: ctx.entry.dependent.clone(),
            reason: "no eligible rows after filtering".into(),
        });
    }
    let empty: Vec<usize> = Vec::new();
    let cells: Vec<&Vec<u32>> = cells.into_iter().collect();
    let outcomes: Vec<Result<(usize, CellOutcome)>> = cells
        .par_iter()
        .map(|codes| {
            let rows: Vec<&[usize]> = groups
                .iter()
                .map(|g| g.get(*codes).unwrap_or(&empty).as_slice())
                .collect();
            let n = rows.iter().map(|r| r.len()).min().unwrap_or(0);
            Ok((n, fit_cell(&ctx, &ctx.predictors, &rows)?))
        })
        .collect();

    let mut strata = Vec::with_capacity(cells.len());
    let mut needs_pooled = false;
    for (codes, outcome) in cells.iter().zip(outcomes) {
        let (n, outcome) = outcome?;
        let (fallback, equation) = match outcome {
            CellOutcome::Fitted(eq) => (false, Some(eq)),
            CellOutcome::Fallback(_) => {
                needs_pooled = true;
                (true, None)
            }
        };
        strata.push(StratumFit {
            key: ctx.stratum_key(codes),
            n,
            fallback,
            equation,
        });
    }

    let pooled = if needs_pooled {
        let mut predictors: Vec<Predictor> = ctx
            .stratifiers
            .iter()
            .map(|&s| Predictor {
                name: ctx.schema.variables[s].name.clone(),
                index: s,
                transform: Resolved::Dummies,
            })
            .collect();
        predictors.extend(ctx.predictors.iter().cloned());
        let all: Vec<Vec<usize>> = groups
            .iter()
            .map(|g| {
                let mut rows: Vec<usize> = g.values().flatten().copied().collect();
                rows.sort_unstable();
                rows
            })
            .collect();
        let rows: Vec<&[usize]> = all.iter().map(Vec::as_slice).collect();
        match fit_cell(&ctx, &predictors, &rows)? {
            CellOutcome::Fitted(eq) => Some(eq),
            CellOutcome::Fallback(reason) => {
                return Err(Error::EntryFit {
                    entry: ctx.entry.dependent.clone(),
                    reason: format!("pooled fallback failed: {reason}"),
                })
            }
        }
    } else {
        None
    };

    Ok(EntryFit {
        dependent: ctx.entry.dependent.clone(),
        family: ctx.entry.family,
        stratifiers: ctx.entry.stratifiers.clone(),
        response_zscore: ctx.response_zscore,
        population_filter: ctx.entry.population_filter.clone(),
        complete_case: ctx.complete_case(),
        strata,
        pooled,
    })
}
