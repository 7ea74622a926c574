//! Utility comparison of a source and a synthetic population.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{age_class_lenient, VariableKind};
use crate::table::{Column, PopulationTable};

pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentsSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    /// `None` when the values have zero spread.
    pub skewness: Option<f64>,
    /// Excess kurtosis.
    pub kurtosis: Option<f64>,
}

/// Mean, sd and standardized third/fourth central moments. Sums run over a
/// sorted copy so the result does not depend on input order.
pub fn moments(values: &[f64]) -> Result<MomentsSummary> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData { n, k: 2 });
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = v.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in &v {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let sd = (m2 / (nf - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let spread = m2 > (4.0 * f64::EPSILON * mean.abs()).powi(2);
    Ok(MomentsSummary {
        n,
        mean,
        sd,
        skewness: spread.then(|| m3 / m2.powf(1.5)),
        kurtosis: spread.then(|| m4 / (m2 * m2) - 3.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub variable: String,
    /// (level, percent of non-missing) in schema order, absent levels at 0.
    pub levels: Vec<(String, f64)>,
    pub counts: Vec<u64>,
    pub missing: u64,
}

/// Level percentages over the non-missing codes of a categorical column.
pub fn frequency_table(variable: &str, codes: &[u32], levels: &[String]) -> Result<FrequencyTable> {
    let mut counts = vec![0u64; levels.len()];
    let mut missing = 0;
    for &c in codes {
        match counts.get_mut(c as usize) {
            Some(slot) => *slot += 1,
            None => missing += 1,
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument(format!("`{variable}` has no observed values")));
    }
    let levels = levels
        .iter()
        .zip(&counts)
        .map(|(l, &c)| (l.clone(), 100.0 * c as f64 / total as f64))
        .collect();
    Ok(FrequencyTable {
        variable: variable.to_string(),
        levels,
        counts,
        missing,
    })
}

/// Stratum labels for the eight age classes.
pub const AGE_CLASS_LABELS: [&str; 8] = ["<20", "20-29", "30-39", "40-49", "50-59", "60-69", "70-79", "80+"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimate {
    pub n: usize,
    /// Mean, or prevalence of the target level; `None` for an empty stratum.
    pub estimate: Option<f64>,
    /// 95% normal-approximation interval; absent for n < 2.
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub key: Vec<String>,
    pub a: StratumEstimate,
    pub b: StratumEstimate,
}

impl StratumRow {
    pub fn difference(&self) -> Option<f64> {
        Some(self.b.estimate? - self.a.estimate?)
    }

    /// Whether the two intervals overlap; `None` when either is absent.
    pub fn overlaps(&self) -> Option<bool> {
        let (a, b) = (self.a.ci?, self.b.ci?);
        Some(a.0 <= b.1 && b.0 <= a.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedComparison {
    pub target: String,
    /// Level whose prevalence is estimated, for categorical targets.
    pub level: Option<String>,
    pub strata: Vec<String>,
    pub rows: Vec<StratumRow>,
}

impl StratifiedComparison {
    pub fn max_abs_difference(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.difference())
            .fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Share of strata (with both intervals) whose intervals overlap.
    pub fn overlap_rate(&self) -> Option<f64> {
        let flags: Vec<bool> = self.rows.iter().filter_map(|r| r.overlaps()).collect();
        (!flags.is_empty()).then(|| flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
    }
}

/// What to estimate per stratum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub variable: String,
    pub level: Option<String>,
}

impl Target {
    pub fn mean(variable: &str) -> Self {
        Self {
            variable: variable.into(),
            level: None,
        }
    }

    pub fn prevalence(variable: &str, level: &str) -> Self {
        Self {
            variable: variable.into(),
            level: Some(level.into()),
        }
    }

    /// Parses `var` or `var=level`.
    pub fn parse(text: &str) -> Self {
        match text.split_once('=') {
            Some((v, l)) => Self::prevalence(v, l),
            None => Self::mean(text),
        }
    }
}

type Extract<'a> = Box<dyn Fn(usize) -> Option<f64> + Sync + 'a>;

fn target_values<'a>(table: &'a PopulationTable, target: &Target) -> Result<Extract<'a>> {
    let schema = table.schema();
    let idx = schema
        .index_of(&target.variable)
        .ok_or_else(|| Error::UnknownColumn(target.variable.clone()))?;
    let col = table.column(idx);
    match (&schema.variables[idx].kind, &target.level) {
        (VariableKind::Categorical { levels }, Some(level)) => {
            let code = levels.iter().position(|l| l == level).ok_or_else(|| {
                Error::InvalidArgument(format!("`{level}` is not a level of `{}`", target.variable))
            })? as u32;
            Ok(Box::new(move |r| col.code(r).map(|c| (c == code) as u8 as f64)))
        }
        (VariableKind::Categorical { .. }, None) => Err(Error::InvalidArgument(format!(
            "categorical target `{}` needs a level (`{}=<level>`)",
            target.variable, target.variable
        ))),
        (_, None) => Ok(Box::new(move |r| col.value(r))),
        (_, Some(_)) => Err(Error::InvalidArgument(format!(
            "`{}` is numeric; a level makes no sense",
            target.variable
        ))),
    }
}

fn stratum_labels<'a>(table: &'a PopulationTable, strata: &[String]) -> Result<Vec<Box<dyn Fn(usize) -> Option<usize> + Sync + 'a>>> {
    let schema = table.schema();
    strata
        .iter()
        .map(|name| {
            let idx = schema.index_of(name).ok_or_else(|| Error::UnknownColumn(name.clone()))?;
            let col = table.column(idx);
            let f: Box<dyn Fn(usize) -> Option<usize> + Sync> = match &schema.variables[idx].kind {
                VariableKind::Categorical { .. } => Box::new(move |r| col.code(r).map(|c| c as usize)),
                _ if name == schema.age_name() => {
                    Box::new(move |r| col.value(r).map(|a| age_class_lenient(a) as usize - 1))
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "stratum variable `{name}` must be categorical or the age variable"
                    )))
                }
            };
            Ok(f)
        })
        .collect()
}

fn label_names(table: &PopulationTable, name: &str) -> Vec<String> {
    let schema = table.schema();
    match schema.variable(name).map(|v| &v.kind) {
        Some(VariableKind::Categorical { levels }) => levels.clone(),
        _ => AGE_CLASS_LABELS.iter().map(|s| s.to_string()).collect(),
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: usize,
    sum: f64,
    sumsq: f64,
}

fn accumulate(table: &PopulationTable, target: &Target, strata: &[String]) -> Result<BTreeMap<Vec<usize>, Acc>> {
    let value = target_values(table, target)?;
    let labels = stratum_labels(table, strata)?;
    let parts: Vec<BTreeMap<Vec<usize>, Acc>> = crate::glm::kernel::map_chunks(table.nrows(), |range| {
        let mut map: BTreeMap<Vec<usize>, Acc> = BTreeMap::new();
        'rows: for r in range {
            let Some(v) = value(r) else { continue };
            let mut key = Vec::with_capacity(labels.len());
            for l in &labels {
                match l(r) {
                    Some(c) => key.push(c),
                    None => continue 'rows,
                }
            }
            let a = map.entry(key).or_default();
            a.n += 1;
            a.sum += v;
            a.sumsq += v * v;
        }
        map
    });
    let mut out: BTreeMap<Vec<usize>, Acc> = BTreeMap::new();
    for part in parts {
        for (k, a) in part {
            let e = out.entry(k).or_default();
            e.n += a.n;
            e.sum += a.sum;
            e.sumsq += a.sumsq;
        }
    }
    Ok(out)
}

fn estimate(acc: Option<&Acc>, prevalence: bool) -> StratumEstimate {
    let Some(a) = acc.filter(|a| a.n > 0) else {
        return StratumEstimate {
            n: 0,
            estimate: None,
            ci: None,
        };
    };
    let n = a.n as f64;
    let mean = a.sum / n;
    let ci = (a.n >= 2).then(|| {
        let se = if prevalence {
            (mean * (1.0 - mean) / n).sqrt()
        } else {
            ((a.sumsq - n * mean * mean).max(0.0) / (n - 1.0)).sqrt() / n.sqrt()
        };
        (mean - Z_95 * se, mean + Z_95 * se)
    });
    StratumEstimate {
        n: a.n,
        estimate: Some(mean),
        ci,
    }
}

/// Per-stratum mean (or level prevalence) with 95% intervals in both
/// populations. The age variable is recoded to age classes.
pub fn stratified_compare(
    a: &PopulationTable,
    b: &PopulationTable,
    target: &Target,
    strata: &[&str],
) -> Result<StratifiedComparison> {
    let strata: Vec<String> = strata.iter().map(|s| s.to_string()).collect();
    let (ma, mb) = rayon::join(|| accumulate(a, target, &strata), || accumulate(b, target, &strata));
    let (ma, mb) = (ma?, mb?);
    let mut keys: Vec<&Vec<usize>> = ma.keys().chain(mb.keys()).collect();
    keys.sort();
    keys.dedup();
    let names: Vec<Vec<String>> = strata.iter().map(|s| label_names(a, s)).collect();
    let prevalence = target.level.is_some();
    let rows = keys
        .into_iter()
        .map(|k| StratumRow {
            key: k.iter().zip(&names).map(|(&c, n)| n[c].clone()).collect(),
            a: estimate(ma.get(k), prevalence),
            b: estimate(mb.get(k), prevalence),
        })
        .collect();
    Ok(StratifiedComparison {
        target: target.variable.clone(),
        level: target.level.clone(),
        strata,
        rows,
    })
}

/// Variables of `a` that must appear identically in `b`.
fn check_compatible(a: &PopulationTable, b: &PopulationTable) -> Result<()> {
    for v in &a.schema().variables {
        match b.schema().variable(&v.name) {
            Some(w) if w.kind == v.kind => {}
            Some(_) => return Err(Error::Schema(format!("`{}` differs between the populations", v.name))),
            None => return Err(Error::Schema(format!("`{}` is missing from the second population", v.name))),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsRow {
    pub variable: String,
    pub source: Option<MomentsSummary>,
    pub synthetic: Option<MomentsSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub variable: String,
    pub level: String,
    pub source: f64,
    pub synthetic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateComparison {
    pub frequencies: Vec<FrequencyRow>,
    pub moments: Vec<MomentsRow>,
}

impl UnivariateComparison {
    pub fn max_abs_frequency_pp(&self) -> f64 {
        self.frequencies
            .iter()
            .fold(0.0, |m, r| m.max((r.synthetic - r.source).abs()))
    }

    /// Largest |synthetic/source - 1| over means.
    pub fn max_rel_mean(&self) -> f64 {
        self.rel(|m| m.mean)
    }

    pub fn max_rel_sd(&self) -> f64 {
        self.rel(|m| m.sd)
    }

    fn rel(&self, f: impl Fn(&MomentsSummary) -> f64) -> f64 {
        self.moments
            .iter()
            .filter_map(|r| Some(relative(f(r.source.as_ref()?), f(r.synthetic.as_ref()?))))
            .fold(0.0, f64::max)
    }
}

fn relative(source: f64, synthetic: f64) -> f64 {
    if source == synthetic {
        0.0
    } else {
        ((synthetic - source) / source).abs()
    }
}

/// Frequencies of every categorical and moments of every numeric variable
/// of `a`, over rows where `keep` holds.
pub fn compare_univariate(
    a: &PopulationTable,
    b: &PopulationTable,
    keep: Option<&(dyn Fn(&PopulationTable, usize) -> bool + Sync)>,
) -> Result<UnivariateComparison> {
    check_compatible(a, b)?;
    let rows_of = |t: &PopulationTable| -> Vec<usize> {
        (0..t.nrows()).filter(|&r| keep.is_none_or(|k| k(t, r))).collect()
    };
    let (ra, rb) = (rows_of(a), rows_of(b));
    let per_var: Vec<(Vec<FrequencyRow>, Option<MomentsRow>)> = a
        .schema()
        .variables
        .par_iter()
        .enumerate()
        .map(|(ia, v)| {
            let ib = b.schema().index_of(&v.name).expect("checked");
            let (ca, cb) = (a.column(ia), b.column(ib));
            match (&v.kind, ca, cb) {
                (VariableKind::Categorical { levels }, Column::Categorical(x), Column::Categorical(y)) => {
                    let xa: Vec<u32> = ra.iter().map(|&r| x[r]).collect();
                    let yb: Vec<u32> = rb.iter().map(|&r| y[r]).collect();
                    let (fa, fb) = match (
                        frequency_table(&v.name, &xa, levels),
                        frequency_table(&v.name, &yb, levels),
                    ) {
                        (Ok(fa), Ok(fb)) => (fa, fb),
                        _ => return (Vec::new(), None),
                    };
                    let rows = fa
                        .levels
                        .iter()
                        .zip(&fb.levels)
                        .map(|((l, p), (_, q))| FrequencyRow {
                            variable: v.name.clone(),
                            level: l.clone(),
                            source: *p,
                            synthetic: *q,
                        })
                        .collect();
                    (rows, None)
                }
                (_, Column::Numeric(x), Column::Numeric(y)) => {
                    let xa: Vec<f64> = ra.iter().map(|&r| x[r]).filter(|v| !v.is_nan()).collect();
                    let yb: Vec<f64> = rb.iter().map(|&r| y[r]).filter(|v| !v.is_nan()).collect();
                    (
                        Vec::new(),
                        Some(MomentsRow {
                            variable: v.name.clone(),
                            source: moments(&xa).ok(),
                            synthetic: moments(&yb).ok(),
                        }),
                    )
                }
                _ => (Vec::new(), None),
            }
        })
        .collect();
    let mut out = UnivariateComparison {
        frequencies: Vec::new(),
        moments: Vec::new(),
    };
    for (f, m) in per_var {
        out.frequencies.extend(f);
        out.moments.extend(m);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancies {
    pub max_abs_frequency_pp: f64,
    pub max_rel_mean: f64,
    pub max_rel_sd: f64,
}

impl From<&UnivariateComparison> for Discrepancies {
    fn from(u: &UnivariateComparison) -> Self {
        Self {
            max_abs_frequency_pp: u.max_abs_frequency_pp(),
            max_rel_mean: u.max_rel_mean(),
            max_rel_sd: u.max_rel_sd(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSummary {
    pub target: String,
    pub level: Option<String>,
    pub strata: Vec<String>,
    pub max_abs_difference: f64,
    pub overlap_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub source_n: usize,
    pub synthetic_n: usize,
    pub overall: Discrepancies,
    /// Rows passing the subset filter (adults by default).
    pub subset: Discrepancies,
    pub subset_rule: String,
    pub stratified: Vec<StratifiedSummary>,
}

pub const REPORT_FILES: [&str; 6] = [
    "frequencies.csv",
    "moments.csv",
    "frequencies_subset.csv",
    "moments_subset.csv",
    "plot_data.csv",
    "summary.json",
];

/// Minimum age (exclusive) of the subset tables.
pub const SUBSET_MIN_AGE: f64 = 18.0;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn frequencies_csv(u: &UnivariateComparison) -> Vec<u8> {
    let mut out = b"variable,level,source_pct,synthetic_pct,diff_pp\n".to_vec();
    for r in &u.frequencies {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.variable,
            r.level,
            r.source,
            r.synthetic,
            r.synthetic - r.source
        );
    }
    out
}

fn moments_csv(u: &UnivariateComparison) -> Vec<u8> {
    let mut out = b"variable,population,n,mean,sd,skewness,kurtosis\n".to_vec();
    for r in &u.moments {
        for (label, m) in [("source", &r.source), ("synthetic", &r.synthetic)] {
            match m {
                Some(m) => {
                    let _ = writeln!(
                        out,
                        "{},{label},{},{},{},{},{}",
                        r.variable,
                        m.n,
                        m.mean,
                        m.sd,
                        opt(m.skewness),
                        opt(m.kurtosis)
                    );
                }
                None => {
                    let _ = writeln!(out, "{},{label},,,,,", r.variable);
                }
            }
        }
    }
    out
}

fn plot_csv(comparisons: &[StratifiedComparison]) -> Vec<u8> {
    let mut out = b"target,stratum_vars,stratum_key,population,n,estimate,ci_low,ci_high\n".to_vec();
    for c in comparisons {
        let target = match &c.level {
            Some(l) => format!("{}={l}", c.target),
            None => c.target.clone(),
        };
        let vars = c.strata.join("|");
        for row in &c.rows {
            let key = row.key.join("|");
            for (pop, e) in [("source", &row.a), ("synthetic", &row.b)] {
                let _ = writeln!(
                    out,
                    "{target},{vars},{key},{pop},{},{},{},{}",
                    e.n,
                    opt(e.estimate),
                    opt(e.ci.map(|c| c.0)),
                    opt(e.ci.map(|c| c.1))
                );
            }
        }
    }
    out
}

/// Writes the report files into `dir` and returns the summary that is also
/// stored as `summary.json`.
pub fn emit_report(
    dir: &Path,
    source: &PopulationTable,
    synthetic: &PopulationTable,
    comparisons: &[StratifiedComparison],
) -> Result<ReportSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let overall = compare_univariate(source, synthetic, None)?;
    let adult = |t: &PopulationTable, r: usize| {
        let s = t.schema();
        t.column(s.index_of(s.age_name()).expect("age"))
            .value(r)
            .is_some_and(|a| a > SUBSET_MIN_AGE)
    };
    let subset = compare_univariate(source, synthetic, Some(&adult))?;
    write_file(&dir.join(REPORT_FILES[0]), &frequencies_csv(&overall))?;
    write_file(&dir.join(REPORT_FILES[1]), &moments_csv(&overall))?;
    write_file(&dir.join(REPORT_FILES[2]), &frequencies_csv(&subset))?;
    write_file(&dir.join(REPORT_FILES[3]), &moments_csv(&subset))?;
    write_file(&dir.join(REPORT_FILES[4]), &plot_csv(comparisons))?;
    let summary = ReportSummary {
        source_n: source.nrows(),
        synthetic_n: synthetic.nrows(),
        overall: (&overall).into(),
        subset: (&subset).into(),
        subset_rule: format!("{} > {SUBSET_MIN_AGE}", source.schema().age_name()),
        stratified: comparisons
            .iter()
            .map(|c| StratifiedSummary {
                target: c.target.clone(),
                level: c.level.clone(),
                strata: c.strata.clone(),
                max_abs_difference: c.max_abs_difference(),
                overlap_rate: c.overlap_rate(),
            })
            .collect(),
    };
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    write_file(&dir.join(REPORT_FILES[5]), &json)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_and_uniform_moments() {
        let m = moments(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(m.skewness, Some(0.0));
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let m = moments(&v).unwrap();
        assert!((m.mean - 50.5).abs() < 1e-12);
        assert!((m.sd - 29.011_491_975_882_016).abs() < 1e-9);
        assert!((m.kurtosis.unwrap() + 1.2).abs() < 0.01);
        assert!(moments(&[1.0]).is_err());
        assert_eq!(moments(&[2.0, 2.0]).unwrap().skewness, None);
    }

    #[test]
    fn frequencies_in_schema_order() {
        let levels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let f = frequency_table("x", &[0, 0, 1, 1, u32::MAX], &levels).unwrap();
        assert_eq!(f.levels[0].1, 50.0);
        assert_eq!(f.levels[2], ("c".to_string(), 0.0));
        assert_eq!(f.missing, 1);
        assert!(frequency_table("x", &[u32::MAX], &levels).is_err());
    }
}
