//! Design specifications and dense design matrices.
//!
//! A [`DesignSpec`] is the serialisable recipe for turning a record into a
//! row of regressors. The same spec is used when fitting (on the source
//! table) and when generating (on synthetic records), so both paths see
//! identical columns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{PopulationSchema, ZScore};
use crate::spline::{NaturalSpline, SplineDef};
use crate::table::PopulationTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnDescriptor {
    Intercept,
    Dummy { variable: String, level: String },
    Spline { variable: String, index: usize },
    Raw { variable: String },
    MissingIndicator { variable: String },
}

impl ColumnDescriptor {
    pub fn variable(&self) -> Option<&str> {
        match self {
            ColumnDescriptor::Intercept => None,
            ColumnDescriptor::Dummy { variable, .. }
            | ColumnDescriptor::Spline { variable, .. }
            | ColumnDescriptor::Raw { variable }
            | ColumnDescriptor::MissingIndicator { variable } => Some(variable),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    Intercept,
    /// One indicator per listed level; unlisted levels (the reference) map
    /// to all zeros.
    Categorical {
        variable: String,
        levels: Vec<String>,
        #[serde(default)]
        missing_level: bool,
    },
    /// Integer-valued numeric variable expanded as a factor. `values` are
    /// ascending and the first is the reference; other integers map to the
    /// nearest listed value.
    Factor {
        variable: String,
        values: Vec<i64>,
        #[serde(default)]
        missing_level: bool,
    },
    Spline {
        variable: String,
        spline: SplineDef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        zscore: Option<ZScore>,
        #[serde(default)]
        missing_indicator: bool,
    },
    Raw {
        variable: String,
        #[serde(default)]
        missing_indicator: bool,
    },
}

impl Term {
    pub fn variable(&self) -> Option<&str> {
        match self {
            Term::Intercept => None,
            Term::Categorical { variable, .. }
            | Term::Factor { variable, .. }
            | Term::Spline { variable, .. }
            | Term::Raw { variable, .. } => Some(variable),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Term::Intercept => 1,
            Term::Categorical {
                levels,
                missing_level,
                ..
            } => levels.len() + *missing_level as usize,
            Term::Factor {
                values,
                missing_level,
                ..
            } => values.len().saturating_sub(1) + *missing_level as usize,
            Term::Spline {
                spline,
                missing_indicator,
                ..
            } => spline.dim() + *missing_indicator as usize,
            Term::Raw {
                missing_indicator, ..
            } => 1 + *missing_indicator as usize,
        }
    }

    fn descriptors(&self, out: &mut Vec<ColumnDescriptor>) {
        let mi = |v: &str| ColumnDescriptor::MissingIndicator {
            variable: v.to_string(),
        };
        match self {
            Term::Intercept => out.push(ColumnDescriptor::Intercept),
            Term::Categorical {
                variable,
                levels,
                missing_level,
            } => {
                for l in levels {
                    out.push(ColumnDescriptor::Dummy {
                        variable: variable.clone(),
                        level: l.clone(),
                    });
                }
                if *missing_level {
                    out.push(mi(variable));
                }
            }
            Term::Factor {
                variable,
                values,
                missing_level,
            } => {
                for v in values.iter().skip(1) {
                    out.push(ColumnDescriptor::Dummy {
                        variable: variable.clone(),
                        level: v.to_string(),
                    });
                }
                if *missing_level {
                    out.push(mi(variable));
                }
            }
            Term::Spline {
                variable,
                spline,
                missing_indicator,
                ..
            } => {
                for index in 0..spline.dim() {
                    out.push(ColumnDescriptor::Spline {
                        variable: variable.clone(),
                        index,
                    });
                }
                if *missing_indicator {
                    out.push(mi(variable));
                }
            }
            Term::Raw {
                variable,
                missing_indicator,
            } => {
                out.push(ColumnDescriptor::Raw {
                    variable: variable.clone(),
                });
                if *missing_indicator {
                    out.push(mi(variable));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub terms: Vec<Term>,
}

impl DesignSpec {
    pub fn ncols(&self) -> usize {
        self.terms.iter().map(Term::width).sum()
    }

    pub fn descriptors(&self) -> Vec<ColumnDescriptor> {
        let mut out = Vec::with_capacity(self.ncols());
        for t in &self.terms {
            t.descriptors(&mut out);
        }
        out
    }

    /// Variables referenced by any term.
    pub fn variables(&self) -> Vec<&str> {
        self.terms.iter().filter_map(Term::variable).collect()
    }

    pub fn intercept_column(&self) -> Option<usize> {
        let mut offset = 0;
        for t in &self.terms {
            if matches!(t, Term::Intercept) {
                return Some(offset);
            }
            offset += t.width();
        }
        None
    }

    /// Resolves variable names and level labels against a schema.
    pub fn bind(&self, schema: &PopulationSchema) -> Result<BoundDesign> {
        let mut terms = Vec::with_capacity(self.terms.len());
        let mut offset = 0;
        for term in &self.terms {
            let width = term.width();
            let bound = match term {
                Term::Intercept => BoundTerm::Intercept,
                Term::Categorical {
                    variable,
                    levels,
                    missing_level,
                } => {
                    let var = schema.require(variable)?;
                    let schema_levels = schema.variables[var].kind.levels().ok_or_else(|| {
                        Error::Schema(format!("`{variable}` is not categorical"))
                    })?;
                    let mut map = vec![None; schema_levels.len()];
                    for (i, l) in levels.iter().enumerate() {
                        let code = schema_levels.iter().position(|s| s == l).ok_or_else(|| {
                            Error::Schema(format!("level `{l}` of `{variable}` not in schema"))
                        })?;
                        map[code] = Some(i);
                    }
                    BoundTerm::Categorical {
                        var,
                        map,
                        missing: *missing_level,
                    }
                }
                Term::Factor {
                    variable,
                    values,
                    missing_level,
                } => {
                    let var = schema.require(variable)?;
                    if schema.variables[var].kind.is_categorical() {
                        return Err(Error::Schema(format!("`{variable}` is not numeric")));
                    }
                    if values.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Schema(format!(
                            "factor values of `{variable}` must be strictly ascending"
                        )));
                    }
                    BoundTerm::Factor {
                        var,
                        values: values.clone(),
                        missing: *missing_level,
                    }
                }
                Term::Spline {
                    variable,
                    spline,
                    zscore,
                    missing_indicator,
                } => {
                    let var = schema.require(variable)?;
                    if schema.variables[var].kind.is_categorical() {
                        return Err(Error::Schema(format!("`{variable}` is not numeric")));
                    }
                    BoundTerm::Spline {
                        var,
                        basis: NaturalSpline::new(spline)?,
                        zscore: *zscore,
                        missing: *missing_indicator,
                    }
                }
                Term::Raw {
                    variable,
                    missing_indicator,
                } => {
                    let var = schema.require(variable)?;
                    if schema.variables[var].kind.is_categorical() {
                        return Err(Error::Schema(format!("`{variable}` is not numeric")));
                    }
                    BoundTerm::Raw {
                        var,
                        missing: *missing_indicator,
                    }
                }
            };
            terms.push((offset, width, bound));
            offset += width;
        }
        Ok(BoundDesign {
            terms,
            k: offset,
            descriptors: self.descriptors(),
        })
    }
}

#[derive(Debug, Clone)]
enum BoundTerm {
    Intercept,
    Categorical {
        var: usize,
        map: Vec<Option<usize>>,
        missing: bool,
    },
    Factor {
        var: usize,
        values: Vec<i64>,
        missing: bool,
    },
    Spline {
        var: usize,
        basis: NaturalSpline,
        zscore: Option<ZScore>,
        missing: bool,
    },
    Raw {
        var: usize,
        missing: bool,
    },
}

/// A [`DesignSpec`] resolved against a schema, ready to evaluate rows.
#[derive(Debug, Clone)]
pub struct BoundDesign {
    terms: Vec<(usize, usize, BoundTerm)>,
    k: usize,
    descriptors: Vec<ColumnDescriptor>,
}

impl BoundDesign {
    pub fn ncols(&self) -> usize {
        self.k
    }

    pub fn descriptors(&self) -> &[ColumnDescriptor] {
        &self.descriptors
    }

    /// Fills one design row. Returns `false` when some predictor is missing
    /// and its term has no missing-value column; those columns are zero.
    pub fn fill_row(&self, table: &PopulationTable, row: usize, out: &mut [f64]) -> bool {
        debug_assert_eq!(out.len(), self.k);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut complete = true;
        for (offset, width, term) in &self.terms {
            let cols = &mut out[*offset..*offset + *width];
            match term {
                BoundTerm::Intercept => cols[0] = 1.0,
                BoundTerm::Categorical { var, map, missing } => {
                    match table.column(*var).code(row) {
                        Some(code) => {
                            if let Some(i) = map[code as usize] {
                                cols[i] = 1.0;
                            }
                        }
                        None if *missing => cols[*width - 1] = 1.0,
                        None => complete = false,
                    }
                }
                BoundTerm::Factor {
                    var,
                    values,
                    missing,
                } => match table.column(*var).value(row) {
                    Some(x) => {
                        let pos = nearest(values, x.round() as i64);
                        if pos > 0 {
                            cols[pos - 1] = 1.0;
                        }
                    }
                    None if *missing => cols[*width - 1] = 1.0,
                    None => complete = false,
                },
                BoundTerm::Spline {
                    var,
                    basis,
                    zscore,
                    missing,
                } => match table.column(*var).value(row) {
                    Some(x) => {
                        let x = zscore.map_or(x, |z| z.forward(x));
                        basis.eval_into(x, &mut cols[..basis.dim()]);
                    }
                    None if *missing => cols[*width - 1] = 1.0,
                    None => complete = false,
                },
                BoundTerm::Raw { var, missing } => match table.column(*var).value(row) {
                    Some(x) => cols[0] = x,
                    None if *missing => cols[*width - 1] = 1.0,
                    None => complete = false,
                },
            }
        }
        complete
    }

    /// Dense design over the given rows of `table`.
    pub fn matrix(&self, table: &PopulationTable, rows: &[usize]) -> DesignMatrix {
        let k = self.k;
        let mut data = vec![0.0; rows.len() * k];
        if k > 0 {
            data.par_chunks_mut(k * 256)
                .zip(rows.par_chunks(256))
                .for_each(|(block, block_rows)| {
                    for (out, &r) in block.chunks_mut(k).zip(block_rows) {
                        self.fill_row(table, r, out);
                    }
                });
        }
        DesignMatrix {
            n: rows.len(),
            k,
            data,
            descriptors: self.descriptors.clone(),
        }
    }
}

fn nearest(values: &[i64], v: i64) -> usize {
    match values.binary_search(&v) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i == values.len() => i - 1,
        Err(i) => {
            if v - values[i - 1] <= values[i] - v {
                i - 1
            } else {
                i
            }
        }
    }
}

/// Dense row-major design matrix with column descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub n: usize,
    pub k: usize,
    pub data: Vec<f64>,
    pub descriptors: Vec<ColumnDescriptor>,
}

impl DesignMatrix {
    pub fn from_rows(rows: &[Vec<f64>], descriptors: Vec<ColumnDescriptor>) -> Result<Self> {
        let k = descriptors.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::Dimension(format!(
                "row {bad} has {} values for {k} columns",
                rows[bad].len()
            )));
        }
        Ok(Self {
            n: rows.len(),
            k,
            data: rows.iter().flatten().copied().collect(),
            descriptors,
        })
    }

    /// Intercept followed by one raw column per slice.
    pub fn with_intercept(columns: &[(&str, &[f64])]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        let mut descriptors = vec![ColumnDescriptor::Intercept];
        for (name, values) in columns {
            if values.len() != n {
                return Err(Error::Dimension("columns of unequal length".into()));
            }
            descriptors.push(ColumnDescriptor::Raw {
                variable: name.to_string(),
            });
        }
        let k = descriptors.len();
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            data.push(1.0);
            for (_, values) in columns {
                data.push(values[i]);
            }
        }
        Ok(Self {
            n,
            k,
            data,
            descriptors,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.k + j]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.k);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        DesignMatrix {
            n: rows.len(),
            k: self.k,
            data,
            descriptors: self.descriptors.clone(),
        }
    }

    /// Matrix-vector product `X b`.
    pub fn mul_vec(&self, b: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(b).map(|(x, c)| x * c).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::VariableSpec;
    use crate::table::Column;
    use std::sync::Arc;

    fn table() -> PopulationTable {
        let schema = Arc::new(
            PopulationSchema::new(
                vec![
                    VariableSpec::continuous("age", Some(0.0), None),
                    VariableSpec::categorical("gender", &["M", "F"]),
                    VariableSpec::categorical("region", &["A", "B", "C"]),
                    VariableSpec::categorical("urbanity", &["U1", "U2"]),
                    VariableSpec::percentile("income"),
                ],
                ["age", "gender", "region", "urbanity"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            )
            .unwrap(),
        );
        PopulationTable::from_columns(
            schema,
            vec![
                Column::Numeric(vec![5.0, 40.0, 80.0]),
                Column::Categorical(vec![0, 1, 1]),
                Column::Categorical(vec![0, 1, 2]),
                Column::Categorical(vec![0, 0, 1]),
                Column::Numeric(vec![10.0, f64::NAN, 90.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn fills_rows_with_missing_indicator() {
        let t = table();
        let spec = DesignSpec {
            terms: vec![
                Term::Intercept,
                Term::Categorical {
                    variable: "region".into(),
                    levels: vec!["B".into(), "C".into()],
                    missing_level: false,
                },
                Term::Raw {
                    variable: "income".into(),
                    missing_indicator: true,
                },
                Term::Factor {
                    variable: "age".into(),
                    values: vec![5, 40, 80],
                    missing_level: false,
                },
            ],
        };
        assert_eq!(spec.ncols(), 7);
        let b = spec.bind(t.schema()).unwrap();
        let m = b.matrix(&t, &[0, 1, 2]);
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(m.row(2), &[1.0, 0.0, 1.0, 90.0, 0.0, 0.0, 1.0]);
        assert_eq!(nearest(&[5, 40, 80], 100), 2);
        assert_eq!(nearest(&[5, 40, 80], 22), 0);
        assert_eq!(nearest(&[5, 40, 80], 23), 1);
    }

    #[test]
    fn missing_without_indicator_is_incomplete() {
        let t = table();
        let spec = DesignSpec {
            terms: vec![
                Term::Intercept,
                Term::Spline {
                    variable: "income".into(),
                    spline: SplineDef::zscore(),
                    zscore: Some(ZScore { mean: 50.0, sd: 29.0 }),
                    missing_indicator: false,
                },
            ],
        };
        let b = spec.bind(t.schema()).unwrap();
        let mut row = vec![0.0; b.ncols()];
        assert!(b.fill_row(&t, 0, &mut row));
        assert!(!b.fill_row(&t, 1, &mut row));
        assert!(row[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bind_rejects_unknown_level() {
        let t = table();
        let spec = DesignSpec {
            terms: vec![Term::Categorical {
                variable: "gender".into(),
                levels: vec!["X".into()],
                missing_level: false,
            }],
        };
        assert!(spec.bind(t.schema()).is_err());
    }
}
