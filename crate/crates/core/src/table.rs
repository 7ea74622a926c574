//! Columnar population tables and their CSV form.
//!
//! Categorical cells hold level codes (index into the schema's level list),
//! everything else is stored as `f64`. Missing cells use [`MISSING_CODE`] or
//! NaN; in CSV they are empty fields.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schema::{PopulationSchema, VariableKind};

pub const MISSING_CODE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Categorical(Vec<u32>),
    Numeric(Vec<f64>),
}

impl Column {
    pub fn missing_for(kind: &VariableKind, n: usize) -> Self {
        if kind.is_categorical() {
            Column::Categorical(vec![MISSING_CODE; n])
        } else {
            Column::Numeric(vec![f64::NAN; n])
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Categorical(v) => v.len(),
            Column::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Categorical(v) => v[row] == MISSING_CODE,
            Column::Numeric(v) => v[row].is_nan(),
        }
    }

    pub fn missing_count(&self) -> usize {
        match self {
            Column::Categorical(v) => v.iter().filter(|&&c| c == MISSING_CODE).count(),
            Column::Numeric(v) => v.iter().filter(|x| x.is_nan()).count(),
        }
    }

    pub fn code(&self, row: usize) -> Option<u32> {
        match self {
            Column::Categorical(v) if v[row] != MISSING_CODE => Some(v[row]),
            _ => None,
        }
    }

    pub fn value(&self, row: usize) -> Option<f64> {
        match self {
            Column::Numeric(v) if !v[row].is_nan() => Some(v[row]),
            _ => None,
        }
    }

    pub fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    pub fn as_codes(&self) -> Option<&[u32]> {
        match self {
            Column::Categorical(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_values(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTable {
    schema: Arc<PopulationSchema>,
    columns: Vec<Column>,
    n: usize,
}

impl PopulationTable {
    /// All-missing table of `n` rows.
    pub fn empty(schema: Arc<PopulationSchema>, n: usize) -> Self {
        let columns = schema
            .variables
            .iter()
            .map(|v| Column::missing_for(&v.kind, n))
            .collect();
        Self { schema, columns, n }
    }

    /// Builds a table from columns in schema order and validates it.
    pub fn from_columns(schema: Arc<PopulationSchema>, columns: Vec<Column>) -> Result<Self> {
        if columns.len() != schema.variables.len() {
            return Err(Error::Dimension(format!(
                "{} columns for {} schema variables",
                columns.len(),
                schema.variables.len()
            )));
        }
        let n = columns.first().map_or(0, Column::len);
        let table = Self { schema, columns, n };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for (spec, col) in self.schema.variables.iter().zip(&self.columns) {
            if col.len() != self.n {
                return Err(Error::Dimension(format!(
                    "column `{}` has {} rows, expected {}",
                    spec.name,
                    col.len(),
                    self.n
                )));
            }
            match (&spec.kind, col) {
                (VariableKind::Categorical { levels }, Column::Categorical(codes)) => {
                    for (row, &c) in codes.iter().enumerate() {
                        if c != MISSING_CODE && c as usize >= levels.len() {
                            return Err(Error::InvalidValue {
                                row,
                                column: spec.name.clone(),
                                reason: format!("level code {c} out of range"),
                            });
                        }
                    }
                }
                (kind, Column::Numeric(values)) if !kind.is_categorical() => {
                    for (row, &v) in values.iter().enumerate() {
                        if !v.is_nan() {
                            kind.check_numeric(v).map_err(|reason| Error::InvalidValue {
                                row,
                                column: spec.name.clone(),
                                reason,
                            })?;
                        }
                    }
                }
                _ => {
                    return Err(Error::Dimension(format!(
                        "column `{}` storage does not match its kind",
                        spec.name
                    )))
                }
            }
        }
        for name in &self.schema.seed_names {
            let idx = self.schema.require(name)?;
            if let Some(row) = (0..self.n).find(|&r| self.columns[idx].is_missing(r)) {
                return Err(Error::MissingSeed {
                    row,
                    column: name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &PopulationSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<PopulationSchema> {
        &self.schema
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn column_mut(&mut self, index: usize) -> &mut Column {
        &mut self.columns[index]
    }

    pub fn column_by_name(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.schema.require(name)?])
    }

    /// Non-missing numeric values of a column, in row order.
    pub fn observed_values(&self, name: &str) -> Result<Vec<f64>> {
        match self.column_by_name(name)? {
            Column::Numeric(v) => Ok(v.iter().copied().filter(|x| !x.is_nan()).collect()),
            Column::Categorical(_) => Err(Error::InvalidArgument(format!(
                "`{name}` is categorical"
            ))),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> PopulationTable {
        PopulationTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n: rows.len(),
        }
    }

    /// Concatenates tables sharing a schema.
    pub fn concat(parts: &[PopulationTable]) -> Result<PopulationTable> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let mut columns: Vec<Column> = first
            .schema
            .variables
            .iter()
            .map(|v| Column::missing_for(&v.kind, 0))
            .collect();
        for part in parts {
            if part.schema != first.schema {
                return Err(Error::Schema("concatenating tables with different schemas".into()));
            }
            for (dst, src) in columns.iter_mut().zip(&part.columns) {
                match (dst, src) {
                    (Column::Categorical(d), Column::Categorical(s)) => d.extend_from_slice(s),
                    (Column::Numeric(d), Column::Numeric(s)) => d.extend_from_slice(s),
                    _ => unreachable!("schema equality implies matching storage"),
                }
            }
        }
        let n = parts.iter().map(|p| p.n).sum();
        Ok(PopulationTable {
            schema: first.schema.clone(),
            columns,
            n,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: Arc<PopulationSchema>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(file), schema)
    }

    /// Parses CSV with a header row; columns may appear in any order.
    pub fn read_csv<R: Read>(reader: R, schema: Arc<PopulationSchema>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut mapping = vec![usize::MAX; schema.variables.len()];
        for (pos, h) in headers.iter().enumerate() {
            let idx = schema
                .index_of(h)
                .ok_or_else(|| Error::UnknownColumn(h.to_string()))?;
            if mapping[idx] != usize::MAX {
                return Err(Error::Schema(format!("column `{h}` appears twice")));
            }
            mapping[idx] = pos;
        }
        if let Some(idx) = mapping.iter().position(|&m| m == usize::MAX) {
            return Err(Error::MissingColumn(schema.variables[idx].name.clone()));
        }

        let mut columns: Vec<Column> = schema
            .variables
            .iter()
            .map(|v| Column::missing_for(&v.kind, 0))
            .collect();
        let mut record = csv::StringRecord::new();
        let mut row = 0usize;
        while rdr.read_record(&mut record)? {
            for (idx, spec) in schema.variables.iter().enumerate() {
                let field = record.get(mapping[idx]).unwrap_or("");
                let bad = |reason: String| Error::InvalidValue {
                    row,
                    column: spec.name.clone(),
                    reason,
                };
                match (&spec.kind, &mut columns[idx]) {
                    (VariableKind::Categorical { levels }, Column::Categorical(codes)) => {
                        if field.is_empty() {
                            codes.push(MISSING_CODE);
                        } else {
                            let code = levels.iter().position(|l| l == field).ok_or_else(|| {
                                bad(format!("`{field}` is not one of the declared levels"))
                            })?;
                            codes.push(code as u32);
                        }
                    }
                    (kind, Column::Numeric(values)) => {
                        if field.is_empty() {
                            values.push(f64::NAN);
                        } else {
                            let v: f64 = field
                                .trim()
                                .parse()
                                .map_err(|_| bad(format!("`{field}` is not a number")))?;
                            kind.check_numeric(v).map_err(bad)?;
                            values.push(v);
                        }
                    }
                    _ => unreachable!(),
                }
            }
            row += 1;
        }
        let table = PopulationTable {
            schema,
            columns,
            n: row,
        };
        for name in &table.schema.seed_names {
            let idx = table.schema.require(name)?;
            if let Some(r) = (0..table.n).find(|&r| table.columns[idx].is_missing(r)) {
                return Err(Error::MissingSeed {
                    row: r,
                    column: name.clone(),
                });
            }
        }
        let age = table.schema.require(table.schema.age_name())?;
        if let Column::Numeric(ages) = &table.columns[age] {
            if let Some(r) = ages.iter().position(|a| a.fract() != 0.0) {
                return Err(Error::InvalidValue {
                    row: r,
                    column: table.schema.age_name().to_string(),
                    reason: "age must be in whole years".into(),
                });
            }
        }
        Ok(table)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes the table in schema column order. Numbers use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let header: Vec<&str> = self.schema.variables.iter().map(|v| v.name.as_str()).collect();
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::with_capacity(256);
        for row in 0..self.n {
            line.clear();
            for (i, (spec, col)) in self.schema.variables.iter().zip(&self.columns).enumerate() {
                if i > 0 {
                    line.push(',');
                }
                match col {
                    Column::Categorical(codes) => {
                        if codes[row] != MISSING_CODE {
                            let levels = spec.kind.levels().expect("categorical");
                            push_field(&mut line, &levels[codes[row] as usize]);
                        }
                    }
                    Column::Numeric(values) => {
                        if !values[row].is_nan() {
                            let _ = write!(line, "{}", values[row]);
                        }
                    }
                }
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        buf
    }
}

fn push_field(line: &mut String, label: &str) {
    if label.contains([',', '"', '\n', '\r']) {
        line.push('"');
        line.push_str(&label.replace('"', "\"\""));
        line.push('"');
    } else {
        line.push_str(label);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::VariableSpec;

    fn schema() -> Arc<PopulationSchema> {
        Arc::new(
            PopulationSchema::new(
                vec![
                    VariableSpec::continuous("age", Some(0.0), None),
                    VariableSpec::categorical("gender", &["M", "F"]),
                    VariableSpec::categorical("region", &["R1", "R2"]),
                    VariableSpec::categorical("urbanity", &["U1", "U2"]),
                    VariableSpec::continuous("bmi", Some(10.0), Some(70.0)),
                    VariableSpec::categorical("source", &["Employee", "Other, misc"]),
                ],
                ["age", "gender", "region", "urbanity"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn parses_valid_rows_in_any_column_order() {
        let text = "gender,age,urbanity,region,source,bmi\n\
                    M,40,U1,R1,Employee,22.5\n\
                    F,3,U2,R2,,\n\
                    F,81,U1,R2,\"Other, misc\",30\n";
        let t = PopulationTable::read_csv(text.as_bytes(), schema()).unwrap();
        assert_eq!(t.nrows(), 3);
        let bmi = t.column_by_name("bmi").unwrap();
        assert!(bmi.is_missing(1));
        assert_eq!(bmi.value(0), Some(22.5));
        assert_eq!(t.column_by_name("source").unwrap().code(2), Some(1));
    }

    #[test]
    fn rejects_unknown_level_with_location() {
        let text = "age,gender,region,urbanity,bmi,source\n40,M,R1,U1,20,Employee\n41,X,R1,U1,20,Employee\n";
        match PopulationTable::read_csv(text.as_bytes(), schema()) {
            Err(Error::InvalidValue { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "gender");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_column_and_missing_seed() {
        let text = "age,gender,region,urbanity,bmi,source,extra\n";
        assert!(matches!(
            PopulationTable::read_csv(text.as_bytes(), schema()),
            Err(Error::UnknownColumn(_))
        ));
        let text = "age,gender,region,urbanity,bmi,source\n40,,R1,U1,20,Employee\n";
        assert!(matches!(
            PopulationTable::read_csv(text.as_bytes(), schema()),
            Err(Error::MissingSeed { .. })
        ));
        let text = "age,gender,region,urbanity,bmi,source\n40,M,R1,U1,80,Employee\n";
        assert!(matches!(
            PopulationTable::read_csv(text.as_bytes(), schema()),
            Err(Error::InvalidValue { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn csv_round_trip_is_exact(rows in proptest::collection::vec(
                (0u32..110, 0u32..2, 0u32..2, 0u32..2,
                 proptest::option::of(10.0f64..70.0), proptest::option::of(0u32..2)), 0..40)) {
                let s = schema();
                let mut cols: Vec<Column> = s.variables.iter().map(|v| Column::missing_for(&v.kind, 0)).collect();
                for (age, g, r, u, bmi, src) in &rows {
                    if let Column::Numeric(v) = &mut cols[0] { v.push(*age as f64) }
                    if let Column::Categorical(v) = &mut cols[1] { v.push(*g) }
                    if let Column::Categorical(v) = &mut cols[2] { v.push(*r) }
                    if let Column::Categorical(v) = &mut cols[3] { v.push(*u) }
                    if let Column::Numeric(v) = &mut cols[4] { v.push(bmi.unwrap_or(f64::NAN)) }
                    if let Column::Categorical(v) = &mut cols[5] { v.push(src.unwrap_or(MISSING_CODE)) }
                }
                let t = PopulationTable::from_columns(s.clone(), cols).unwrap();
                let bytes = t.to_csv_bytes();
                let back = PopulationTable::read_csv(bytes.as_slice(), s).unwrap();
                prop_assert_eq!(back.to_csv_bytes(), bytes);
                for (a, b) in t.columns().iter().zip(back.columns()) {
                    match (a, b) {
                        (Column::Numeric(x), Column::Numeric(y)) => {
                            for (p, q) in x.iter().zip(y) {
                                prop_assert!(p.to_bits() == q.to_bits() || (p.is_nan() && q.is_nan()));
                            }
                        }
                        _ => prop_assert_eq!(a, b),
                    }
                }
            }
        }
    }
}
