use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ChainConfig;
use super::fit::ImputationSet;
use crate::error::Result;
use crate::schema::age_class_lenient;
use crate::table::{Column, PopulationTable};

/// Hot-deck imputation for survey variables.
///
/// Rows take part when at least one `participation` variable is observed.
/// In those rows every missing cell of `variables` (where the variable's
/// chain filter admits the row) is filled with the value of a random donor
/// observed in the same age class and gender; with no donor in the cell any
/// observed participant is used.
pub fn hot_deck_impute(
    table: &PopulationTable,
    config: &ChainConfig,
    variables: &[&str],
    participation: &[&str],
    replicates: usize,
    seed: u64,
) -> Result<ImputationSet> {
    let schema = table.schema();
    let age = schema.require(schema.age_name())?;
    let gender = schema.require(schema.gender_name())?;
    let part: Vec<usize> = participation
        .iter()
        .map(|v| schema.require(v))
        .collect::<Result<_>>()?;
    let n = table.nrows();
    let participates: Vec<bool> = (0..n)
        .map(|r| part.iter().any(|&c| !table.column(c).is_missing(r)))
        .collect();
    let cell = |r: usize| -> (u8, u32) {
        let a = table.column(age).value(r).unwrap_or(0.0);
        (age_class_lenient(a), table.column(gender).code(r).unwrap_or(0))
    };

    let mut targets = Vec::new();
    for (vi, name) in variables.iter().enumerate() {
        let col = schema.require(name)?;
        let filter = config
            .entries
            .iter()
            .find(|e| e.dependent == *name)
            .and_then(|e| e.population_filter.clone());
        let filter_col = match &filter {
            Some(f) => Some(schema.require(&f.variable)?),
            None => None,
        };
        let admits = |r: usize| match (&filter, filter_col) {
            (Some(f), Some(c)) => f.accepts(table.column(c).value(r)),
            _ => true,
        };
        let mut donors: HashMap<(u8, u32), Vec<usize>> = HashMap::new();
        let mut any: Vec<usize> = Vec::new();
        let mut recipients = Vec::new();
        for r in 0..n {
            if !participates[r] || !admits(r) {
                continue;
            }
            if table.column(col).is_missing(r) {
                recipients.push(r);
            } else {
                donors.entry(cell(r)).or_default().push(r);
                any.push(r);
            }
        }
        targets.push((vi, col, donors, any, recipients));
    }

    let mut out = Vec::with_capacity(replicates);
    for m in 0..replicates {
        let mut rep = table.clone();
        for (vi, col, donors, any, recipients) in &targets {
            if any.is_empty() {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((m as u64) << 32) | *vi as u64);
            let source = table.column(*col);
            let mut fill: Vec<(usize, usize)> = Vec::with_capacity(recipients.len());
            for &r in recipients {
                let pool = donors.get(&cell(r)).unwrap_or(any);
                fill.push((r, pool[rng.random_range(0..pool.len())]));
            }
            match rep.column_mut(*col) {
                Column::Categorical(codes) => {
                    let src = source.as_codes().expect("categorical");
                    for (r, d) in fill {
                        codes[r] = src[d];
                    }
                }
                Column::Numeric(values) => {
                    let src = source.as_values().expect("numeric");
                    for (r, d) in fill {
                        values[r] = src[d];
                    }
                }
            }
        }
        out.push(rep);
    }
    ImputationSet::new(out)
}
