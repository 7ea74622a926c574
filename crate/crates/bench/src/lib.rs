//! Fixtures for the pipeline benchmarks.

use std::sync::Arc;

use synthpop::design::DesignMatrix;
use synthpop::{expand_seed, fit_chain, generate_faux, FauxSpec, FitData, ModelPack, PopulationTable, RngContract};

/// A faux population drawn from a preset.
pub fn population(preset: &str, n: usize, seed: u64) -> (FauxSpec, PopulationTable) {
    let spec = FauxSpec::preset(preset).expect("known preset").with_n(n);
    let table = generate_faux(&spec, &RngContract::new(seed)).expect("faux population");
    (spec, table)
}

/// A pack fitted on a preset population, with its expanded seed table.
pub fn fitted(preset: &str, n: usize) -> (ModelPack, PopulationTable) {
    let (spec, table) = population(preset, n, 1);
    let pack = fit_chain(FitData::Table(&table), &spec.chain()).expect("fit");
    let schema = Arc::new(pack.schema().expect("pack schema"));
    let seeds = expand_seed(&pack.seed_strata, schema).expect("seed expansion").0;
    (pack, seeds)
}

/// Design `[1, age, female]` and a binary response from the small preset.
pub fn logistic_problem(n: usize) -> (DesignMatrix, Vec<f64>) {
    let (_, table) = population("paperlike-small", n, 2);
    let age = table.observed_values("age").expect("age");
    let codes = |name: &str| -> Vec<f64> {
        let col = table.column_by_name(name).expect("column");
        (0..table.nrows())
            .map(|r| col.code(r).map_or(0.0, |c| f64::from(u8::from(c > 0))))
            .collect()
    };
    let female = codes("gender");
    let y = codes("household_type");
    let x = DesignMatrix::with_intercept(&[("age", &age), ("female", &female)]).expect("design");
    (x, y)
}
