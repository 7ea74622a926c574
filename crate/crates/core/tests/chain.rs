mod common;

use std::collections::BTreeSet;

use synthpop::chain::fold_assignment;
use synthpop::faux::Effect;
use synthpop::pack::EquationModel;
use synthpop::{
    crossvalidate, fit_chain, generate_faux, Error, Family, FitData, ModelSpecEntry, RngContract,
};

fn coefficients(model: &EquationModel) -> &[f64] {
    match model {
        EquationModel::Linear { coefficients, .. } | EquationModel::Logistic { coefficients, .. } => coefficients,
        EquationModel::Multinomial { .. } => panic!("not a single-vector model"),
    }
}

#[test]
fn stratified_fit_equals_fits_on_subsets() {
    let spec = common::spec(4_000, vec![common::age_line(1.0)]);
    let table = generate_faux(&spec, &RngContract::new(3)).unwrap();
    let mut chain = spec.chain();
    chain.entries[0].predictors = Some(vec!["age".into()]);
    let pack = fit_chain(FitData::Table(&table), &chain).unwrap();
    let entry = &pack.equations[0];
    assert_eq!(entry.stratifiers, vec!["gender".to_string()]);

    let gender = table.schema().require("gender").unwrap();
    let mut flat = chain.clone();
    flat.entries[0].stratifiers.clear();
    for s in &entry.strata {
        let label = s.key.level_of("gender").unwrap();
        let code = table.schema().variables[gender]
            .kind
            .levels()
            .unwrap()
            .iter()
            .position(|l| l == label)
            .unwrap() as u32;
        let rows: Vec<usize> = (0..table.nrows())
            .filter(|&r| table.column(gender).code(r) == Some(code))
            .collect();
        let subset = table.select_rows(&rows);
        let single = fit_chain(FitData::Table(&subset), &flat).unwrap();
        let a = coefficients(&s.equation.as_ref().unwrap().model);
        let b = coefficients(&single.equations[0].strata[0].equation.as_ref().unwrap().model);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        assert_eq!(s.n, rows.len());
    }
}

#[test]
fn chain_order_is_enforced() {
    let spec = common::spec(
        200,
        vec![
            common::age_line(1.0),
            common::binary("flag", vec![Effect::constant(0.0)]),
        ],
    );
    let schema = spec.schema().unwrap();
    let table = generate_faux(&spec, &RngContract::new(1)).unwrap();

    let mut chain = spec.chain();
    chain.entries[0].predictors = Some(vec!["age".into(), "flag".into()]);
    assert!(matches!(chain.validate(&schema), Err(Error::Config(_))));
    assert!(matches!(fit_chain(FitData::Table(&table), &chain), Err(Error::Config(_))));

    let mut chain = spec.chain();
    chain.entries[0].stratifiers = vec!["flag".into()];
    assert!(chain.validate(&schema).is_err());

    let mut chain = spec.chain();
    chain.entries.push(ModelSpecEntry::new("y", Family::Linear));
    assert!(chain.validate(&schema).is_err());

    let mut chain = spec.chain();
    chain.entries.push(ModelSpecEntry::new("age", Family::Linear));
    assert!(chain.validate(&schema).is_err());

    let mut chain = spec.chain();
    chain.entries[1].family = Family::Linear;
    assert!(chain.validate(&schema).is_err());

    assert!(spec.chain().validate(&schema).is_ok());
}

#[test]
fn folds_partition_rows() {
    for (n, k) in [(10, 3), (1000, 7), (10_001, 5), (5, 5)] {
        let f = fold_assignment(n, k);
        let mut sizes = vec![0usize; k];
        f.iter().for_each(|&i| sizes[i] += 1);
        assert_eq!(sizes.iter().sum::<usize>(), n);
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }
}

#[test]
fn noiseless_cv_has_zero_error() {
    let spec = common::spec(2_000, vec![common::age_line(0.0)]);
    let table = generate_faux(&spec, &RngContract::new(5)).unwrap();
    let report = crossvalidate(FitData::Table(&table), &spec.chain(), 0, 5).unwrap();
    let sizes: BTreeSet<usize> = report.fold_sizes.iter().copied().collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    assert_eq!(report.fold_sizes.iter().sum::<usize>(), 2_000);
    assert!(report.mean < 1e-9, "rmse {}", report.mean);
}

#[test]
fn known_sigma_cv_error() {
    let sigma = 2.5;
    let spec = common::spec(10_000, vec![common::age_line(sigma)]);
    let table = generate_faux(&spec, &RngContract::new(8)).unwrap();
    let report = crossvalidate(FitData::Table(&table), &spec.chain(), 0, 5).unwrap();
    assert!((report.mean / sigma - 1.0).abs() < 0.1, "rmse {}", report.mean);
    assert!(report.per_fold.iter().all(Option::is_some));
}

#[test]
fn small_strata_fall_back_to_pooled_fit() {
    let spec = common::spec(
        3_000,
        vec![
            common::binary("rare", vec![Effect::constant(-6.5)]),
            common::age_line(1.0),
        ],
    );
    let table = generate_faux(&spec, &RngContract::new(2)).unwrap();
    let mut chain = spec.chain();
    chain.entries[1].stratifiers = vec!["rare".into()];
    let pack = fit_chain(FitData::Table(&table), &chain).unwrap();
    let entry = &pack.equations[1];
    assert!(entry.pooled.is_some());
    let rare = entry
        .strata
        .iter()
        .find(|s| s.key.level_of("rare") == Some("yes"));
    if let Some(s) = rare {
        assert!(s.fallback && s.equation.is_none());
    }
    assert!(entry.strata.iter().any(|s| !s.fallback));
}
