use synthpop::pack::EquationModel;
use synthpop::{fit_chain, generate_faux, hot_deck_impute, FauxSpec, FitData, MissingPolicy, RngContract};

#[test]
fn replicates_are_pooled_into_survey_equations() {
    let spec = FauxSpec::preset("paperlike-full").unwrap().with_n(12_000);
    let table = generate_faux(&spec, &RngContract::new(3)).unwrap();
    let chain = spec.chain();
    let targets = spec.imputation_targets();
    let vars: Vec<&str> = targets.iter().map(String::as_str).collect();
    let part: Vec<&str> = spec.survey_variables.iter().map(String::as_str).collect();
    let set = hot_deck_impute(&table, &chain, &vars, &part, 3, 11).unwrap();
    assert_eq!(set.len(), 3);

    let bmi = table.schema().require("bmi").unwrap();
    let filled = set.replicates()[0].column(bmi).missing_count();
    assert!(filled < table.column(bmi).missing_count());
    let again = hot_deck_impute(&table, &chain, &vars, &part, 3, 11).unwrap();
    assert_eq!(again.replicates()[2].to_csv_bytes(), set.replicates()[2].to_csv_bytes());

    let single = fit_chain(FitData::Table(&table), &chain).unwrap();
    let pooled = fit_chain(FitData::Imputed(&set), &chain).unwrap();
    for (idx, entry) in chain.entries.iter().enumerate() {
        let expect = if entry.missing_policy == MissingPolicy::ImputedReplicates { 3 } else { 1 };
        for eq in pooled.equations[idx].equations() {
            assert_eq!(eq.diagnostics.replicates, expect, "{}", entry.dependent);
        }
    }
    let idx = chain.entry_index("income_pct").unwrap();
    assert_eq!(single.equations[idx], pooled.equations[idx]);

    let idx = chain.entry_index("bmi").unwrap();
    let variance = |m: &EquationModel| m.covariance().unwrap().values[0];
    let s = single.equations[idx].strata[0].equation.as_ref().unwrap();
    let p = pooled.equations[idx].strata[0].equation.as_ref().unwrap();
    assert!(p.n > s.n);
    assert!(variance(&p.model).is_finite() && variance(&p.model) > 0.0);
}
