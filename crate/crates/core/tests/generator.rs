mod common;

use std::sync::Arc;

use synthpop::faux::{Effect, FauxVariable, Rule};
use synthpop::generator::{schema_with_presence, CALIBRATION_TOL};
use synthpop::glm::logit;
use synthpop::linalg::LowerTriangular;
use synthpop::pack::EquationModel;
use synthpop::schema::VariableKind;
use synthpop::{
    calibrate_marginal, draw_parameters, expand_seed, fit_chain, generate_faux, sample_chain, Error, FitData,
    ModelPack, PopulationTable, RngContract, SampleOptions,
};

/// Pack with intercept-only, unstratified equations.
fn intercept_pack(variables: Vec<FauxVariable>, n: usize) -> (ModelPack, PopulationTable) {
    let spec = common::spec(n, variables);
    let table = generate_faux(&spec, &RngContract::new(12)).unwrap();
    let mut chain = spec.chain();
    for e in &mut chain.entries {
        e.stratifiers.clear();
        e.predictors = Some(Vec::new());
    }
    (fit_chain(FitData::Table(&table), &chain).unwrap(), table)
}

fn seeds_of(pack: &ModelPack) -> PopulationTable {
    expand_seed(&pack.seed_strata, Arc::new(pack.schema().unwrap())).unwrap().0
}

#[test]
fn odds_multiplier_closed_form() {
    let (mut pack, _) = intercept_pack(vec![common::binary("flag", vec![Effect::constant(-2.0)])], 2_000);
    let eq = pack.equations[0].strata[0].equation.as_mut().unwrap();
    eq.model.set_stacked_coefficients(&[logit(0.10)]);
    let seeds = seeds_of(&pack);
    let (adj, calibrated) =
        calibrate_marginal(&pack, "flag", 0.14, &seeds, &RngContract::new(1), CALIBRATION_TOL).unwrap();
    let closed: f64 = (0.14 / 0.86) / (0.10 / 0.90);
    assert!((closed - 1.465_116_279).abs() < 1e-8);
    assert!((adj.multiplier - closed).abs() < 1e-6, "{}", adj.multiplier);
    assert!((adj.expected_before - 0.10).abs() < 1e-12);
    assert!((adj.achieved - 0.14).abs() < 1e-9);
    let b = calibrated.equations[0].strata[0].equation.as_ref().unwrap().model.stacked_coefficients();
    assert!((b[0] - logit(0.14)).abs() < 1e-9);
}

#[test]
fn calibration_rejects_bad_targets() {
    let (pack, _) = intercept_pack(
        vec![
            common::binary("flag", vec![Effect::constant(-2.0)]),
            common::age_line(1.0),
        ],
        1_000,
    );
    let seeds = seeds_of(&pack);
    let rng = RngContract::new(1);
    assert!(matches!(
        calibrate_marginal(&pack, "y", 0.1, &seeds, &rng, CALIBRATION_TOL),
        Err(Error::InvalidArgument(_))
    ));
    assert!(calibrate_marginal(&pack, "flag", 1.2, &seeds, &rng, CALIBRATION_TOL).is_err());
    assert!(calibrate_marginal(&pack, "nope", 0.1, &seeds, &rng, CALIBRATION_TOL).is_err());
}

#[test]
fn logit_linear_calibration_hits_target() {
    let risk = FauxVariable {
        name: "risk".into(),
        kind: VariableKind::Probability,
        rule: Rule::LogitLinear {
            effects: vec![Effect::constant(-2.5), Effect::slope("age", 0.03, 40.0)],
            sigma: 0.8,
        },
        filter: None,
    };
    let spec = common::spec(5_000, vec![risk]);
    let table = generate_faux(&spec, &RngContract::new(2)).unwrap();
    let pack = fit_chain(FitData::Table(&table), &spec.chain()).unwrap();
    let seeds = seeds_of(&pack);
    let (adj, _) = calibrate_marginal(&pack, "risk", 0.2, &seeds, &RngContract::new(3), CALIBRATION_TOL).unwrap();
    assert!((adj.achieved - 0.2).abs() < CALIBRATION_TOL);
    assert!(adj.multiplier > 1.0);
}

#[test]
fn parameter_draws_follow_the_covariance() {
    let (mut pack, _) = intercept_pack(vec![common::age_line(1.0)], 500);
    let eq = pack.equations[0].strata[0].equation.as_mut().unwrap();
    let EquationModel::Linear { coefficients, covariance, .. } = &mut eq.model else {
        panic!("linear model expected");
    };
    coefficients[0] = 10.0;
    *covariance = Some(LowerTriangular { dim: 1, values: vec![4.0] });

    let draws: Vec<f64> = (0..4_000u64)
        .map(|i| {
            let (p, report) = draw_parameters(&pack, &RngContract::new(77).derived(i)).unwrap();
            assert_eq!((report.equations, report.repaired), (1, 0));
            p.equations[0].strata[0].equation.as_ref().unwrap().model.stacked_coefficients()[0]
        })
        .collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - 10.0).abs() < 4.0 * (4.0 / n).sqrt());
    assert!((var / 4.0 - 1.0).abs() < 0.1, "variance {var}");
}

#[test]
fn indefinite_covariance_is_repaired() {
    let (mut pack, _) = intercept_pack(vec![common::age_line(1.0)], 500);
    let eq = pack.equations[0].strata[0].equation.as_mut().unwrap();
    if let EquationModel::Linear { covariance, .. } = &mut eq.model {
        *covariance = Some(LowerTriangular { dim: 1, values: vec![-1.0] });
    }
    let before = eq.model.stacked_coefficients();
    let (p, report) = draw_parameters(&pack, &RngContract::new(1)).unwrap();
    assert_eq!(report.repaired, 1);
    assert!(report.min_eigenvalue < 0.0);
    let after = p.equations[0].strata[0].equation.as_ref().unwrap().model.stacked_coefficients();
    assert_eq!(before, after);
}

fn chain_pack() -> (ModelPack, PopulationTable) {
    let spec = common::spec(
        6_000,
        vec![
            common::categorical(
                "kind",
                &["a", "b", "c"],
                vec![vec![], vec![Effect::constant(0.3)], vec![Effect::slope("age", 0.02, 40.0)]],
            ),
            common::binary("flag", vec![Effect::level("kind", &[0.0, 0.5, -0.5])]),
            common::age_line(1.5),
            FauxVariable {
                name: "risk".into(),
                kind: VariableKind::Probability,
                rule: Rule::LogitLinear {
                    effects: vec![Effect::constant(-2.0), Effect::level("flag", &[0.0, 1.0])],
                    sigma: 0.5,
                },
                filter: None,
            },
        ],
    );
    let table = generate_faux(&spec, &RngContract::new(21)).unwrap();
    (fit_chain(FitData::Table(&table), &spec.chain()).unwrap(), table)
}

#[test]
fn generation_is_deterministic_across_thread_counts() {
    let (pack, _) = chain_pack();
    let seeds = seeds_of(&pack);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                sample_chain(&pack, &seeds, &RngContract::new(5), SampleOptions::default())
                    .unwrap()
                    .to_csv_bytes()
            })
    };
    let one = run(1);
    assert_eq!(one, run(1));
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
    let other = sample_chain(&pack, &seeds, &RngContract::new(6), SampleOptions::default()).unwrap();
    assert_ne!(one, other.to_csv_bytes());
}

#[test]
fn seed_variables_are_copied_exactly() {
    let (pack, source) = chain_pack();
    let seeds = seeds_of(&pack);
    let synthetic = sample_chain(&pack, &seeds, &RngContract::new(5), SampleOptions::default()).unwrap();
    assert_eq!(synthetic.nrows(), source.nrows());
    let mut a = source.observed_values("age").unwrap();
    let mut b = synthetic.observed_values("age").unwrap();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    assert_eq!(a, b);
    for v in ["gender", "region", "urbanity"] {
        let count = |t: &PopulationTable| {
            let mut c = t.column_by_name(v).unwrap().as_codes().unwrap().to_vec();
            c.sort_unstable();
            c
        };
        assert_eq!(count(&source), count(&synthetic));
    }
}

#[test]
fn presence_columns_follow_probabilities() {
    let (pack, _) = chain_pack();
    let seeds = seeds_of(&pack);
    let options = SampleOptions {
        presence: true,
        until: None,
    };
    let t = sample_chain(&pack, &seeds, &RngContract::new(9), options).unwrap();
    let p = t.observed_values("risk").unwrap();
    let present = t.column_by_name("risk_present").unwrap().as_codes().unwrap();
    let yes = present.iter().filter(|&&c| c == 1).count() as f64;
    let expected: f64 = p.iter().sum();
    assert!((yes - expected).abs() < 4.0 * expected.sqrt());

    let names: Vec<String> = t.schema().variables.iter().map(|v| v.name.clone()).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let schema = schema_with_presence(&pack.schema().unwrap(), &refs).unwrap();
    assert_eq!(&schema, t.schema());
    assert!(schema_with_presence(&pack.schema().unwrap(), &["y_present"]).is_err());
}

#[test]
fn foreign_seed_tables_are_rejected() {
    let (pack, _) = chain_pack();
    let other = common::spec(10, vec![common::age_line(1.0)]);
    let table = generate_faux(&other, &RngContract::new(1)).unwrap();
    assert!(matches!(
        sample_chain(&pack, &table, &RngContract::new(1), SampleOptions::default()),
        Err(Error::SchemaHashMismatch { .. })
    ));
}
