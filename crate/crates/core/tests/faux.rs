mod common;

use synthpop::faux::{brute_force_marginals, Effect, FauxVariable, OracleMethod, Rule};
use synthpop::schema::VariableKind;
use synthpop::{generate_faux, oracle_marginals, FauxSpec, RngContract};

fn chained_spec(n: usize) -> FauxSpec {
    let mut spec = common::spec(
        n,
        vec![
            common::categorical(
                "kind",
                &["a", "b", "c"],
                vec![
                    vec![],
                    vec![Effect::constant(0.4), Effect::level("gender", &[0.0, -0.6])],
                    vec![Effect::slope("age", 0.03, 45.0)],
                ],
            ),
            common::binary(
                "flag",
                vec![Effect::constant(-1.0), Effect::level("kind", &[0.0, 1.2, -0.4])],
            ),
            common::linear(
                "score",
                vec![
                    Effect::constant(50.0),
                    Effect::level("flag", &[0.0, 6.0]),
                    Effect::slope("age", -0.1, 45.0),
                ],
                8.0,
            ),
            FauxVariable {
                name: "risk".into(),
                kind: VariableKind::Probability,
                rule: Rule::LogitLinear {
                    effects: vec![Effect::constant(-2.0), Effect::level("kind", &[0.0, 0.3, 0.9])],
                    sigma: 0.7,
                },
                filter: None,
            },
        ],
    );
    spec.variables[2].filter = Some(synthpop::chain::PopulationFilter::new(
        "age",
        synthpop::chain::FilterOp::Gt,
        18.0,
    ));
    spec
}

#[test]
fn exact_oracle_agrees_with_brute_force() {
    let spec = chained_spec(1);
    let exact = oracle_marginals(&spec).unwrap();
    assert_eq!(exact.method, OracleMethod::Exact);
    let mc = brute_force_marginals(&spec, 400_000, &RngContract::new(99)).unwrap();
    for m in &exact.variables {
        let b = mc.get(&m.variable).unwrap();
        assert!((m.domain - b.domain).abs() < 0.005, "{} domain", m.variable);
        for (x, y) in m.levels.iter().zip(&b.levels) {
            assert!((x.share - y.share).abs() < 5.0 * y.se.max(1e-4), "{} {}", m.variable, x.level);
        }
        if let (Some(a), Some(c)) = (m.mean, b.mean) {
            assert!((a - c).abs() < 5.0 * b.mean_se.max(1e-9), "{} mean {a} vs {c}", m.variable);
            let (sa, sc) = (m.sd.unwrap(), b.sd.unwrap());
            assert!((sa / sc - 1.0).abs() < 0.01, "{} sd {sa} vs {sc}", m.variable);
        }
    }
}

#[test]
fn generated_population_matches_oracle() {
    let spec = chained_spec(200_000);
    let table = generate_faux(&spec, &RngContract::new(4)).unwrap();
    let oracle = oracle_marginals(&spec).unwrap();
    let n = spec.n as f64;
    for m in &oracle.variables {
        let col = table.column_by_name(&m.variable).unwrap();
        let observed = table.nrows() - col.missing_count();
        assert!((observed as f64 / n - m.domain).abs() < 0.005);
        if let Some(codes) = col.as_codes() {
            for (code, share) in m.levels.iter().enumerate() {
                let count = codes.iter().filter(|&&c| c == code as u32).count() as f64;
                let p = count / observed as f64;
                let se = (share.share * (1.0 - share.share) / observed as f64).sqrt();
                assert!((p - share.share).abs() < 5.0 * se + 1e-9, "{} {}", m.variable, share.level);
            }
        } else {
            let values = table.observed_values(&m.variable).unwrap();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let se = m.sd.unwrap() / (values.len() as f64).sqrt();
            assert!((mean - m.mean.unwrap()).abs() < 5.0 * se, "{} mean", m.variable);
        }
    }
}

#[test]
fn survey_mask_hits_its_rate() {
    let mut spec = common::spec(
        100_000,
        vec![common::linear("answer", vec![Effect::constant(1.0)], 1.0)],
    );
    spec.survey_rate = 0.02;
    spec.survey_variables = vec!["answer".into()];
    let table = generate_faux(&spec, &RngContract::new(6)).unwrap();
    let col = table.column_by_name("answer").unwrap();
    let rate = (table.nrows() - col.missing_count()) as f64 / table.nrows() as f64;
    assert!((rate - 0.02).abs() < 0.003, "survey rate {rate}");
}

#[test]
fn generation_is_reproducible() {
    let spec = chained_spec(5_000);
    let a = generate_faux(&spec, &RngContract::new(1)).unwrap();
    let b = generate_faux(&spec, &RngContract::new(1)).unwrap();
    let c = generate_faux(&spec, &RngContract::new(2)).unwrap();
    assert_eq!(a.to_csv_bytes(), b.to_csv_bytes());
    assert_ne!(a.to_csv_bytes(), c.to_csv_bytes());
    let json = spec.to_json_pretty();
    assert_eq!(FauxSpec::from_json(&json).unwrap(), spec);
}

#[test]
fn presets_build_consistent_chains() {
    for name in synthpop::faux::PRESETS {
        let spec = FauxSpec::preset(name).unwrap();
        let schema = spec.schema().unwrap();
        spec.chain().validate(&schema).unwrap();
    }
    assert!(FauxSpec::preset("nope").is_err());
}
