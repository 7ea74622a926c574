#![allow(dead_code)]

use std::collections::BTreeMap;

use synthpop::faux::{Effect, FauxVariable, Residual, Rule, SeedShape};
use synthpop::schema::VariableKind;
use synthpop::FauxSpec;

pub fn seeds() -> SeedShape {
    SeedShape {
        age_max: 90,
        age_plateau: 60,
        regions: 3,
        urbanity_levels: 2,
        male_share: 0.5,
    }
}

pub fn spec(n: usize, variables: Vec<FauxVariable>) -> FauxSpec {
    FauxSpec {
        n,
        seeds: seeds(),
        variables,
        survey_rate: 1.0,
        survey_variables: Vec::new(),
        mcar: BTreeMap::new(),
    }
}

pub fn categorical(name: &str, levels: &[&str], logits: Vec<Vec<Effect>>) -> FauxVariable {
    FauxVariable {
        name: name.into(),
        kind: VariableKind::Categorical {
            levels: levels.iter().map(|s| s.to_string()).collect(),
        },
        rule: Rule::Categorical { logits },
        filter: None,
    }
}

pub fn binary(name: &str, effects: Vec<Effect>) -> FauxVariable {
    FauxVariable {
        name: name.into(),
        kind: VariableKind::Categorical {
            levels: vec!["no".into(), "yes".into()],
        },
        rule: Rule::Logistic { effects },
        filter: None,
    }
}

pub fn linear(name: &str, effects: Vec<Effect>, sigma: f64) -> FauxVariable {
    FauxVariable {
        name: name.into(),
        kind: VariableKind::Continuous { min: None, max: None },
        rule: Rule::Linear {
            effects,
            sigma,
            residual: Residual::Normal,
        },
        filter: None,
    }
}

/// `y = 20 + 0.1 (age - 40) + sigma * e`.
pub fn age_line(sigma: f64) -> FauxVariable {
    linear(
        "y",
        vec![Effect::constant(20.0), Effect::slope("age", 0.1, 40.0)],
        sigma,
    )
}
