//! Sequential, stratified fitting of the model chain.

mod config;
mod cv;
mod fit;
mod impute;
mod pool;

pub use config::{
    default_chain, ChainConfig, Family, FilterOp, GatePolicy, MissingPolicy, ModelSpecEntry,
    PopulationFilter, Predictor, Resolved, Transform, ZScoreMode, DEFAULT_CHAIN_VARIABLES,
    EDUCATION_LEVELS, ETHNIC_GROUP_LEVELS, HOUSEHOLD_SIZE_LEVELS, HOUSEHOLD_TYPE_LEVELS,
    INCOME_SOURCE_LEVELS, NO_YES, SMOKING_LEVELS,
};
pub use cv::{crossvalidate, fold_assignment, CvMetric, CvReport};
pub use fit::{fit_chain, FitData, ImputationSet, LOGIT_CLAMP};
pub use impute::hot_deck_impute;
pub use pool::pool_rubin;
