//! Synthetic populations from sequential, stratified regression chains.
//!
//! The secure side fits a [`ModelPack`] on microdata with [`fit_chain`];
//! the open side expands its seed strata and samples every chained variable
//! with [`sample_chain`], then compares the result with [`evaluation`].

pub mod chain;
pub mod design;
pub mod error;
pub mod evaluation;
pub mod faux;
pub mod generator;
pub mod glm;
pub mod linalg;
pub mod pack;
pub mod rng;
pub mod schema;
pub mod spline;
pub mod table;

pub use chain::{
    crossvalidate, default_chain, fit_chain, hot_deck_impute, pool_rubin, ChainConfig, CvReport, Family,
    FitData, GatePolicy, ImputationSet, MissingPolicy, ModelSpecEntry,
};
pub use error::{Error, ErrorClass, Result};
pub use evaluation::{emit_report, frequency_table, moments, stratified_compare, MomentsSummary, StratifiedComparison};
pub use faux::{generate_faux, oracle_marginals, FauxSpec};
pub use generator::{
    calibrate_marginal, draw_parameters, expand_seed, sample_chain, CalibrationAdjustment, GenerationManifest,
    SampleOptions,
};
pub use pack::{audit_document, disclosure_audit, export_seed_strata, AuditReport, ModelPack, SeedStrataTable};
pub use rng::RngContract;
pub use schema::{PopulationSchema, StratumKey, VariableKind, VariableSpec, ZScore};
pub use spline::SplineDef;
pub use table::{Column, PopulationTable};
