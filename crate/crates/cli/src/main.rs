//! `synthpop`: fit a model pack on microdata (secure side), then generate
//! and evaluate synthetic populations from it (open side).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use synthpop::{ErrorClass, GatePolicy};

use config::CalibrationTarget;

#[derive(Parser)]
#[command(name = "synthpop", version, about = "Synthetic populations from sequential regression chains")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// Run config JSON; flags win over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a faux confidential population from a preset or spec file.
    FauxGen(FauxGenArgs),
    /// [secure] Fit the chain and write the model pack, seed strata and fit log.
    Fit(FitArgs),
    /// Check a pack document against the disclosure rules.
    Audit(AuditArgs),
    /// [secure] Write the seed strata of a pack as CSV.
    ExportStrata(ExportStrataArgs),
    /// [open] Generate synthetic population(s) from a pack.
    Generate(GenerateArgs),
    /// [open] Shift intercepts so expected prevalences hit targets.
    Calibrate(CalibrateArgs),
    /// [open] Compare a source and a synthetic population.
    Evaluate(EvaluateArgs),
    /// Print the built-in sixteen-model chain as JSON.
    DumpDefaultChain(DumpArgs),
}

#[derive(Args)]
pub struct FauxGenArgs {
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Override the number of rows.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory (population.csv, schema.json, spec.json, chain.json, run.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the ground-truth marginals (oracle.json).
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Chain JSON file (default: the built-in chain).
    #[arg(long)]
    pub chain: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pack path (default: <out>/model.synthpack.json).
    #[arg(long)]
    pub pack: Option<PathBuf>,
    /// Cross-validate every entry with this many folds.
    #[arg(long)]
    pub cv: Option<usize>,
    /// Hot-deck imputation replicates for imputed-replicate entries.
    #[arg(long)]
    pub impute: Option<usize>,
    #[arg(long, value_enum)]
    pub policy: Option<Policy>,
    #[arg(long)]
    pub min_count: Option<u64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum Policy {
    Fail,
    MergeAdjacentAge,
    KeepFlagged,
}

impl From<Policy> for GatePolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Fail => GatePolicy::Fail,
            Policy::MergeAdjacentAge => GatePolicy::MergeAdjacentAge,
            Policy::KeepFlagged => GatePolicy::KeepFlagged,
        }
    }
}

#[derive(Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pack: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExportStrataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pack: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pack: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Produce k populations from parameter draws with derived seeds.
    #[arg(long)]
    pub param_draws: Option<usize>,
    /// `variable=prevalence`; repeatable.
    #[arg(long, value_parser = CalibrationTarget::parse)]
    pub calibrate: Vec<CalibrationTarget>,
    /// Add a `<disease>_present` draw for every probability variable.
    #[arg(long)]
    pub presence: bool,
    /// Generate even when the pack fails the audit.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pack: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `variable=prevalence`; repeatable.
    #[arg(value_parser = CalibrationTarget::parse)]
    pub targets: Vec<CalibrationTarget>,
    /// Adjusted pack path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    /// Schema JSON; alternatively taken from `--pack`.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub pack: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `variable` or `variable=level`; repeatable.
    #[arg(long)]
    pub target: Vec<String>,
    /// Comma-separated stratum variables.
    #[arg(long, value_delimiter = ',')]
    pub strata: Vec<String>,
}

#[derive(Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Validation => 2,
        ErrorClass::Numeric => 3,
        ErrorClass::Audit => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot set up {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::FauxGen(a) => commands::faux_gen(a),
        Command::Fit(a) => commands::fit(a),
        Command::Audit(a) => commands::audit(a),
        Command::ExportStrata(a) => commands::export_strata(a),
        Command::Generate(a) => commands::generate(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::DumpDefaultChain(a) => commands::dump_default_chain(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
