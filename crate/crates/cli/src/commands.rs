use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use synthpop::evaluation::{emit_report, stratified_compare, Target};
use synthpop::faux::{generate_faux, oracle_marginals, FauxSpec};
use synthpop::generator::{
    calibrate_marginal, draw_parameters, expand_seed, sample_chain, schema_with_presence, GenerationManifest,
    SampleOptions, CALIBRATION_TOL,
};
use synthpop::pack::PACK_EXTENSION;
use synthpop::schema::VariableKind;
use synthpop::{
    audit_document, crossvalidate, default_chain, fit_chain, hot_deck_impute, ChainConfig, Error, FitData,
    ImputationSet, MissingPolicy, ModelPack, PopulationSchema, PopulationTable, Result, RngContract,
};

use crate::config::{require_path, CalibrationTarget, Disclosure, Evaluation, Imputation, Paths, RunConfig};
use crate::{AuditArgs, CalibrateArgs, DumpArgs, EvaluateArgs, ExportStrataArgs, FauxGenArgs, FitArgs, GenerateArgs};

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_schema(path: &Path) -> Result<PopulationSchema> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PopulationSchema::from_json(&text)
}

fn read_pack(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Prints to stdout; a closed pipe is not an error.
fn print_json(value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match std::io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn info(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

pub fn faux_gen(a: FauxGenArgs) -> Result<()> {
    let mut spec = match (&a.preset, &a.spec) {
        (Some(p), _) => FauxSpec::preset(p)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            FauxSpec::from_json(&text)?
        }
        (None, None) => return Err(Error::InvalidArgument("give --preset or --spec".into())),
    };
    if let Some(n) = a.n {
        spec = spec.with_n(n);
    }
    create_dir(&a.out)?;
    let table = generate_faux(&spec, &RngContract::new(a.seed))?;
    table.write_csv_file(a.out.join("population.csv"))?;
    write_json(&a.out.join("schema.json"), table.schema())?;
    write_json(&a.out.join("spec.json"), &spec)?;
    let chain = spec.chain();
    fs::write(a.out.join("chain.json"), chain.to_json_pretty() + "\n").map_err(|e| Error::io(&a.out, e))?;
    let targets = spec.imputation_targets();
    let run = RunConfig {
        paths: Paths {
            input: Some("population.csv".into()),
            schema: Some("schema.json".into()),
            output_dir: Some("fit".into()),
            ..Paths::default()
        },
        chain: Some(crate::config::ChainRef::Path("chain.json".into())),
        seed: Some(a.seed),
        imputation: (!targets.is_empty()).then(|| Imputation {
            replicates: 5,
            seed: a.seed,
            variables: targets,
            participation: spec.survey_variables.clone(),
        }),
        ..RunConfig::default()
    };
    write_json(&a.out.join("run.json"), &run)?;
    if a.oracle {
        write_json(&a.out.join("oracle.json"), &oracle_marginals(&spec)?)?;
    }
    info(format!("wrote {} rows to {}", table.nrows(), a.out.display()));
    Ok(())
}

/// Default imputation targets: non-probability dependents of imputed
/// entries.
fn imputation_variables(chain: &ChainConfig, schema: &PopulationSchema) -> Vec<String> {
    chain
        .entries
        .iter()
        .filter(|e| e.missing_policy == MissingPolicy::ImputedReplicates)
        .filter(|e| schema.variable(&e.dependent).is_some_and(|v| v.kind != VariableKind::Probability))
        .map(|e| e.dependent.clone())
        .collect()
}

pub fn fit(a: FitArgs) -> Result<()> {
    let mut run = RunConfig::load(a.common.config.as_deref())?;
    if let Some(p) = a.input {
        run.paths.input = Some(p);
    }
    if let Some(p) = a.schema {
        run.paths.schema = Some(p);
    }
    if let Some(p) = a.out {
        run.paths.output_dir = Some(p);
    }
    if let Some(p) = a.pack {
        run.paths.pack = Some(p);
    }
    if let Some(p) = a.chain {
        run.chain = Some(crate::config::ChainRef::Path(p));
    }
    if let Some(k) = a.cv {
        run.cv_folds = Some(k);
    }
    if let Some(m) = a.impute {
        let imp = run.imputation.get_or_insert(Imputation {
            replicates: m,
            seed: run.seed.unwrap_or(0),
            variables: Vec::new(),
            participation: Vec::new(),
        });
        imp.replicates = m;
    }
    if a.policy.is_some() || a.min_count.is_some() {
        let d = run.disclosure.get_or_insert(Disclosure {
            policy: synthpop::GatePolicy::KeepFlagged,
            min_count: 10,
        });
        if let Some(p) = a.policy {
            d.policy = p.into();
        }
        if let Some(m) = a.min_count {
            d.min_count = m;
        }
    }
    let input = require_path(&run.paths.input, "input table")?.to_path_buf();
    let schema_path = require_path(&run.paths.schema, "schema")?.to_path_buf();
    for p in &run.paths.imputations {
        require_path(&Some(p.clone()), "imputation replicate")?;
    }
    let out_dir = run
        .paths
        .output_dir
        .clone()
        .ok_or_else(|| Error::InvalidArgument("no output directory given".into()))?;

    let schema = Arc::new(load_schema(&schema_path)?);
    let mut chain = run.chain()?.unwrap_or_else(default_chain);
    if let Some(d) = run.disclosure {
        chain.gate_policy = d.policy;
        chain.min_count = d.min_count;
    }
    chain.validate(&schema)?;
    info(format!("reading {}", input.display()));
    let table = PopulationTable::load_csv(&input, schema.clone())?;

    let mut imputation_log = Value::Null;
    let set = if !run.paths.imputations.is_empty() {
        let mut reps = Vec::new();
        for p in &run.paths.imputations {
            reps.push(PopulationTable::load_csv(p, schema.clone())?);
        }
        imputation_log = json!({"replicates": reps.len(), "source": "files"});
        Some(ImputationSet::new(reps)?)
    } else if let Some(imp) = run.imputation.as_ref().filter(|i| i.replicates > 0) {
        let vars = if imp.variables.is_empty() {
            imputation_variables(&chain, &schema)
        } else {
            imp.variables.clone()
        };
        let part = if imp.participation.is_empty() {
            vars.clone()
        } else {
            imp.participation.clone()
        };
        let v: Vec<&str> = vars.iter().map(String::as_str).collect();
        let p: Vec<&str> = part.iter().map(String::as_str).collect();
        info(format!("hot-deck imputing {} replicates of {:?}", imp.replicates, vars));
        imputation_log = json!({"replicates": imp.replicates, "source": "hot_deck", "seed": imp.seed, "variables": vars, "participation": part});
        Some(hot_deck_impute(&table, &chain, &v, &p, imp.replicates, imp.seed)?)
    } else {
        None
    };
    let data = match &set {
        Some(s) => FitData::Imputed(s),
        None => FitData::Table(&table),
    };

    info(format!("fitting {} entries", chain.entries.len()));
    let pack = fit_chain(data, &chain)?;
    let bytes = pack.to_bytes()?;
    let audit = audit_document(&bytes);
    create_dir(&out_dir)?;
    if !audit.passed {
        write_json(&out_dir.join("audit.json"), &audit)?;
        return Err(Error::Audit(format!(
            "fitted pack fails the disclosure audit: {:?}",
            audit.violations
        )));
    }

    let mut cv = Vec::new();
    if let Some(k) = run.cv_folds {
        for (idx, entry) in chain.entries.iter().enumerate() {
            info(format!("cross-validating {} ({k} folds)", entry.dependent));
            cv.push(match crossvalidate(data, &chain, idx, k) {
                Ok(r) => serde_json::to_value(r)?,
                Err(e) => json!({"entry": entry.dependent, "error": e.to_string()}),
            });
        }
    }

    let pack_path = run
        .paths
        .pack
        .clone()
        .unwrap_or_else(|| out_dir.join(format!("model{PACK_EXTENSION}")));
    fs::write(&pack_path, &bytes).map_err(|e| Error::io(&pack_path, e))?;
    let strata_path = out_dir.join("seed_strata.csv");
    pack.seed_strata
        .write_csv(File::create(&strata_path).map_err(|e| Error::io(&strata_path, e))?)?;
    let log = json!({
        "pack": pack_path,
        "pack_sha256": sha256_hex(&bytes),
        "records": table.nrows(),
        "seed_strata": {
            "rows": pack.seed_strata.rows.len(),
            "total": pack.seed_strata.total(),
            "flagged": pack.seed_strata.flagged(),
            "policy": pack.seed_strata.policy,
            "min_count": pack.seed_strata.min_count,
        },
        "imputation": imputation_log,
        "audit": audit,
        "strata": pack.fit_log(),
        "cv": cv,
    });
    write_json(&out_dir.join("fit_log.json"), &log)?;
    info(format!("wrote {}", pack_path.display()));
    Ok(())
}

fn pack_path(common_pack: Option<PathBuf>, run: &mut RunConfig) -> Result<PathBuf> {
    if let Some(p) = common_pack {
        run.paths.pack = Some(p);
    }
    Ok(require_path(&run.paths.pack, "pack")?.to_path_buf())
}

pub fn audit(a: AuditArgs) -> Result<()> {
    let mut run = RunConfig::load(a.common.config.as_deref())?;
    let path = pack_path(a.pack, &mut run)?;
    let report = audit_document(&read_pack(&path)?);
    print_json(&report)?;
    if report.passed {
        Ok(())
    } else {
        Err(Error::Audit(format!("{} violation(s)", report.violations.len())))
    }
}

pub fn export_strata(a: ExportStrataArgs) -> Result<()> {
    let mut run = RunConfig::load(a.common.config.as_deref())?;
    let path = pack_path(a.pack, &mut run)?;
    let pack = ModelPack::from_bytes(&read_pack(&path)?)?;
    let file = File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
    pack.seed_strata.write_csv(file)
}

/// Loads a pack, refusing it when the audit fails unless forced.
fn load_audited(path: &Path, force: bool) -> Result<(ModelPack, String)> {
    let bytes = read_pack(path)?;
    let report = audit_document(&bytes);
    if !report.passed {
        if !force {
            return Err(Error::Audit(format!(
                "pack fails the disclosure audit (use --force to override): {:?}",
                report.violations
            )));
        }
        info("warning: pack fails the disclosure audit; continuing because of --force");
    }
    Ok((ModelPack::from_bytes(&bytes)?, sha256_hex(&bytes)))
}

fn apply_calibrations(
    mut pack: ModelPack,
    targets: &[CalibrationTarget],
    seeds: &PopulationTable,
    rng: &RngContract,
) -> Result<(ModelPack, Vec<synthpop::CalibrationAdjustment>)> {
    let mut done = Vec::new();
    for t in targets {
        let (adj, next) = calibrate_marginal(&pack, &t.variable, t.target, seeds, rng, CALIBRATION_TOL)?;
        info(format!(
            "calibrated {}: multiplier {:.6}, expected {:.6} -> {:.6}",
            adj.variable, adj.multiplier, adj.expected_before, adj.achieved
        ));
        done.push(adj);
        pack = next;
    }
    Ok((pack, done))
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let mut run = RunConfig::load(a.common.config.as_deref())?;
    let path = pack_path(a.pack, &mut run)?;
    if let Some(o) = a.out {
        run.paths.output_dir = Some(o);
    }
    let out_dir = run
        .paths
        .output_dir
        .clone()
        .ok_or_else(|| Error::InvalidArgument("no output directory given".into()))?;
    let seed = a
        .seed
        .or(run.seed)
        .ok_or_else(|| Error::InvalidArgument("generation needs a master seed (--seed or config `seed`)".into()))?;
    let draws = a.param_draws.or(run.param_draws).unwrap_or(0);
    let targets = if a.calibrate.is_empty() {
        run.calibrations.clone()
    } else {
        a.calibrate
    };
    let presence = a.presence || run.presence;

    let (pack, pack_sha) = load_audited(&path, a.force)?;
    let schema = Arc::new(pack.schema()?);
    let (seeds, counts) = expand_seed(&pack.seed_strata, schema)?;
    let contract = RngContract::new(seed);
    let (pack, calibrations) = apply_calibrations(pack, &targets, &seeds, &contract)?;
    create_dir(&out_dir)?;
    let options = SampleOptions {
        presence,
        until: None,
    };
    let emit = |pack: &ModelPack, rng: RngContract, suffix: &str, draw| -> Result<()> {
        let table = sample_chain(pack, &seeds, &rng, options)?;
        let csv = table.to_csv_bytes();
        let csv_path = out_dir.join(format!("population{suffix}.csv"));
        fs::write(&csv_path, &csv).map_err(|e| Error::io(&csv_path, e))?;
        let manifest = GenerationManifest {
            master_seed: rng.master_seed,
            pack_sha256: pack_sha.clone(),
            counts,
            calibrations: calibrations.clone(),
            parameter_draw: draw,
            presence_columns: presence,
        };
        let mut value = serde_json::to_value(&manifest)?;
        value["output_sha256"] = json!(sha256_hex(&csv));
        write_json(&out_dir.join(format!("manifest{suffix}.json")), &value)?;
        info(format!("wrote {} records to {}", table.nrows(), csv_path.display()));
        Ok(())
    };
    if draws == 0 {
        emit(&pack, contract, "", None)?;
    } else {
        for i in 0..draws {
            let sample_rng = contract.derived(i as u64);
            let (drawn, report) = draw_parameters(&pack, &sample_rng.derived(u64::MAX))?;
            if report.repaired > 0 {
                info(format!("draw {}: repaired {} covariance block(s)", i + 1, report.repaired));
            }
            emit(&drawn, sample_rng, &format!("_{}", i + 1), Some(report))?;
        }
    }
    Ok(())
}

pub fn calibrate(a: CalibrateArgs) -> Result<()> {
    let mut run = RunConfig::load(a.common.config.as_deref())?;
    let path = pack_path(a.pack, &mut run)?;
    let seed = a
        .seed
        .or(run.seed)
        .ok_or_else(|| Error::InvalidArgument("calibration needs a master seed (--seed or config `seed`)".into()))?;
    let targets = if a.targets.is_empty() {
        run.calibrations.clone()
    } else {
        a.targets
    };
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no calibration targets given".into()));
    }
    let (pack, _) = load_audited(&path, a.force)?;
    let schema = Arc::new(pack.schema()?);
    let (seeds, _) = expand_seed(&pack.seed_strata, schema)?;
    let (pack, adjustments) = apply_calibrations(pack, &targets, &seeds, &RngContract::new(seed))?;
    pack.save(&a.out)?;
    print_json(&adjustments)?;
    Ok(())
}

fn csv_header(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    BufReader::new(file)
        .read_line(&mut line)
        .map_err(|e| Error::io(path, e))?;
    Ok(line.trim_end().split(',').map(str::to_string).collect())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut run = RunConfig::load(a.common.config.as_deref())?;
    if let Some(p) = a.source {
        run.paths.source = Some(p);
    }
    if let Some(p) = a.synthetic {
        run.paths.synthetic = Some(p);
    }
    if let Some(p) = a.schema {
        run.paths.schema = Some(p);
    }
    if let Some(p) = a.pack {
        run.paths.pack = Some(p);
    }
    if let Some(o) = a.out {
        run.paths.output_dir = Some(o);
    }
    let source = require_path(&run.paths.source, "source population")?.to_path_buf();
    let synthetic = require_path(&run.paths.synthetic, "synthetic population")?.to_path_buf();
    let out_dir = run
        .paths
        .output_dir
        .clone()
        .ok_or_else(|| Error::InvalidArgument("no output directory given".into()))?;
    let schema = match (&run.paths.schema, &run.paths.pack) {
        (Some(s), _) => load_schema(require_path(&Some(s.clone()), "schema")?)?,
        (None, Some(p)) => ModelPack::from_bytes(&read_pack(require_path(&Some(p.clone()), "pack")?)?)?.schema()?,
        (None, None) => return Err(Error::InvalidArgument("evaluation needs --schema or --pack".into())),
    };
    let evaluation = if a.target.is_empty() && a.strata.is_empty() {
        run.evaluation.clone()
    } else {
        Evaluation {
            targets: if a.target.is_empty() { run.evaluation.targets.clone() } else { a.target },
            strata: if a.strata.is_empty() { run.evaluation.strata.clone() } else { a.strata },
        }
    };
    let load = |path: &Path| -> Result<PopulationTable> {
        let header = csv_header(path)?;
        let names: Vec<&str> = header.iter().map(String::as_str).collect();
        let s = schema_with_presence(&schema, &names)?;
        PopulationTable::load_csv(path, Arc::new(s))
    };
    let (src, syn) = (load(&source)?, load(&synthetic)?);
    let strata: Vec<&str> = evaluation.strata.iter().map(String::as_str).collect();
    let comparisons = evaluation
        .targets
        .iter()
        .map(|t| stratified_compare(&src, &syn, &Target::parse(t), &strata))
        .collect::<Result<Vec<_>>>()?;
    let summary = emit_report(&out_dir, &src, &syn, &comparisons)?;
    print_json(&summary)?;
    Ok(())
}

pub fn dump_default_chain(a: DumpArgs) -> Result<()> {
    let text = default_chain().to_json_pretty() + "\n";
    match a.out {
        Some(p) => fs::write(&p, text).map_err(|e| Error::io(&p, e)),
        None => match std::io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
            _ => Ok(()),
        },
    }
}
