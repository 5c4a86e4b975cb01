//! The command-line pipeline: generate, train, evaluate, scenarios,
//! optimize, report and export-map.
//!
//! A run is driven by a [`RunConfig`], usually read from a TOML file and
//! patched by command-line flags. Every subcommand stages its outputs in a
//! temporary directory, promotes them only once all of them are written, and
//! records a `manifest-<command>.json` in the output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::choice::{
    evaluate, logit_train, ChoiceModel, Dataset, EvalReport, FollowModel, FrequencyModel, LogitChoiceModel,
    LogitConfig, LogitLearner, LogitModel,
};
use crate::district::{read_district, read_zoning, write_district, write_zoning, ArtifactStamp, District, StudentId, Zoning};
use crate::error::{Error, Result};
use crate::optimize::{local_search_optimize, method_table, Method, SolveResult, SolverConfig};
use crate::report::{
    export_geojson, historical_attendance_matrix, rezone_report, scenario_attendance_matrix, summary_text,
    write_enrollment_csv, write_report_csv, MapOverlay, OverlayKind,
};
use crate::scenario::{sample_scenarios_with, ScenarioOptions, ScenarioTable};
use crate::synth::{generate_district, GenParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable capping worker threads.
pub const WORKERS_ENV: &str = "RWC_WORKERS";
/// Environment variable naming the staging directory.
pub const TMPDIR_ENV: &str = "RWC_TMPDIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Train,
    Evaluate,
    Scenarios,
    Optimize,
    Report,
    ExportMap,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Scenarios => "scenarios",
            Command::Optimize => "optimize",
            Command::Report => "report",
            Command::ExportMap => "export-map",
        }
    }
}

/// Which choice model samples a scenario table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Follow,
    Frequency,
    Logit,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "follow" => Ok(ModelKind::Follow),
            "frequency" => Ok(ModelKind::Frequency),
            "logit" => Ok(ModelKind::Logit),
            _ => Err(Error::Config(format!("unknown choice model {s:?}; expected follow, frequency or logit"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub district: PathBuf,
    pub model: PathBuf,
    /// Scenario table written by `scenarios`; when set, `optimize` and
    /// `report` read it instead of sampling a fresh one.
    pub table: Option<PathBuf>,
    /// Zoning read by `report` and `export-map`; defaults to the one
    /// `optimize` writes.
    pub zoning: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            district: "district".into(),
            model: "model.json".into(),
            table: None,
            zoning: None,
            out: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub workers: Option<usize>,
    pub generate: GenParams,
    pub train: LogitConfig,
    pub folds: usize,
    pub eval_seed: u64,
    /// Model used by the `scenarios` subcommand.
    pub choice_model: ModelKind,
    pub scenario_seed: u64,
    pub candidate_cap: Option<usize>,
    pub solver: SolverConfig,
    pub overlay: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            workers: None,
            generate: GenParams::default(),
            train: LogitConfig::default(),
            folds: 10,
            eval_seed: 0,
            choice_model: ModelKind::Logit,
            scenario_seed: 1,
            candidate_cap: None,
            solver: SolverConfig::default(),
            overlay: "none".into(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over everything except paths and worker count, so relocating
    /// a run does not change its hash.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("paths");
            m.remove("workers");
        }
        hex::encode(Sha256::digest(serde_json::to_vec(&v).expect("json")))
    }

    pub fn validate(&self, command: Command) -> Result<()> {
        self.generate.validate()?;
        self.solver.validate()?;
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        OverlayKind::from_str(&self.overlay)?;
        if command != Command::Generate && !self.paths.district.join("schools.csv").exists() {
            return Err(Error::Config(format!(
                "district directory {} not found; run generate first",
                self.paths.district.display()
            )));
        }
        Ok(())
    }
}

/// Files written into a private directory and moved into place together.
struct Staging {
    dir: tempfile::TempDir,
    moves: Vec<(PathBuf, PathBuf)>,
}

impl Staging {
    fn new(dest_hint: &Path) -> Result<Self> {
        let base = match std::env::var_os(TMPDIR_ENV) {
            Some(d) => PathBuf::from(d),
            None => {
                let parent = dest_hint.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                parent.to_path_buf()
            }
        };
        let dir = tempfile::Builder::new()
            .prefix(".rwc-staging-")
            .tempdir_in(&base)
            .map_err(|e| Error::io(&base, e))?;
        Ok(Staging { dir, moves: Vec::new() })
    }

    /// Staged location for a file that will end up at `dest`.
    fn path(&mut self, dest: &Path) -> PathBuf {
        let staged = self.dir.path().join(format!("{}", self.moves.len()));
        self.moves.push((staged.clone(), dest.to_path_buf()));
        staged
    }

    fn write(&mut self, dest: &Path, bytes: &[u8]) -> Result<()> {
        let p = self.path(dest);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for (staged, dest) in &self.moves {
            if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            if fs::rename(staged, dest).is_err() {
                // staging may sit on another filesystem
                let tmp = dest.with_extension("rwc-partial");
                fs::copy(staged, &tmp).map_err(|e| Error::io(&tmp, e))?;
                fs::rename(&tmp, dest).map_err(|e| Error::io(dest, e))?;
            }
            out.push(dest.clone());
        }
        Ok(out)
    }
}

/// Trained model file: the model plus the hashes it was trained under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub config_hash: String,
    pub district_hash: String,
    pub model: LogitModel,
}

/// Loads a model file, refusing one trained on another district.
pub fn load_model(path: &Path, district: &District) -> Result<LogitChoiceModel> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "trained model file {} not found; run train first",
            path.display()
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    if file.district_hash != district.fingerprint() {
        return Err(Error::Mismatch(format!(
            "model {} was trained on a different district",
            path.display()
        )));
    }
    LogitChoiceModel::new(file.model)
}

fn load_table(path: &Path, district: &District) -> Result<ScenarioTable> {
    let (table, _) = ScenarioTable::read(path)?;
    if table.district_hash() != district.fingerprint() {
        return Err(Error::Mismatch(format!(
            "scenario table {} was sampled for a different district",
            path.display()
        )));
    }
    Ok(table)
}

/// Outcome of one subcommand.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outputs: Vec<PathBuf>,
    pub summary: String,
}

/// Runs `command` under `config` on a pool of at most `workers` threads
/// (falling back to `RWC_WORKERS`).
pub fn run(command: Command, config: &RunConfig) -> Result<RunOutcome> {
    config.validate(command)?;
    let workers = match config.workers {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.parse().map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a count")))?),
            Err(_) => None,
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(command, config))
}

struct Ctx<'a> {
    config: &'a RunConfig,
    hash: String,
    started: Instant,
    staging: Staging,
    inputs: Vec<(String, PathBuf)>,
    seeds: Value,
    results: Value,
}

impl Ctx<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.config.paths.out.join(name)
    }

    fn stamp(&self, district: &District) -> ArtifactStamp {
        ArtifactStamp::new(self.hash.clone(), district.fingerprint())
    }

    fn stamped_csv(&mut self, dest: &Path, district: &District, body: &[u8]) -> Result<()> {
        let mut bytes = Vec::new();
        if let Some(line) = self.stamp(district).line() {
            bytes.extend_from_slice(line.as_bytes());
            bytes.push(b'\n');
        }
        bytes.extend_from_slice(body);
        self.staging.write(dest, &bytes)
    }

    fn load_district(&mut self) -> Result<District> {
        let dir = self.config.paths.district.clone();
        self.inputs.push(("district".into(), dir.clone()));
        Ok(read_district(&dir)?.0)
    }

    fn finish(mut self, command: Command, summary: String) -> Result<RunOutcome> {
        let inputs: Vec<Value> = self
            .inputs
            .iter()
            .map(|(k, p)| json!({"role": k, "path": p.display().to_string(), "sha256": file_digest(p)}))
            .collect();
        let mut outputs: Vec<String> = self.staging.moves.iter().map(|(_, d)| d.display().to_string()).collect();
        let manifest_path = self.out(&format!("manifest-{}.json", command.as_str()));
        outputs.push(manifest_path.display().to_string());
        let manifest = json!({
            "command": command.as_str(),
            "version": VERSION,
            "config_hash": self.hash,
            "config": self.config,
            "inputs": inputs,
            "outputs": outputs,
            "seeds": self.seeds,
            "results": self.results,
            "wall_time_secs": self.started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&manifest)?;
        self.staging.write(&manifest_path, text.as_bytes())?;
        let outputs = self.staging.commit()?;
        Ok(RunOutcome { outputs, summary })
    }
}

fn file_digest(path: &Path) -> Option<String> {
    if path.is_file() {
        fs::read(path).ok().map(|b| hex::encode(Sha256::digest(b)))
    } else {
        None
    }
}

fn run_inner(command: Command, config: &RunConfig) -> Result<RunOutcome> {
    let dest_hint = config.paths.out.join("x");
    let mut ctx = Ctx {
        config,
        hash: config.hash(),
        started: Instant::now(),
        staging: Staging::new(&dest_hint)?,
        inputs: Vec::new(),
        seeds: json!({}),
        results: json!({}),
    };
    let summary = match command {
        Command::Generate => cmd_generate(&mut ctx)?,
        Command::Train => cmd_train(&mut ctx)?,
        Command::Evaluate => cmd_evaluate(&mut ctx)?,
        Command::Scenarios => cmd_scenarios(&mut ctx)?,
        Command::Optimize => cmd_optimize(&mut ctx)?,
        Command::Report => cmd_report(&mut ctx)?,
        Command::ExportMap => cmd_export_map(&mut ctx)?,
    };
    ctx.finish(command, summary)
}

fn cmd_generate(ctx: &mut Ctx<'_>) -> Result<String> {
    let p = &ctx.config.generate;
    let district = generate_district(p)?;
    let staged = ctx.staging.path(&ctx.config.paths.district.join("blocks.csv"));
    let stage_dir = staged.with_extension("d");
    write_district(&stage_dir, &district, &ctx.stamp(&district))?;
    // the first staged slot carries blocks.csv; the rest follow by name
    fs::rename(stage_dir.join("blocks.csv"), &staged).map_err(|e| Error::io(&staged, e))?;
    for name in ["schools.csv", "students.csv", "adjacency.csv"] {
        let dest = ctx.config.paths.district.join(name);
        let to = ctx.staging.path(&dest);
        fs::rename(stage_dir.join(name), &to).map_err(|e| Error::io(&to, e))?;
    }
    ctx.seeds = json!({"generate": p.seed});
    let follow = crate::synth::follow_rate(&district);
    ctx.results = json!({
        "district_hash": district.fingerprint(),
        "blocks": district.n_blocks(),
        "schools": district.n_schools(),
        "students": district.n_students(),
        "follow_rate": follow,
        "magnet_opt_out_share": crate::synth::magnet_opt_out_share(&district),
    });
    Ok(format!(
        "generated {} blocks, {} schools, {} students (follow rate {:.3})",
        district.n_blocks(),
        district.n_schools(),
        district.n_students(),
        follow
    ))
}

fn cmd_train(ctx: &mut Ctx<'_>) -> Result<String> {
    let district = ctx.load_district()?;
    let ids: Vec<StudentId> = (0..district.n_students()).map(StudentId::from_index).collect();
    let fit = logit_train(&Dataset::from_students(&district, &ids), &ctx.config.train)?;
    let file = ModelFile {
        config_hash: ctx.hash.clone(),
        district_hash: district.fingerprint(),
        model: fit.model,
    };
    let text = serde_json::to_string_pretty(&file)?;
    let dest = ctx.config.paths.model.clone();
    ctx.staging.write(&dest, text.as_bytes())?;
    let loss = fit.losses.last().copied().unwrap_or(f64::NAN);
    ctx.results = json!({"iterations": fit.iterations, "final_loss": loss});
    Ok(format!("trained logit model in {} steps, loss {loss:.6}", fit.iterations))
}

fn cmd_evaluate(ctx: &mut Ctx<'_>) -> Result<String> {
    let district = ctx.load_district()?;
    let folds = ctx.config.folds;
    let seed = ctx.config.eval_seed;
    let learner = LogitLearner {
        config: ctx.config.train,
    };
    let reports = vec![
        evaluate(&FollowModel, &district, folds, seed)?,
        evaluate(&FrequencyModel::default(), &district, folds, seed)?,
        evaluate(&learner, &district, folds, seed)?,
    ];
    let mut buf = Vec::new();
    EvalReport::write_csv(&reports, &mut buf)?;
    let dest = ctx.out("evaluation.csv");
    ctx.stamped_csv(&dest, &district, &buf)?;

    let mut folds_csv = csv::Writer::from_writer(Vec::new());
    folds_csv.write_record(["model", "fold", "n_test", "accuracy", "top3_accuracy", "top5_accuracy"])?;
    for r in &reports {
        for (k, f) in r.per_fold.iter().enumerate() {
            let top = |v: f64| if r.top3_accuracy.is_some() { format!("{v:.4}") } else { "-".into() };
            folds_csv.write_record([
                r.model.clone(),
                k.to_string(),
                f.n_test.to_string(),
                format!("{:.4}", f.accuracy),
                top(f.top3_accuracy),
                top(f.top5_accuracy),
            ])?;
        }
    }
    let body = folds_csv.into_inner().map_err(|e| Error::Domain(e.to_string()))?;
    let dest = ctx.out("evaluation_folds.csv");
    ctx.stamped_csv(&dest, &district, &body)?;
    ctx.seeds = json!({"evaluate": seed});
    ctx.results = serde_json::to_value(
        reports
            .iter()
            .map(|r| (r.model.clone(), r.accuracy()))
            .collect::<std::collections::BTreeMap<_, _>>(),
    )?;
    let mut s = String::new();
    for r in &reports {
        s.push_str(&format!("{:>10}  top-1 {:.4}\n", r.model, r.accuracy()));
    }
    Ok(s.trim_end().to_string())
}

fn scenario_model(ctx: &mut Ctx<'_>, kind: ModelKind, district: &District) -> Result<Box<dyn ChoiceModel>> {
    Ok(match kind {
        ModelKind::Follow => Box::new(FollowModel),
        ModelKind::Frequency => Box::new(FrequencyModel::default()),
        ModelKind::Logit => {
            let path = ctx.config.paths.model.clone();
            let m = load_model(&path, district)?;
            ctx.inputs.push(("model".into(), path));
            Box::new(m)
        }
    })
}

fn cmd_scenarios(ctx: &mut Ctx<'_>) -> Result<String> {
    let district = ctx.load_district()?;
    let kind = ctx.config.choice_model;
    let model = scenario_model(ctx, kind, &district)?;
    let n = if kind == ModelKind::Follow { 1 } else { ctx.config.solver.n_scenarios };
    let options = ScenarioOptions {
        candidate_cap: ctx.config.candidate_cap,
    };
    let table = sample_scenarios_with(model.as_ref(), &district, n, ctx.config.scenario_seed, &options)?;
    let dest = ctx
        .config
        .paths
        .table
        .clone()
        .unwrap_or_else(|| ctx.out("scenarios.bin"));
    let staged = ctx.staging.path(&dest);
    table.write(&staged, &ctx.hash)?;
    ctx.seeds = json!({"scenarios": ctx.config.scenario_seed});
    ctx.results = json!({"model": table.model_fingerprint(), "scenarios": n});
    Ok(format!("sampled {n} scenarios with {}", model.name()))
}

/// Table for `method`: the configured table file if any, else a fresh sample.
fn table_for(ctx: &mut Ctx<'_>, method: Method, district: &District) -> Result<ScenarioTable> {
    if let Some(path) = ctx.config.paths.table.clone() {
        let t = load_table(&path, district)?;
        ctx.inputs.push(("table".into(), path));
        return Ok(t);
    }
    let learned = if method == Method::RWC {
        let path = ctx.config.paths.model.clone();
        if !path.exists() {
            return Err(Error::Config(format!(
                "method RWC needs a trained model file, but {} does not exist; run train first",
                path.display()
            )));
        }
        let m = load_model(&path, district)?;
        ctx.inputs.push(("model".into(), path));
        Some(m)
    } else {
        None
    };
    method_table(
        method,
        district,
        learned.as_ref().map(|m| m as &dyn ChoiceModel),
        ctx.config.solver.n_scenarios,
        ctx.config.scenario_seed,
    )
}

fn run_log(result: &SolveResult, method: Method) -> String {
    let s = &result.stats;
    let mut log = String::new();
    log.push_str(&format!("method {method}\n"));
    log.push_str(&format!("status_quo_objective {:.10}\n", result.status_quo_objective));
    log.push_str(&format!("objective {:.10}\n", result.objective.mean));
    if let Some(t) = result.initial_temperature {
        log.push_str(&format!("initial_temperature {t:.6e}\n"));
    }
    for (k, v) in result.restart_objectives.iter().enumerate() {
        log.push_str(&format!("restart {k} best {v:.10}\n"));
    }
    log.push_str(&format!(
        "proposals {} no_candidate {} rejected_contiguity {} rejected_population {} rejected_metropolis {} accepted {} improvements {} temperature_levels {} timed_out {}\n",
        s.proposals, s.no_candidate, s.rejected_contiguity, s.rejected_population, s.rejected_metropolis, s.accepted,
        s.improvements, s.temperature_levels, s.timed_out
    ));
    match result.widened_from {
        Some(a) => log.push_str(&format!("alpha widened from {a} to {:.6}\n", result.params.alpha)),
        None => log.push_str(&format!("alpha {}\n", result.params.alpha)),
    }
    log.push_str(&format!("certificate {}\n", if result.certificate.passed() { "pass" } else { "FAIL" }));
    log
}

fn write_reports(
    ctx: &mut Ctx<'_>,
    district: &District,
    table: &ScenarioTable,
    zoning: &Zoning,
    label: &str,
) -> Result<String> {
    let sq = district.status_quo();
    let rows = vec![
        ("Current".to_string(), rezone_report(&sq, &sq, table, district)?),
        (label.to_string(), rezone_report(&sq, zoning, table, district)?),
    ];
    let mut buf = Vec::new();
    write_report_csv(&rows, &mut buf)?;
    let dest = ctx.out("report.csv");
    ctx.stamped_csv(&dest, district, &buf)?;
    let mut buf = Vec::new();
    write_enrollment_csv(&rows[1].1, &mut buf)?;
    let dest = ctx.out("enrollment.csv");
    ctx.stamped_csv(&dest, district, &buf)?;
    Ok(summary_text(&rows))
}

fn cmd_optimize(ctx: &mut Ctx<'_>) -> Result<String> {
    let district = ctx.load_district()?;
    let method = ctx.config.solver.method;
    let table = table_for(ctx, method, &district)?;
    let result = local_search_optimize(&district, &table, &ctx.config.solver)?;
    if !result.certificate.passed() {
        return Err(Error::Setup(format!("returned zoning failed its certificate: {}", result.certificate)));
    }
    let dest = ctx.out("zoning.csv");
    let staged = ctx.staging.path(&dest);
    write_zoning(&staged, &result.zoning, &ctx.stamp(&district))?;

    let metrics = json!({
        "method": method.as_str(),
        "objective": result.objective.mean,
        "std_error": result.objective.std_error,
        "per_scenario": result.objective.per_scenario,
        "status_quo_objective": result.status_quo_objective,
        "rezoned_students": result.rezoned_students,
        "rezoned_blocks": result.rezoned_blocks,
        "alpha": result.params.alpha,
        "tau": result.params.tau,
        "alpha_requested": result.widened_from.unwrap_or(result.params.alpha),
        "alpha_widened": result.widened_from.is_some(),
        "initial_temperature": result.initial_temperature,
        "stats": result.stats,
    });
    let dest = ctx.out("metrics.json");
    ctx.staging.write(&dest, serde_json::to_string_pretty(&metrics)?.as_bytes())?;
    let dest = ctx.out("run.log");
    ctx.staging.write(&dest, run_log(&result, method).as_bytes())?;
    let summary = write_reports(ctx, &district, &table, &result.zoning, method.as_str())?;
    ctx.seeds = json!({"scenarios": ctx.config.scenario_seed, "solver": ctx.config.solver.seed});
    ctx.results = metrics;
    let mut s = String::new();
    if let Some(a) = result.widened_from {
        s.push_str(&format!("alpha widened from {a} to {:.6} so the status quo is feasible\n", result.params.alpha));
    }
    s.push_str(&summary);
    Ok(s.trim_end().to_string())
}

fn zoning_input(ctx: &mut Ctx<'_>, district: &District) -> Result<Zoning> {
    let path = ctx.config.paths.zoning.clone().unwrap_or_else(|| ctx.out("zoning.csv"));
    if !path.exists() {
        return Err(Error::Config(format!("zoning file {} not found; run optimize first", path.display())));
    }
    let (zoning, stamp) = read_zoning(&path)?;
    if let Some(h) = &stamp.district_hash {
        if *h != district.fingerprint() {
            return Err(Error::Mismatch(format!(
                "zoning {} was produced for a different district",
                path.display()
            )));
        }
    }
    if zoning.len() != district.n_blocks() {
        return Err(Error::Mismatch(format!(
            "zoning {} covers {} blocks, district has {}",
            path.display(),
            zoning.len(),
            district.n_blocks()
        )));
    }
    ctx.inputs.push(("zoning".into(), path));
    Ok(zoning)
}

fn cmd_report(ctx: &mut Ctx<'_>) -> Result<String> {
    let district = ctx.load_district()?;
    let zoning = zoning_input(ctx, &district)?;
    let method = ctx.config.solver.method;
    let table = table_for(ctx, method, &district)?;
    let summary = write_reports(ctx, &district, &table, &zoning, method.as_str())?;

    let matrix = scenario_attendance_matrix(&district, &zoning, &table);
    for (name, shares) in [("attendance_counts.csv", false), ("attendance_shares.csv", true)] {
        let mut buf = Vec::new();
        matrix.write_csv(shares, &mut buf)?;
        let dest = ctx.out(name);
        ctx.stamped_csv(&dest, &district, &buf)?;
    }
    let mut buf = Vec::new();
    historical_attendance_matrix(&district).write_csv(false, &mut buf)?;
    let dest = ctx.out("historical_attendance.csv");
    ctx.stamped_csv(&dest, &district, &buf)?;
    let dest = ctx.out("summary.txt");
    let mut text = Vec::new();
    writeln!(
        text,
        "historical follow rate {:.4}",
        crate::synth::follow_rate(&district)
    )
    .map_err(|e| Error::io(&dest, e))?;
    text.extend_from_slice(summary.as_bytes());
    ctx.staging.write(&dest, &text)?;
    ctx.seeds = json!({"scenarios": ctx.config.scenario_seed});
    Ok(summary.trim_end().to_string())
}

fn cmd_export_map(ctx: &mut Ctx<'_>) -> Result<String> {
    let district = ctx.load_district()?;
    let zoning = if ctx.config.paths.zoning.is_some() || ctx.out("zoning.csv").exists() {
        zoning_input(ctx, &district)?
    } else {
        district.status_quo()
    };
    let kind = OverlayKind::from_str(&ctx.config.overlay)?;
    let table;
    let overlay = match kind {
        OverlayKind::None => MapOverlay::None,
        OverlayKind::Ses => MapOverlay::Ses,
        OverlayKind::OptOutRate => {
            table = table_for(ctx, ctx.config.solver.method, &district)?;
            MapOverlay::OptOutRate(&table)
        }
    };
    let map = export_geojson(&district, &zoning, overlay)?;
    let dest = ctx.out("map.geojson");
    ctx.staging.write(&dest, serde_json::to_string(&map)?.as_bytes())?;
    Ok(format!("wrote {} block features to {}", district.n_blocks(), dest.display()))
}
