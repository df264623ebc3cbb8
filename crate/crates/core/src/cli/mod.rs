//! Command-line front end.
//!
//! Exit codes: 0 success with all gates passing, 1 gate failure (including
//! an audit that finds a witness), 2 configuration error, 3 runtime error.
//! Every run writes `manifest.json` next to its outputs; the manifest is the
//! only file carrying a timestamp or wall-clock timings.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::audit::{audit, random_pool};
use crate::calibrate::{run_calibration_with_pool, TerminalStatus};
use crate::data::{read_csv, validate_samples, write_csv, Sample, VecSource};
use crate::error::{Error, Result};
use crate::experiments::regret::regret_world_experiment;
use crate::experiments::{
    convergence_experiment, distinguishing_experiment, uniform_convergence_experiment, DistinguishingConfig, ExperimentResult, RegretConfig,
    UniformConfig,
};
use crate::model::{BasePredictor, LossFunction, Predictor};
use crate::synth::{gen_dataset, gen_lower_bound, LowRankParams, LowerBoundWorld, SynthSpec};
use config::{parse_strict, AuditFile, CalibrateFile, ConvergenceFile, LowerWorldName, SynthFile, WorldName};

pub const EXIT_OK: i32 = 0;
pub const EXIT_GATE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "decal", version, about = "Decision calibration for kernel-represented losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (the run directory for `report`).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the `seed` key of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Patch a predictor until no audit finds a witness.
    Calibrate,
    /// Audit a predictor on a dataset.
    Audit,
    /// Generate a synthetic dataset.
    Synth,
    /// Run an experiment harness.
    Experiment { name: ExperimentName },
    /// Re-check the gates of a finished run directory (`--out`).
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ExperimentName {
    Convergence,
    Uniform,
    Regret,
    Distinguishing,
}

/// A configuration problem (exit 2) or a failure while running (exit 3).
enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e)
}

/// Validation failures of a parsed config are configuration errors.
fn as_config(e: Error) -> Failure {
    match e {
        Error::InvalidInput(m) => Failure::Config(Error::Config(m)),
        other => Failure::Config(other),
    }
}

/// Files written by one command, plus what goes into the manifest.
struct RunOutput {
    files: Vec<String>,
    config: Value,
    pass: bool,
    timing: Value,
    message: String,
    /// Set when outputs were written but the run itself failed.
    runtime_error: Option<String>,
}

struct Ctx {
    out: PathBuf,
    /// Directory of the config file; relative paths inside it resolve here.
    base: PathBuf,
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn write_json<T: Serialize>(&self, files: &mut Vec<String>, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.out.join(name), text)?;
        files.push(name.to_string());
        Ok(())
    }

    fn input(&self, path: &str) -> String {
        self.base.join(path).to_string_lossy().into_owned()
    }

    fn create(&self, files: &mut Vec<String>, name: &str) -> Result<fs::File> {
        files.push(name.to_string());
        Ok(fs::File::create(self.out.join(name))?)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} threads: {e}", cli.threads.unwrap_or(0));
            return EXIT_RUNTIME;
        }
    };
    pool.install(|| run(&cli))
}

fn run(cli: &Cli) -> i32 {
    let base = cli.config.as_deref().and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
    let ctx = Ctx { out: cli.out.clone(), base, seed: cli.seed, quiet: cli.quiet };
    if let Command::Report = cli.command {
        return report(&ctx);
    }
    let Some(path) = &cli.config else {
        eprintln!("error: --config is required for this command");
        return EXIT_CONFIG;
    };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = fs::create_dir_all(&ctx.out) {
        eprintln!("error: cannot create {}: {e}", ctx.out.display());
        return EXIT_RUNTIME;
    }
    let start = Instant::now();
    let (command, outcome) = match cli.command {
        Command::Calibrate => ("calibrate", calibrate_cmd(&ctx, &text)),
        Command::Audit => ("audit", audit_cmd(&ctx, &text)),
        Command::Synth => ("synth", synth_cmd(&ctx, &text)),
        Command::Experiment { name } => ("experiment", experiment_cmd(&ctx, &text, name)),
        Command::Report => unreachable!(),
    };
    let out = match outcome {
        Ok(o) => o,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let experiment = match cli.command {
        Command::Experiment { name } => Some(name),
        _ => None,
    };
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "command": command,
        "experiment": experiment,
        "version": env!("CARGO_PKG_VERSION"),
        "config": out.config,
        "files": out.files,
        "pass": out.pass,
        "created_unix": created,
        "timing": {
            "total_ms": start.elapsed().as_secs_f64() * 1e3,
            "detail": out.timing,
        },
    });
    if let Err(e) = ctx.write_json(&mut Vec::new(), "manifest.json", &manifest) {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    if let Some(e) = out.runtime_error {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    if !ctx.quiet {
        println!("{}", out.message);
    }
    if out.pass {
        EXIT_OK
    } else {
        EXIT_GATE
    }
}

fn with_seed(value: &mut u64, ctx: &Ctx) {
    if let Some(s) = ctx.seed {
        *value = s;
    }
}

fn load_predictor(path: Option<&str>, kernel: crate::kernel::KernelSpec, samples: &[Sample]) -> std::result::Result<Predictor, Failure> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(Error::Config(format!("key `predictor`: cannot read {p}: {e}"))))?;
            let pred: Predictor = serde_json::from_str(&text).map_err(|e| config_err(Error::Config(format!("key `predictor`: {e}"))))?;
            if pred.kernel() != &kernel {
                return Err(config_err(Error::Config("key `predictor`: kernel differs from the configured kernel".into())));
            }
            Ok(pred)
        }
        None => {
            let outcomes: Vec<&[f64]> = samples.iter().map(|s| s.y.as_slice()).collect();
            Ok(Predictor::new(BasePredictor::constant_mean(kernel, &outcomes)?))
        }
    }
}

fn load_losses(path: Option<&str>) -> std::result::Result<Vec<LossFunction>, Failure> {
    let Some(p) = path else { return Ok(Vec::new()) };
    let text = fs::read_to_string(p).map_err(|e| config_err(Error::Config(format!("key `losses`: cannot read {p}: {e}"))))?;
    serde_json::from_str(&text).map_err(|e| config_err(Error::Config(format!("key `losses`: {e}"))))
}

fn load_data(path: &str, kernel: &crate::kernel::KernelSpec) -> std::result::Result<Vec<Sample>, Failure> {
    let file = fs::File::open(path).map_err(|e| config_err(Error::Config(format!("key `data`: cannot open {path}: {e}"))))?;
    let samples = read_csv(file).map_err(|e| config_err(Error::Config(format!("key `data`: {e}"))))?;
    validate_samples(kernel, &samples).map_err(|e| config_err(Error::Config(format!("key `data`: {e}"))))?;
    Ok(samples)
}

fn calibrate_cmd(ctx: &Ctx, text: &str) -> std::result::Result<RunOutput, Failure> {
    let mut file: CalibrateFile = parse_strict(text).map_err(config_err)?;
    with_seed(&mut file.seed, ctx);
    let file = file.resolve().map_err(config_err)?;
    let kernel = file.kernel().map_err(config_err)?;
    let cfg = file.calib_config();
    let registered = load_losses(file.losses.as_deref().map(|p| ctx.input(p)).as_deref())?;
    for l in &registered {
        kernel.ensure_same(l.kernel()).map_err(config_err)?;
        if l.num_actions() != cfg.num_actions {
            return Err(config_err(Error::Config("key `losses`: action count differs from `num_actions`".into())));
        }
    }
    let (p, trace) = match &file.data {
        Some(path) => {
            let samples = load_data(&ctx.input(path), &kernel)?;
            let p0 = load_predictor(file.predictor.as_deref().map(|p| ctx.input(p)).as_deref(), kernel, &samples)?;
            run_calibration_with_pool(p0, &mut VecSource::new(samples), &cfg, &registered)?
        }
        None => {
            let mut world = SynthSpec::planted_bias(file.shift, file.context_dim, 0, file.seed);
            world.kernel = kernel;
            let p0 = Predictor::new(world.planted_predictor()?);
            run_calibration_with_pool(p0, &mut world.source()?, &cfg, &registered)?
        }
    };

    let mut files = Vec::new();
    trace.write_csv(ctx.create(&mut files, "trace.csv")?)?;
    ctx.write_json(&mut files, "predictor.json", &p)?;
    let heldout_ok = trace
        .heldout
        .as_ref()
        .map(|h| h.final_decce < cfg.epsilon && h.final_potential <= h.initial_potential + h.potential_slack)
        .unwrap_or(false);
    let calibrated = trace.status == TerminalStatus::Calibrated;
    let pass = calibrated && heldout_ok;
    let summary = json!({
        "status": trace.status,
        "iterations": trace.iterations(),
        "max_iters": trace.max_iters,
        "eta": trace.eta,
        "final_audit_gap": trace.final_audit_gap,
        "samples_used": trace.samples_used,
        "heldout": trace.heldout,
        "error": trace.error,
        "gates": { "calibrated": calibrated, "heldout": heldout_ok },
        "pass": pass,
    });
    ctx.write_json(&mut files, "summary.json", &summary)?;
    let ms: Vec<f64> = trace.records.iter().map(|r| r.ms).collect();
    Ok(RunOutput {
        files,
        config: serde_json::to_value(&file)?,
        pass,
        timing: json!({ "iteration_ms": ms }),
        message: format!("calibrate: {:?} after {} iterations", trace.status, trace.iterations()),
        runtime_error: trace.error.clone().filter(|_| trace.status == TerminalStatus::Error),
    })
}

fn audit_cmd(ctx: &Ctx, text: &str) -> std::result::Result<RunOutput, Failure> {
    let mut file: AuditFile = parse_strict(text).map_err(config_err)?;
    with_seed(&mut file.seed, ctx);
    let file = file.resolve().map_err(config_err)?;
    let kernel = file.kernel().map_err(config_err)?;
    let samples = load_data(&ctx.input(&file.data), &kernel)?;
    let p = load_predictor(file.predictor.as_deref().map(|p| ctx.input(p)).as_deref(), kernel, &samples)?;
    let mut pool = load_losses(file.losses.as_deref().map(|p| ctx.input(p)).as_deref())?;
    for l in &pool {
        kernel.ensure_same(l.kernel()).map_err(config_err)?;
    }
    let mut outcomes: Vec<Vec<f64>> = samples.iter().map(|s| s.y.clone()).collect();
    outcomes.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    outcomes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(file.seed);
    let mut random = random_pool(kernel, &outcomes, file.num_actions, file.loss_span, file.r1, file.pool_size, &mut rng)?;
    random.append(&mut pool);
    let report = audit(&p, &samples, file.epsilon, file.beta, &random)?;

    let mut files = Vec::new();
    let summary = json!({
        "found": report.found,
        "empirical_gap": report.empirical_gap,
        "threshold": report.threshold,
        "n_used": report.n_used,
        "candidate_pool_size": report.candidate_pool_size,
        "witness_lossprime_id": report.witness_lossprime.id(),
        "pass": !report.found,
    });
    ctx.write_json(&mut files, "summary.json", &summary)?;
    if report.found {
        ctx.write_json(&mut files, "witness.json", &report.witness_loss)?;
    }
    Ok(RunOutput {
        files,
        config: serde_json::to_value(&file)?,
        pass: !report.found,
        timing: Value::Null,
        runtime_error: None,
        message: format!("audit: found = {}, gap = {:.6}, threshold = {:.6}", report.found, report.empirical_gap, report.threshold),
    })
}

fn synth_cmd(ctx: &Ctx, text: &str) -> std::result::Result<RunOutput, Failure> {
    let mut file: SynthFile = parse_strict(text).map_err(config_err)?;
    with_seed(&mut file.seed, ctx);
    let file = file.resolve().map_err(config_err)?;
    let mut files = Vec::new();
    let mut summary = json!({ "world": file.world, "n": file.n });
    match file.world {
        WorldName::PlantedBias => {
            let mut world = SynthSpec::planted_bias(file.shift, file.context_dim, file.n, file.seed);
            world.kernel = crate::kernel::KernelSpec::min_with_bound(file.r2.max(1.0)).map_err(config_err)?;
            write_csv(ctx.create(&mut files, "data.csv")?, &gen_dataset(&world)?)?;
            ctx.write_json(&mut files, "predictor.json", &Predictor::new(world.planted_predictor()?))?;
            ctx.write_json(&mut files, "truth.json", &Predictor::new(world.truth_predictor()?))?;
            summary["kernel"] = serde_json::to_value(world.kernel)?;
        }
        WorldName::LowRank => {
            let params = LowRankParams {
                dim: file.dim,
                rank: file.rank,
                context_dim: file.context_dim,
                noise: file.noise,
                r2: file.r2,
                latent_seed: file.latent_seed,
                basis_seed: file.seed ^ file.dim as u64,
            };
            let world = SynthSpec::low_rank(&params, file.n, file.seed).map_err(config_err)?;
            write_csv(ctx.create(&mut files, "data.csv")?, &gen_dataset(&world)?)?;
            summary["kernel"] = serde_json::to_value(world.kernel)?;
        }
        WorldName::LowerBound => {
            let which = match file.lower_world {
                LowerWorldName::D1 => LowerBoundWorld::D1,
                LowerWorldName::D2 => LowerBoundWorld::D2,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(file.seed);
            let inst = gen_lower_bound(file.dim, file.epsilon, file.n, which, &mut rng).map_err(config_err)?;
            let samples: Vec<Sample> = inst.samples().into_iter().map(|(p, y)| Sample::new(p, y)).collect();
            write_csv(ctx.create(&mut files, "data.csv")?, &samples)?;
            summary["sigma"] = serde_json::to_value(inst.sigma())?;
            summary["kernel"] = json!({ "kind": "linear", "dim": file.dim });
        }
    }
    summary["pass"] = Value::Bool(true);
    ctx.write_json(&mut files, "summary.json", &summary)?;
    Ok(RunOutput {
        files,
        config: serde_json::to_value(&file)?,
        pass: true,
        timing: Value::Null,
        runtime_error: None,
        message: format!("synth: {} samples written to {}", file.n, ctx.out.join("data.csv").display()),
    })
}

fn experiment_cmd(ctx: &Ctx, text: &str, name: ExperimentName) -> std::result::Result<RunOutput, Failure> {
    let (result, config): (ExperimentResult, Value) = match name {
        ExperimentName::Convergence => {
            let mut file: ConvergenceFile = parse_strict(text).map_err(config_err)?;
            with_seed(&mut file.seed, ctx);
            let cfg = file.to_config().map_err(config_err)?;
            (convergence_experiment(&cfg)?, serde_json::to_value(&file)?)
        }
        ExperimentName::Uniform => {
            let mut cfg: UniformConfig = parse_strict(text).map_err(config_err)?;
            with_seed(&mut cfg.seed, ctx);
            cfg.validate().map_err(as_config)?;
            (uniform_convergence_experiment(&cfg)?, serde_json::to_value(&cfg)?)
        }
        ExperimentName::Regret => {
            let mut cfg: RegretConfig = parse_strict(text).map_err(config_err)?;
            with_seed(&mut cfg.seed, ctx);
            cfg.validate().map_err(as_config)?;
            (regret_world_experiment(&cfg)?.0, serde_json::to_value(&cfg)?)
        }
        ExperimentName::Distinguishing => {
            let mut cfg: DistinguishingConfig = parse_strict(text).map_err(config_err)?;
            with_seed(&mut cfg.seed, ctx);
            cfg.validate().map_err(as_config)?;
            (distinguishing_experiment(&cfg)?, serde_json::to_value(&cfg)?)
        }
    };
    let mut files = Vec::new();
    result.write_csv(ctx.create(&mut files, "results.csv")?)?;
    ctx.write_json(&mut files, "summary.json", &result)?;
    let failed: Vec<&str> = result.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    Ok(RunOutput {
        files,
        config,
        pass: result.pass,
        timing: Value::Null,
        runtime_error: None,
        message: if failed.is_empty() {
            format!("{}: all {} checks pass", result.experiment, result.checks.len())
        } else {
            format!("{}: failed checks {}", result.experiment, failed.join(", "))
        },
    })
}

fn report(ctx: &Ctx) -> i32 {
    let read = |name: &str| -> std::result::Result<Value, String> {
        let path: PathBuf = Path::new(&ctx.out).join(name);
        let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    };
    let (manifest, summary) = match (read("manifest.json"), read("summary.json")) {
        (Ok(m), Ok(s)) => (m, s),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let pass = summary.get("pass").and_then(Value::as_bool).unwrap_or(false);
    if !ctx.quiet {
        let command = manifest.get("command").and_then(Value::as_str).unwrap_or("?");
        println!("run: {command} ({})", ctx.out.display());
        if let Some(checks) = summary.get("checks").and_then(Value::as_array) {
            for c in checks {
                let ok = c.get("pass").and_then(Value::as_bool).unwrap_or(false);
                let name = c.get("name").and_then(Value::as_str).unwrap_or("?");
                let detail = c.get("detail").and_then(Value::as_str).unwrap_or("");
                println!("  {:<28} {} {detail}", name, if ok { "ok  " } else { "FAIL" });
            }
        }
        if let Some(gates) = summary.get("gates") {
            println!("  gates: {gates}");
        }
        println!("overall: {}", if pass { "PASS" } else { "FAIL" });
    }
    if pass {
        EXIT_OK
    } else {
        EXIT_GATE
    }
}
