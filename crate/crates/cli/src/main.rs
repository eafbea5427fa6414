//! `grfx`: command-line front end for the tail-probability engine.
//!
//! Every command reads a JSON run configuration, executes, and writes a
//! versioned JSON result document (to `--out` or standard output) embedding
//! the fully-resolved configuration. `sweep` additionally writes a CSV next
//! to the JSON artifact. Progress goes to standard error.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure
//! (including failed model-condition checks under `validate`). Errors are
//! reported on standard error as a single JSON line.

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use grfx_core::{
    aggregate_is, asymptotic_tail, conditional_expectation, crude_mc, estimate_is,
    run_is_replicates, sup_diagnostic, Instance,
};

use config::{resolve, CliError, CommandKind, Resolved, RunConfig, RunPoint};
use report::{
    emit_json, emit_sweep_csv, AsymptoticOut, CommandOutput, ConditionalOut, CrudeOut,
    DiagnosticOut, EstimateOut, ResultDoc, RunContext, SweepOut, ValidateOut, SCHEMA_VERSION,
};

#[derive(Parser)]
#[command(
    name = "grfx",
    version,
    about = "Tail probabilities of exponential integrals of smooth Gaussian random fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Importance-sampled tail estimate
    Estimate(RunArgs),
    /// Crude Monte Carlo tail estimate (mild thresholds only)
    Crude(RunArgs),
    /// Closed-form high-threshold approximation, no simulation
    Asymptotic(RunArgs),
    /// Conditional expectation of a functional given the rare event
    Conditional(RunArgs),
    /// Consistency diagnostic from the excursion-maximum exceedance
    Diagnostic(RunArgs),
    /// Model regularity checks; exits 3 if any check fails
    Validate(RunArgs),
    /// Estimates over a list of thresholds; writes JSON and CSV
    Sweep(RunArgs),
}

impl Command {
    fn parts(self) -> (CommandKind, RunArgs) {
        match self {
            Command::Estimate(a) => (CommandKind::Estimate, a),
            Command::Crude(a) => (CommandKind::Crude, a),
            Command::Asymptotic(a) => (CommandKind::Asymptotic, a),
            Command::Conditional(a) => (CommandKind::Conditional, a),
            Command::Diagnostic(a) => (CommandKind::Diagnostic, a),
            Command::Validate(a) => (CommandKind::Validate, a),
            Command::Sweep(a) => (CommandKind::Sweep, a),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Replaces the seed from the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core); replaces the configured value
    #[arg(long)]
    workers: Option<usize>,
    /// Write the JSON result here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let (kind, args) = Cli::parse().command.parts();
    match run(kind, &args) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            let line = serde_json::json!({ "error": err.class(), "detail": err.detail() });
            eprintln!("{line}");
            std::process::exit(err.exit_code());
        }
    }
}

fn run(kind: CommandKind, args: &RunArgs) -> Result<i32, CliError> {
    let raw = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let cfg: RunConfig = serde_json::from_str(&raw)
        .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    let res = resolve(kind, cfg, args.seed, args.workers)?;
    if kind == CommandKind::Sweep && args.out.is_none() {
        return Err(CliError::Config(
            "sweep writes a CSV artifact and therefore requires --out".into(),
        ));
    }
    eprintln!(
        "[grfx] {}: d={} sigma={} | {} threshold(s), seed {}",
        kind.name(),
        res.standardized.model.dim(),
        res.standardized.model.sigma,
        res.points.len(),
        res.seed
    );

    let started = Instant::now();
    let (output, failed_checks) = execute(&res)?;
    let wall_time_s = started.elapsed().as_secs_f64();

    if let CommandOutput::Sweep(sweep) = &output {
        let csv_path = args.out.as_ref().unwrap().with_extension("csv");
        emit_sweep_csv(&sweep.rows, &csv_path)?;
        eprintln!("[grfx] wrote {}", csv_path.display());
    }
    let doc = ResultDoc {
        schema_version: SCHEMA_VERSION,
        command: kind.name(),
        seed: res.seed,
        workers: res.workers,
        threshold_source: res.threshold_source.clone(),
        wall_time_s,
        effective_config: res.effective.clone(),
        result: output,
    };
    emit_json(&doc, args.out.as_deref())?;
    if let Some(path) = &args.out {
        eprintln!("[grfx] wrote {}", path.display());
    }

    if let Some(failed) = failed_checks {
        let line = serde_json::json!({
            "error": "numerical",
            "detail": format!("model condition checks failed: {failed}"),
        });
        eprintln!("{line}");
        return Ok(3);
    }
    eprintln!("[grfx] done in {wall_time_s:.2}s");
    Ok(0)
}

fn num_err(e: grfx_core::GrfError) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Run the resolved command. The second return value carries the names of
/// failed `validate` checks, which downgrade the exit status to 3 after the
/// report is written.
fn execute(res: &Resolved) -> Result<(CommandOutput, Option<String>), CliError> {
    match res.command {
        CommandKind::Validate => {
            let report = config::condition_report(&res.standardized);
            let all_passed = report.all_passed();
            let failed = if all_passed {
                None
            } else {
                Some(
                    report
                        .failures()
                        .iter()
                        .map(|c| c.id.as_str())
                        .collect::<Vec<_>>()
                        .join(", "),
                )
            };
            Ok((
                CommandOutput::Validate(ValidateOut { all_passed, report }),
                failed,
            ))
        }
        CommandKind::Asymptotic => {
            let p = res.single();
            let asymptotic =
                asymptotic_tail(&res.standardized.model, &res.moments, p.b_std).map_err(num_err)?;
            Ok((
                CommandOutput::Asymptotic(AsymptoticOut {
                    b: p.b,
                    b_standardized: p.b_std,
                    asymptotic,
                }),
                None,
            ))
        }
        CommandKind::Crude => {
            let p = res.single();
            let mut cache = InstanceCache::new(res);
            let inst = cache.get(p.n_per_unit)?;
            let est =
                crude_mc(inst, p.b_std, res.replicates, res.seed, res.workers).map_err(num_err)?;
            let log_v_hat = est.v_hat.ln();
            Ok((
                CommandOutput::Crude(CrudeOut {
                    context: context_for(p, inst),
                    estimate: est,
                    log_v_hat,
                }),
                None,
            ))
        }
        CommandKind::Estimate => {
            let mut cache = InstanceCache::new(res);
            let row = estimate_point(res, res.single(), &mut cache)?;
            Ok((CommandOutput::Estimate(row), None))
        }
        CommandKind::Sweep => {
            let mut cache = InstanceCache::new(res);
            let mut rows = Vec::with_capacity(res.points.len());
            for p in &res.points {
                let row = estimate_point(res, p, &mut cache)?;
                eprintln!(
                    "[grfx] b={:.6e}: v_hat={:.6e} ({} hits)",
                    row.context.b, row.estimate.v_hat, row.estimate.hits
                );
                rows.push(row);
            }
            Ok((CommandOutput::Sweep(SweepOut { rows }), None))
        }
        CommandKind::Conditional => {
            let p = res.single();
            let mut cache = InstanceCache::new(res);
            let inst = cache.get(p.n_per_unit)?;
            let functional = res.resolve_functional(&inst.lattice)?;
            let params = inst
                .measure(p.b_std, p.tuning.unwrap())
                .map_err(num_err)?;
            let reps = run_is_replicates(
                inst,
                &params,
                Some(&functional),
                res.replicates,
                res.seed,
                res.workers,
            )
            .map_err(num_err)?;
            let conditional = conditional_expectation(&reps).map_err(num_err)?;
            let tail = aggregate_is(&reps, &params);
            Ok((
                CommandOutput::Conditional(ConditionalOut {
                    context: context_for(p, inst),
                    functional: res.functional.clone().unwrap(),
                    conditional,
                    tail,
                }),
                None,
            ))
        }
        CommandKind::Diagnostic => {
            let p = res.single();
            let mut cache = InstanceCache::new(res);
            let inst = cache.get(p.n_per_unit)?;
            let params = inst
                .measure(p.b_std, p.tuning.unwrap())
                .map_err(num_err)?;
            let reps = run_is_replicates(inst, &params, None, res.replicates, res.seed, res.workers)
                .map_err(num_err)?;
            let diagnostic = sup_diagnostic(&reps, &params);
            let log_p_beta = diagnostic.p_beta.ln();
            let tail = aggregate_is(&reps, &params);
            Ok((
                CommandOutput::Diagnostic(DiagnosticOut {
                    context: context_for(p, inst),
                    diagnostic,
                    log_p_beta,
                    tail,
                }),
                None,
            ))
        }
    }
}

fn estimate_point(
    res: &Resolved,
    p: &RunPoint,
    cache: &mut InstanceCache,
) -> Result<EstimateOut, CliError> {
    let inst = cache.get(p.n_per_unit)?;
    let params = inst.measure(p.b_std, p.tuning.unwrap()).map_err(num_err)?;
    let estimate =
        estimate_is(inst, &params, res.replicates, res.seed, res.workers).map_err(num_err)?;
    Ok(EstimateOut {
        context: context_for(p, inst),
        estimate,
    })
}

fn context_for(p: &RunPoint, inst: &Instance) -> RunContext {
    RunContext {
        b: p.b,
        b_standardized: p.b_std,
        n_per_unit: p.n_per_unit,
        lattice_points: inst.lattice.n_points(),
        jitter: inst.jitter(),
        tuning: p.tuning,
    }
}

/// Prepared instances keyed by lattice density, so a sweep under a fixed
/// density factorizes the joint law once.
struct InstanceCache<'a> {
    res: &'a Resolved,
    map: BTreeMap<u32, Instance>,
}

impl<'a> InstanceCache<'a> {
    fn new(res: &'a Resolved) -> Self {
        InstanceCache {
            res,
            map: BTreeMap::new(),
        }
    }

    fn get(&mut self, n_per_unit: u32) -> Result<&Instance, CliError> {
        if !self.map.contains_key(&n_per_unit) {
            let inst = Instance::prepare(self.res.standardized.model.clone(), n_per_unit)
                .map_err(num_err)?;
            eprintln!(
                "[grfx] lattice ready: {} points (n_per_unit {}), jitter {:.1e}",
                inst.lattice.n_points(),
                n_per_unit,
                inst.jitter()
            );
            self.map.insert(n_per_unit, inst);
        }
        Ok(&self.map[&n_per_unit])
    }
}
