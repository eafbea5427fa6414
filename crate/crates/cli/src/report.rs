//! Result documents: a versioned JSON envelope shared by every command,
//! command-specific payloads, and the CSV emitted alongside sweeps.
//!
//! Serialization is deterministic (fixed field order, no maps), so two runs
//! with the same config and seed produce byte-identical documents except
//! for the wall-time field. Probabilities appear in both linear and natural
//! log form; non-finite logs serialize as JSON null.

use std::io::Write;
use std::path::Path;

use grfx_core::{
    ConditionReport, ConditionalEstimate, CrudeEstimate, IsEstimate, SupDiagnostic, TailAsymptotic,
    Tuning,
};
use serde::Serialize;

use crate::config::{CliError, FunctionalConfig, RunConfig, ThresholdSource};

pub const SCHEMA_VERSION: &str = "1.0";

/// Envelope common to every command.
#[derive(Serialize)]
pub struct ResultDoc {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub workers: usize,
    pub threshold_source: ThresholdSource,
    pub wall_time_s: f64,
    pub effective_config: RunConfig,
    pub result: CommandOutput,
}

#[derive(Serialize)]
#[serde(untagged)]
pub enum CommandOutput {
    Estimate(EstimateOut),
    Crude(CrudeOut),
    Asymptotic(AsymptoticOut),
    Conditional(ConditionalOut),
    Diagnostic(DiagnosticOut),
    Validate(ValidateOut),
    Sweep(SweepOut),
}

/// Threshold, lattice, and tuning context shared by simulation outputs.
#[derive(Serialize, Clone)]
pub struct RunContext {
    /// Threshold in original model units.
    pub b: f64,
    /// Threshold after standardizing the model (equal to `b` when the
    /// kernel already has unit curvature scale).
    pub b_standardized: f64,
    pub n_per_unit: u32,
    pub lattice_points: usize,
    /// Diagonal inflation the joint-law factorization needed (0 = none).
    pub jitter: f64,
    /// Mixture tuning; null for commands that never draw from the proposal.
    pub tuning: Option<Tuning>,
}

#[derive(Serialize)]
pub struct EstimateOut {
    #[serde(flatten)]
    pub context: RunContext,
    pub estimate: IsEstimate,
}

#[derive(Serialize)]
pub struct CrudeOut {
    #[serde(flatten)]
    pub context: RunContext,
    pub estimate: CrudeEstimate,
    /// `ln v_hat` (null when no replicate hit).
    pub log_v_hat: f64,
}

#[derive(Serialize)]
pub struct AsymptoticOut {
    pub b: f64,
    pub b_standardized: f64,
    pub asymptotic: TailAsymptotic,
}

#[derive(Serialize)]
pub struct ConditionalOut {
    #[serde(flatten)]
    pub context: RunContext,
    pub functional: FunctionalConfig,
    pub conditional: ConditionalEstimate,
    /// Tail estimate from the same replicates.
    pub tail: IsEstimate,
}

#[derive(Serialize)]
pub struct DiagnosticOut {
    #[serde(flatten)]
    pub context: RunContext,
    pub diagnostic: SupDiagnostic,
    /// `ln p_beta` (null when no exceedance was seen).
    pub log_p_beta: f64,
    pub tail: IsEstimate,
}

#[derive(Serialize)]
pub struct ValidateOut {
    pub all_passed: bool,
    pub report: ConditionReport,
}

#[derive(Serialize)]
pub struct SweepOut {
    pub rows: Vec<EstimateOut>,
}

/// Pretty JSON plus trailing newline, to `--out` or standard output.
pub fn emit_json(doc: &ResultDoc, out: Option<&Path>) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(doc)
        .map_err(|e| CliError::Numerical(format!("result serialization failed: {e}")))?;
    match out {
        Some(path) => std::fs::write(path, format!("{body}\n"))
            .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{body}")
                .map_err(|e| CliError::Numerical(format!("cannot write result: {e}")))
        }
    }
}

/// One CSV row per sweep threshold, next to the JSON artifact.
pub fn emit_sweep_csv(rows: &[EstimateOut], path: &Path) -> Result<(), CliError> {
    let io_err = |e: csv::Error| CliError::Numerical(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))?;
    w.write_record([
        "b",
        "b_standardized",
        "u",
        "n_per_unit",
        "lattice_points",
        "v_hat",
        "log_v_hat",
        "std_err",
        "rel_err",
        "hits",
        "hit_rate",
    ])
    .map_err(io_err)?;
    for row in rows {
        let e = &row.estimate;
        w.write_record([
            row.context.b.to_string(),
            row.context.b_standardized.to_string(),
            e.u.to_string(),
            row.context.n_per_unit.to_string(),
            row.context.lattice_points.to_string(),
            e.v_hat.to_string(),
            e.log_v_hat.to_string(),
            e.std_err.to_string(),
            e.rel_err.map(|r| r.to_string()).unwrap_or_default(),
            e.hits.to_string(),
            e.hit_rate.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_logs_serialize_as_null() {
        let v = serde_json::to_value(f64::NEG_INFINITY).unwrap();
        assert!(v.is_null());
    }

    #[test]
    fn schema_version_is_stable() {
        assert_eq!(SCHEMA_VERSION, "1.0");
    }
}
