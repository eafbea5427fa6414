//! Run configuration: the JSON schema the binary accepts, its validation
//! rules, and the resolution step that turns a raw config into concrete
//! run points (standardized model, thresholds, lattice density, tuning).
//!
//! Resolution happens before any simulation: every failure at this stage is
//! a configuration error (exit code 2), while failures after it are
//! numerical (exit code 3). The resolved form is embedded in every result
//! document as `effective_config`, and feeding that document's config back
//! to the binary reproduces the run.

use grfx_core::model::CONDITION_TOL;
use grfx_core::{
    check_conditions, choose_resolution, spectral_moments, standardize_hessian, threshold_for_target,
    ConditionReport, CovarianceSpec, Domain, FieldModel, Functional, Lattice, MeanSpec,
    SpectralMoments, StandardizedModel, Tuning,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Errors classified by exit code: configuration problems exit with 2,
/// numerical failures during execution with 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            CliError::Config(d) | CliError::Numerical(d) => d,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

fn cfg_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Estimate,
    Crude,
    Asymptotic,
    Conditional,
    Diagnostic,
    Validate,
    Sweep,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Estimate => "estimate",
            CommandKind::Crude => "crude",
            CommandKind::Asymptotic => "asymptotic",
            CommandKind::Conditional => "conditional",
            CommandKind::Diagnostic => "diagnostic",
            CommandKind::Validate => "validate",
            CommandKind::Sweep => "sweep",
        }
    }
}

/// Top-level JSON configuration. Unknown fields are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; when present it must agree with the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    pub model: ModelConfig,
    /// Required for every command except `sweep`, which takes its
    /// thresholds from the `sweep` block instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdConfig>,
    pub discretization: DiscretizationConfig,
    /// Importance-sampling replicates (ignored by `asymptotic`/`validate`).
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 or absent means one per core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Partial overrides of the threshold-driven tuning schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningConfig>,
    /// Required by `conditional`, rejected elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalConfig>,
    /// Required by `sweep`, rejected elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_replicates() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub sigma: f64,
    pub domain: DomainConfig,
    pub covariance: CovarianceConfig,
    #[serde(default)]
    pub mean: MeanConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceConfig {
    /// `C(t) = exp(-sum_i t_i^2 / (2 l_i^2))`; unit scales when omitted.
    SquaredExponential {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        length_scales: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanConfig {
    #[default]
    Zero,
    /// `mu(t) = m0 - (t - t_star)' A (t - t_star) / 2` with `A` positive
    /// definite and `t_star` strictly inside the domain.
    Quadratic {
        m0: f64,
        t_star: Vec<f64>,
        curvature: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Threshold on the exponential integral, in original model units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Target tail probability as log10 v; the threshold is recovered by
    /// inverting the closed-form approximation, so it is approximate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log10_v: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// Lattice points per unit length per axis (in standardized units).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_unit: Option<u32>,
    /// Accuracy-driven choice of the lattice density from the threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto: Option<AutoDiscretization>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoDiscretization {
    pub epsilon: f64,
    #[serde(default = "default_epsilon0")]
    pub epsilon0: f64,
    #[serde(default = "default_kappa0")]
    pub kappa0: f64,
}

fn default_epsilon0() -> f64 {
    0.1
}

fn default_kappa0() -> f64 {
    1.0
}

/// Partial tuning overrides. Omitted fields keep the schedule value at the
/// run's threshold; supplying all five makes the tuning threshold-free.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
}

impl TuningConfig {
    fn is_complete(&self) -> bool {
        self.eta.is_some()
            && self.rho1.is_some()
            && self.rho2.is_some()
            && self.lambda.is_some()
            && self.lambda1.is_some()
    }

    fn from_tuning(t: &Tuning) -> Self {
        TuningConfig {
            eta: Some(t.eta),
            rho1: Some(t.rho1),
            rho2: Some(t.rho2),
            lambda: Some(t.lambda),
            lambda1: Some(t.lambda1),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalConfig {
    /// Field value at the lattice point nearest to `point` (original units).
    ValueAt { point: Vec<f64> },
    /// Natural log of the discretized exponential integral.
    LogIntegral,
    /// Overshoot of the integral beyond the threshold.
    Overshoot,
    /// The given coordinate of the lattice argmax of the field.
    Argmax {
        #[serde(default)]
        axis: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log10_v_values: Option<Vec<f64>>,
}

/// How the threshold(s) were obtained, echoed in the result document.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdSource {
    Direct,
    /// Inverted from a tail-probability target through the closed-form
    /// approximation; the achieved probability is approximate by nature.
    AsymptoticInversion { log10_v: Vec<f64>, approximate: bool },
}

/// One fully-resolved threshold: original units, standardized units, the
/// lattice density and tuning to use there.
#[derive(Debug, Clone)]
pub struct RunPoint {
    pub b: f64,
    pub b_std: f64,
    pub n_per_unit: u32,
    /// Present only for commands that simulate under the mixture proposal.
    pub tuning: Option<Tuning>,
}

/// A validated, resolved run: everything execution needs, plus the
/// effective config to embed in the result document.
#[derive(Debug)]
pub struct Resolved {
    pub command: CommandKind,
    pub standardized: StandardizedModel,
    pub moments: SpectralMoments,
    pub points: Vec<RunPoint>,
    pub replicates: usize,
    pub seed: u64,
    pub workers: usize,
    pub functional: Option<FunctionalConfig>,
    pub threshold_source: ThresholdSource,
    pub effective: RunConfig,
}

impl Resolved {
    /// Single-threshold commands read the unique run point.
    pub fn single(&self) -> &RunPoint {
        &self.points[0]
    }

    /// Translate the functional config into an engine functional once the
    /// lattice exists (standardized coordinates).
    pub fn resolve_functional(&self, lattice: &Lattice) -> Result<Functional, CliError> {
        let fc = self
            .functional
            .as_ref()
            .expect("checked during resolution");
        let f = match fc {
            FunctionalConfig::ValueAt { point } => {
                let scaled: Vec<f64> = point
                    .iter()
                    .zip(&self.standardized.scales)
                    .map(|(x, s)| x * s)
                    .collect();
                let index = nearest_lattice_index(lattice, &scaled);
                Functional::FieldValue { index }
            }
            FunctionalConfig::LogIntegral => Functional::LogIntegral,
            FunctionalConfig::Overshoot => Functional::Overshoot,
            FunctionalConfig::Argmax { axis } => Functional::ArgmaxField { axis: *axis },
        };
        f.validate(lattice)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(f)
    }
}

fn nearest_lattice_index(lattice: &Lattice, target: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (i, p) in lattice.points.iter().enumerate() {
        let d2: f64 = p.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    best
}

/// Build the engine model from the config (original, unstandardized units).
pub fn build_model(mc: &ModelConfig) -> Result<FieldModel, CliError> {
    let d = mc.d;
    if mc.domain.lower.len() != d || mc.domain.upper.len() != d {
        return Err(CliError::Config(format!(
            "domain corners must have length d = {d}, got {} and {}",
            mc.domain.lower.len(),
            mc.domain.upper.len()
        )));
    }
    let domain = Domain::new(mc.domain.lower.clone(), mc.domain.upper.clone()).map_err(cfg_err)?;
    let covariance = match &mc.covariance {
        CovarianceConfig::SquaredExponential { length_scales } => match length_scales {
            None => CovarianceSpec::squared_exponential(d),
            Some(ls) => {
                if ls.len() != d {
                    return Err(CliError::Config(format!(
                        "length_scales must have length d = {d}, got {}",
                        ls.len()
                    )));
                }
                CovarianceSpec::SquaredExponential {
                    length_scales: ls.clone(),
                }
            }
        },
    };
    let mean = match &mc.mean {
        MeanConfig::Zero => MeanSpec::Zero,
        MeanConfig::Quadratic {
            m0,
            t_star,
            curvature,
        } => {
            if t_star.len() != d || curvature.len() != d || curvature.iter().any(|r| r.len() != d) {
                return Err(CliError::Config(format!(
                    "quadratic mean needs t_star of length {d} and a {d}x{d} curvature matrix"
                )));
            }
            let a = DMatrix::from_fn(d, d, |r, c| curvature[r][c]);
            MeanSpec::Quadratic {
                m0: *m0,
                t_star: t_star.clone(),
                curvature: a,
            }
        }
    };
    FieldModel::new(domain, mc.sigma, covariance, mean).map_err(cfg_err)
}

/// Regularity checks on the standardized model, used by `validate`.
pub fn condition_report(std: &StandardizedModel) -> ConditionReport {
    check_conditions(&std.model, CONDITION_TOL)
}

/// Validate the raw config against the chosen command and resolve it.
pub fn resolve(command: CommandKind, mut cfg: RunConfig, seed_flag: Option<u64>, workers_flag: Option<usize>) -> Result<Resolved, CliError> {
    if let Some(name) = &cfg.command {
        if name != command.name() {
            return Err(CliError::Config(format!(
                "config names command '{name}' but the invocation asked for '{}'",
                command.name()
            )));
        }
    }
    cfg.command = Some(command.name().to_string());
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    }
    if let Some(w) = workers_flag {
        cfg.workers = Some(w);
    }

    match command {
        CommandKind::Sweep => {
            if cfg.sweep.is_none() {
                return Err(CliError::Config(
                    "sweep needs a 'sweep' block with b_values or log10_v_values".into(),
                ));
            }
            if cfg.threshold.is_some() {
                return Err(CliError::Config(
                    "sweep takes thresholds from the 'sweep' block; drop the 'threshold' block".into(),
                ));
            }
        }
        _ => {
            if cfg.sweep.is_some() {
                return Err(CliError::Config(format!(
                    "a 'sweep' block is only valid for the sweep command, not '{}'",
                    command.name()
                )));
            }
            if cfg.threshold.is_none() {
                return Err(CliError::Config("a 'threshold' block is required".into()));
            }
        }
    }
    match command {
        CommandKind::Conditional => {
            if cfg.functional.is_none() {
                return Err(CliError::Config(
                    "conditional needs a 'functional' block".into(),
                ));
            }
        }
        _ => {
            if cfg.functional.is_some() {
                return Err(CliError::Config(format!(
                    "a 'functional' block is only valid for the conditional command, not '{}'",
                    command.name()
                )));
            }
        }
    }
    let needs_replicates = matches!(
        command,
        CommandKind::Estimate
            | CommandKind::Crude
            | CommandKind::Conditional
            | CommandKind::Diagnostic
            | CommandKind::Sweep
    );
    if needs_replicates && cfg.replicates == 0 {
        return Err(CliError::Config("replicates must be at least 1".into()));
    }

    let model = build_model(&cfg.model)?;
    let standardized = standardize_hessian(&model).map_err(cfg_err)?;
    let moments = spectral_moments(&standardized.model.covariance, cfg.model.d).map_err(cfg_err)?;

    // Thresholds, original and standardized.
    let mut targets_log10v: Vec<f64> = Vec::new();
    let b_list: Vec<f64> = match command {
        CommandKind::Sweep => {
            let sweep = cfg.sweep.as_ref().unwrap();
            match (&sweep.b_values, &sweep.log10_v_values) {
                (Some(bs), None) => {
                    if bs.is_empty() {
                        return Err(CliError::Config("sweep.b_values is empty".into()));
                    }
                    bs.clone()
                }
                (None, Some(ts)) => {
                    if ts.is_empty() {
                        return Err(CliError::Config("sweep.log10_v_values is empty".into()));
                    }
                    targets_log10v = ts.clone();
                    ts.iter()
                        .map(|&t| invert_target(&standardized, &moments, t))
                        .collect::<Result<Vec<_>, _>>()?
                }
                _ => {
                    return Err(CliError::Config(
                        "sweep needs exactly one of b_values / log10_v_values".into(),
                    ))
                }
            }
        }
        _ => {
            let th = cfg.threshold.as_ref().unwrap();
            match (th.b, th.log10_v) {
                (Some(b), None) => {
                    if !(b.is_finite() && b > 0.0) {
                        return Err(CliError::Config(format!(
                            "threshold.b must be positive and finite, got {b}"
                        )));
                    }
                    vec![b]
                }
                (None, Some(t)) => {
                    targets_log10v = vec![t];
                    vec![invert_target(&standardized, &moments, t)?]
                }
                _ => {
                    return Err(CliError::Config(
                        "threshold needs exactly one of b / log10_v".into(),
                    ))
                }
            }
        }
    };
    let threshold_source = if targets_log10v.is_empty() {
        ThresholdSource::Direct
    } else {
        ThresholdSource::AsymptoticInversion {
            log10_v: targets_log10v,
            approximate: true,
        }
    };

    // Only commands that simulate under the mixture proposal need tuning;
    // crude, asymptotic, and validate must not fail on thresholds the
    // default schedule rejects.
    let needs_tuning = matches!(
        command,
        CommandKind::Estimate
            | CommandKind::Conditional
            | CommandKind::Diagnostic
            | CommandKind::Sweep
    );
    let points = b_list
        .iter()
        .map(|&b| {
            let b_std = standardized.equivalent_threshold(b);
            if !(b_std.is_finite() && b_std > 0.0) {
                return Err(CliError::Config(format!(
                    "threshold {b} maps to a non-positive standardized threshold {b_std}"
                )));
            }
            let n_per_unit = resolve_n(&cfg.discretization, b_std)?;
            let tuning = if needs_tuning {
                Some(resolve_tuning(cfg.tuning.as_ref(), b_std)?)
            } else {
                None
            };
            Ok(RunPoint {
                b,
                b_std,
                n_per_unit,
                tuning,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    // Effective config: thresholds and tuning pinned down so a re-run
    // reproduces this one. The discretization block stays symbolic only for
    // sweeps under `auto`, where the density varies per threshold.
    let mut effective = cfg.clone();
    match command {
        CommandKind::Sweep => {
            effective.sweep = Some(SweepConfig {
                b_values: Some(points.iter().map(|p| p.b).collect()),
                log10_v_values: None,
            });
            if points.windows(2).all(|w| w[0].n_per_unit == w[1].n_per_unit) {
                effective.discretization = DiscretizationConfig {
                    n_per_unit: Some(points[0].n_per_unit),
                    auto: None,
                };
            }
            if let Some(t) = &points[0].tuning {
                if points.windows(2).all(|w| w[0].tuning == w[1].tuning) {
                    effective.tuning = Some(TuningConfig::from_tuning(t));
                }
            }
        }
        _ => {
            effective.threshold = Some(ThresholdConfig {
                b: Some(points[0].b),
                log10_v: None,
            });
            effective.discretization = DiscretizationConfig {
                n_per_unit: Some(points[0].n_per_unit),
                auto: None,
            };
            if let Some(t) = &points[0].tuning {
                effective.tuning = Some(TuningConfig::from_tuning(t));
            }
        }
    }
    if effective.workers.is_none() {
        effective.workers = Some(0);
    }

    Ok(Resolved {
        command,
        standardized,
        moments,
        points,
        replicates: cfg.replicates,
        seed: cfg.seed,
        workers: cfg.workers.unwrap_or(0),
        functional: cfg.functional.clone(),
        threshold_source,
        effective,
    })
}

/// Recover the original-units threshold whose tail probability is close to
/// `10^log10_v`, through the closed-form approximation.
fn invert_target(
    std: &StandardizedModel,
    moments: &SpectralMoments,
    log10_v: f64,
) -> Result<f64, CliError> {
    if !(log10_v.is_finite() && log10_v < 0.0) {
        return Err(CliError::Config(format!(
            "log10_v must be negative and finite (a rare-event probability), got {log10_v}"
        )));
    }
    let v = 10f64.powf(log10_v);
    let b_std = threshold_for_target(&std.model, moments, v).map_err(cfg_err)?;
    Ok(b_std * std.log_jacobian.exp())
}

fn resolve_n(disc: &DiscretizationConfig, b_std: f64) -> Result<u32, CliError> {
    match (disc.n_per_unit, &disc.auto) {
        (Some(n), None) => {
            if n == 0 {
                return Err(CliError::Config("n_per_unit must be at least 1".into()));
            }
            Ok(n)
        }
        (None, Some(auto)) => {
            choose_resolution(b_std, auto.epsilon, auto.epsilon0, auto.kappa0).map_err(cfg_err)
        }
        _ => Err(CliError::Config(
            "discretization needs exactly one of n_per_unit / auto".into(),
        )),
    }
}

fn resolve_tuning(tc: Option<&TuningConfig>, b_std: f64) -> Result<Tuning, CliError> {
    let base = match tc {
        Some(t) if t.is_complete() => {
            return Tuning::from_values(
                t.eta.unwrap(),
                t.rho1.unwrap(),
                t.rho2.unwrap(),
                t.lambda.unwrap(),
                t.lambda1.unwrap(),
            )
            .map_err(cfg_err)
        }
        _ => Tuning::default_for(b_std).map_err(cfg_err)?,
    };
    match tc {
        None => Ok(base),
        Some(t) => Tuning::from_values(
            t.eta.unwrap_or(base.eta),
            t.rho1.unwrap_or(base.rho1),
            t.rho2.unwrap_or(base.rho2),
            t.lambda.unwrap_or(base.lambda),
            t.lambda1.unwrap_or(base.lambda1),
        )
        .map_err(cfg_err),
    }
}
