//! Replication, aggregation, and reporting.
//!
//! A prepared [`Instance`] owns the model, the spectral moments, the lattice,
//! and the factorized joint jet law. Replicates are generated with one RNG
//! *stream* per replicate index (same seed, stream `k + 1`), so the sample a
//! replicate sees depends only on `(seed, k)` — never on how many worker
//! threads ran or in which order they finished. Aggregation is a sequential
//! compensated pass over the replicate vector in index order, which makes
//! every estimate bit-for-bit reproducible across worker counts.
//!
//! All second-moment arithmetic stays in log space: the estimator routinely
//! works with probabilities near `1e-12` whose squared weights would
//! underflow long before the estimate itself does.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

use crate::error::{GrfError, Result};
use crate::lattice::{build_lattice, Lattice};
use crate::law::{build_joint_law, log_integral_sum, JointFieldSample, JointLaw};
use crate::math::{log_diff_exp, log_sum_exp};
use crate::measure::{
    gamma_value, log_weight, measure_params, sample_mixture, MeasureParams, MixtureBranch, Tuning,
};
use crate::model::FieldModel;
use crate::moments::{spectral_moments, SpectralMoments};

const LN_2PI: f64 = 1.8378770664093453;

/// Lattice resolution rule: `N = ceil(kappa0 * eps^{-1-eps0} * (ln b)^{2+eps0})`
/// points per unit length, balancing discretization bias against the target
/// relative accuracy `eps`.
pub fn choose_resolution(b: f64, eps: f64, eps0: f64, kappa0: f64) -> Result<u32> {
    if !(b > 2.0) {
        return Err(GrfError::InvalidArgument(format!(
            "resolution rule needs b > 2, got {b}"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(GrfError::InvalidArgument(format!(
            "accuracy eps must lie in (0, 1), got {eps}"
        )));
    }
    if !(eps0 > 0.0) {
        return Err(GrfError::InvalidArgument(format!(
            "margin eps0 must be positive, got {eps0}"
        )));
    }
    if !(kappa0 > 0.0 && kappa0.is_finite()) {
        return Err(GrfError::InvalidArgument(format!(
            "kappa0 must be positive, got {kappa0}"
        )));
    }
    let n = (kappa0 * eps.powf(-1.0 - eps0) * b.ln().powf(2.0 + eps0)).ceil();
    if !(n >= 1.0 && n <= u32::MAX as f64) {
        return Err(GrfError::InvalidArgument(format!(
            "resolution rule produced an unusable lattice density {n}"
        )));
    }
    Ok(n as u32)
}

/// Replicate budget for relative accuracy `eps` at confidence `1 - delta`:
/// `n = ceil(kappa1 / (eps^2 delta))`. Valid because the weight's relative
/// second moment is bounded in the threshold.
pub fn plan_replicates(eps: f64, delta: f64, kappa1: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) || !(kappa1 > 0.0) {
        return Err(GrfError::InvalidArgument(format!(
            "replicate rule needs eps, delta in (0, 1) and kappa1 > 0, got ({eps}, {delta}, {kappa1})"
        )));
    }
    Ok((kappa1 / (eps * eps * delta)).ceil() as usize)
}

/// A model made ready for simulation: spectral moments, lattice, and the
/// factorized joint jet law.
pub struct Instance {
    pub model: FieldModel,
    pub moments: SpectralMoments,
    pub lattice: Lattice,
    pub law: JointLaw,
}

impl Instance {
    /// Prepare everything that depends only on the model and the lattice
    /// density (not on the threshold).
    pub fn prepare(model: FieldModel, n_per_unit: u32) -> Result<Self> {
        let d = model.dim();
        let moments = spectral_moments(&model.covariance, d)?;
        let lattice = build_lattice(&model.domain, n_per_unit)?;
        let law = build_joint_law(&model.covariance, &lattice)?;
        Ok(Instance {
            model,
            moments,
            lattice,
            law,
        })
    }

    /// Threshold-specific change-of-measure parameters.
    pub fn measure(&self, b: f64, tuning: Tuning) -> Result<MeasureParams> {
        measure_params(&self.model, &self.moments, &self.lattice, b, tuning)
    }

    /// Jitter added to make the joint covariance factorizable (zero when the
    /// plain Cholesky succeeded).
    pub fn jitter(&self) -> f64 {
        self.law.jitter
    }
}

/// A scalar functional of one simulated field, evaluated per replicate for
/// conditional-expectation estimates.
#[derive(Clone)]
pub enum Functional {
    /// The standardized field value `f(t_i)` at a lattice index.
    FieldValue { index: usize },
    /// `ln I_M`, the log of the discretized integral.
    LogIntegral,
    /// `I_M - b`, the overshoot of the integral beyond the threshold.
    Overshoot,
    /// The requested coordinate of the lattice point maximizing `f`.
    ArgmaxField { axis: usize },
    /// Caller-supplied functional of the sample and `ln I_M`.
    Custom(Arc<dyn Fn(&JointFieldSample, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Functional {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Functional::FieldValue { index } => write!(fm, "FieldValue {{ index: {index} }}"),
            Functional::LogIntegral => write!(fm, "LogIntegral"),
            Functional::Overshoot => write!(fm, "Overshoot"),
            Functional::ArgmaxField { axis } => write!(fm, "ArgmaxField {{ axis: {axis} }}"),
            Functional::Custom(_) => write!(fm, "Custom(..)"),
        }
    }
}

impl Functional {
    fn eval(
        &self,
        lattice: &Lattice,
        sample: &JointFieldSample,
        log_integral: f64,
        b: f64,
    ) -> f64 {
        match self {
            Functional::FieldValue { index } => sample.f(*index),
            Functional::LogIntegral => log_integral,
            Functional::Overshoot => log_integral.exp() - b,
            Functional::ArgmaxField { axis } => {
                let mut best = 0;
                for i in 1..sample.n_points() {
                    if sample.f(i) > sample.f(best) {
                        best = i;
                    }
                }
                lattice.points[best][*axis]
            }
            Functional::Custom(g) => g(sample, log_integral),
        }
    }

    /// Bounds-check against a concrete lattice.
    pub fn validate(&self, lattice: &Lattice) -> Result<()> {
        match self {
            Functional::FieldValue { index } if *index >= lattice.n_points() => {
                Err(GrfError::InvalidArgument(format!(
                    "functional point index {index} out of range ({} lattice points)",
                    lattice.n_points()
                )))
            }
            Functional::ArgmaxField { axis } if *axis >= lattice.d => {
                Err(GrfError::InvalidArgument(format!(
                    "functional axis {axis} out of range (dimension {})",
                    lattice.d
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Everything retained from one importance-sampling replicate.
#[derive(Debug, Clone)]
pub struct IsReplicate {
    /// `ln(dP/dQ)` at the drawn field.
    pub log_weight: f64,
    /// Whether the discretized integral exceeded the threshold.
    pub hit: bool,
    /// `ln I_M`.
    pub log_integral: f64,
    /// Lattice maximum of the smoothed excursion field.
    pub beta: f64,
    /// Mixture component that produced the draw.
    pub branch: MixtureBranch,
    /// Lattice index the component anchored at.
    pub anchor_index: usize,
    /// Functional value, when one was requested.
    pub xi: Option<f64>,
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        Ok(job())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| GrfError::Internal(format!("worker pool construction failed: {e}")))?;
        Ok(pool.install(job))
    }
}

/// Run `n` importance-sampling replicates. Replicate `k` draws from RNG
/// stream `k + 1` of `seed`, so the output vector is a pure function of
/// `(instance, params, functional, n, seed)` regardless of `workers`
/// (`0` = use the global thread pool).
pub fn run_is_replicates(
    inst: &Instance,
    params: &MeasureParams,
    functional: Option<&Functional>,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<IsReplicate>> {
    if n == 0 {
        return Err(GrfError::InvalidArgument("replicate count must be positive".into()));
    }
    if let Some(g) = functional {
        g.validate(&inst.lattice)?;
    }
    let log_b = params.log_b;
    with_pool(workers, || {
        (0..n)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64 + 1);
                let draw = sample_mixture(params, &inst.moments, &inst.law, &mut rng)?;
                let log_w = log_weight(params, &inst.moments, &draw.sample)?;
                let log_i =
                    log_integral_sum(&inst.lattice, &params.mu, inst.model.sigma, &draw.sample);
                let beta = (0..inst.lattice.n_points())
                    .map(|i| gamma_value(params, &inst.moments, i, &draw.sample))
                    .fold(f64::NEG_INFINITY, f64::max);
                let xi = functional
                    .map(|g| g.eval(&inst.lattice, &draw.sample, log_i, params.b));
                Ok(IsReplicate {
                    log_weight: log_w,
                    hit: log_i > log_b,
                    log_integral: log_i,
                    beta,
                    branch: draw.branch,
                    anchor_index: draw.anchor_index,
                    xi,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// How often each mixture component fired across a replicate batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct BranchCounts {
    pub overshoot: usize,
    pub undershoot: usize,
    pub tilt: usize,
}

/// Sample mean, standard error, and relative error of a weighted rare-event
/// indicator, computed in log space.
#[derive(Debug, Clone, Copy)]
struct RareEventMoments {
    log_mean: f64,
    std_err: f64,
    rel_err: Option<f64>,
    hits: usize,
}

/// Aggregate `mean(w_k 1{event_k})` over `n` replicates from the log weights
/// of the replicates where the event occurred. Sequential and compensated:
/// the result depends only on the input order.
fn aggregate_indicator(log_ws_hit: &[f64], n: usize) -> RareEventMoments {
    let hits = log_ws_hit.len();
    let ln_n = (n as f64).ln();
    if hits == 0 {
        return RareEventMoments {
            log_mean: f64::NEG_INFINITY,
            std_err: 0.0,
            rel_err: None,
            hits,
        };
    }
    let log_m1 = log_sum_exp(log_ws_hit) - ln_n;
    let doubled: Vec<f64> = log_ws_hit.iter().map(|w| 2.0 * w).collect();
    let log_m2 = log_sum_exp(&doubled) - ln_n;
    // Sample variance: (m2 - m1^2) * n / (n - 1), guarded against the
    // rounding case m1^2 >= m2 (all mass equal, variance zero).
    let log_var = if 2.0 * log_m1 >= log_m2 || n < 2 {
        f64::NEG_INFINITY
    } else {
        log_diff_exp(log_m2, 2.0 * log_m1) + ((n as f64) / (n as f64 - 1.0)).ln()
    };
    let log_se = 0.5 * log_var - 0.5 * ln_n;
    RareEventMoments {
        log_mean: log_m1,
        std_err: log_se.exp(),
        rel_err: Some((log_se - log_m1).exp()),
        hits,
    }
}

/// Importance-sampling estimate of the tail probability, with run metadata.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IsEstimate {
    pub v_hat: f64,
    /// `ln v_hat` (`-inf` when no replicate hit the event).
    pub log_v_hat: f64,
    pub std_err: f64,
    /// `std_err / v_hat`; absent when the estimate is zero.
    pub rel_err: Option<f64>,
    pub n: usize,
    pub hits: usize,
    pub hit_rate: f64,
    /// Tail level solved from the threshold.
    pub u: f64,
    pub branch_counts: BranchCounts,
    /// Extremes of the log weights among event hits, as a heaviness check.
    pub max_log_weight_hit: Option<f64>,
    pub min_log_weight_hit: Option<f64>,
}

/// Aggregate a replicate batch into the tail-probability estimate.
pub fn aggregate_is(reps: &[IsReplicate], params: &MeasureParams) -> IsEstimate {
    let n = reps.len();
    let mut log_ws_hit = Vec::new();
    let mut counts = BranchCounts::default();
    for r in reps {
        match r.branch {
            MixtureBranch::Overshoot => counts.overshoot += 1,
            MixtureBranch::Undershoot => counts.undershoot += 1,
            MixtureBranch::Tilt => counts.tilt += 1,
        }
        if r.hit {
            log_ws_hit.push(r.log_weight);
        }
    }
    let m = aggregate_indicator(&log_ws_hit, n);
    let max_w = log_ws_hit.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_w = log_ws_hit.iter().cloned().fold(f64::INFINITY, f64::min);
    IsEstimate {
        v_hat: m.log_mean.exp(),
        log_v_hat: m.log_mean,
        std_err: m.std_err,
        rel_err: m.rel_err,
        n,
        hits: m.hits,
        hit_rate: m.hits as f64 / n as f64,
        u: params.u,
        branch_counts: counts,
        max_log_weight_hit: if m.hits > 0 { Some(max_w) } else { None },
        min_log_weight_hit: if m.hits > 0 { Some(min_w) } else { None },
    }
}

/// One-call importance-sampling estimator: draw `n` replicates and
/// aggregate.
pub fn estimate_is(
    inst: &Instance,
    params: &MeasureParams,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<IsEstimate> {
    let reps = run_is_replicates(inst, params, None, n, seed, workers)?;
    Ok(aggregate_is(&reps, params))
}

/// Crude Monte Carlo estimate of the same tail probability.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CrudeEstimate {
    pub v_hat: f64,
    pub std_err: f64,
    /// Absent when no replicate hit.
    pub rel_err: Option<f64>,
    pub n: usize,
    pub hits: usize,
}

/// Crude Monte Carlo: unconditional draws from the field law, no change of
/// measure. Valid at any `b >= 0` (at `b = 0` every draw hits, since the
/// integrand is positive). Uses the same per-replicate stream discipline as
/// the importance sampler.
pub fn crude_mc(
    inst: &Instance,
    b: f64,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<CrudeEstimate> {
    if n == 0 {
        return Err(GrfError::InvalidArgument("replicate count must be positive".into()));
    }
    if !(b >= 0.0) {
        return Err(GrfError::InvalidArgument(format!(
            "crude Monte Carlo needs b >= 0, got {b}"
        )));
    }
    let log_b = b.ln();
    let mu: Vec<f64> = inst
        .lattice
        .points
        .iter()
        .map(|p| inst.model.mean.value(p))
        .collect();
    let hits_vec = with_pool(workers, || {
        (0..n)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64 + 1);
                let sample = inst.law.sample_unconditional(&mut rng);
                let log_i = log_integral_sum(&inst.lattice, &mu, inst.model.sigma, &sample);
                log_i > log_b
            })
            .collect::<Vec<bool>>()
    })?;
    let hits = hits_vec.iter().filter(|h| **h).count();
    let p = hits as f64 / n as f64;
    let std_err = (p * (1.0 - p) / n as f64).sqrt();
    Ok(CrudeEstimate {
        v_hat: p,
        std_err,
        rel_err: if hits > 0 { Some(std_err / p) } else { None },
        n,
        hits,
    })
}

/// Which closed-form tail regime applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymptoticRegime {
    /// Constant mean: the whole domain contributes.
    Homogeneous,
    /// Mean with a unique interior peak: the peak dominates.
    MeanPeak,
}

/// Closed-form high-threshold approximation of the tail probability.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TailAsymptotic {
    pub u: f64,
    pub log_v: f64,
    pub v: f64,
    pub regime: AsymptoticRegime,
}

/// `ln G` of the per-point tail prefactor, given the drift-and-curvature
/// constant `b_t` there.
fn log_prefactor(moments: &SpectralMoments, sigma: f64, b_t: f64) -> f64 {
    let q = 1 + moments.d + moments.q2;
    -0.5 * moments.log_det_gamma - 0.5 * (q as f64) * LN_2PI
        + moments.one_mu22_one / (8.0 * sigma * sigma)
        + b_t
        + moments.log_z_integral(sigma)
}

fn log_v_of_u(model: &FieldModel, moments: &SpectralMoments, u: f64) -> Result<(f64, AsymptoticRegime)> {
    let sigma = model.sigma;
    let d = model.dim() as f64;
    match model.mean.t_star() {
        None => {
            if !model.mean.is_zero() {
                return Err(GrfError::InvalidArgument(
                    "tail asymptotics need a zero mean or a quadratic-peak mean".into(),
                ));
            }
            let b_t = compute_b_flat(model, moments);
            let log_g = log_prefactor(moments, sigma, b_t);
            Ok((
                model.domain.volume().ln() + log_g + (d - 1.0) * u.ln() - 0.5 * u * u,
                AsymptoticRegime::Homogeneous,
            ))
        }
        Some(ts) => {
            let u_star = u - model.mean.value(ts) / sigma;
            if !(u_star > 0.0) {
                return Err(GrfError::InvalidArgument(
                    "tail level does not dominate the mean peak".into(),
                ));
            }
            let b_t = crate::measure::compute_b_t(model, moments, ts);
            let log_g = log_prefactor(moments, sigma, b_t);
            let neg_hess = -(model.mean.hessian(ts) / sigma);
            let det = neg_hess.determinant();
            if !(det > 0.0) {
                return Err(GrfError::InvalidArgument(
                    "mean peak curvature must be negative definite".into(),
                ));
            }
            Ok((
                0.5 * d * LN_2PI - 0.5 * det.ln() + log_g + (0.5 * d - 1.0) * u_star.ln()
                    - 0.5 * u_star * u_star,
                AsymptoticRegime::MeanPeak,
            ))
        }
    }
}

fn compute_b_flat(model: &FieldModel, moments: &SpectralMoments) -> f64 {
    // For a constant mean the drift terms vanish except d*mu contribution,
    // which is zero only for mean identically zero; `log_v_of_u` restricts
    // to that case, so only the fourth-moment term remains.
    moments.fourth_diag_sum / (8.0 * model.sigma * model.sigma)
}

/// Closed-form tail approximation at threshold `b`.
pub fn asymptotic_tail(
    model: &FieldModel,
    moments: &SpectralMoments,
    b: f64,
) -> Result<TailAsymptotic> {
    let u = crate::measure::solve_u(b, model.sigma, model.dim())?;
    let (log_v, regime) = log_v_of_u(model, moments, u)?;
    Ok(TailAsymptotic {
        u,
        log_v,
        v: log_v.exp(),
        regime,
    })
}

/// Invert the closed-form approximation: the threshold `b` whose
/// approximate tail probability is `v_target`.
pub fn threshold_for_target(
    model: &FieldModel,
    moments: &SpectralMoments,
    v_target: f64,
) -> Result<f64> {
    if !(v_target > 0.0 && v_target < 1.0) {
        return Err(GrfError::InvalidArgument(format!(
            "target probability must lie in (0, 1), got {v_target}"
        )));
    }
    let sigma = model.sigma;
    let d = model.dim() as f64;
    let target = v_target.ln();
    let lo = (0.5 * d / sigma + 0.5).max(1.0 / sigma + 0.1);
    let hi = 200.0;
    let g = |u: f64| log_v_of_u(model, moments, u).map(|(lv, _)| lv - target);
    let glo = g(lo)?;
    let ghi = g(hi)?;
    if !(glo > 0.0 && ghi < 0.0) {
        return Err(GrfError::InvalidArgument(format!(
            "target probability {v_target} is outside the tail regime for this model"
        )));
    }
    // log v is strictly decreasing in u on the bracket.
    let u = crate::math::bisect(|u| -g(u).unwrap_or(f64::NAN), lo, hi, 1e-13, 1e-13);
    let b = (2.0 * std::f64::consts::PI / sigma).powf(0.5 * d) * u.powf(-0.5 * d)
        * (sigma * u).exp();
    Ok(b)
}

/// Conditional-expectation estimate `E[xi | I_M > b]` by the weighted ratio
/// estimator.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConditionalEstimate {
    pub theta: f64,
    pub std_err: f64,
    pub hits: usize,
    pub n: usize,
}

/// Ratio estimator over the hitting replicates, with a linearization
/// standard error. Weights are rescaled by their maximum before the ratio,
/// so the arithmetic stays in a safe range even when the raw weights sit at
/// `1e-12` scales.
pub fn conditional_expectation(reps: &[IsReplicate]) -> Result<ConditionalEstimate> {
    let n = reps.len();
    let hit_rows: Vec<(&IsReplicate, f64)> = reps
        .iter()
        .filter(|r| r.hit)
        .map(|r| (r, r.xi.ok_or_else(|| {
            GrfError::Internal("conditional expectation requested without a functional".into())
        })))
        .map(|(r, xi)| xi.map(|x| (r, x)))
        .collect::<Result<Vec<_>>>()?;
    let hits = hit_rows.len();
    if hits == 0 {
        return Err(GrfError::InsufficientHits { hits, n });
    }
    let max_lw = hit_rows
        .iter()
        .map(|(r, _)| r.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum_a = crate::math::KahanSum::new();
    let mut sum_ax = crate::math::KahanSum::new();
    for (r, xi) in &hit_rows {
        let a = (r.log_weight - max_lw).exp();
        sum_a.add(a);
        sum_ax.add(a * xi);
    }
    let theta = sum_ax.value() / sum_a.value();
    let mut sum_dev = crate::math::KahanSum::new();
    for (r, xi) in &hit_rows {
        let a = (r.log_weight - max_lw).exp();
        sum_dev.add(a * a * (xi - theta) * (xi - theta));
    }
    let std_err = sum_dev.value().sqrt() / sum_a.value();
    Ok(ConditionalEstimate {
        theta,
        std_err,
        hits,
        n,
    })
}

/// Cross-check of the integral tail against the running-maximum tail of the
/// smoothed excursion field, estimated from the *same* replicates and
/// weights.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SupDiagnostic {
    /// Estimate of `P(max_t gamma_u(t) > u)`.
    pub p_beta: f64,
    pub p_beta_std_err: f64,
    pub beta_hits: usize,
    /// Integral-tail estimate from the same replicates.
    pub v_hat: f64,
    /// `p_beta / v_hat`; near one when the excursion picture and the
    /// integral tail agree.
    pub ratio: Option<f64>,
}

/// Estimate the running-maximum exceedance probability and compare with the
/// integral tail.
pub fn sup_diagnostic(reps: &[IsReplicate], params: &MeasureParams) -> SupDiagnostic {
    let n = reps.len();
    let log_ws_beta: Vec<f64> = reps
        .iter()
        .filter(|r| r.beta > params.u)
        .map(|r| r.log_weight)
        .collect();
    let mb = aggregate_indicator(&log_ws_beta, n);
    let est = aggregate_is(reps, params);
    let ratio = if est.v_hat > 0.0 {
        Some((mb.log_mean - est.log_v_hat).exp())
    } else {
        None
    };
    SupDiagnostic {
        p_beta: mb.log_mean.exp(),
        p_beta_std_err: mb.std_err,
        beta_hits: mb.hits,
        v_hat: est.v_hat,
        ratio,
    }
}

/// The discretized integral of one sample under the instance's mean and
/// scale.
pub fn log_integral_of(inst: &Instance, sample: &JointFieldSample) -> f64 {
    let mu: Vec<f64> = inst
        .lattice
        .points
        .iter()
        .map(|p| inst.model.mean.value(p))
        .collect();
    log_integral_sum(&inst.lattice, &mu, inst.model.sigma, sample)
}
