//! The mixture change of measure and its Radon–Nikodym weight.
//!
//! The proposal tilts the jet law at one randomly localized lattice point.
//! Three components participate:
//!
//! * an *overshoot* component that pushes the scalar excursion functional
//!   `alpha` of the anchor jet above the level `u_t - eta / u_t` by an
//!   exponential overshoot,
//! * an *undershoot* component supported on the complementary event, and
//! * a plain *exponential tilt* of the field value at a uniformly chosen
//!   point, which keeps the weight bounded everywhere.
//!
//! Each replicate draws the anchor jet from the mixture, extends it to the
//! full lattice through the conditional law, and pays back the likelihood
//! ratio assembled in [`log_weight`]. All density evaluations stay in log
//! space; an indicator that excludes a component shows up as `-inf` and
//! flows through the log-sum-exp unharmed.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};

use crate::error::{GrfError, Result};
use crate::lattice::Lattice;
use crate::law::{AnchorMode, JointFieldSample, JointLaw};
use crate::math::log_sum_exp;
use crate::model::FieldModel;
use crate::moments::SpectralMoments;

/// Clamp applied to the default tuning schedule.
pub const TUNING_CLAMP: (f64, f64) = (0.01, 0.2);

const LN_2PI: f64 = 1.8378770664093453;

/// How the tuning parameters were chosen, recorded in run metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningSource {
    Default,
    Override,
}

/// Mixture and tilt parameters.
///
/// The default schedule sets `eta = rho1 = rho2 = 1 - lambda = 1 / ln ln b`
/// (requiring `b > e^e`) and clamps each into [`TUNING_CLAMP`]; `lambda1` is
/// fixed at one. Explicit overrides bypass the schedule but are validated:
/// `eta > 0`, `0 < lambda < 1`, `lambda1 > 0`, `rho1, rho2 >= 0`,
/// `rho1 + rho2 <= 1`. Degenerate corners (for example `rho2 = 1`) are legal
/// and exercise single-component behavior.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Tuning {
    pub eta: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub lambda: f64,
    pub lambda1: f64,
    pub source: TuningSource,
    /// True when the default schedule had to be clamped.
    pub clamped: bool,
}

impl Tuning {
    /// Default schedule at threshold `b`.
    pub fn default_for(b: f64) -> Result<Self> {
        let e_to_e = std::f64::consts::E.exp();
        if !(b > e_to_e) {
            return Err(GrfError::InvalidTuning(format!(
                "default tuning needs b > e^e ~ {e_to_e:.4}, got {b}; supply explicit tuning for \
                 smaller thresholds"
            )));
        }
        let raw = 1.0 / b.ln().ln();
        let clamped_val = raw.clamp(TUNING_CLAMP.0, TUNING_CLAMP.1);
        let t = Tuning {
            eta: clamped_val,
            rho1: clamped_val,
            rho2: clamped_val,
            lambda: 1.0 - clamped_val,
            lambda1: 1.0,
            source: TuningSource::Default,
            clamped: clamped_val != raw,
        };
        t.validate()?;
        Ok(t)
    }

    /// Explicit parameters, validated.
    pub fn from_values(eta: f64, rho1: f64, rho2: f64, lambda: f64, lambda1: f64) -> Result<Self> {
        let t = Tuning {
            eta,
            rho1,
            rho2,
            lambda,
            lambda1,
            source: TuningSource::Override,
            clamped: false,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GrfError::InvalidTuning(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return bad(format!("lambda1 must be positive, got {}", self.lambda1));
        }
        if !(self.rho1 >= 0.0 && self.rho2 >= 0.0 && self.rho1 + self.rho2 <= 1.0 + 1e-12) {
            return bad(format!(
                "mixture probabilities need rho1, rho2 >= 0 and rho1 + rho2 <= 1, got ({}, {})",
                self.rho1, self.rho2
            ));
        }
        Ok(())
    }
}

/// Solve `(2 pi / sigma)^{d/2} u^{-d/2} exp(sigma u) = b` for the tail level
/// `u`, taking the root on the increasing branch (`u > d / (2 sigma)`). The
/// bracket is `[max(1, ln b / (2 sigma), d/(2 sigma)), 2 ln b / sigma + d + 10]`;
/// no sign change there means the threshold is too small for the tail
/// regime and an error is returned. The root satisfies the defining
/// equation to `1e-10` relative and exceeds `1 / sigma`.
pub fn solve_u(b: f64, sigma: f64, d: usize) -> Result<f64> {
    if !(b.is_finite() && b > 0.0) {
        return Err(GrfError::InvalidArgument(format!("threshold b must be positive, got {b}")));
    }
    let df = d as f64;
    let ln_b = b.ln();
    let w = |u: f64| 0.5 * df * (LN_2PI - sigma.ln()) - 0.5 * df * u.ln() + sigma * u - ln_b;

    let lo = (ln_b / (2.0 * sigma)).max(1.0).max(df / (2.0 * sigma) * (1.0 + 1e-9));
    let hi = 2.0 * ln_b.max(0.0) / sigma + df + 10.0;
    if !(w(lo) < 0.0 && w(hi) > 0.0) {
        return Err(GrfError::ThresholdTooSmall { b, lo, hi });
    }
    let u = crate::math::bisect(w, lo, hi, 0.0, 1e-13);
    if u <= 1.0 / sigma {
        return Err(GrfError::ThresholdTooSmall { b, lo, hi });
    }
    Ok(u)
}

/// The drift-and-curvature constant entering the excursion functional:
/// `B_t = [tr Hess mu_sigma(t) + d mu_sigma(t)] / (2 sigma)
///        + sum_i D^4_{iiii} C(0) / (8 sigma^2) + |grad mu_sigma(t)|^2`.
pub fn compute_b_t(model: &FieldModel, moments: &SpectralMoments, t: &[f64]) -> f64 {
    let sigma = model.sigma;
    let d = model.dim() as f64;
    let lap_over_sigma = model.mean.laplacian(t) / sigma;
    let mu_over_sigma = model.mean.value(t) / sigma;
    let grad_over_sigma = model.mean.gradient(t) / sigma;
    (lap_over_sigma + d * mu_over_sigma) / (2.0 * sigma)
        + moments.fourth_diag_sum / (8.0 * sigma * sigma)
        + grad_over_sigma.norm_squared()
}

/// Log normalizing constants `(ln H, ln H')` of the overshoot and undershoot
/// anchor densities. Both share the Gaussian block integral
/// [`SpectralMoments::log_z_integral`]:
/// `ln H  = -lambda eta + (d/2) ln(1 - lambda) + ln lambda - (d/2) ln 2pi - ln J`,
/// `ln H' = +lambda1 eta + (d/2) ln(1 + lambda1) + ln lambda1 - (d/2) ln 2pi - ln J`.
pub fn compute_normalizers(moments: &SpectralMoments, sigma: f64, tuning: &Tuning) -> (f64, f64) {
    let d = moments.d as f64;
    let log_j = moments.log_z_integral(sigma);
    let h0 = -tuning.lambda * tuning.eta + 0.5 * d * (1.0 - tuning.lambda).ln()
        + tuning.lambda.ln()
        - 0.5 * d * LN_2PI
        - log_j;
    let h1 = tuning.lambda1 * tuning.eta + 0.5 * d * (1.0 + tuning.lambda1).ln()
        + tuning.lambda1.ln()
        - 0.5 * d * LN_2PI
        - log_j;
    (h0, h1)
}

/// Normalized log anchor-location weights. A zero mean localizes nowhere, so
/// the distribution is uniform; a non-zero mean concentrates near its peak
/// with the Gaussian profile dictated by the mean curvature at `t*`:
/// `l(t) ~ exp{ (u_{t*} / 2) (t - t*)' Hess mu_sigma(t*) (t - t*) }`.
pub fn localization_weights(
    model: &FieldModel,
    lattice: &Lattice,
    u: f64,
) -> Vec<f64> {
    let m = lattice.n_points();
    match model.mean.t_star() {
        None => vec![-(m as f64).ln(); m],
        Some(ts) => {
            let sigma = model.sigma;
            let u_star = u - model.mean.value(ts) / sigma;
            let hess = model.mean.hessian(ts) / sigma;
            let mut raw = Vec::with_capacity(m);
            for p in lattice.points.iter() {
                let dt = DVector::from_iterator(p.len(), p.iter().zip(ts).map(|(a, b)| a - b));
                raw.push(0.5 * u_star * (&hess * &dt).dot(&dt));
            }
            let norm = log_sum_exp(&raw);
            raw.iter().map(|x| x - norm).collect()
        }
    }
}

/// Everything the samplers and the weight need about the change of measure,
/// precomputed once per `(model, lattice, b, tuning)`.
#[derive(Debug, Clone)]
pub struct MeasureParams {
    pub b: f64,
    pub log_b: f64,
    pub u: f64,
    pub sigma: f64,
    pub tuning: Tuning,
    /// Per lattice point: `u_t = u - mu(t)/sigma` (all strictly positive).
    pub u_t: Vec<f64>,
    /// Per lattice point: the constant `B_t`.
    pub b_t: Vec<f64>,
    /// Per lattice point: the excursion boundary `u_t - eta / u_t`.
    pub boundary: Vec<f64>,
    /// Per lattice point: `mu(t)/sigma`.
    pub mu_sigma: Vec<f64>,
    /// Per lattice point: `mu(t)` (cached for the integral sum).
    pub mu: Vec<f64>,
    /// Normalized log localization weights.
    pub log_l: Vec<f64>,
    /// Cumulative localization probabilities for categorical sampling.
    l_cum: Vec<f64>,
    /// `ln H` of the overshoot anchor density.
    pub log_h_norm0: f64,
    /// `ln H'` of the undershoot anchor density.
    pub log_h_norm1: f64,
    /// Mean of the conditioned second-derivative block:
    /// `m = lambda^{-1} 1 / (2 sigma)`.
    pub m_vec: DVector<f64>,
    /// `1' mu22 1 / (4 sigma^2)`, the constant completing the block square.
    pub c22: f64,
}

/// Precompute the measure parameters. Fails if the threshold is too small
/// for the tail regime or if the mean pushes `u_t` to zero somewhere.
pub fn measure_params(
    model: &FieldModel,
    moments: &SpectralMoments,
    lattice: &Lattice,
    b: f64,
    tuning: Tuning,
) -> Result<MeasureParams> {
    tuning.validate()?;
    let sigma = model.sigma;
    let u = solve_u(b, sigma, model.dim())?;
    let m = lattice.n_points();

    let mut u_t = Vec::with_capacity(m);
    let mut b_t = Vec::with_capacity(m);
    let mut boundary = Vec::with_capacity(m);
    let mut mu_sigma = Vec::with_capacity(m);
    let mut mu = Vec::with_capacity(m);
    for p in &lattice.points {
        let ms = model.mean.value(p) / sigma;
        let ut = u - ms;
        if !(ut > 0.0) {
            return Err(GrfError::InvalidArgument(format!(
                "tail level u = {u:.4} does not dominate the mean at t = {p:?} \
                 (mu/sigma = {ms:.4}); increase b"
            )));
        }
        mu.push(model.mean.value(p));
        mu_sigma.push(ms);
        u_t.push(ut);
        b_t.push(compute_b_t(model, moments, p));
        boundary.push(ut - tuning.eta / ut);
    }

    let log_l = localization_weights(model, lattice, u);
    let mut l_cum = Vec::with_capacity(m);
    let mut acc = 0.0;
    for lw in &log_l {
        acc += lw.exp();
        l_cum.push(acc);
    }
    if let Some(last) = l_cum.last_mut() {
        *last = 1.0;
    }

    let (log_h_norm0, log_h_norm1) = compute_normalizers(moments, sigma, &tuning);
    let m_vec = (&moments.lambda_inv * &moments.one) / (2.0 * sigma);
    let c22 = moments.one_mu22_one / (4.0 * sigma * sigma);

    Ok(MeasureParams {
        b,
        log_b: b.ln(),
        u,
        sigma,
        tuning,
        u_t,
        b_t,
        boundary,
        mu_sigma,
        mu,
        log_l,
        l_cum,
        log_h_norm0,
        log_h_norm1,
        m_vec,
        c22,
    })
}

impl MeasureParams {
    pub fn n_points(&self) -> usize {
        self.u_t.len()
    }

    /// Sample a lattice index from the localization distribution.
    pub fn sample_location<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let x: f64 = rng.gen();
        self.l_cum
            .iter()
            .position(|&c| x < c)
            .unwrap_or(self.l_cum.len() - 1)
    }
}

/// The excursion functional of a jet at lattice point `i`:
/// `alpha = f + |grad f|^2 / (2 u_t) + 1' zbar / (2 sigma u_t) + B_t / u_t`
/// with `zbar = d^2 f - u_t mu20`. The overshoot component is supported on
/// `alpha` above the boundary, the undershoot component below.
pub fn alpha_value(
    params: &MeasureParams,
    moments: &SpectralMoments,
    i: usize,
    f: f64,
    grad: &[f64],
    second: &[f64],
) -> f64 {
    let ut = params.u_t[i];
    let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
    let zbar_diag_sum: f64 = (0..moments.d)
        .map(|k| second[k] - ut * moments.mu20[k])
        .sum();
    f + grad_sq / (2.0 * ut) + zbar_diag_sum / (2.0 * params.sigma * ut) + params.b_t[i] / ut
}

/// The smoothed field entering the running-maximum diagnostic:
/// `gamma = f + 1' zbar / (2 sigma u_t) + B_t / u_t + mu(t)/sigma`.
pub fn gamma_value(
    params: &MeasureParams,
    moments: &SpectralMoments,
    i: usize,
    sample: &JointFieldSample,
) -> f64 {
    let ut = params.u_t[i];
    let second = sample.second(i);
    let zbar_diag_sum: f64 = (0..moments.d)
        .map(|k| second[k] - ut * moments.mu20[k])
        .sum();
    sample.f(i) + zbar_diag_sum / (2.0 * params.sigma * ut) + params.b_t[i] / ut
        + params.mu_sigma[i]
}

/// Reconstruct the full jet `(f, grad f, d^2 f)` at point `i` from the
/// factorized anchor coordinates `(alpha, grad f, zbar)`: the inverse of
/// [`alpha_value`] in its first coordinate.
pub fn jet_from_blocks(
    params: &MeasureParams,
    moments: &SpectralMoments,
    i: usize,
    alpha: f64,
    grad: &[f64],
    zbar: &DVector<f64>,
) -> Vec<f64> {
    let ut = params.u_t[i];
    let d = moments.d;
    let q2 = moments.q2;
    let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
    let zbar_diag_sum: f64 = (0..d).map(|k| zbar[k]).sum();
    let f = alpha
        - grad_sq / (2.0 * ut)
        - zbar_diag_sum / (2.0 * params.sigma * ut)
        - params.b_t[i] / ut;
    let mut jet = Vec::with_capacity(1 + d + q2);
    jet.push(f);
    jet.extend_from_slice(grad);
    for k in 0..q2 {
        jet.push(zbar[k] + ut * moments.mu20[k]);
    }
    jet
}

/// Draw the factorized anchor blocks shared by both tilted components:
/// gradient with variance `1/(1 -/+ lambda)` and the second-derivative block
/// `zbar ~ N(m, lambda^{-1})`. Returns `(grad, zbar)`.
fn draw_common_blocks<R: Rng + ?Sized>(
    params: &MeasureParams,
    moments: &SpectralMoments,
    grad_precision: f64,
    rng: &mut R,
) -> (Vec<f64>, DVector<f64>) {
    let d = moments.d;
    let scale = grad_precision.sqrt().recip();
    let grad: Vec<f64> = (0..d)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let w = DVector::from_iterator(
        moments.q2,
        (0..moments.q2).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    let zbar = &params.m_vec + &moments.lambda_inv_chol * w;
    (grad, zbar)
}

/// Exponential variate by inverse CDF on an open uniform, so the result is
/// strictly positive and the draw consumes exactly one uniform.
fn exp_variate<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let x: f64 = rng.sample(Open01);
    -x.ln() / rate
}

/// Draw the anchor jet from the overshoot component at point `i`: `alpha`
/// sits above the boundary by an `Exp(lambda u_t)` overshoot. Returns
/// `(alpha, jet)`.
pub fn sample_overshoot_anchor<R: Rng + ?Sized>(
    params: &MeasureParams,
    moments: &SpectralMoments,
    i: usize,
    rng: &mut R,
) -> (f64, Vec<f64>) {
    let ut = params.u_t[i];
    let e = exp_variate(params.tuning.lambda * ut, rng);
    let alpha = params.boundary[i] + e;
    let (grad, zbar) = draw_common_blocks(params, moments, 1.0 - params.tuning.lambda, rng);
    let jet = jet_from_blocks(params, moments, i, alpha, &grad, &zbar);
    (alpha, jet)
}

/// Draw the anchor jet from the undershoot component at point `i`: `alpha`
/// sits below the boundary by an `Exp(lambda1 u_t)` gap.
pub fn sample_undershoot_anchor<R: Rng + ?Sized>(
    params: &MeasureParams,
    moments: &SpectralMoments,
    i: usize,
    rng: &mut R,
) -> (f64, Vec<f64>) {
    let ut = params.u_t[i];
    let e = exp_variate(params.tuning.lambda1 * ut, rng);
    let alpha = params.boundary[i] - e;
    let (grad, zbar) = draw_common_blocks(params, moments, 1.0 + params.tuning.lambda1, rng);
    let jet = jet_from_blocks(params, moments, i, alpha, &grad, &zbar);
    (alpha, jet)
}

/// Which mixture component produced a draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureBranch {
    Overshoot,
    Undershoot,
    Tilt,
}

/// One draw from the proposal measure: the branch taken, the anchor, and the
/// full lattice jet field.
#[derive(Debug, Clone)]
pub struct MixtureDraw {
    pub branch: MixtureBranch,
    pub anchor_index: usize,
    /// Excursion functional of the anchor jet (overshoot/undershoot only).
    pub anchor_alpha: Option<f64>,
    pub sample: JointFieldSample,
}

/// Draw one replicate from the mixture proposal.
///
/// With probability `rho2` the tilt branch fires: a uniform location gets
/// its field value tilted to `N(u_t, 1)` and everything else follows the
/// conditional law given that value alone. Otherwise a location is drawn
/// from the localization weights and the anchor jet comes from the
/// undershoot component with probability `rho1 / (1 - rho2)`, from the
/// overshoot component otherwise; the rest of the lattice follows the
/// conditional law given the whole anchor jet.
pub fn sample_mixture<R: Rng + ?Sized>(
    params: &MeasureParams,
    moments: &SpectralMoments,
    law: &JointLaw,
    rng: &mut R,
) -> Result<MixtureDraw> {
    let m = params.n_points();
    let coin: f64 = rng.gen();
    if coin < params.tuning.rho2 {
        let i = rng.gen_range(0..m);
        let x = params.u_t[i] + rng.sample::<f64, _>(StandardNormal);
        let sample = law.sample_conditional(i, &[x], AnchorMode::FOnly, rng)?;
        return Ok(MixtureDraw {
            branch: MixtureBranch::Tilt,
            anchor_index: i,
            anchor_alpha: None,
            sample,
        });
    }

    let i = params.sample_location(rng);
    let undershoot_prob = if params.tuning.rho2 < 1.0 {
        params.tuning.rho1 / (1.0 - params.tuning.rho2)
    } else {
        0.0
    };
    let pick: f64 = rng.gen();
    let (branch, (alpha, jet)) = if pick < undershoot_prob {
        (
            MixtureBranch::Undershoot,
            sample_undershoot_anchor(params, moments, i, rng),
        )
    } else {
        (
            MixtureBranch::Overshoot,
            sample_overshoot_anchor(params, moments, i, rng),
        )
    };
    let sample = law.sample_conditional(i, &jet, AnchorMode::FullJet, rng)?;
    Ok(MixtureDraw {
        branch,
        anchor_index: i,
        anchor_alpha: Some(alpha),
        sample,
    })
}

/// Log density of the stationary single-point jet law at `(f, grad, second)`.
pub fn log_h_jet(
    moments: &SpectralMoments,
    f: f64,
    grad: &[f64],
    second: &[f64],
) -> f64 {
    let q = 1 + moments.d + moments.q2;
    let z = DVector::from_column_slice(second);
    let w1z = moments.w1.dot(&z);
    let zmz = (&moments.mu22_inv * &z).dot(&z);
    let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
    -0.5 * moments.log_det_gamma - 0.5 * (q as f64) * LN_2PI
        - 0.5 * (grad_sq + (f - w1z) * (f - w1z) / moments.schur_s + zmz)
}

/// Shared quadratic form of the second-derivative block in both tilted
/// densities, written on `zbar = second - u_t mu20`:
/// `(w1' zbar)^2 / s + zbar' mu22^{-1} zbar - 1' zbar / sigma + c22`.
fn zbar_quadratic(
    params: &MeasureParams,
    moments: &SpectralMoments,
    zbar: &DVector<f64>,
) -> f64 {
    let w1z = moments.w1.dot(zbar);
    let zmz = (&moments.mu22_inv * zbar).dot(zbar);
    let diag_sum: f64 = (0..moments.d).map(|k| zbar[k]).sum();
    w1z * w1z / moments.schur_s + zmz - diag_sum / params.sigma + params.c22
}

/// Log density of the overshoot anchor component at a jet of point `i`;
/// `-inf` off its support.
pub fn log_h0_jet(
    params: &MeasureParams,
    moments: &SpectralMoments,
    i: usize,
    f: f64,
    grad: &[f64],
    second: &[f64],
) -> f64 {
    let alpha = alpha_value(params, moments, i, f, grad, second);
    if !(alpha > params.boundary[i]) {
        return f64::NEG_INFINITY;
    }
    let ut = params.u_t[i];
    let zbar = DVector::from_iterator(
        moments.q2,
        (0..moments.q2).map(|k| second[k] - ut * moments.mu20[k]),
    );
    let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
    params.log_h_norm0 + ut.ln() - params.tuning.lambda * ut * (alpha - ut)
        - 0.5 * (1.0 - params.tuning.lambda) * grad_sq
        - 0.5 * zbar_quadratic(params, moments, &zbar)
}

/// Log density of the undershoot anchor component at a jet of point `i`;
/// `-inf` off its support (the closed half-line below the boundary).
pub fn log_h1_jet(
    params: &MeasureParams,
    moments: &SpectralMoments,
    i: usize,
    f: f64,
    grad: &[f64],
    second: &[f64],
) -> f64 {
    let alpha = alpha_value(params, moments, i, f, grad, second);
    if alpha > params.boundary[i] {
        return f64::NEG_INFINITY;
    }
    let ut = params.u_t[i];
    let zbar = DVector::from_iterator(
        moments.q2,
        (0..moments.q2).map(|k| second[k] - ut * moments.mu20[k]),
    );
    let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
    params.log_h_norm1 + ut.ln() + params.tuning.lambda1 * ut * (alpha - ut)
        - 0.5 * (1.0 + params.tuning.lambda1) * grad_sq
        - 0.5 * zbar_quadratic(params, moments, &zbar)
}

/// Log Radon–Nikodym weight `ln(dP/dQ)` of a lattice jet sample under the
/// mixture proposal: minus the log of
/// `(1 - rho1 - rho2) sum_i l_i LR_i + rho1 sum_i l_i LR'_i + (rho2 / M) sum_i LR2_i`,
/// where `LR_i`, `LR'_i` are the anchor-density ratios of the tilted
/// components against the stationary jet law and `LR2_i = exp(u_t f_i - u_t^2/2)`
/// is the value tilt. Exactly one of `LR_i`, `LR'_i` is live at each point
/// (they partition on the excursion boundary), and the tilt term is positive
/// everywhere, so the result is finite whenever `rho2 > 0`.
pub fn log_weight(
    params: &MeasureParams,
    moments: &SpectralMoments,
    sample: &JointFieldSample,
) -> Result<f64> {
    let m = params.n_points();
    let ln_rho0 = (1.0 - params.tuning.rho1 - params.tuning.rho2).max(0.0).ln();
    let ln_rho1 = params.tuning.rho1.ln();
    let ln_rho2 = params.tuning.rho2.ln();
    let ln_m = (m as f64).ln();

    let mut terms = Vec::with_capacity(3 * m);
    for i in 0..m {
        let f = sample.f(i);
        let grad = sample.grad(i);
        let second = sample.second(i);
        let log_h = log_h_jet(moments, f, grad, second);
        let ut = params.u_t[i];

        if ln_rho0 > f64::NEG_INFINITY {
            let lh0 = log_h0_jet(params, moments, i, f, grad, second);
            terms.push(ln_rho0 + params.log_l[i] + lh0 - log_h);
        }
        if ln_rho1 > f64::NEG_INFINITY {
            let lh1 = log_h1_jet(params, moments, i, f, grad, second);
            terms.push(ln_rho1 + params.log_l[i] + lh1 - log_h);
        }
        if ln_rho2 > f64::NEG_INFINITY {
            terms.push(ln_rho2 - ln_m + ut * f - 0.5 * ut * ut);
        }
    }
    let log_dq_dp = log_sum_exp(&terms);
    if !log_dq_dp.is_finite() {
        return Err(GrfError::Internal(
            "proposal density vanished on a drawn sample; the mixture cannot cover the path space \
             (all component likelihood ratios were zero)"
                .into(),
        ));
    }
    Ok(-log_dq_dp)
}
