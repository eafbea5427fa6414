//! Field model: domain, covariance kernel, deterministic mean, and the
//! numerical health checks a model must pass before it is handed to the
//! lattice/measure machinery.
//!
//! The estimator downstream assumes a *standardized* model: unit variance at
//! lag zero and spectral Hessian equal to minus the identity. Models that
//! fail the second requirement can be rescaled with [`standardize_hessian`],
//! which maps the problem to an equivalent one on a rescaled domain and
//! reports the Jacobian factor that relates the two exponential integrals.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{GrfError, Result};

/// Step used for the finite-difference probes in [`check_conditions`] and
/// for higher-order derivatives of user-supplied kernels. Second differences
/// at this step carry roundoff of order `4 eps / h^2 ~ 1e-7`, comfortably
/// below the default acceptance tolerance.
pub const FD_STEP: f64 = 1e-4;

/// Default tolerance for the model health checks.
pub const CONDITION_TOL: f64 = 1e-6;

/// Axis-aligned hyper-rectangle `[lower_1, upper_1] x ... x [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(GrfError::InvalidModel(
                "domain corners must be non-empty and of equal dimension".into(),
            ));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(GrfError::InvalidModel(format!(
                    "domain axis {i}: need finite lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Lebesgue measure of the rectangle.
    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn contains(&self, t: &[f64]) -> bool {
        t.len() == self.dim()
            && t.iter()
                .enumerate()
                .all(|(i, &x)| x >= self.lower[i] && x <= self.upper[i])
    }

    fn strictly_contains(&self, t: &[f64]) -> bool {
        t.len() == self.dim()
            && t.iter()
                .enumerate()
                .all(|(i, &x)| x > self.lower[i] && x < self.upper[i])
    }

    /// Euclidean diameter, used to size the ray grid in the monotonicity check.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }
}

/// Probabilists' Hermite polynomial `He_n(x)` by the three-term recurrence.
/// These give the derivatives of the Gaussian kernel in closed form:
/// `d^n/dx^n exp(-x^2/2) = (-1)^n He_n(x) exp(-x^2/2)`.
pub fn hermite_prob(n: u8, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let mut hm = 1.0; // He_0
            let mut h = x; // He_1
            for k in 1..n {
                let next = x * h - (k as f64) * hm;
                hm = h;
                h = next;
            }
            h
        }
    }
}

/// User-supplied stationary covariance. Only values, gradients, Hessians and
/// the fourth derivatives at lag zero are required; third and fourth
/// derivatives away from zero are produced by central differences of the
/// Hessian evaluator.
#[derive(Clone)]
pub struct CustomCovariance {
    pub value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub gradient: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    /// Full `d x d` symmetric Hessian at the given lag.
    pub hessian: Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>,
    /// Fourth derivative at lag zero for a multi-index with `|a| = 4`,
    /// given as per-axis exponents (length `d`, entries summing to 4).
    pub fourth_at_zero: Arc<dyn Fn(&[u8]) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for CustomCovariance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("CustomCovariance{..}")
    }
}

/// Stationary covariance kernel `C(t) = Cov(f(s), f(s+t))`.
#[derive(Debug, Clone)]
pub enum CovarianceSpec {
    /// `C(t) = exp(-sum_i t_i^2 / (2 l_i^2))`. With unit length scales this
    /// is the standardized Gaussian kernel; all derivatives are available in
    /// closed form through Hermite polynomials.
    SquaredExponential { length_scales: Vec<f64> },
    Custom(CustomCovariance),
}

impl CovarianceSpec {
    /// Standard Gaussian kernel in `d` dimensions (unit length scales).
    pub fn squared_exponential(d: usize) -> Self {
        CovarianceSpec::SquaredExponential {
            length_scales: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            CovarianceSpec::SquaredExponential { length_scales } => Some(length_scales.len()),
            CovarianceSpec::Custom(_) => None,
        }
    }

    pub fn value(&self, t: &[f64]) -> f64 {
        match self {
            CovarianceSpec::SquaredExponential { length_scales } => t
                .iter()
                .zip(length_scales)
                .map(|(x, l)| (-x * x / (2.0 * l * l)).exp())
                .product(),
            CovarianceSpec::Custom(c) => (c.value)(t),
        }
    }

    /// Mixed partial derivative `D^a C(t)` for a multi-index `a` (per-axis
    /// exponents). Supports `|a| <= 4`, which is everything the jet
    /// covariance assembly needs.
    pub fn deriv(&self, a: &[u8], t: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), t.len());
        let order: u8 = a.iter().sum();
        debug_assert!(order <= 4, "derivatives above total order 4 are not used");
        match self {
            CovarianceSpec::SquaredExponential { length_scales } => {
                let mut prod = 1.0;
                for i in 0..t.len() {
                    let l = length_scales[i];
                    let x = t[i] / l;
                    let sign = if a[i] % 2 == 0 { 1.0 } else { -1.0 };
                    prod *= sign * hermite_prob(a[i], x) * l.powi(-(a[i] as i32))
                        * (-0.5 * x * x).exp();
                }
                prod
            }
            CovarianceSpec::Custom(c) => custom_deriv(c, a, t),
        }
    }

    /// Hessian of `C` at lag zero (exact for the Gaussian kernel, evaluator
    /// call for custom kernels).
    pub fn hessian_at_zero(&self, d: usize) -> DMatrix<f64> {
        match self {
            CovarianceSpec::SquaredExponential { length_scales } => {
                DMatrix::from_diagonal(&DVector::from_iterator(
                    d,
                    length_scales.iter().map(|l| -1.0 / (l * l)),
                ))
            }
            CovarianceSpec::Custom(c) => {
                let h = (c.hessian)(&vec![0.0; d]);
                DMatrix::from_fn(d, d, |i, j| h[i][j])
            }
        }
    }
}

fn custom_deriv(c: &CustomCovariance, a: &[u8], t: &[f64]) -> f64 {
    let order: u8 = a.iter().sum();
    let at_zero = t.iter().all(|x| x.abs() < 1e-300);
    match order {
        0 => (c.value)(t),
        1 => {
            let g = (c.gradient)(t);
            let i = a.iter().position(|&e| e > 0).unwrap();
            g[i]
        }
        2 => {
            let h = (c.hessian)(t);
            let (i, j) = two_axes(a);
            h[i][j]
        }
        3 => {
            // Odd derivatives of a stationary covariance vanish at lag zero
            // by the symmetry C(-t) = C(t); report that exactly instead of
            // finite-difference noise.
            if at_zero {
                return 0.0;
            }
            let mut units = unit_axes(a);
            let k = units.pop().unwrap();
            let (i, j) = two_axes_from_units(&units);
            let hp = shifted_hessian(c, t, k, FD_STEP);
            let hm = shifted_hessian(c, t, k, -FD_STEP);
            (hp[i][j] - hm[i][j]) / (2.0 * FD_STEP)
        }
        4 => {
            if at_zero {
                return (c.fourth_at_zero)(a);
            }
            let mut units = unit_axes(a);
            let l = units.pop().unwrap();
            let k = units.pop().unwrap();
            let (i, j) = two_axes_from_units(&units);
            if k == l {
                let hp = shifted_hessian(c, t, k, FD_STEP);
                let h0 = (c.hessian)(t);
                let hm = shifted_hessian(c, t, k, -FD_STEP);
                (hp[i][j] - 2.0 * h0[i][j] + hm[i][j]) / (FD_STEP * FD_STEP)
            } else {
                let pp = shifted_hessian2(c, t, k, FD_STEP, l, FD_STEP);
                let pm = shifted_hessian2(c, t, k, FD_STEP, l, -FD_STEP);
                let mp = shifted_hessian2(c, t, k, -FD_STEP, l, FD_STEP);
                let mm = shifted_hessian2(c, t, k, -FD_STEP, l, -FD_STEP);
                (pp[i][j] - pm[i][j] - mp[i][j] + mm[i][j]) / (4.0 * FD_STEP * FD_STEP)
            }
        }
        _ => unreachable!("derivative order above 4"),
    }
}

fn shifted_hessian(c: &CustomCovariance, t: &[f64], axis: usize, step: f64) -> Vec<Vec<f64>> {
    let mut s = t.to_vec();
    s[axis] += step;
    (c.hessian)(&s)
}

fn shifted_hessian2(
    c: &CustomCovariance,
    t: &[f64],
    k: usize,
    sk: f64,
    l: usize,
    sl: f64,
) -> Vec<Vec<f64>> {
    let mut s = t.to_vec();
    s[k] += sk;
    s[l] += sl;
    (c.hessian)(&s)
}

/// Multi-index with `|a| = 2` decomposed into an axis pair `(i, j)`.
fn two_axes(a: &[u8]) -> (usize, usize) {
    two_axes_from_units(&unit_axes(a))
}

/// Axes of a multi-index listed with repetition, e.g. `(2,1,0) -> [0,0,1]`.
fn unit_axes(a: &[u8]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, &e) in a.iter().enumerate() {
        for _ in 0..e {
            out.push(i);
        }
    }
    out
}

fn two_axes_from_units(units: &[usize]) -> (usize, usize) {
    debug_assert_eq!(units.len(), 2);
    (units[0], units[1])
}

/// User-supplied smooth mean with a unique interior maximizer.
#[derive(Clone)]
pub struct CustomMean {
    pub value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub gradient: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    pub hessian: Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>,
    pub t_star: Vec<f64>,
}

impl std::fmt::Debug for CustomMean {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CustomMean").field("t_star", &self.t_star).finish()
    }
}

/// Deterministic mean `mu(t)` of the log-integrand.
#[derive(Debug, Clone)]
pub enum MeanSpec {
    Zero,
    /// Concave quadratic `mu(t) = m0 - (t - t*)' A (t - t*) / 2` with `A`
    /// symmetric positive definite, peaking at the interior point `t*`.
    Quadratic {
        m0: f64,
        t_star: Vec<f64>,
        curvature: DMatrix<f64>,
    },
    Custom(CustomMean),
}

impl MeanSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, MeanSpec::Zero)
    }

    pub fn value(&self, t: &[f64]) -> f64 {
        match self {
            MeanSpec::Zero => 0.0,
            MeanSpec::Quadratic { m0, t_star, curvature } => {
                let dt = DVector::from_iterator(t.len(), t.iter().zip(t_star).map(|(a, b)| a - b));
                m0 - 0.5 * (curvature * &dt).dot(&dt)
            }
            MeanSpec::Custom(c) => (c.value)(t),
        }
    }

    pub fn gradient(&self, t: &[f64]) -> DVector<f64> {
        match self {
            MeanSpec::Zero => DVector::zeros(t.len()),
            MeanSpec::Quadratic { t_star, curvature, .. } => {
                let dt = DVector::from_iterator(t.len(), t.iter().zip(t_star).map(|(a, b)| a - b));
                -(curvature * dt)
            }
            MeanSpec::Custom(c) => DVector::from_vec((c.gradient)(t)),
        }
    }

    pub fn hessian(&self, t: &[f64]) -> DMatrix<f64> {
        match self {
            MeanSpec::Zero => DMatrix::zeros(t.len(), t.len()),
            MeanSpec::Quadratic { curvature, .. } => -curvature.clone(),
            MeanSpec::Custom(c) => {
                let h = (c.hessian)(t);
                DMatrix::from_fn(t.len(), t.len(), |i, j| h[i][j])
            }
        }
    }

    /// Trace of the Hessian.
    pub fn laplacian(&self, t: &[f64]) -> f64 {
        self.hessian(t).trace()
    }

    /// Interior maximizer, if the mean has one (non-zero means only).
    pub fn t_star(&self) -> Option<&[f64]> {
        match self {
            MeanSpec::Zero => None,
            MeanSpec::Quadratic { t_star, .. } => Some(t_star),
            MeanSpec::Custom(c) => Some(&c.t_star),
        }
    }
}

/// The full problem description: domain `T`, noise scale `sigma`, stationary
/// unit-variance covariance of the Gaussian field `f`, and deterministic
/// mean `mu`. The tail probability of interest is
/// `P( integral_T exp(sigma f(t) + mu(t)) dt > b )`.
#[derive(Debug, Clone)]
pub struct FieldModel {
    pub domain: Domain,
    pub sigma: f64,
    pub covariance: CovarianceSpec,
    pub mean: MeanSpec,
}

impl FieldModel {
    /// Structural validation: dimensions agree, `sigma > 0`, quadratic mean
    /// curvature is positive definite, and a non-zero mean peaks strictly
    /// inside the domain. Numerical kernel health is checked separately by
    /// [`check_conditions`].
    pub fn new(
        domain: Domain,
        sigma: f64,
        covariance: CovarianceSpec,
        mean: MeanSpec,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(GrfError::InvalidModel(format!("sigma must be positive, got {sigma}")));
        }
        let d = domain.dim();
        if let Some(cd) = covariance.dim() {
            if cd != d {
                return Err(GrfError::InvalidModel(format!(
                    "covariance dimension {cd} does not match domain dimension {d}"
                )));
            }
        }
        if let CovarianceSpec::SquaredExponential { length_scales } = &covariance {
            if length_scales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                return Err(GrfError::InvalidModel("length scales must be positive".into()));
            }
        }
        match &mean {
            MeanSpec::Zero => {}
            MeanSpec::Quadratic { t_star, curvature, .. } => {
                if t_star.len() != d || curvature.nrows() != d || curvature.ncols() != d {
                    return Err(GrfError::InvalidModel(
                        "quadratic mean dimensions do not match the domain".into(),
                    ));
                }
                if !domain.strictly_contains(t_star) {
                    return Err(GrfError::InvalidModel(
                        "mean maximizer t* must lie strictly inside the domain".into(),
                    ));
                }
                let sym_err = (curvature - curvature.transpose()).abs().max();
                if sym_err > 1e-10 {
                    return Err(GrfError::InvalidModel(
                        "quadratic mean curvature must be symmetric".into(),
                    ));
                }
                if curvature.clone().cholesky().is_none() {
                    return Err(GrfError::InvalidModel(
                        "quadratic mean curvature must be positive definite".into(),
                    ));
                }
            }
            MeanSpec::Custom(c) => {
                if c.t_star.len() != d {
                    return Err(GrfError::InvalidModel(
                        "custom mean t* dimension does not match the domain".into(),
                    ));
                }
                if !domain.strictly_contains(&c.t_star) {
                    return Err(GrfError::InvalidModel(
                        "mean maximizer t* must lie strictly inside the domain".into(),
                    ));
                }
            }
        }
        Ok(Self { domain, sigma, covariance, mean })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// `mu_sigma(t) = mu(t) / sigma`, the mean in units of the noise scale.
    pub fn mean_over_sigma(&self, t: &[f64]) -> f64 {
        self.mean.value(t) / self.sigma
    }
}

/// Outcome of one numbered model health check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConditionCheck {
    /// Identifier `C1` through `C6`.
    pub id: String,
    pub passed: bool,
    /// Largest measured violation, where the check is numerical.
    pub residual: Option<f64>,
    pub note: String,
}

/// Report from [`check_conditions`]; the model is considered healthy when
/// every entry passed.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConditionReport {
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Richardson-extrapolated central second difference of `g` (step `h` and
/// `h/2`), used for the Hessian probes below.
fn fd_second<F: Fn(f64) -> f64>(g: F, h: f64) -> f64 {
    let d = |s: f64| (g(s) - 2.0 * g(0.0) + g(-s)) / (s * s);
    let coarse = d(h);
    let fine = d(0.5 * h);
    (4.0 * fine - coarse) / 3.0
}

/// Numerical health checks on a field model.
///
/// * `C1` — unit variance at lag zero.
/// * `C2` — almost-sure twice differentiability of sample paths: not
///   certifiable from finitely many kernel evaluations; recorded as assumed.
/// * `C3` — third-order path regularity / moment bounds: likewise assumed.
/// * `C4` — local expansion of `C` at zero: vanishing gradient, Hessian
///   equal to minus the identity, vanishing third derivatives along the
///   axes. The order of the expansion remainder is not estimated.
/// * `C5` — `C(lambda v)` non-increasing in `lambda >= 0`, sampled on a ray
///   grid covering the domain diameter.
/// * `C6` — for a non-zero mean: interior maximizer with negative-definite
///   Hessian and vanishing gradient there.
pub fn check_conditions(model: &FieldModel, tol: f64) -> ConditionReport {
    let d = model.dim();
    let cov = &model.covariance;
    let zero = vec![0.0; d];
    let mut checks = Vec::new();

    // C1: unit variance at the origin.
    let c0 = cov.value(&zero);
    let r1 = (c0 - 1.0).abs();
    checks.push(ConditionCheck {
        id: "C1".into(),
        passed: r1 <= tol,
        residual: Some(r1),
        note: format!("C(0) = {c0:.12}"),
    });

    // C2 / C3: path regularity, not decidable from kernel values alone.
    checks.push(ConditionCheck {
        id: "C2".into(),
        passed: true,
        residual: None,
        note: "sample-path C^2 regularity assumed (not numerically certifiable)".into(),
    });
    checks.push(ConditionCheck {
        id: "C3".into(),
        passed: true,
        residual: None,
        note: "higher-order path regularity assumed (not numerically certifiable)".into(),
    });

    // C4: gradient zero, Hessian -I, axis third derivatives zero at lag 0.
    let mut r4: f64 = 0.0;
    let mut detail = String::new();
    for i in 0..d {
        let gi = fd_first_axis(cov, d, i);
        r4 = r4.max(gi.abs());
    }
    for i in 0..d {
        for j in i..d {
            let hij = if i == j {
                fd_second(
                    |s| {
                        let mut t = zero.clone();
                        t[i] = s;
                        cov.value(&t)
                    },
                    FD_STEP,
                )
            } else {
                fd_cross(cov, d, i, j)
            };
            let target = if i == j { -1.0 } else { 0.0 };
            let dev = (hij - target).abs();
            if dev > r4 {
                r4 = dev;
                detail = format!("worst Hessian entry ({i},{j}) = {hij:.9}");
            }
        }
    }
    for i in 0..d {
        let t3 = fd_third_axis(cov, d, i);
        r4 = r4.max(t3.abs());
    }
    checks.push(ConditionCheck {
        id: "C4".into(),
        passed: r4 <= tol,
        residual: Some(r4),
        note: if detail.is_empty() {
            "local expansion at lag zero within tolerance; remainder order not estimated".into()
        } else {
            format!("{detail}; remainder order not estimated")
        },
    });

    // C5: radial monotonicity along a grid of rays.
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        dirs.push(e);
    }
    if d > 1 {
        dirs.push(vec![1.0 / (d as f64).sqrt(); d]);
        for i in 1..d {
            let mut v = vec![0.0; d];
            v[0] = std::f64::consts::FRAC_1_SQRT_2;
            v[i] = -std::f64::consts::FRAC_1_SQRT_2;
            dirs.push(v);
        }
    }
    let reach = model.domain.diameter().max(1.0);
    let steps = 64;
    let mut r5: f64 = 0.0;
    for v in &dirs {
        let mut prev = cov.value(&zero);
        for k in 1..=steps {
            let lam = reach * (k as f64) / (steps as f64);
            let t: Vec<f64> = v.iter().map(|x| x * lam).collect();
            let cur = cov.value(&t);
            r5 = r5.max(cur - prev);
            prev = cur;
        }
    }
    checks.push(ConditionCheck {
        id: "C5".into(),
        passed: r5 <= tol,
        residual: Some(r5),
        note: format!("largest increase of C along {} rays over [0, {reach:.3}]", dirs.len()),
    });

    // C6: mean shape.
    let c6 = match &model.mean {
        MeanSpec::Zero => ConditionCheck {
            id: "C6".into(),
            passed: true,
            residual: None,
            note: "zero mean: no maximizer conditions apply".into(),
        },
        mean => {
            let ts = mean.t_star().expect("non-zero mean carries t*");
            let interior = model.domain.strictly_contains(ts);
            let grad_norm = mean.gradient(ts).norm();
            let hess = mean.hessian(ts);
            let sym = (&hess + hess.transpose()) * 0.5;
            let eigs = sym.symmetric_eigenvalues();
            let max_eig = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let passed = interior && grad_norm <= tol && max_eig < -tol;
            ConditionCheck {
                id: "C6".into(),
                passed,
                residual: Some(grad_norm.max(max_eig + tol)),
                note: format!(
                    "t* interior: {interior}; |grad mu(t*)| = {grad_norm:.3e}; max Hessian eigenvalue = {max_eig:.6}"
                ),
            }
        }
    };
    checks.push(c6);

    ConditionReport { checks }
}

fn fd_first_axis(cov: &CovarianceSpec, d: usize, axis: usize) -> f64 {
    let g = |s: f64| {
        let mut t = vec![0.0; d];
        t[axis] = s;
        cov.value(&t)
    };
    let diff = |h: f64| (g(h) - g(-h)) / (2.0 * h);
    (4.0 * diff(0.5 * FD_STEP) - diff(FD_STEP)) / 3.0
}

fn fd_cross(cov: &CovarianceSpec, d: usize, i: usize, j: usize) -> f64 {
    let g = |a: f64, b: f64| {
        let mut t = vec![0.0; d];
        t[i] = a;
        t[j] = b;
        cov.value(&t)
    };
    let diff = |h: f64| (g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (4.0 * h * h);
    (4.0 * diff(0.5 * FD_STEP) - diff(FD_STEP)) / 3.0
}

fn fd_third_axis(cov: &CovarianceSpec, d: usize, axis: usize) -> f64 {
    // Five-point central stencil for the third derivative; step chosen
    // larger than FD_STEP to keep the roundoff term eps/h^3 in check.
    let h = 1e-3;
    let g = |s: f64| {
        let mut t = vec![0.0; d];
        t[axis] = s;
        cov.value(&t)
    };
    (g(2.0 * h) - 2.0 * g(h) + 2.0 * g(-h) - g(-2.0 * h)) / (2.0 * h * h * h)
}

/// A model rescaled so that the covariance Hessian at lag zero is `-I`,
/// together with the bookkeeping needed to translate thresholds between the
/// original and standardized problems.
#[derive(Debug, Clone)]
pub struct StandardizedModel {
    pub model: FieldModel,
    /// Per-axis scale factors `s_i`; the standardized domain is the original
    /// one with axis `i` multiplied by `s_i`.
    pub scales: Vec<f64>,
    /// `ln det` of the inverse scaling map. The original exponential integral
    /// equals `exp(log_jacobian)` times the standardized one.
    pub log_jacobian: f64,
}

impl StandardizedModel {
    /// Threshold for the standardized model whose exceedance event coincides
    /// with the original model exceeding `b`.
    pub fn equivalent_threshold(&self, b: f64) -> f64 {
        b * (-self.log_jacobian).exp()
    }
}

/// Rescale a model so the covariance Hessian at lag zero becomes `-I`.
///
/// Writing `-H = Sigma` for the original Hessian, the standardized field is
/// `f(s) = g(Sigma^{-1/2} s)` on the domain `Sigma^{1/2} T`. Only diagonal
/// `Sigma` is supported: a non-diagonal scaling maps the rectangle `T` to a
/// parallelotope, which the lattice stage cannot represent. Models that are
/// already standardized pass through unchanged.
pub fn standardize_hessian(model: &FieldModel) -> Result<StandardizedModel> {
    let d = model.dim();
    let hess = model.covariance.hessian_at_zero(d);

    let mut off_max: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                off_max = off_max.max(hess[(i, j)].abs());
            }
        }
    }
    if off_max > 1e-8 {
        return Err(GrfError::InvalidModel(format!(
            "covariance Hessian at zero has off-diagonal entries (max {off_max:.3e}); \
             only axis-aligned rescaling is supported"
        )));
    }

    let mut scales = Vec::with_capacity(d);
    for i in 0..d {
        let sig = -hess[(i, i)];
        if !(sig.is_finite() && sig > 0.0) {
            return Err(GrfError::InvalidModel(format!(
                "covariance Hessian at zero must be negative definite; axis {i} gives {:.6}",
                hess[(i, i)]
            )));
        }
        scales.push(sig.sqrt());
    }

    if scales.iter().all(|s| (s - 1.0).abs() <= 1e-9) {
        return Ok(StandardizedModel {
            model: model.clone(),
            scales: vec![1.0; d],
            log_jacobian: 0.0,
        });
    }

    let lower: Vec<f64> = model.domain.lower.iter().zip(&scales).map(|(l, s)| l * s).collect();
    let upper: Vec<f64> = model.domain.upper.iter().zip(&scales).map(|(u, s)| u * s).collect();
    let domain = Domain::new(lower, upper)?;
    let log_jacobian: f64 = -scales.iter().map(|s| s.ln()).sum::<f64>();

    let covariance = match &model.covariance {
        CovarianceSpec::SquaredExponential { length_scales } => {
            // exp(-t_i^2/(2 l_i^2)) with t_i = s_i-scaled coordinate becomes
            // exactly the unit-scale kernel because s_i = 1 / l_i.
            debug_assert!(length_scales
                .iter()
                .zip(&scales)
                .all(|(l, s)| (l * s - 1.0).abs() < 1e-12));
            CovarianceSpec::squared_exponential(d)
        }
        CovarianceSpec::Custom(c) => {
            let sc = scales.clone();
            let unscale = move |t: &[f64]| -> Vec<f64> {
                t.iter().zip(&sc).map(|(x, s)| x / s).collect()
            };
            let (u1, u2, u3) = (unscale.clone(), unscale.clone(), unscale);
            let (v, g, h, f4) = (
                Arc::clone(&c.value),
                Arc::clone(&c.gradient),
                Arc::clone(&c.hessian),
                Arc::clone(&c.fourth_at_zero),
            );
            let s_g = scales.clone();
            let s_h = scales.clone();
            let s_f = scales.clone();
            CovarianceSpec::Custom(CustomCovariance {
                value: Arc::new(move |t| v(&u1(t))),
                gradient: Arc::new(move |t| {
                    let base = g(&u2(t));
                    base.iter().zip(&s_g).map(|(x, s)| x / s).collect()
                }),
                hessian: Arc::new(move |t| {
                    let base = h(&u3(t));
                    let d = base.len();
                    (0..d)
                        .map(|i| (0..d).map(|j| base[i][j] / (s_h[i] * s_h[j])).collect())
                        .collect()
                }),
                fourth_at_zero: Arc::new(move |a| {
                    let mut scale = 1.0;
                    for (i, &e) in a.iter().enumerate() {
                        scale *= s_f[i].powi(e as i32);
                    }
                    f4(a) / scale
                }),
            })
        }
    };

    let mean = match &model.mean {
        MeanSpec::Zero => MeanSpec::Zero,
        MeanSpec::Quadratic { m0, t_star, curvature } => {
            let ts: Vec<f64> = t_star.iter().zip(&scales).map(|(t, s)| t * s).collect();
            let a = DMatrix::from_fn(d, d, |i, j| curvature[(i, j)] / (scales[i] * scales[j]));
            MeanSpec::Quadratic { m0: *m0, t_star: ts, curvature: a }
        }
        MeanSpec::Custom(c) => {
            let sc = scales.clone();
            let unscale = move |t: &[f64]| -> Vec<f64> {
                t.iter().zip(&sc).map(|(x, s)| x / s).collect()
            };
            let (u1, u2, u3) = (unscale.clone(), unscale.clone(), unscale);
            let (v, g, h) = (Arc::clone(&c.value), Arc::clone(&c.gradient), Arc::clone(&c.hessian));
            let s_g = scales.clone();
            let s_h = scales.clone();
            let ts: Vec<f64> = c.t_star.iter().zip(&scales).map(|(t, s)| t * s).collect();
            MeanSpec::Custom(CustomMean {
                value: Arc::new(move |t| v(&u1(t))),
                gradient: Arc::new(move |t| {
                    let base = g(&u2(t));
                    base.iter().zip(&s_g).map(|(x, s)| x / s).collect()
                }),
                hessian: Arc::new(move |t| {
                    let base = h(&u3(t));
                    let d = base.len();
                    (0..d)
                        .map(|i| (0..d).map(|j| base[i][j] / (s_h[i] * s_h[j])).collect())
                        .collect()
                }),
                t_star: ts,
            })
        }
    };

    let model = FieldModel::new(domain, model.sigma, covariance, mean)?;
    Ok(StandardizedModel { model, scales, log_jacobian })
}
