//! Joint Gaussian law of the field jet `(f, grad f, d^2 f)` over all lattice
//! points, with exact conditional sampling by kriging residuals.
//!
//! The covariance between derivative observations follows the stationary
//! rule `Cov(D^a f(s), D^b f(t)) = (-1)^{|a|} (D^{a+b} C)(t - s)`, assembled
//! once per run into an `M q x M q` matrix and factorized once. Conditional
//! draws reuse that single factorization: draw unconditionally, then correct
//! by the kriging regression towards the anchored coordinates. Every sample
//! therefore carries the full jet at every lattice point.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GrfError, Result};
use crate::lattice::Lattice;
use crate::math::{log_sum_exp, KahanSum};
use crate::model::CovarianceSpec;
use crate::moments::{jet_len, jet_multi_indices};

/// Hard cap on the joint dimension `M q`; two dense matrices of this size
/// must fit in memory alongside the replicate workspace.
pub const MAX_JOINT_DIM: usize = 8_000;

/// Jitter escalation policy for the one-time factorization: start without
/// jitter, then `1e-12` growing tenfold up to this cap.
pub const MAX_JITTER: f64 = 1e-6;

/// Which jet coordinates of the anchor point a conditional draw pins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMode {
    /// Pin the field value only; gradient and curvature at the anchor stay
    /// random (used by the exponential-tilt mixture branch).
    FOnly,
    /// Pin the whole jet at the anchor point.
    FullJet,
}

/// One realization of the jet field over the lattice. Values are stored
/// point-major: slot `i * q + k` holds jet coordinate `k` of point `i`, in
/// the slot order documented in [`crate::moments`].
#[derive(Debug, Clone)]
pub struct JointFieldSample {
    pub d: usize,
    pub q: usize,
    pub values: DVector<f64>,
}

impl JointFieldSample {
    pub fn n_points(&self) -> usize {
        self.values.len() / self.q
    }

    /// Field value at lattice point `i`.
    pub fn f(&self, i: usize) -> f64 {
        self.values[i * self.q]
    }

    /// Gradient block of point `i`.
    pub fn grad(&self, i: usize) -> &[f64] {
        &self.values.as_slice()[i * self.q + 1..i * self.q + 1 + self.d]
    }

    /// Second-derivative block of point `i` (diagonal entries first, then
    /// the strict upper triangle).
    pub fn second(&self, i: usize) -> &[f64] {
        &self.values.as_slice()[i * self.q + 1 + self.d..(i + 1) * self.q]
    }
}

/// The factorized joint law.
#[derive(Debug, Clone)]
pub struct JointLaw {
    pub d: usize,
    pub q: usize,
    pub m: usize,
    /// Covariance actually simulated, including any stabilizing jitter on
    /// the diagonal; kriging uses the same matrix so conditional draws are
    /// exact for the simulated law.
    cov: DMatrix<f64>,
    /// Lower Cholesky factor of `cov`.
    factor: DMatrix<f64>,
    /// Diagonal jitter that made the factorization succeed; zero when the
    /// raw covariance was numerically positive definite.
    pub jitter: f64,
}

/// Assemble and factorize the joint jet covariance over a lattice.
pub fn build_joint_law(cov_spec: &CovarianceSpec, lattice: &Lattice) -> Result<JointLaw> {
    let d = lattice.d;
    let q = jet_len(d);
    let m = lattice.n_points();
    let dim = m * q;
    if dim > MAX_JOINT_DIM {
        return Err(GrfError::InvalidArgument(format!(
            "joint dimension {dim} (= {m} points x {q} jet coordinates) exceeds the supported \
             maximum {MAX_JOINT_DIM}; lower the lattice resolution"
        )));
    }

    let multi = jet_multi_indices(d);
    let signs: Vec<f64> = multi
        .iter()
        .map(|a| if a.iter().sum::<u8>() % 2 == 0 { 1.0 } else { -1.0 })
        .collect();

    let mut cov = DMatrix::zeros(dim, dim);
    let mut lag = vec![0.0; d];
    let mut combined = vec![0u8; d];
    for b in 0..m {
        for a in 0..=b {
            for axis in 0..d {
                lag[axis] = lattice.points[b][axis] - lattice.points[a][axis];
            }
            for (ia, ma) in multi.iter().enumerate() {
                for (ib, mb) in multi.iter().enumerate() {
                    for axis in 0..d {
                        combined[axis] = ma[axis] + mb[axis];
                    }
                    let v = signs[ia] * cov_spec.deriv(&combined, &lag);
                    cov[(a * q + ia, b * q + ib)] = v;
                    if a != b {
                        cov[(b * q + ib, a * q + ia)] = v;
                    }
                }
            }
        }
    }

    let (factor, jitter) = factorize_with_jitter(&mut cov)?;
    Ok(JointLaw { d, q, m, cov, factor, jitter })
}

/// Cholesky with the documented jitter escalation. On success the matrix has
/// the applied jitter added to its diagonal, so the stored covariance always
/// matches the returned factor.
fn factorize_with_jitter(cov: &mut DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let dim = cov.nrows();
    let mut applied = 0.0;
    let mut jitter = 0.0;
    loop {
        if jitter > 0.0 {
            let add = jitter - applied;
            for i in 0..dim {
                cov[(i, i)] += add;
            }
            applied = jitter;
        }
        if let Some(ch) = cov.clone().cholesky() {
            return Ok((ch.unpack(), applied));
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
        if jitter > MAX_JITTER {
            return Err(GrfError::IllConditioned { jitter: MAX_JITTER });
        }
    }
}

impl JointLaw {
    pub fn dim(&self) -> usize {
        self.m * self.q
    }

    /// Covariance entry of the simulated law (including jitter).
    pub fn cov_entry(&self, row: usize, col: usize) -> f64 {
        self.cov[(row, col)]
    }

    /// Deterministic map from a standard normal vector to a sample; the
    /// random-variate path below goes through here.
    pub fn from_noise(&self, z: &DVector<f64>) -> JointFieldSample {
        debug_assert_eq!(z.len(), self.dim());
        JointFieldSample { d: self.d, q: self.q, values: &self.factor * z }
    }

    pub fn sample_unconditional<R: Rng + ?Sized>(&self, rng: &mut R) -> JointFieldSample {
        let z = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        self.from_noise(&z)
    }

    /// Draw the field conditionally on anchored jet coordinates at one
    /// lattice point, by kriging residuals against the shared factorization:
    /// sample unconditionally, then shift by the regression of the anchor
    /// mismatch. The anchored coordinates are set to the requested values
    /// exactly.
    pub fn sample_conditional<R: Rng + ?Sized>(
        &self,
        anchor_point: usize,
        anchor_values: &[f64],
        mode: AnchorMode,
        rng: &mut R,
    ) -> Result<JointFieldSample> {
        if anchor_point >= self.m {
            return Err(GrfError::InvalidArgument(format!(
                "anchor point {anchor_point} out of range (lattice has {} points)",
                self.m
            )));
        }
        let k = match mode {
            AnchorMode::FOnly => 1,
            AnchorMode::FullJet => self.q,
        };
        if anchor_values.len() != k {
            return Err(GrfError::InvalidArgument(format!(
                "anchor expects {k} values, got {}",
                anchor_values.len()
            )));
        }
        let base = anchor_point * self.q;

        let mut sample = self.sample_unconditional(rng);

        // Solve the small anchor-block system S_AA c = (a - x_A).
        let mut rhs = DVector::zeros(k);
        for j in 0..k {
            rhs[j] = anchor_values[j] - sample.values[base + j];
        }
        let block = DMatrix::from_fn(k, k, |i, j| self.cov[(base + i, base + j)]);
        let chol = block.cholesky().ok_or_else(|| {
            GrfError::Internal("anchor covariance block lost positive definiteness".into())
        })?;
        let coef = chol.solve(&rhs);

        // x += Cov(., A) c, then pin the anchored slots exactly.
        for j in 0..k {
            let col = self.cov.column(base + j);
            sample.values.axpy(coef[j], &col, 1.0);
        }
        for j in 0..k {
            sample.values[base + j] = anchor_values[j];
        }
        Ok(sample)
    }
}

/// Log of the discrete exponential integral: the measure-weighted Riemann
/// sum `ln sum_i mes_i exp(sigma f(t_i) + mu(t_i))`, evaluated entirely in
/// log space. Cells of zero measure contribute nothing.
pub fn log_integral_sum(
    lattice: &Lattice,
    mu_at_points: &[f64],
    sigma: f64,
    sample: &JointFieldSample,
) -> f64 {
    debug_assert_eq!(mu_at_points.len(), lattice.n_points());
    let m = lattice.n_points();
    // Max-subtracted accumulation without materializing the term vector.
    let mut max_term = f64::NEG_INFINITY;
    let mut terms = Vec::with_capacity(m);
    for i in 0..m {
        let mes = lattice.measures[i];
        if mes > 0.0 {
            let t = mes.ln() + sigma * sample.f(i) + mu_at_points[i];
            terms.push(t);
            if t > max_term {
                max_term = t;
            }
        }
    }
    if !max_term.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut sum = KahanSum::new();
    for t in terms {
        sum.add((t - max_term).exp());
    }
    max_term + sum.value().ln()
}

/// Convenience wrapper when the caller has the terms already assembled.
pub fn log_integral_sum_from_terms(terms: &[f64]) -> f64 {
    log_sum_exp(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use crate::model::Domain;
    use crate::moments::spectral_moments;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lattice_1d(lo: f64, hi: f64, n: u32) -> Lattice {
        build_lattice(&Domain::new(vec![lo], vec![hi]).unwrap(), n).unwrap()
    }

    #[test]
    fn diagonal_blocks_match_single_point_structure() {
        let cov = CovarianceSpec::squared_exponential(1);
        let lat = lattice_1d(0.5, 2.0, 1);
        let law = build_joint_law(&cov, &lat).unwrap();
        assert_eq!(law.jitter, 0.0);
        let m = spectral_moments(&cov, 1).unwrap();
        let block = m.single_point_jet_cov();
        for p in 0..law.m {
            for i in 0..law.q {
                for j in 0..law.q {
                    let got = law.cov_entry(p * law.q + i, p * law.q + j);
                    assert!(
                        (got - block[(i, j)]).abs() < 1e-12,
                        "point {p} entry ({i},{j}): {got} vs {}",
                        block[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn cross_block_derivative_signs() {
        // Two points at lag h = 1: the value/gradient covariances follow the
        // closed-form Gaussian kernel derivatives with the stationary signs.
        let cov = CovarianceSpec::squared_exponential(1);
        let lat = lattice_1d(0.5, 2.0, 1);
        let law = build_joint_law(&cov, &lat).unwrap();
        let h: f64 = 1.0;
        let e = (-h * h / 2.0).exp();
        let q = law.q;
        // Cov(f(s), f(t)) = C(h)
        assert!((law.cov_entry(0, q) - e).abs() < 1e-14);
        // Cov(f(s), f'(t)) = C'(h) = -h e
        assert!((law.cov_entry(0, q + 1) - (-h * e)).abs() < 1e-14);
        // Cov(f'(s), f(t)) = -C'(h) = +h e
        assert!((law.cov_entry(1, q) - (h * e)).abs() < 1e-14);
        // Cov(f'(s), f'(t)) = -C''(h) = (1 - h^2) e
        assert!((law.cov_entry(1, q + 1) - (1.0 - h * h) * e).abs() < 1e-14);
        // Cov(f(s), f''(t)) = C''(h) = (h^2 - 1) e
        assert!((law.cov_entry(0, q + 2) - (h * h - 1.0) * e).abs() < 1e-14);
        // Cov(f''(s), f''(t)) = C''''(h)
        assert!((law.cov_entry(2, q + 2) - (h.powi(4) - 6.0 * h * h + 3.0) * e).abs() < 1e-13);
    }

    #[test]
    fn coincident_points_need_jitter() {
        // A hand-built lattice with a duplicated point produces a singular
        // covariance; the escalation policy must kick in (or fail loudly).
        let lat = Lattice {
            d: 1,
            n_per_unit: 1,
            points: vec![vec![0.0], vec![0.0]],
            measures: vec![0.5, 0.5],
            total_measure: 1.0,
        };
        let law = build_joint_law(&CovarianceSpec::squared_exponential(1), &lat).unwrap();
        assert!(law.jitter > 0.0, "duplicate points cannot be factorized without jitter");
    }

    #[test]
    fn zero_noise_maps_to_zero_sample() {
        let law =
            build_joint_law(&CovarianceSpec::squared_exponential(1), &lattice_1d(0.0, 1.0, 2))
                .unwrap();
        let s = law.from_noise(&DVector::zeros(law.dim()));
        assert!(s.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn conditional_anchors_exactly() {
        let law =
            build_joint_law(&CovarianceSpec::squared_exponential(1), &lattice_1d(0.0, 1.0, 4))
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let anchor = [1.25, -0.5, 0.75];
        let s = law
            .sample_conditional(2, &anchor, AnchorMode::FullJet, &mut rng)
            .unwrap();
        assert_eq!(s.f(2), 1.25);
        assert_eq!(s.grad(2), &[-0.5]);
        assert_eq!(s.second(2), &[0.75]);

        let s2 = law.sample_conditional(0, &[2.0], AnchorMode::FOnly, &mut rng).unwrap();
        assert_eq!(s2.f(0), 2.0);
    }

    #[test]
    fn log_integral_sum_examples() {
        // Flat field f = 0, mu = 0: the sum is the total measure.
        let lat = lattice_1d(0.0, 1.0, 4);
        let q = jet_len(1);
        let flat = JointFieldSample { d: 1, q, values: DVector::zeros(lat.n_points() * q) };
        let mu = vec![0.0; lat.n_points()];
        let got = log_integral_sum(&lat, &mu, 1.0, &flat);
        assert!((got - 0.0f64).abs() < 1e-14, "ln(1) expected, got {got}");

        // Constant field f = c: the sum is mes(T) e^{sigma c}.
        let mut values = DVector::zeros(lat.n_points() * q);
        for i in 0..lat.n_points() {
            values[i * q] = 0.7;
        }
        let c = JointFieldSample { d: 1, q, values };
        let got = log_integral_sum(&lat, &mu, 2.0, &c);
        assert!((got - 1.4).abs() < 1e-12);

        // Adding a constant to mu shifts the log-sum by that constant.
        let mu_shift = vec![0.3; lat.n_points()];
        let got_shift = log_integral_sum(&lat, &mu_shift, 2.0, &c);
        assert!((got_shift - (1.4 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn log_integral_sum_monotone_in_field_values() {
        let lat = lattice_1d(0.0, 1.0, 3);
        let q = jet_len(1);
        let mu = vec![0.0; lat.n_points()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let law = build_joint_law(&CovarianceSpec::squared_exponential(1), &lat).unwrap();
        let s = law.sample_unconditional(&mut rng);
        let base = log_integral_sum(&lat, &mu, 1.0, &s);
        let mut bumped = s.clone();
        bumped.values[q] += 0.5; // raise f at an interior point
        assert!(log_integral_sum(&lat, &mu, 1.0, &bumped) > base);
    }
}
