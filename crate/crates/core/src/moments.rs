//! Spectral moments of the covariance at lag zero and the derived matrices
//! used by the change of measure and the asymptotic constant.
//!
//! Jet coordinate convention, used verbatim by the lattice law, the samplers,
//! and the weight evaluation: per point the `q = 1 + d + d(d+1)/2` slots are
//!
//! 1. the field value `f`,
//! 2. the `d` gradient entries in axis order,
//! 3. the `d(d+1)/2` second-derivative entries, diagonal `(i,i)` first in
//!    axis order, then the strict upper triangle `(i,j)`, `i < j`, in
//!    lexicographic order.

use nalgebra::{DMatrix, DVector};

use crate::error::{GrfError, Result};
use crate::model::CovarianceSpec;

/// Ordered second-derivative index pairs: `(0,0) ... (d-1,d-1)` then the
/// strict upper triangle in lexicographic order.
pub fn second_order_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..d).map(|i| (i, i)).collect();
    for i in 0..d {
        for j in (i + 1)..d {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Multi-index (per-axis derivative orders) for every jet slot, in the slot
/// order documented at module level. Length `1 + d + d(d+1)/2`.
pub fn jet_multi_indices(d: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![0u8; d]];
    for i in 0..d {
        let mut a = vec![0u8; d];
        a[i] = 1;
        out.push(a);
    }
    for (i, j) in second_order_pairs(d) {
        let mut a = vec![0u8; d];
        a[i] += 1;
        a[j] += 1;
        out.push(a);
    }
    out
}

/// Number of jet coordinates per point.
pub fn jet_len(d: usize) -> usize {
    1 + d + d * (d + 1) / 2
}

/// Lag-zero spectral moments and the matrices derived from them.
///
/// `mu20` is the row of covariances between the field value and each
/// second-derivative slot; `mu22` the covariance of the second-derivative
/// block. `lambda` is the precision of the second-derivative block given the
/// field value, which is exactly the Gaussian block the tilted densities use.
#[derive(Debug, Clone)]
pub struct SpectralMoments {
    pub d: usize,
    /// `d(d+1)/2`, the length of the second-derivative block.
    pub q2: usize,
    /// `mu_20[k] = D^2_{pair k} C(0)`; equals `Cov(f, d^2 f)` at a point.
    pub mu20: DVector<f64>,
    /// `mu_22[k,l] = D^4 C(0)` for the combined multi-index of pairs `k, l`.
    pub mu22: DMatrix<f64>,
    /// Schur complement `1 - mu20' mu22^{-1} mu20`; the conditional variance
    /// of the field value given its second derivatives.
    pub schur_s: f64,
    /// `mu22^{-1} mu20`, cached for quadratic-form evaluation.
    pub w1: DVector<f64>,
    /// `ln det` of the `(1+q2) x (1+q2)` value/second-derivative covariance.
    pub log_det_gamma: f64,
    /// Precision of the second-derivative block given the field value:
    /// `lambda = mu22^{-1} + w1 w1' / s = (mu22 - mu20 mu20')^{-1}`.
    pub lambda: DMatrix<f64>,
    /// Covariance `lambda^{-1} = mu22 - mu20 mu20'`.
    pub lambda_inv: DMatrix<f64>,
    /// Lower Cholesky factor of `lambda_inv`, used to draw the block.
    pub lambda_inv_chol: DMatrix<f64>,
    pub log_det_lambda: f64,
    /// Indicator of the diagonal slots inside the second-derivative block:
    /// `d` ones followed by zeros. Contracting with it sums the pure second
    /// derivatives (the discrete Laplacian of the jet).
    pub one: DVector<f64>,
    /// `one' mu22 one`.
    pub one_mu22_one: f64,
    /// `one' lambda^{-1} one`.
    pub one_lambda_inv_one: f64,
    /// `sum_i D^4_{iiii} C(0)`, the pure fourth moments entering `B_t`.
    pub fourth_diag_sum: f64,
    /// Inverse `mu22^{-1}` kept for quadratic forms in the densities.
    pub mu22_inv: DMatrix<f64>,
}

/// Assemble the lag-zero moments for a covariance kernel in dimension `d`.
///
/// Fails if the second-derivative covariance `mu22` is not positive definite
/// or if the joint value/second-derivative covariance is singular, both of
/// which signal a degenerate kernel.
pub fn spectral_moments(cov: &CovarianceSpec, d: usize) -> Result<SpectralMoments> {
    let pairs = second_order_pairs(d);
    let q2 = pairs.len();
    let zero = vec![0.0; d];

    let mu20 = DVector::from_iterator(
        q2,
        pairs.iter().map(|&(i, j)| {
            let mut a = vec![0u8; d];
            a[i] += 1;
            a[j] += 1;
            cov.deriv(&a, &zero)
        }),
    );

    let mut mu22 = DMatrix::zeros(q2, q2);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        for (l, &(p, r)) in pairs.iter().enumerate() {
            if l < k {
                continue;
            }
            let mut a = vec![0u8; d];
            a[i] += 1;
            a[j] += 1;
            a[p] += 1;
            a[r] += 1;
            let v = cov.deriv(&a, &zero);
            mu22[(k, l)] = v;
            mu22[(l, k)] = v;
        }
    }

    let chol22 = mu22.clone().cholesky().ok_or_else(|| {
        GrfError::InvalidModel("second-derivative covariance mu22 is not positive definite".into())
    })?;
    let log_det_mu22: f64 = 2.0 * chol22.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let mu22_inv = chol22.inverse();

    let w1 = &mu22_inv * &mu20;
    let schur_s = 1.0 - mu20.dot(&w1);
    if schur_s <= 1e-12 {
        return Err(GrfError::InvalidModel(format!(
            "joint value/second-derivative covariance is singular (Schur complement {schur_s:.3e})"
        )));
    }
    let log_det_gamma = log_det_mu22 + schur_s.ln();

    let lambda_inv = &mu22 - &mu20 * mu20.transpose();
    let lam_chol = lambda_inv.clone().cholesky().ok_or_else(|| {
        GrfError::InvalidModel("conditional second-derivative covariance is not positive definite".into())
    })?;
    let lambda_inv_chol = lam_chol.l();
    let log_det_lambda: f64 =
        -2.0 * lambda_inv_chol.diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let lambda = lam_chol.inverse();

    let mut one = DVector::zeros(q2);
    for i in 0..d {
        one[i] = 1.0;
    }
    let one_mu22_one = (&mu22 * &one).dot(&one);
    let one_lambda_inv_one = (&lambda_inv * &one).dot(&one);

    let fourth_diag_sum: f64 = (0..d)
        .map(|i| {
            let mut a = vec![0u8; d];
            a[i] = 4;
            cov.deriv(&a, &zero)
        })
        .sum();

    Ok(SpectralMoments {
        d,
        q2,
        mu20,
        mu22,
        schur_s,
        w1,
        log_det_gamma,
        lambda,
        lambda_inv,
        lambda_inv_chol,
        log_det_lambda,
        one,
        one_mu22_one,
        one_lambda_inv_one,
        fourth_diag_sum,
        mu22_inv,
    })
}

impl SpectralMoments {
    /// Covariance of the full jet `(f, grad f, d^2 f)` at a single point, in
    /// the slot order documented at module level: the gradient block is
    /// independent of the others with identity covariance, while the value
    /// and second-derivative blocks couple through `mu20`.
    pub fn single_point_jet_cov(&self) -> DMatrix<f64> {
        let d = self.d;
        let q = jet_len(d);
        let mut cov = DMatrix::zeros(q, q);
        cov[(0, 0)] = 1.0;
        for i in 0..d {
            cov[(1 + i, 1 + i)] = 1.0;
        }
        for k in 0..self.q2 {
            cov[(0, 1 + d + k)] = self.mu20[k];
            cov[(1 + d + k, 0)] = self.mu20[k];
            for l in 0..self.q2 {
                cov[(1 + d + k, 1 + d + l)] = self.mu22[(k, l)];
            }
        }
        cov
    }

    /// Log of the Gaussian-block integral shared by the mixture normalizers
    /// and the asymptotic constant:
    /// `ln J = (q2/2) ln 2pi - (1/2) ln det lambda + one' lambda^{-1} one / (8 sigma^2)
    ///         - one' mu22 one / (8 sigma^2)`.
    pub fn log_z_integral(&self, sigma: f64) -> f64 {
        let q2 = self.q2 as f64;
        0.5 * q2 * (2.0 * std::f64::consts::PI).ln() - 0.5 * self.log_det_lambda
            + self.one_lambda_inv_one / (8.0 * sigma * sigma)
            - self.one_mu22_one / (8.0 * sigma * sigma)
    }
}
