//! Shared oracle utilities for the integration tests.
//!
//! Everything here is deliberately written from first principles (hand-coded
//! derivative formulas, generic quadrature, order statistics) so the tests
//! cross-check the library against independent arithmetic rather than
//! against itself.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fb, fm, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, fm, flm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, fb, frm, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson over `[a, b]` split at the given interior breakpoints
/// (where the integrand may lose smoothness).
pub fn integrate_with_breakpoints<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> f64 {
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|x| *x > a && *x < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut total = 0.0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            total += integrate(f, w[0], w[1], tol / cuts.len() as f64);
        }
    }
    total
}

/// Gauss–Hermite nodes and weights for the weight function `exp(-x^2)`,
/// computed by the Golub–Welsch eigen decomposition of the Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        jac[(k - 1, k)] = off;
        jac[(k, k - 1)] = off;
    }
    let eig = nalgebra::SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let node = eig.eigenvalues[j];
            let v0 = eig.eigenvectors[(0, j)];
            (node, std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal upper tail via the complementary error function.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov–Smirnov p-value for the hypothesis that `u` are iid
/// Uniform(0, 1), with the Stephens small-sample correction.
pub fn ks_uniform_p_value(u: &mut [f64]) -> f64 {
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = u.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in u.iter().enumerate() {
        let hi = (i as f64 + 1.0) / n - x;
        let lo = x - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    kolmogorov_q(lambda)
}

/// Upper tail of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Hand-coded derivatives of the unit Gaussian kernel `C(t) = exp(-t^2/2)`
/// in one dimension.
pub fn gauss_c(t: f64) -> f64 {
    (-(t * t) / 2.0).exp()
}
pub fn gauss_c1(t: f64) -> f64 {
    -t * gauss_c(t)
}
pub fn gauss_c2(t: f64) -> f64 {
    (t * t - 1.0) * gauss_c(t)
}
pub fn gauss_c3(t: f64) -> f64 {
    t * (3.0 - t * t) * gauss_c(t)
}
pub fn gauss_c4(t: f64) -> f64 {
    (t.powi(4) - 6.0 * t * t + 3.0) * gauss_c(t)
}

/// Hand-built jet cross-covariance block for the unit Gaussian kernel in one
/// dimension: rows index the jet `(f, f', f'')` at `s`, columns the jet at
/// `t`, `h = t - s`. Built from the stationary rule
/// `Cov(D^a f(s), D^b f(t)) = (-1)^{|a|} (D^{a+b} C)(h)`.
pub fn gauss_jet_block(h: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[
            gauss_c(h),
            gauss_c1(h),
            gauss_c2(h),
            -gauss_c1(h),
            -gauss_c2(h),
            -gauss_c3(h),
            gauss_c2(h),
            gauss_c3(h),
            gauss_c4(h),
        ],
    )
}

/// Hand-built joint jet covariance for two points at lag `h` (6 x 6).
pub fn gauss_two_point_jet_cov(h: f64) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(6, 6);
    k.view_mut((0, 0), (3, 3)).copy_from(&gauss_jet_block(0.0));
    k.view_mut((3, 3), (3, 3)).copy_from(&gauss_jet_block(0.0));
    k.view_mut((0, 3), (3, 3)).copy_from(&gauss_jet_block(h));
    k.view_mut((3, 0), (3, 3)).copy_from(&gauss_jet_block(-h));
    k
}

/// Exact tail probability of `m1 exp(sigma f1 + mu1) + m2 exp(sigma f2 + mu2) > b`
/// for standard bivariate normal `(f1, f2)` with correlation `r`, by
/// conditioning on `f1` and integrating the conditional normal tail.
pub fn two_point_tail_oracle(
    m1: f64,
    m2: f64,
    mu1: f64,
    mu2: f64,
    sigma: f64,
    r: f64,
    b: f64,
) -> f64 {
    let cond_sd = (1.0 - r * r).sqrt();
    let g = |x: f64| {
        let rem = b - m1 * (sigma * x + mu1).exp();
        if rem <= 0.0 {
            normal_pdf(x)
        } else {
            let c = ((rem / m2).ln() - mu2) / sigma;
            normal_pdf(x) * normal_sf((c - r * x) / cond_sd)
        }
    };
    // Breakpoint where the first term alone crosses the threshold.
    let x0 = ((b / m1).ln() - mu1) / sigma;
    let hi = 14.0f64.max(x0 + 6.0);
    integrate_with_breakpoints(&g, -14.0, hi, &[x0], 1e-13)
}

/// Mean and covariance of a set of sample vectors (test-side, plain two-pass
/// arithmetic).
pub fn sample_mean_cov(samples: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.len();
    let dim = samples[0].len();
    let mut mean = DVector::zeros(dim);
    for s in samples {
        mean += s;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for s in samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    (mean, cov)
}

/// Richardson-extrapolated second derivative of a scalar function along one
/// coordinate at the origin-like point `t0`.
pub fn fd_second<F: Fn(&[f64]) -> f64>(f: &F, t0: &[f64], axis: usize, h: f64) -> f64 {
    let eval = |step: f64| {
        let mut t = t0.to_vec();
        t[axis] += step;
        f(&t)
    };
    let d2 = |hh: f64| (eval(hh) - 2.0 * eval(0.0) + eval(-hh)) / (hh * hh);
    (4.0 * d2(0.5 * h) - d2(h)) / 3.0
}

/// Richardson-extrapolated fourth derivative along one coordinate.
pub fn fd_fourth<F: Fn(&[f64]) -> f64>(f: &F, t0: &[f64], axis: usize, h: f64) -> f64 {
    let eval = |step: f64| {
        let mut t = t0.to_vec();
        t[axis] += step;
        f(&t)
    };
    let d4 = |hh: f64| {
        (eval(2.0 * hh) - 4.0 * eval(hh) + 6.0 * eval(0.0) - 4.0 * eval(-hh) + eval(-2.0 * hh))
            / hh.powi(4)
    };
    // The central fourth difference has an h^2 leading error term, so the
    // Richardson weights are (4, -1)/3.
    (4.0 * d4(0.5 * h) - d4(h)) / 3.0
}

/// Richardson-extrapolated mixed fourth derivative `d^4 / dx_i^2 dx_j^2`.
pub fn fd_second_second<F: Fn(&[f64]) -> f64>(
    f: &F,
    t0: &[f64],
    i: usize,
    j: usize,
    h: f64,
) -> f64 {
    // Second difference in axis j of the second difference in axis i.
    let d2i = |t: &[f64], hh: f64| {
        let mut a = t.to_vec();
        let mut b = t.to_vec();
        a[i] += hh;
        b[i] -= hh;
        (f(&a) - 2.0 * f(t) + f(&b)) / (hh * hh)
    };
    let d2ij = |hh: f64| {
        let mut a = t0.to_vec();
        let mut b = t0.to_vec();
        a[j] += hh;
        b[j] -= hh;
        (d2i(&a, hh) - 2.0 * d2i(t0, hh) + d2i(&b, hh)) / (hh * hh)
    };
    // h^2 leading error, as in `fd_fourth`.
    (4.0 * d2ij(0.5 * h) - d2ij(h)) / 3.0
}

#[cfg(test)]
mod selfcheck {
    use super::*;

    #[test]
    fn simpson_integrates_gaussian() {
        let v = integrate(&normal_pdf, -12.0, 12.0, 1e-13);
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(12);
        let s0: f64 = w.iter().sum();
        let s2: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi * xi).sum();
        let rt_pi = std::f64::consts::PI.sqrt();
        assert!((s0 - rt_pi).abs() < 1e-12);
        assert!((s2 - rt_pi / 2.0).abs() < 1e-12);
    }

    #[test]
    fn fd_helpers_hit_known_derivatives() {
        let f = |t: &[f64]| gauss_c(t[0]) * gauss_c(t[1]);
        assert!((fd_second(&f, &[0.0, 0.0], 0, 1e-2) - (-1.0)).abs() < 5e-9);
        assert!((fd_fourth(&f, &[0.0, 0.0], 0, 0.02) - 3.0).abs() < 1e-7);
        assert!((fd_second_second(&f, &[0.0, 0.0], 0, 1, 0.02) - 1.0).abs() < 2e-7);
    }

    #[test]
    fn ks_detects_and_accepts() {
        // Exact uniform grid: p-value should be essentially 1.
        let mut grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform_p_value(&mut grid) > 0.99);
        // Squashed sample: decisively rejected.
        let mut squashed: Vec<f64> = (0..1000).map(|i| (i as f64 / 1000.0).powi(3)).collect();
        assert!(ks_uniform_p_value(&mut squashed) < 1e-6);
    }
}
