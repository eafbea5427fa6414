//! Log-space arithmetic and small numerical utilities shared across the
//! crate. All probability mass in this crate travels through these helpers,
//! so they are written to be exact about infinities: `-inf` represents an
//! exact zero and must flow through sums and maxima without producing NaN.

/// Natural log of a sum of exponentials, `ln(Σ exp(x_i))`, computed with the
/// max-subtraction trick and a compensated accumulator.
///
/// Empty input and all-`-inf` input both return `-inf` (the sum of no mass,
/// or of zero mass, is zero).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        // Either empty, all -inf (sum is zero), or a +inf slipped in.
        return m.max(f64::NEG_INFINITY);
    }
    let mut sum = KahanSum::new();
    for &x in xs {
        if x > f64::NEG_INFINITY {
            sum.add((x - m).exp());
        }
    }
    m + sum.value().ln()
}

/// Streaming two-pass-free variant for cases where the terms arrive as
/// `(log-value, multiplicity)` pairs; used by the estimator aggregates.
pub fn log_sum_exp_weighted(terms: &[(f64, f64)]) -> f64 {
    let m = terms
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut sum = KahanSum::new();
    for &(x, w) in terms {
        if w > 0.0 && x > f64::NEG_INFINITY {
            sum.add(w * (x - m).exp());
        }
    }
    m + sum.value().ln()
}

/// `ln(exp(a) - exp(b))` for `a >= b`, without leaving log space.
pub fn log_diff_exp(a: f64, b: f64) -> f64 {
    debug_assert!(a >= b, "log_diff_exp requires a >= b");
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a == b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// Kahan–Babuška compensated accumulator. Summation order is fixed by the
/// caller, which keeps reductions bit-identical across worker counts.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Bisection for a continuous scalar function with a sign change on
/// `[lo, hi]`. Returns the midpoint once the bracket width or residual
/// drops below the tolerances. The caller guarantees `f(lo) <= 0 <= f(hi)`
/// or the reverse; this routine only assumes opposite signs.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64, ftol: f64) -> f64 {
    let mut flo = f(lo);
    let fhi = f(hi);
    debug_assert!(
        flo == 0.0 || fhi == 0.0 || (flo < 0.0) != (fhi < 0.0),
        "bisect requires a sign change"
    );
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= ftol || (hi - lo).abs() <= xtol * mid.abs().max(1.0) {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let xs = [-1.0f64, 0.5, 2.0, -3.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum();
        assert!((log_sum_exp(&xs) - direct.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_extreme_offsets() {
        // exp(-1000) + exp(-1001) has no floating representation, but the
        // log of the sum is finite and exactly computable.
        let got = log_sum_exp(&[-1000.0, -1001.0]);
        let want = -1000.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_of_zero_mass_is_neg_inf() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn log_sum_exp_ignores_neg_inf_terms() {
        let got = log_sum_exp(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]);
        assert!((got - 0.0).abs() < 1e-15);
    }

    #[test]
    fn kahan_beats_naive_on_adversarial_order() {
        let mut k = KahanSum::new();
        k.add(1.0);
        for _ in 0..10_000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn log_diff_exp_matches_direct() {
        let got = log_diff_exp(1.0, 0.0);
        let want = (1.0f64.exp() - 1.0).ln();
        assert!((got - want).abs() < 1e-14);
        assert_eq!(log_diff_exp(2.5, f64::NEG_INFINITY), 2.5);
        assert_eq!(log_diff_exp(2.5, 2.5), f64::NEG_INFINITY);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let root = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15, 0.0);
        assert!((root - std::f64::consts::SQRT_2).abs() < 1e-12);
    }
}
