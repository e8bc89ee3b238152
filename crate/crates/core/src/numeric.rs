//! Small numerical helpers shared by the exact calculations.

use statrs::function::factorial::ln_binomial;

/// `ln(p^successes * (1-p)^failures)`, with `0 * ln 0` taken as 0.
pub(crate) fn ln_bernoulli_weight(successes: u32, failures: u32, p: f64) -> f64 {
    let a = if successes == 0 { 0.0 } else { successes as f64 * p.ln() };
    let b = if failures == 0 { 0.0 } else { failures as f64 * (1.0 - p).ln() };
    a + b
}

/// `C(n, k) p^k (1-p)^(n-k)`.
pub fn binom_pmf(n: u32, k: u32, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    (ln_binomial(n as u64, k as u64) + ln_bernoulli_weight(k, n - k, p)).exp()
}

/// Full pmf vector of Binomial(n, p), indices 0..=n.
pub fn binom_pmf_vec(n: u32, p: f64) -> Vec<f64> {
    (0..=n).map(|k| binom_pmf(n, k, p)).collect()
}

/// `Pr[Binomial(n, p) >= k]`, summed directly.
pub fn binom_sf(n: u32, k: u32, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let tail: f64 = (k..=n).map(|i| binom_pmf(n, i, p)).sum();
    tail.min(1.0)
}

/// `Pr[Binomial(n, p) <= k]`.
pub fn binom_cdf(n: u32, k: u32, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    let head: f64 = (0..=k).map(|i| binom_pmf(n, i, p)).sum();
    head.min(1.0)
}

/// Solves `f(p) = target` on `[0, 1]` by bisection.
///
/// `f` must be monotone. `increasing` gives the direction. Returns `None`
/// when `target` is not bracketed by `f(0)` and `f(1)`.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, target: f64, increasing: bool, tol: f64) -> Option<f64> {
    let sign = if increasing { 1.0 } else { -1.0 };
    let g = |p: f64| sign * (f(p) - target);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (glo, ghi) = (g(lo), g(hi));
    if glo > 0.0 || ghi < 0.0 {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Locates where a nondecreasing function crosses `level` on the grid
/// `{0, step, 2 step, ..., 1}`.
///
/// Returns the midpoint of the bracketing grid interval
/// `f(p_i) < level <= f(p_{i+1})`, 0 when `f(0) >= level` and 1 when
/// `f(1) < level`.
pub(crate) fn grid_crossing<F: Fn(f64) -> f64>(f: F, level: f64, step: f64) -> f64 {
    let n = (1.0 / step).round() as u64;
    let at = |i: u64| i as f64 / n as f64;
    if f(0.0) >= level {
        return 0.0;
    }
    if f(1.0) < level {
        return 1.0;
    }
    // f(at(lo)) < level <= f(at(hi))
    let (mut lo, mut hi) = (0_u64, n);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(at(mid)) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (at(lo) + at(hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_tails_complement() {
        for &p in &[0.0, 0.13, 0.5, 0.91, 1.0] {
            for k in 0..=12 {
                let lhs = binom_cdf(12, k, p) + if k < 12 { binom_sf(12, k + 1, p) } else { 0.0 };
                assert!((lhs - 1.0).abs() < 1e-12, "p={p} k={k} lhs={lhs}");
            }
        }
    }

    #[test]
    fn degenerate_probabilities() {
        assert_eq!(binom_pmf(5, 0, 0.0), 1.0);
        assert_eq!(binom_pmf(5, 1, 0.0), 0.0);
        assert_eq!(binom_pmf(5, 5, 1.0), 1.0);
        assert_eq!(binom_pmf(5, 4, 1.0), 0.0);
    }

    #[test]
    fn bisect_finds_sqrt() {
        let r = bisect(|p| p * p, 0.25, true, 1e-12).unwrap();
        assert!((r - 0.5).abs() < 1e-11);
        let r = bisect(|p| 1.0 - p, 0.25, false, 1e-12).unwrap();
        assert!((r - 0.75).abs() < 1e-11);
        assert!(bisect(|p| p, 2.0, true, 1e-12).is_none());
    }

    #[test]
    fn grid_crossing_brackets() {
        let r = grid_crossing(|p| p, 0.123_45, 1e-4);
        assert!((r - 0.123_45).abs() <= 0.5e-4 + 1e-12);
        assert_eq!(grid_crossing(|_| 1.0, 0.5, 1e-4), 0.0);
        assert_eq!(grid_crossing(|_| 0.0, 0.5, 1e-4), 1.0);
    }
}
