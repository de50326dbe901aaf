//! Density evolution of the peeling decoder.
//!
//! With `C` groups and redundancy `eta = B / K`, the fraction of unpeeled
//! edges evolves as `p_i = (1 - exp(-p_{i-1} / eta))^(C-1)` from `p_0 = 1`.
//! The smallest `eta` driving `p_i` to zero is the threshold `eta_min(C)`.

use serde::Serialize;

/// `(C, eta_min(C))` rounded to four decimals, for plan sizing.
pub const ETA_TABLE: [(usize, f64); 7] = [
    (2, 1.0000),
    (3, 0.4073),
    (4, 0.3237),
    (5, 0.2850),
    (6, 0.2616),
    (7, 0.2456),
    (8, 0.2336),
];

pub const DEFAULT_TOL: f64 = 1e-12;
/// Iteration cap used by [`min_eta`]. Just above the `C = 2` threshold the
/// recursion needs on the order of `1 / (eta - 1)` steps.
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeTrace {
    pub groups: usize,
    pub eta: f64,
    pub p: Vec<f64>,
    pub converged: bool,
}

#[inline]
fn step(p: f64, groups: usize, eta: f64) -> f64 {
    (-(-p / eta).exp_m1()).powi(groups as i32 - 1)
}

/// Iterates from `p_0 = 1` until `p < tol` or `max_iters` steps.
pub fn density_evolution(groups: usize, eta: f64, max_iters: usize, tol: f64) -> DeTrace {
    assert!(groups >= 2 && eta > 0.0, "need C >= 2 and eta > 0");
    let mut p = vec![1.0];
    let mut current = 1.0;
    while p.len() <= max_iters && current >= tol {
        current = step(current, groups, eta);
        p.push(current);
    }
    DeTrace {
        groups,
        eta,
        p,
        converged: current < tol,
    }
}

/// Convergence test without storing the trace. A step that fails to
/// decrease `p` means the recursion has reached a positive fixed point.
pub fn converges(groups: usize, eta: f64, max_iters: usize, tol: f64) -> bool {
    let mut p = 1.0f64;
    for _ in 0..max_iters {
        let next = step(p, groups, eta);
        if next < tol {
            return true;
        }
        if next >= p {
            return false;
        }
        p = next;
    }
    false
}

/// Bisection for the smallest `eta` at which density evolution converges.
pub fn min_eta(groups: usize, bisection_tol: f64) -> f64 {
    assert!(groups >= 2, "need C >= 2");
    let mut hi = 1.0;
    while !converges(groups, hi, DEFAULT_MAX_ITERS, DEFAULT_TOL) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > bisection_tol {
        let mid = 0.5 * (lo + hi);
        if converges(groups, mid, DEFAULT_MAX_ITERS, DEFAULT_TOL) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_above_c3_threshold() {
        let t = density_evolution(3, 0.41, 10_000, 1e-12);
        assert!(t.converged);
        assert!(*t.p.last().unwrap() < 1e-12);
    }

    #[test]
    fn stalls_below_c3_threshold() {
        let t = density_evolution(3, 0.40, 10_000, 1e-12);
        assert!(!t.converged);
        // Positive fixed point, frozen from iterating the recursion.
        let last = *t.p.last().unwrap();
        assert!(last > 0.1, "{last}");
        assert!((last - step(last, 3, 0.40)).abs() < 1e-12);
    }

    #[test]
    fn huge_eta_converges_immediately() {
        let t = density_evolution(3, 1e15, 10, 1e-12);
        assert!(t.p[1] < 1e-12);
        assert_eq!(t.p.len(), 2);
    }

    #[test]
    fn trace_is_bounded_and_monotone() {
        for eta in [0.3, 0.41, 0.8] {
            let t = density_evolution(4, eta, 2000, 1e-12);
            assert!(t.p.iter().all(|&p| (0.0..=1.0).contains(&p)));
            assert!(t.p.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn larger_eta_converges_no_slower() {
        let lens: Vec<usize> = [0.33, 0.4, 0.6, 1.0]
            .iter()
            .map(|&eta| density_evolution(4, eta, 100_000, 1e-12).p.len())
            .collect();
        assert!(lens.windows(2).all(|w| w[1] <= w[0]), "{lens:?}");
    }

    #[test]
    fn table_rounding_agrees_with_bisection() {
        for &(c, eta) in &ETA_TABLE[1..] {
            assert!((min_eta(c, 1e-6) - eta).abs() < 1e-3, "C = {c}");
        }
    }
}
