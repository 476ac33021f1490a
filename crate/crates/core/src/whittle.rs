//! Single-user sub-problem with an update cost `c`: threshold policies,
//! their closed-form average cost, and the Whittle index.
//!
//! A threshold policy with threshold `X` updates iff a packet is present
//! and the age is at least `X`. Under it the post-action age is a renewal
//! chain: ages `1..X` are visited deterministically, beyond `X` each slot
//! resets with probability `p`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WhittleError {
    #[error("arrival probability must lie in (0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("update cost must be non-negative, got {0}")]
    NegativeCost(f64),
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("truncation {truncate_at} is below threshold {threshold}")]
    TruncationBelowThreshold { threshold: u64, truncate_at: usize },
    #[error("cost grid must be ascending")]
    UnsortedGrid,
}

fn check_p(p: f64) -> Result<(), WhittleError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(WhittleError::InvalidProbability(p))
    }
}

fn check_c(c: f64) -> Result<(), WhittleError> {
    if c >= 0.0 {
        Ok(())
    } else {
        Err(WhittleError::NegativeCost(c))
    }
}

/// Single-user problem: arrival probability `p`, update cost `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubProblem {
    p: f64,
    c: f64,
}

impl SubProblem {
    pub fn new(p: f64, c: f64) -> Result<Self, WhittleError> {
        check_p(p)?;
        check_c(c)?;
        Ok(Self { p, c })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn average_cost(&self, policy: ThresholdPolicy) -> f64 {
        threshold_cost_real(policy.threshold() as f64, self.p, self.c)
    }

    pub fn optimal_policy(&self) -> ThresholdPolicy {
        ThresholdPolicy(optimal_threshold_unchecked(self.p, self.c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThresholdPolicy(u64);

impl ThresholdPolicy {
    pub fn new(threshold: u64) -> Result<Self, WhittleError> {
        if threshold == 0 {
            Err(WhittleError::ZeroThreshold)
        } else {
            Ok(Self(threshold))
        }
    }

    pub fn threshold(self) -> u64 {
        self.0
    }

    /// Update decision for age `x` and arrival flag.
    pub fn updates(self, age: u64, arrived: bool) -> bool {
        arrived && age >= self.0
    }
}

/// Average cost over real thresholds `x >= 1`.
pub(crate) fn threshold_cost_real(x: f64, p: f64, c: f64) -> f64 {
    let num = x * x / 2.0 + (1.0 / p - 0.5) * x + 1.0 / (p * p) - 1.0 / p + c;
    num / (x + (1.0 - p) / p)
}

/// Long-run average cost (age plus update cost) of the threshold policy.
pub fn threshold_average_cost(threshold: u64, p: f64, c: f64) -> Result<f64, WhittleError> {
    check_p(p)?;
    if threshold == 0 {
        return Err(WhittleError::ZeroThreshold);
    }
    Ok(threshold_cost_real(threshold as f64, p, c))
}

/// Stationary law of the post-action age, truncated to ages `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// `probs[i]` is the probability of post-action age `i + 1`.
    pub probs: Vec<f64>,
    /// Mass of ages above `K`.
    pub tail: f64,
}

pub fn threshold_steady_state(threshold: u64, p: f64, truncate_at: usize) -> Result<SteadyState, WhittleError> {
    check_p(p)?;
    if threshold == 0 {
        return Err(WhittleError::ZeroThreshold);
    }
    if (truncate_at as u64) < threshold {
        return Err(WhittleError::TruncationBelowThreshold { threshold, truncate_at });
    }
    let flat = 1.0 / (threshold as f64 + (1.0 - p) / p);
    let probs = (1..=truncate_at as u64)
        .map(|i| {
            if i <= threshold {
                flat
            } else {
                flat * (1.0 - p).powi((i - threshold) as i32)
            }
        })
        .collect();
    let tail = flat * (1.0 - p).powi((truncate_at as u64 + 1 - threshold) as i32) / p;
    Ok(SteadyState { probs, tail })
}

/// Whittle index of state `(x, λ)`: zero without a packet, otherwise
/// `x²/2 - x/2 + x/p`.
pub fn whittle_index(age: u64, arrived: bool, p: f64) -> f64 {
    if !arrived {
        return 0.0;
    }
    let x = age as f64;
    x * x / 2.0 - x / 2.0 + x / p
}

fn optimal_threshold_unchecked(p: f64, c: f64) -> u64 {
    let index = |x: u64| if x == 0 { 0.0 } else { whittle_index(x, true, p) };
    // I(x) = c  <=>  x = -b + sqrt(b² + 2c), b = 1/p - 1/2
    let b = 1.0 / p - 0.5;
    let mut x = ((-b + (b * b + 2.0 * c).sqrt()).floor() as u64).max(1);
    while x > 1 && index(x - 1) > c {
        x -= 1;
    }
    while index(x) <= c {
        x += 1;
    }
    x
}

/// The threshold `x` with `I(x-1, 1) <= c < I(x, 1)`, taking `I(0, 1) = 0`.
/// At `c = I(x, 1)` both `x` and `x + 1` are optimal and idling wins, so
/// the larger threshold is returned.
pub fn optimal_threshold(p: f64, c: f64) -> Result<u64, WhittleError> {
    check_p(p)?;
    check_c(c)?;
    Ok(optimal_threshold_unchecked(p, c))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Indexability {
    pub indexable: bool,
    pub thresholds: Vec<u64>,
}

/// Checks that the optimal threshold never shrinks as the update cost grows
/// along `c_grid`, i.e. that the idle set grows monotonically.
pub fn verify_indexability(p: f64, c_grid: &[f64]) -> Result<Indexability, WhittleError> {
    check_p(p)?;
    if c_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(WhittleError::UnsortedGrid);
    }
    let thresholds = c_grid
        .iter()
        .map(|&c| optimal_threshold(p, c))
        .collect::<Result<Vec<_>, _>>()?;
    let indexable = thresholds.windows(2).all(|w| w[0] <= w[1]);
    Ok(Indexability { indexable, thresholds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn average_cost_examples() {
        assert!(close(threshold_average_cost(1, 1.0, 0.0).unwrap(), 1.0, 1e-15));
        assert!(close(threshold_average_cost(1, 0.5, 0.0).unwrap(), 2.0, 1e-15));
        assert!(close(threshold_average_cost(2, 0.5, 3.0).unwrap(), 10.0 / 3.0, 1e-15));
        assert_eq!(
            threshold_average_cost(2, 0.0, 1.0),
            Err(WhittleError::InvalidProbability(0.0))
        );
        assert_eq!(threshold_average_cost(0, 0.5, 1.0), Err(WhittleError::ZeroThreshold));
    }

    #[test]
    fn average_cost_matches_series() {
        // (1 + c) ξ_1 + Σ_{i≥2} i ξ_i, summed far into the geometric tail
        for &(x, p, c) in &[(1u64, 0.2, 0.0), (2, 0.5, 3.0), (5, 0.9, 1.0), (4, 0.3, 7.5)] {
            let ss = threshold_steady_state(x, p, 4000).unwrap();
            let series: f64 = (1.0 + c) * ss.probs[0]
                + ss.probs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, q)| (i + 1) as f64 * q)
                    .sum::<f64>();
            assert!(
                close(series, threshold_average_cost(x, p, c).unwrap(), 1e-12),
                "{x} {p} {c}"
            );
        }
    }

    #[test]
    fn steady_state_examples() {
        let ss = threshold_steady_state(2, 0.5, 4).unwrap();
        let want = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 12.0];
        for (a, b) in ss.probs.iter().zip(want) {
            assert!(close(*a, b, 1e-15));
        }
        assert!(close(ss.tail, 1.0 / 12.0, 1e-15));

        let ss = threshold_steady_state(1, 1.0, 5).unwrap();
        assert_eq!(ss.probs, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(ss.tail, 0.0);

        assert!(threshold_steady_state(5, 0.5, 4).is_err());
    }

    #[test]
    fn steady_state_normalized() {
        for x in [1, 2, 5, 17] {
            for p in [0.05, 0.3, 0.5, 0.99, 1.0] {
                for k in [x as usize, x as usize + 1, 60, 500] {
                    let ss = threshold_steady_state(x, p, k).unwrap();
                    let total: f64 = ss.probs.iter().sum::<f64>() + ss.tail;
                    assert!((total - 1.0).abs() < 1e-12, "x={x} p={p} k={k} total={total}");
                }
            }
        }
    }

    #[test]
    fn index_examples() {
        for p in [0.1, 0.5, 1.0] {
            assert_eq!(whittle_index(7, false, p), 0.0);
        }
        assert_eq!(whittle_index(2, true, 0.5), 5.0);
        assert_eq!(whittle_index(1, true, 1.0), 1.0);
    }

    #[test]
    fn index_monotone_in_age_and_rate() {
        for x in 1..200 {
            for p in [0.05, 0.2, 0.5, 0.8] {
                assert!(whittle_index(x + 1, true, p) > whittle_index(x, true, p));
                assert!(whittle_index(x, true, p + 0.1) < whittle_index(x, true, p));
            }
        }
    }

    #[test]
    fn index_equalizes_adjacent_thresholds() {
        for x in 1..=50u64 {
            for k in 1..=10 {
                let p = k as f64 / 10.0;
                let c = whittle_index(x, true, p);
                let a = threshold_average_cost(x, p, c).unwrap();
                let b = threshold_average_cost(x + 1, p, c).unwrap();
                assert!(close(a, b, 1e-9), "x={x} p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn cost_is_strictly_convex() {
        for k in 1..=10 {
            let p = k as f64 / 10.0;
            for c in [0.0, 1.0, 5.0, 40.0] {
                if p == 1.0 && c == 0.0 {
                    // (x + 1) / 2, linear
                    continue;
                }
                for x in 2..100 {
                    let g = |t: u64| threshold_average_cost(t, p, c).unwrap();
                    assert!(g(x + 1) - 2.0 * g(x) + g(x - 1) > 0.0, "x={x} p={p} c={c}");
                }
                // half-integer points on the real extension
                for x in 2..100 {
                    let h = x as f64 + 0.5;
                    let g = |t: f64| threshold_cost_real(t, p, c);
                    assert!(g(h + 0.5) - 2.0 * g(h) + g(h - 0.5) > 0.0);
                }
            }
        }
    }

    #[test]
    fn optimal_threshold_examples() {
        assert_eq!(optimal_threshold(0.5, 3.0).unwrap(), 2);
        assert_eq!(optimal_threshold(1.0, 0.0).unwrap(), 1);
        assert!(optimal_threshold(0.5, -1.0).is_err());
    }

    #[test]
    fn optimal_threshold_matches_scan() {
        let best = (1..=100u64)
            .min_by(|&a, &b| {
                threshold_average_cost(a, 0.5, 3.0)
                    .unwrap()
                    .partial_cmp(&threshold_average_cost(b, 0.5, 3.0).unwrap())
                    .unwrap()
            })
            .unwrap();
        assert_eq!(best, 2);
        for p in [0.1, 0.37, 0.9] {
            for c in [0.0, 0.3, 2.2, 17.0, 1e4] {
                let scan = (1..=1000u64)
                    .map(|x| (x, threshold_average_cost(x, p, c).unwrap()))
                    .fold((0, f64::INFINITY), |acc, (x, v)| if v < acc.1 { (x, v) } else { acc });
                assert_eq!(optimal_threshold(p, c).unwrap(), scan.0, "p={p} c={c}");
            }
        }
    }

    #[test]
    fn tie_goes_to_idling() {
        for p in [0.2, 0.5, 1.0] {
            for x in 1..30 {
                let c = whittle_index(x, true, p);
                assert_eq!(optimal_threshold(p, c).unwrap(), x + 1);
            }
        }
    }

    #[test]
    fn indexability_examples() {
        let r = verify_indexability(0.5, &[0.0, 1.0, 2.0, 5.0, 10.0, 50.0]).unwrap();
        assert!(r.indexable);
        assert!(r.thresholds.windows(2).all(|w| w[0] <= w[1]));
        let r = verify_indexability(1.0, &[0.0]).unwrap();
        assert_eq!(r.thresholds, vec![1]);
        assert!(r.indexable);
        assert_eq!(verify_indexability(0.5, &[2.0, 1.0]), Err(WhittleError::UnsortedGrid));
    }

    #[test]
    fn sub_problem_wraps_closed_forms() {
        let sp = SubProblem::new(0.5, 3.0).unwrap();
        assert_eq!(sp.optimal_policy().threshold(), 2);
        assert!(close(
            sp.average_cost(ThresholdPolicy::new(2).unwrap()),
            10.0 / 3.0,
            1e-15
        ));
        assert!(SubProblem::new(0.0, 1.0).is_err());
        assert!(SubProblem::new(0.5, -0.1).is_err());
        let pol = ThresholdPolicy::new(3).unwrap();
        assert!(!pol.updates(2, true) && pol.updates(3, true) && !pol.updates(9, false));
    }
}
