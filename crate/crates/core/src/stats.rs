//! Spearman rank correlation with average-rank tie handling.
//!
//! Ranks are kept doubled so that average ranks of tied groups stay
//! integral; the correlation is then evaluated from exact integer sums.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Largest sample size for which the p-value enumerates all permutations.
pub const EXACT_MAX_N: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation undefined: need at least 3 points, got {0}")]
    TooFew(usize),
    #[error("correlation undefined: all ranks tied in one sequence")]
    ZeroVariance,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PValueMethod {
    /// Exact two-sided permutation test over all `n!` pairings.
    Exact,
    /// Student t approximation with `n - 2` degrees of freedom.
    TApprox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spearman {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: PValueMethod,
}

/// Twice the average rank of each value (1-based ranks), so ties of any
/// size yield integers.
pub fn doubled_ranks(values: &[f64]) -> Vec<i64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end; twice their mean.
        let doubled = (start + 1 + end) as i64;
        for &i in &idx[start..end] {
            ranks[i] = doubled;
        }
        start = end;
    }
    ranks
}

/// Average ranks (1-based).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    doubled_ranks(values).into_iter().map(|r| r as f64 / 2.0).collect()
}

fn centred(values: &[f64]) -> Vec<i64> {
    let shift = values.len() as i64 + 1;
    doubled_ranks(values).into_iter().map(|r| r - shift).collect()
}

fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pearson correlation from centred integer sums.
pub fn rho_from_sums(cross: i64, xx: i64, yy: i64) -> f64 {
    cross as f64 / ((xx as f64) * (yy as f64)).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFew(n));
    }
    if let Some(i) = x.iter().zip(y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let a = centred(x);
    let b = centred(y);
    let (xx, yy) = (dot(&a, &a), dot(&b, &b));
    if xx == 0 || yy == 0 {
        return Err(StatsError::ZeroVariance);
    }
    let cross = dot(&a, &b);
    let rho = rho_from_sums(cross, xx, yy);

    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p_value(&a, &b, cross), PValueMethod::Exact)
    } else {
        (t_p_value(rho, n), PValueMethod::TApprox)
    };
    Ok(Spearman {
        rho,
        p_value,
        n,
        method,
    })
}

/// Two-sided t-approximation p-value; exactly 0 when `|rho| = 1`.
pub fn t_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("n > 2 gives positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Fraction of all `n!` re-pairings of `b` against `a` whose centred cross
/// sum is at least as extreme as `observed`.
///
/// Permutations are generated with Heap's algorithm, so each step is a
/// single swap and the cross sum is updated in constant time.
fn exact_p_value(a: &[i64], b: &[i64], observed: i64) -> f64 {
    let n = a.len();
    let threshold = observed.abs();
    let mut perm = b.to_vec();
    let mut cross = observed;
    let mut hits: u64 = 1;
    let mut total: u64 = 1;
    let mut counters = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            let j = if i % 2 == 0 { 0 } else { counters[i] };
            // Swapping perm[i] and perm[j] changes a_i*p_i + a_j*p_j.
            cross += (a[i] - a[j]) * (perm[j] - perm[i]);
            perm.swap(i, j);
            total += 1;
            if cross.abs() >= threshold {
                hits += 1;
            }
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement() {
        let s = spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(s.rho, 1.0);
        let s = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(s.rho, -1.0);
        // Two of the six pairings reach |rho| = 1.
        assert!((s.p_value - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_get_average_rank() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn tied_example_matches_hand_computation() {
        // Ranks (1, 2.5, 2.5, 4) vs (1, 3, 2, 4): centred sums give
        // cross = 4.5, xx = 4.5, yy = 5.
        let s = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((s.rho - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.method, PValueMethod::Exact);
    }

    #[test]
    fn errors() {
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::TooFew(2)));
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(StatsError::LengthMismatch(3, 2))
        );
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::ZeroVariance)
        );
        assert_eq!(
            spearman(&[1.0, f64::NAN, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::NonFinite(1))
        );
    }

    #[test]
    fn large_n_uses_t_approximation() {
        let x: Vec<f64> = (0..29).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.7).sin() + v * 0.1).collect();
        let s = spearman(&x, &y).unwrap();
        assert_eq!(s.method, PValueMethod::TApprox);
        assert!(s.p_value > 0.0 && s.p_value < 1.0);
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        let s = spearman(&x, &rev).unwrap();
        assert_eq!((s.rho, s.p_value), (-1.0, 0.0));
    }

    #[test]
    fn t_p_value_reference() {
        // 2 * scipy.stats.t.sf(2.0, 20) = 0.0592655354...; rho giving t = 2 at n = 22.
        let rho = 2.0 / (20.0f64 + 4.0).sqrt();
        assert!((t_p_value(rho, 22) - 0.059_265_535_4).abs() < 1e-9);
    }
}
