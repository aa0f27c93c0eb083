//! Statistical primitives: moments, the Kolmogorov-Smirnov normality test,
//! Spearman rank correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite observation")]
    NonFinite,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by n).
pub fn population_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Sample standard deviation (divides by n - 1).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Minimum sample size for the normality test.
pub const KS_MIN_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Parameters were estimated from the sample, so the p-value is approximate.
    pub approximate: bool,
}

/// One-sample KS test against a normal with the sample's mean and sample sd.
///
/// The p-value comes from the asymptotic Kolmogorov distribution evaluated at
/// `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) * D`. A constant sample is degenerate
/// and reported as statistic 1, p 0.
pub fn ks_normality(sample: &[f64]) -> Result<KsResult, StatsError> {
    let n = sample.len();
    if n < KS_MIN_N {
        return Err(StatsError::TooFew { needed: KS_MIN_N, got: n });
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let m = mean(sample);
    let sd = sample_sd(sample);
    if sd == 0.0 {
        return Ok(KsResult {
            statistic: 1.0,
            p_value: 0.0,
            approximate: true,
        });
    }
    let normal = Normal::new(m, sd).expect("sd is positive and finite");
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (((i + 1) as f64 / nf) - f).max(f - (i as f64 / nf))
        })
        .fold(0.0, f64::max);
    let root = nf.sqrt();
    let lambda = (root + 0.12 + 0.11 / root) * statistic;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_survival(lambda),
        approximate: true,
    })
}

/// Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² λ²), the Kolmogorov tail probability.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        // The alternating series converges too slowly here; the tail is 1 to
        // well beyond double precision.
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev_term = 0.0f64;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * 2.0 * (a * jf * jf).exp();
        sum += term;
        if term.abs() <= 1e-10 * prev_term.abs() || term.abs() <= 1e-16 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
        prev_term = term;
    }
    1.0
}

/// Ranks starting at 1; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && xs[order[end + 1]] == xs[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &idx in &order[start..=end] {
            ranks[idx] = rank;
        }
        start = end + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman p-values need at least this many pairs.
pub const SPEARMAN_MIN_N: usize = 5;
/// Exact permutation p-values are offered below this size.
pub const EXACT_PERMUTATION_MAX_N: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Student t with n - 2 degrees of freedom.
    #[default]
    TApprox,
    /// Exhaustive permutation of ranks; falls back to `TApprox` above 11 pairs.
    ExactPermutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub n: usize,
    /// `None` when either sample is constant.
    pub rho: Option<f64>,
    /// `None` when `rho` is undefined or fewer than five pairs were given.
    pub p_value: Option<f64>,
}

pub fn spearman(x: &[f64], y: &[f64], method: PValueMethod) -> Result<SpearmanResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = x.len();
    if n < 2 {
        return Ok(SpearmanResult { n, rho: None, p_value: None });
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry);
    let p_value = match rho {
        Some(r) if n >= SPEARMAN_MIN_N => Some(match method {
            PValueMethod::ExactPermutation if n <= EXACT_PERMUTATION_MAX_N => {
                permutation_p_value(&rx, &ry, r)
            }
            _ => t_p_value(r, n),
        }),
        _ => None,
    };
    Ok(SpearmanResult { n, rho, p_value })
}

fn t_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Share of rank permutations at least as extreme as the observed |ρ|.
fn permutation_p_value(rx: &[f64], ry: &[f64], observed: f64) -> f64 {
    let mut perm = ry.to_vec();
    let n = perm.len();
    let target = observed.abs() - 1e-12;
    let mut extreme = 0u64;
    let mut total = 0u64;
    let mut count = |p: &[f64]| {
        total += 1;
        if pearson(rx, p).is_some_and(|r| r.abs() >= target) {
            extreme += 1;
        }
    };
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    count(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            count(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    #[test]
    fn moments() {
        assert_eq!(mean(&[0.2, 0.4]), 0.30000000000000004);
        assert!((sample_sd(&[0.2, 0.4]) - 0.1414213562373095).abs() < 1e-12);
        assert_eq!(population_sd(&[1.0, 3.0]), 1.0);
        assert_eq!(population_sd(&[7.0, 7.0, 7.0]), 0.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Reference values of Q_KS from standard tables.
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_survival(1.0) - 0.2700).abs() < 5e-4);
        assert!((kolmogorov_survival(0.5) - 0.9639).abs() < 5e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(5.0) < 1e-20);
    }

    #[test]
    fn ks_rejects_uniform_at_n_1000() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = Uniform::new(0.0, 1.0).unwrap();
            let xs: Vec<f64> = (0..1000).map(|_| u.sample(&mut rng)).collect();
            let r = ks_normality(&xs).unwrap();
            assert!(r.p_value < 0.05, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn ks_accepts_normal_mostly() {
        let accepted = (0..100u64)
            .filter(|&seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let xs: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
                ks_normality(&xs).unwrap().p_value > 0.05
            })
            .count();
        assert!(accepted >= 90, "{accepted}");
    }

    #[test]
    fn ks_degenerate_and_small() {
        let r = ks_normality(&[3.0; 10]).unwrap();
        assert_eq!((r.statistic, r.p_value), (1.0, 0.0));
        assert!(matches!(ks_normality(&[1.0; 7]), Err(StatsError::TooFew { .. })));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[1.0, 1.0, 3.0, 2.0, 5.0]), vec![1.5, 1.5, 4.0, 3.0, 5.0]);
        assert_eq!(average_ranks(&[2.0, 2.0, 2.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spearman_monotone_and_constant() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let up = [1.0, 4.0, 9.0, 16.0, 25.0, 36.0];
        let down = [6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        let r = spearman(&x, &up, PValueMethod::TApprox).unwrap();
        assert_eq!((r.rho, r.p_value), (Some(1.0), Some(0.0)));
        assert_eq!(spearman(&x, &down, PValueMethod::TApprox).unwrap().rho, Some(-1.0));
        let flat = spearman(&x, &[2.0; 6], PValueMethod::TApprox).unwrap();
        assert_eq!((flat.rho, flat.p_value), (None, None));
        let small = spearman(&x[..4], &up[..4], PValueMethod::TApprox).unwrap();
        assert_eq!((small.rho, small.p_value), (Some(1.0), None));
        assert!(spearman(&x, &up[..3], PValueMethod::TApprox).is_err());
    }

    #[test]
    fn spearman_with_tie_matches_hand_ranks() {
        // ranks y = {1.5, 1.5, 4, 3, 5}; d = {-0.5, 0.5, -1, 1, 0}
        // Pearson on ranks: sxy = 8.5, sxx = 10, syy = 9.5 -> rho = 8.5 / sqrt(95)
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 1.0, 3.0, 2.0, 5.0], PValueMethod::TApprox)
            .unwrap();
        assert!((r.rho.unwrap() - 8.5 / 95f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn t_p_value_reference() {
        // n = 10, rho = 0.6: t = 2.1213, df 8, two-sided p = 0.0667.
        assert!((t_p_value(0.6, 10) - 0.0667).abs() < 1e-3);
    }

    #[test]
    fn exact_permutation_p() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 1.0, 3.0, 4.0, 5.0];
        let r = spearman(&x, &y, PValueMethod::ExactPermutation).unwrap();
        // rho = 0.9; permutations of 5 ranks with |rho| >= 0.9: 2 with rho = 1/-1
        // and 8 with |rho| = 0.9 (one adjacent swap at either end) -> 10 / 120.
        assert!((r.rho.unwrap() - 0.9).abs() < 1e-12);
        assert!((r.p_value.unwrap() - 10.0 / 120.0).abs() < 1e-12);
    }
}
