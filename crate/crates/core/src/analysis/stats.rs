//! Mann-Whitney U with tie-corrected normal approximation.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::train::midranks;

/// Largest pooled sample size for which the exact null distribution is
/// computed.
pub const MAX_EXACT_N: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatResult {
    /// Rank-sum statistic of the first sample.
    pub u: f64,
    pub z: f64,
    /// Two-sided normal-approximation probability.
    pub p: f64,
    /// Two-sided exact probability, for tie-free samples with
    /// `n1 + n2 <= MAX_EXACT_N`.
    pub p_exact: Option<f64>,
    /// `z / sqrt(n1 + n2)`.
    pub r: f64,
    pub n1: usize,
    pub n2: usize,
    /// Set when every pooled value is identical, so that `sigma = 0`.
    pub degenerate: bool,
}

/// Two-sided P(|Z| >= |z|) for a standard normal.
pub fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<StatResult> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::Statistics(format!(
            "Mann-Whitney U needs two non-empty samples, got sizes {n1} and {n2}"
        )));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::Statistics("NaN in sample".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let (f1, f2) = (n1 as f64, n2 as f64);
    let u = r1 - f1 * (f1 + 1.0) / 2.0;

    let n = n1 + n2;
    let nf = n as f64;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut tied = false;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        if j - i > 1 {
            tied = true;
            tie_term += t * t * t - t;
        }
        i = j;
    }
    let var = if n > 1 {
        f1 * f2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)))
    } else {
        0.0
    };
    let sigma = var.max(0.0).sqrt();
    let degenerate = sigma == 0.0;
    let (z, p) = if degenerate {
        (0.0, 1.0)
    } else {
        let z = (u - f1 * f2 / 2.0) / sigma;
        (z, two_sided_normal_p(z))
    };
    let p_exact = (!tied && n <= MAX_EXACT_N).then(|| exact_two_sided_p(n1, n2, u.round() as usize));
    Ok(StatResult {
        u,
        z,
        p,
        p_exact,
        r: z / nf.sqrt(),
        n1,
        n2,
        degenerate,
    })
}

/// Number of rank arrangements giving each value of U, i.e. the
/// coefficients of the Gaussian binomial `[n1+n2 choose n1]_q`.
pub fn u_null_counts(n1: usize, n2: usize) -> Vec<i128> {
    let len = n1 * n2 + 1;
    let mut c = vec![0i128; len];
    c[0] = 1;
    // build prod_{i=1..n1} (1 - q^(n2+i)) / (1 - q^i); every partial
    // product is a polynomial with non-negative integer coefficients
    for i in 1..=n1 {
        let k = n2 + i;
        for u in (k..len).rev() {
            c[u] -= c[u - k];
        }
        for u in i..len {
            c[u] += c[u - i];
        }
    }
    c
}

/// Exact two-sided p for a tie-free U: twice the smaller tail, capped at 1.
pub fn exact_two_sided_p(n1: usize, n2: usize, u: usize) -> f64 {
    let counts = u_null_counts(n1, n2);
    let total: i128 = counts.iter().sum();
    let lower: i128 = counts[..=u.min(counts.len() - 1)].iter().sum();
    let upper: i128 = counts[u.min(counts.len() - 1)..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

/// `min(1, m p)` for `m = p_values.len()` comparisons.
pub fn bonferroni(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len() as f64;
    p_values.iter().map(|&p| (m * p).min(1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_samples() {
        let s = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(s.u, 0.0);
        assert_eq!(s.p_exact, Some(0.1));
        assert!(s.z < 0.0);
        let t = mann_whitney_u(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.u + t.u, 9.0);
    }

    #[test]
    fn identical_samples() {
        let s = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.z, 0.0);
        assert_eq!(s.p, 1.0);
        let d = mann_whitney_u(&[2.0, 2.0], &[2.0]).unwrap();
        assert!(d.degenerate);
        assert_eq!((d.z, d.p), (0.0, 1.0));
    }

    #[test]
    fn effect_size() {
        let s = mann_whitney_u(&(0..8).map(f64::from).collect::<Vec<_>>(), &(8..16).map(f64::from).collect::<Vec<_>>()).unwrap();
        assert!((s.r - s.z / 4.0).abs() < 1e-15);
    }

    #[test]
    fn null_counts_sum_to_binomial() {
        let c = u_null_counts(3, 3);
        assert_eq!(c, vec![1, 1, 2, 3, 3, 3, 3, 2, 1, 1]);
        let c = u_null_counts(8, 8);
        assert_eq!(c.iter().sum::<i128>(), 12870);
    }

    #[test]
    fn bonferroni_examples() {
        assert!((bonferroni(&[0.01; 5])[0] - 0.05).abs() < 1e-15);
        assert_eq!(bonferroni(&[0.5; 3])[0], 1.0);
        assert_eq!(bonferroni(&[0.3]), vec![0.3]);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(matches!(mann_whitney_u(&[], &[1.0]), Err(Error::Statistics(_))));
    }
}
