//! Closed-form algebra for centered Gaussians under diffusion and
//! product-of-experts (PoE) composition.
//!
//! For experts `N(0, alpha_k I)` the PoE is `N(0, H(alpha) I)` with `H` the
//! harmonic mean. Diffusing the PoE gives variance coefficient
//! `c_poe = gamma H(alpha) + (1 - gamma)`, while taking the PoE of the diffused
//! experts gives `c_not_poe = H(gamma alpha + (1 - gamma))`. The gap
//! `c_not_poe - c_poe` is nonnegative and vanishes exactly when all `alpha_k`
//! coincide; the inequality comes from super-additivity of `H`, itself the
//! `p = -1` case of the reverse Minkowski inequality for sums.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::fmath;
use crate::rng::Stream;

/// `K` centered isotropic Gaussians `N(0, alpha_k I)` in a given dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicGaussianSet {
    pub alphas: Vec<f64>,
    pub dimension: usize,
}

impl IsotropicGaussianSet {
    pub fn new(alphas: Vec<f64>, dimension: usize) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::invalid("need at least one expert"));
        }
        if alphas.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::domain("all variances must be positive and finite"));
        }
        if dimension == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(IsotropicGaussianSet { alphas, dimension })
    }

    /// Variance coefficient of the PoE of the experts (at time zero).
    pub fn poe_variance(&self) -> f64 {
        harmonic_mean(&self.alphas).expect("validated positive")
    }

    /// Both orderings of diffusion and PoE at mean-decay coefficient `gamma`.
    pub fn commutativity_gap(&self, gamma: f64) -> Result<CommutativityGap> {
        commutativity_gap(&self.alphas, gamma)
    }
}

/// Harmonic mean `K / sum(1 / x_k)`.
pub fn harmonic_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("harmonic mean of an empty set"));
    }
    if values.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::domain("harmonic mean requires strictly positive inputs"));
    }
    let inv_sum: f64 = values.iter().map(|&x| 1.0 / x).sum();
    Ok(values.len() as f64 / inv_sum)
}

/// PoE covariance of `K` diagonal Gaussians: per-coordinate harmonic mean of
/// the variances.
pub fn poe_covariance(covariances: &[Vec<f64>]) -> Result<Vec<f64>> {
    if covariances.is_empty() {
        return Err(Error::invalid("PoE of an empty expert set"));
    }
    let d = covariances[0].len();
    for c in covariances {
        if c.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: c.len(),
            });
        }
    }
    (0..d)
        .map(|j| {
            let col: Vec<f64> = covariances.iter().map(|c| c[j]).collect();
            harmonic_mean(&col)
        })
        .collect()
}

/// Result of comparing the two orderings of diffusion and PoE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutativityGap {
    /// Variance of the diffused PoE: `gamma H(alpha) + (1 - gamma)`.
    pub c_poe: f64,
    /// Variance of the PoE of diffused experts: `H(gamma alpha + (1 - gamma))`.
    pub c_not_poe: f64,
    /// `c_not_poe - c_poe`, nonnegative; zero iff all alphas equal.
    pub gap: f64,
}

/// Evaluates both variance coefficients and their gap.
pub fn commutativity_gap(alphas: &[f64], gamma: f64) -> Result<CommutativityGap> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let h = harmonic_mean(alphas)?;
    let c_poe = gamma * h + (1.0 - gamma);
    let diffused: Vec<f64> = alphas.iter().map(|&a| gamma * a + (1.0 - gamma)).collect();
    let c_not_poe = harmonic_mean(&diffused)?;
    Ok(CommutativityGap {
        c_poe,
        c_not_poe,
        gap: c_not_poe - c_poe,
    })
}

/// Result of evaluating the reverse Minkowski inequality for sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseMinkowskiCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// For `p < 1`, `p != 0` and positive vectors:
/// `(sum (a_k + b_k)^p)^(1/p) >= (sum a_k^p)^(1/p) + (sum b_k^p)^(1/p)`,
/// with equality iff `a` is proportional to `b`.
pub fn reverse_minkowski_check(a: &[f64], b: &[f64], p: f64) -> Result<ReverseMinkowskiCheck> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::invalid("vectors must be nonempty and equal length"));
    }
    if a.iter().chain(b).any(|&x| !(x > 0.0)) {
        return Err(Error::domain("entries must be strictly positive"));
    }
    if !(p < 1.0) || p == 0.0 || !p.is_finite() {
        return Err(Error::domain(format!("exponent must satisfy p < 1, p != 0, got {p}")));
    }
    let p_sum = |xs: &mut dyn Iterator<Item = f64>| -> f64 {
        let s: f64 = xs.map(|x| fmath::powf(x, p)).sum();
        fmath::powf(s, 1.0 / p)
    };
    let lhs = p_sum(&mut a.iter().zip(b).map(|(x, y)| x + y));
    let rhs = p_sum(&mut a.iter().copied()) + p_sum(&mut b.iter().copied());
    Ok(ReverseMinkowskiCheck {
        lhs,
        rhs,
        // small slack for rounding in the power evaluations
        holds: lhs >= rhs - 1e-10 * (1.0 + rhs.abs()),
    })
}

/// Summary of a randomized Proposition-2 sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop2Sweep {
    pub random_cases: usize,
    pub equal_cases: usize,
    /// Smallest gap seen on random (generically unequal) alpha draws.
    pub min_gap: f64,
    /// Largest |gap| seen on equal-alpha draws.
    pub max_equal_gap: f64,
    /// Random draws violating gap >= -1e-12.
    pub violations: usize,
    /// Cases breaking the `gap <= 1e-12 iff alphas equal` equivalence.
    pub equality_mismatches: usize,
}

impl Prop2Sweep {
    pub fn pass(&self) -> bool {
        self.violations == 0 && self.equality_mismatches == 0
    }
}

/// Randomized non-commutativity sweep: `K` in 2..=8, alphas log-uniform in
/// [1e-2, 1e2], gamma uniform in (0, 1), plus explicit equal-alpha draws.
pub fn proposition2_sweep(n_random: usize, n_equal: usize, stream: Stream) -> Prop2Sweep {
    let mut rng = stream.rng();
    let mut sweep = Prop2Sweep {
        random_cases: n_random,
        equal_cases: n_equal,
        min_gap: f64::INFINITY,
        max_equal_gap: 0.0,
        violations: 0,
        equality_mismatches: 0,
    };
    let ln_lo = fmath::ln(1e-2);
    let ln_hi = fmath::ln(1e2);
    for _ in 0..n_random {
        let k = rng.random_range(2..=8usize);
        let alphas: Vec<f64> = (0..k)
            .map(|_| fmath::exp(rng.random_range(ln_lo..ln_hi)))
            .collect();
        let mut gamma: f64 = rng.random_range(0.0..1.0);
        while gamma == 0.0 {
            gamma = rng.random_range(0.0..1.0);
        }
        let out = commutativity_gap(&alphas, gamma).expect("valid draw");
        sweep.min_gap = sweep.min_gap.min(out.gap);
        if out.gap < -1e-12 {
            sweep.violations += 1;
        }
        let max = alphas.iter().cloned().fold(f64::MIN, f64::max);
        let min = alphas.iter().cloned().fold(f64::MAX, f64::min);
        let equal = max / min - 1.0 <= 1e-9;
        if (out.gap <= 1e-12) != equal {
            sweep.equality_mismatches += 1;
        }
    }
    for _ in 0..n_equal {
        let k = rng.random_range(2..=8usize);
        let c = fmath::exp(rng.random_range(ln_lo..ln_hi));
        let alphas = alloc::vec![c; k];
        let mut gamma: f64 = rng.random_range(0.0..1.0);
        while gamma == 0.0 {
            gamma = rng.random_range(0.0..1.0);
        }
        let out = commutativity_gap(&alphas, gamma).expect("valid draw");
        sweep.max_equal_gap = sweep.max_equal_gap.max(fmath::abs(out.gap));
        if fmath::abs(out.gap) > 1e-12 {
            sweep.equality_mismatches += 1;
        }
    }
    sweep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_mean_examples() {
        assert!((harmonic_mean(&[3.0, 3.0, 3.0]).unwrap() - 3.0).abs() < 1e-15);
        assert!((harmonic_mean(&[1.0, 4.0]).unwrap() - 1.6).abs() < 1e-15);
        assert!(harmonic_mean(&[1.0, -2.0]).is_err());
        assert!(harmonic_mean(&[]).is_err());
    }

    #[test]
    fn harmonic_mean_is_homogeneous() {
        let mut rng = Stream::new(3).rng();
        for _ in 0..200 {
            let xs: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..10.0)).collect();
            let lambda: f64 = rng.random_range(0.01..10.0);
            let scaled: Vec<f64> = xs.iter().map(|x| lambda * x).collect();
            let lhs = harmonic_mean(&scaled).unwrap();
            let rhs = lambda * harmonic_mean(&xs).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn poe_covariance_examples() {
        let id = alloc::vec![alloc::vec![1.0, 1.0], alloc::vec![1.0, 1.0]];
        assert_eq!(poe_covariance(&id).unwrap(), alloc::vec![1.0, 1.0]);
        let pair = alloc::vec![alloc::vec![1.0], alloc::vec![4.0]];
        assert!((poe_covariance(&pair).unwrap()[0] - 1.6).abs() < 1e-15);
        let single = alloc::vec![alloc::vec![2.5, 0.3]];
        assert_eq!(poe_covariance(&single).unwrap(), alloc::vec![2.5, 0.3]);
    }

    #[test]
    fn commutativity_gap_examples() {
        // equal alphas: exact commutation
        let out = commutativity_gap(&[2.0, 2.0, 2.0], 0.37).unwrap();
        assert!(out.gap.abs() < 1e-15);

        // alpha = (1, 4), gamma = 0.5
        let out = commutativity_gap(&[1.0, 4.0], 0.5).unwrap();
        assert!((out.c_poe - 1.3).abs() < 1e-12);
        assert!((out.c_not_poe - 2.0 / 1.4).abs() < 1e-12);
        assert!((out.gap - (2.0 / 1.4 - 1.3)).abs() < 1e-12);

        // gamma -> 1: both orderings reduce to H(alpha)
        let out = commutativity_gap(&[1.0, 4.0], 1.0 - 1e-12).unwrap();
        assert!(out.gap.abs() < 1e-9);

        assert!(commutativity_gap(&[1.0, 4.0], 0.0).is_err());
        assert!(commutativity_gap(&[1.0, 4.0], 1.0).is_err());
    }

    #[test]
    fn reverse_minkowski_examples() {
        // proportional vectors: equality
        let out = reverse_minkowski_check(&[1.0, 2.0], &[2.0, 4.0], -1.0).unwrap();
        assert!(out.holds);
        assert!((out.lhs - out.rhs).abs() < 1e-12);

        // a = (1, 4), b = (1, 1), p = -1: strict super-additivity
        let out = reverse_minkowski_check(&[1.0, 4.0], &[1.0, 1.0], -1.0).unwrap();
        assert!(out.holds);
        assert!((out.lhs - 10.0 / 7.0).abs() < 1e-12);
        assert!((out.rhs - 1.3).abs() < 1e-12);
        assert!(out.lhs > out.rhs + 1e-3);

        assert!(reverse_minkowski_check(&[1.0], &[1.0], 0.0).is_err());
        assert!(reverse_minkowski_check(&[1.0], &[1.0], 1.5).is_err());
    }

    #[test]
    fn reverse_minkowski_random_sweep() {
        let mut rng = Stream::new(11).rng();
        for p in [-1.0, 0.5, -2.0] {
            for _ in 0..1000 {
                let k = rng.random_range(2..=6usize);
                let a: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..100.0)).collect();
                let b: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..100.0)).collect();
                let out = reverse_minkowski_check(&a, &b, p).unwrap();
                assert!(out.holds, "violation at p={p}, a={a:?}, b={b:?}");
            }
        }
    }

    #[test]
    fn proposition2_sweep_is_clean() {
        let sweep = proposition2_sweep(2000, 200, Stream::new(5));
        assert!(sweep.pass(), "{sweep:?}");
        assert!(sweep.min_gap > 1e-12);
    }
}
