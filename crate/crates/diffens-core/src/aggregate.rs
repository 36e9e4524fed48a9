//! Step-wise aggregation rules over K score vectors, the aggregated ensemble
//! predictor, and the leave-one-out loss decomposition behind the
//! deterministic ensemble-monotonicity inequality.

use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmath;
use crate::linalg::Matrix;
use crate::score::ScorePredictor;
use crate::StreamRng;

/// Step-wise, permutation-invariant combinations of K score vectors.
///
/// Trajectory-level schemes (mixture of experts, alternating, average of
/// noises, mean of predictions) live in the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationRule {
    /// Coordinate-wise mean.
    Arithmetic,
    /// Coordinate-wise signed geometric mean: sign of the arithmetic mean
    /// times the geometric mean of magnitudes; zero absorbs.
    Geometric,
    /// Coordinate-wise sample median (even K: midpoint of the central pair).
    Median,
    /// Coordinate-wise entry of largest absolute value; ties go to the lowest
    /// model index.
    Dominant,
    /// Coordinate-wise sum (the unnormalized product of experts).
    Sum,
}

impl AggregationRule {
    pub const ALL: [AggregationRule; 5] = [
        AggregationRule::Arithmetic,
        AggregationRule::Geometric,
        AggregationRule::Median,
        AggregationRule::Dominant,
        AggregationRule::Sum,
    ];

    /// Canonical lowercase name used in configs and CLI flags.
    pub fn as_str(&self) -> &'static str {
        match self {
            AggregationRule::Arithmetic => "arithmetic",
            AggregationRule::Geometric => "geometric",
            AggregationRule::Median => "median",
            AggregationRule::Dominant => "dominant",
            AggregationRule::Sum => "sum",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == name)
            .ok_or_else(|| Error::invalid(alloc::format!("unknown aggregation rule '{name}'")))
    }
}

impl core::fmt::Display for AggregationRule {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Combine a K x d matrix of member scores into one d-vector.
///
/// Errors on an empty matrix or non-finite entries. Bitwise-identical rows
/// short-circuit to the common row so that idempotence on identical members is
/// exact (float re-summation would otherwise drift by rounding).
pub fn aggregate(scores: &Matrix, rule: AggregationRule) -> Result<Vec<f64>> {
    if scores.rows() == 0 {
        return Err(Error::invalid("cannot aggregate an empty score set"));
    }
    if !scores.is_finite() {
        return Err(Error::NonFinite("aggregation input contains NaN or inf".into()));
    }
    let mut out = alloc::vec![0.0; scores.cols()];
    aggregate_into(scores, rule, &mut out);
    Ok(out)
}

/// Unchecked aggregation core shared with the sampler's hot path.
pub(crate) fn aggregate_into(scores: &Matrix, rule: AggregationRule, out: &mut [f64]) {
    let k = scores.rows();
    let d = scores.cols();
    debug_assert_eq!(out.len(), d);
    if k == 1 {
        out.copy_from_slice(scores.row(0));
        return;
    }
    if rule != AggregationRule::Sum {
        let first = scores.row(0);
        if (1..k).all(|i| scores.row(i) == first) {
            out.copy_from_slice(first);
            return;
        }
    }
    match rule {
        AggregationRule::Arithmetic | AggregationRule::Sum => {
            out.fill(0.0);
            for i in 0..k {
                for (o, v) in out.iter_mut().zip(scores.row(i)) {
                    *o += v;
                }
            }
            if rule == AggregationRule::Arithmetic {
                let inv = 1.0 / k as f64;
                for o in out.iter_mut() {
                    *o *= inv;
                }
            }
        }
        AggregationRule::Median => {
            let mut col = alloc::vec![0.0; k];
            for j in 0..d {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = scores.get(i, j);
                }
                col.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
                out[j] = if k % 2 == 1 {
                    col[k / 2]
                } else {
                    0.5 * (col[k / 2 - 1] + col[k / 2])
                };
            }
        }
        AggregationRule::Dominant => {
            for j in 0..d {
                let mut best = scores.get(0, j);
                let mut best_abs = fmath::abs(best);
                for i in 1..k {
                    let v = scores.get(i, j);
                    let a = fmath::abs(v);
                    if a > best_abs {
                        best = v;
                        best_abs = a;
                    }
                }
                out[j] = best;
            }
        }
        AggregationRule::Geometric => {
            for j in 0..d {
                let mut mean = 0.0;
                let mut log_sum = 0.0;
                let mut has_zero = false;
                for i in 0..k {
                    let v = scores.get(i, j);
                    mean += v;
                    let a = fmath::abs(v);
                    if a == 0.0 {
                        has_zero = true;
                    } else {
                        log_sum += fmath::ln(a);
                    }
                }
                out[j] = if has_zero {
                    0.0
                } else {
                    let magnitude = fmath::exp(log_sum / k as f64);
                    if mean >= 0.0 {
                        magnitude
                    } else {
                        -magnitude
                    }
                };
            }
        }
    }
}

/// A set of exchangeable predictors combined by a step-wise rule; itself a
/// [`ScorePredictor`], so every downstream consumer (sampler, loss,
/// likelihood) works on ensembles unchanged.
pub struct ScoreEnsemble {
    members: Vec<Arc<dyn ScorePredictor>>,
    rule: AggregationRule,
}

impl ScoreEnsemble {
    pub fn new(members: Vec<Arc<dyn ScorePredictor>>, rule: AggregationRule) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("ensemble needs at least one member"));
        }
        let d = members[0].dim();
        if members.iter().any(|m| m.dim() != d) {
            return Err(Error::invalid("ensemble members disagree on dimension"));
        }
        Ok(ScoreEnsemble { members, rule })
    }

    pub fn members(&self) -> &[Arc<dyn ScorePredictor>] {
        &self.members
    }

    pub fn rule(&self) -> AggregationRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// K x d matrix of member outputs at `(x, t)`.
    pub fn member_scores(&self, x: &[f64], t: f64, rng: &mut StreamRng) -> Matrix {
        let mut m = Matrix::zeros(self.members.len(), x.len());
        for (i, member) in self.members.iter().enumerate() {
            let mut row = alloc::vec![0.0; x.len()];
            member.evaluate_into(x, t, rng, &mut row);
            m.row_mut(i).copy_from_slice(&row);
        }
        m
    }
}

impl ScorePredictor for ScoreEnsemble {
    fn dim(&self) -> usize {
        self.members[0].dim()
    }

    fn evaluate_into(&self, x: &[f64], t: f64, rng: &mut StreamRng, out: &mut [f64]) {
        let scores = self.member_scores(x, t, rng);
        aggregate_into(&scores, self.rule, out);
    }
}

/// One evaluation point of a score-matching loss: a noised input, the
/// regression target and the loss weight.
#[derive(Debug, Clone)]
pub struct LossDraw {
    pub x_t: Vec<f64>,
    pub t: f64,
    pub target: Vec<f64>,
    pub weight: f64,
}

/// Both sides of the deterministic leave-one-out inequality on a fixed batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JensenCheck {
    /// Loss of the K-member mean.
    pub lhs: f64,
    /// Mean over j of the loss of the (K-1)-member mean excluding j.
    pub rhs: f64,
}

/// Evaluates `L(mean of all K)` against the average of the K leave-one-out
/// losses on the same draws. Convexity of the squared norm makes
/// `lhs <= rhs` hold deterministically for every batch.
pub fn leave_one_out_jensen(
    members: &[Arc<dyn ScorePredictor>],
    draws: &[LossDraw],
    rng: &mut StreamRng,
) -> Result<JensenCheck> {
    let k = members.len();
    if k < 2 {
        return Err(Error::invalid("leave-one-out needs at least two members"));
    }
    if draws.is_empty() {
        return Err(Error::invalid("empty evaluation batch"));
    }
    let d = members[0].dim();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut outputs = Matrix::zeros(k, d);
    for draw in draws {
        for (i, member) in members.iter().enumerate() {
            let mut row = alloc::vec![0.0; d];
            member.evaluate_into(&draw.x_t, draw.t, rng, &mut row);
            outputs.row_mut(i).copy_from_slice(&row);
        }
        let mut mean = alloc::vec![0.0; d];
        for i in 0..k {
            for (m, v) in mean.iter_mut().zip(outputs.row(i)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= k as f64;
        }
        lhs += draw.weight * sq_err(&mean, &draw.target);
        for j in 0..k {
            // mean over members excluding j: (K mean - s_j) / (K - 1)
            let row_j = outputs.row(j);
            let mut acc = 0.0;
            for i in 0..d {
                let loo = (k as f64 * mean[i] - row_j[i]) / (k as f64 - 1.0);
                let e = loo - draw.target[i];
                acc += e * e;
            }
            rhs += draw.weight * acc / k as f64;
        }
    }
    let n = draws.len() as f64;
    Ok(JensenCheck {
        lhs: lhs / n,
        rhs: rhs / n,
    })
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let e = x - y;
            e * e
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn matrix(rows: &[&[f64]]) -> Matrix {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn idempotence_on_identical_rows_is_exact() {
        let s = [0.1 + 0.2, -1.7, 3.5e-3];
        let m = matrix(&[&s, &s, &s]);
        for rule in [
            AggregationRule::Arithmetic,
            AggregationRule::Geometric,
            AggregationRule::Median,
            AggregationRule::Dominant,
        ] {
            assert_eq!(aggregate(&m, rule).unwrap(), s.to_vec(), "{rule}");
        }
        let sum = aggregate(&m, AggregationRule::Sum).unwrap();
        for (a, b) in sum.iter().zip(&s) {
            assert!((a - 3.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn rule_examples() {
        // Dominant on rows (1,-3), (2,1) -> (2,-3)
        let m = matrix(&[&[1.0, -3.0], &[2.0, 1.0]]);
        assert_eq!(
            aggregate(&m, AggregationRule::Dominant).unwrap(),
            alloc::vec![2.0, -3.0]
        );

        // Median on (1), (5), (2) -> 2; arithmetic -> 8/3
        let m = matrix(&[&[1.0], &[5.0], &[2.0]]);
        assert_eq!(aggregate(&m, AggregationRule::Median).unwrap(), alloc::vec![2.0]);
        let mean = aggregate(&m, AggregationRule::Arithmetic).unwrap();
        assert!((mean[0] - 8.0 / 3.0).abs() < 1e-15);

        // even K median: midpoint of the central pair
        let m = matrix(&[&[1.0], &[5.0], &[2.0], &[4.0]]);
        assert_eq!(aggregate(&m, AggregationRule::Median).unwrap(), alloc::vec![3.0]);

        // Geometric on (2), (8) -> +4
        let m = matrix(&[&[2.0], &[8.0]]);
        let g = aggregate(&m, AggregationRule::Geometric).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-12);

        // sign comes from the arithmetic mean
        let m = matrix(&[&[-2.0], &[-8.0], &[1.0]]);
        let g = aggregate(&m, AggregationRule::Geometric).unwrap();
        assert!((g[0] + fmath::powf(16.0, 1.0 / 3.0)).abs() < 1e-12);

        // zero absorbs
        let m = matrix(&[&[0.0], &[8.0]]);
        assert_eq!(aggregate(&m, AggregationRule::Geometric).unwrap(), alloc::vec![0.0]);

        // dominant tie: lowest model index wins
        let m = matrix(&[&[-2.0], &[2.0]]);
        assert_eq!(aggregate(&m, AggregationRule::Dominant).unwrap(), alloc::vec![-2.0]);
    }

    #[test]
    fn empty_and_nan_inputs_error() {
        let empty = Matrix::zeros(0, 2);
        assert!(aggregate(&empty, AggregationRule::Arithmetic).is_err());
        let m = matrix(&[&[1.0], &[f64::NAN]]);
        assert!(aggregate(&m, AggregationRule::Median).is_err());
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = Stream::new(13).rng();
        for _ in 0..100 {
            let k = rand::Rng::random_range(&mut rng, 2..6usize);
            let d = rand::Rng::random_range(&mut rng, 1..4usize);
            let rows: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    (0..d)
                        .map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0))
                        .collect()
                })
                .collect();
            let m = Matrix::from_rows(&rows).unwrap();
            let mut reversed = rows.clone();
            reversed.reverse();
            let mut rotated = rows.clone();
            rotated.rotate_left(1);
            for rule in AggregationRule::ALL {
                let a = aggregate(&m, rule).unwrap();
                for perm in [&reversed, &rotated] {
                    let b = aggregate(&Matrix::from_rows(perm).unwrap(), rule).unwrap();
                    for (x, y) in a.iter().zip(&b) {
                        assert!(
                            (x - y).abs() <= 1e-12 * x.abs().max(1.0),
                            "{rule}: {x} vs {y}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn dominant_magnitude_dominates_arithmetic() {
        let mut rng = Stream::new(14).rng();
        for _ in 0..200 {
            let rows: Vec<Vec<f64>> = (0..4)
                .map(|_| {
                    (0..3)
                        .map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0))
                        .collect()
                })
                .collect();
            let m = Matrix::from_rows(&rows).unwrap();
            let dom = aggregate(&m, AggregationRule::Dominant).unwrap();
            let mean = aggregate(&m, AggregationRule::Arithmetic).unwrap();
            let inf = |v: &[f64]| v.iter().cloned().map(fmath::abs).fold(0.0, f64::max);
            assert!(inf(&dom) >= inf(&mean) - 1e-12);
        }
    }

    #[test]
    fn jensen_identity_and_hand_case() {
        use crate::schedule::NoiseSchedule;
        use crate::score::AnalyticGaussianScore;

        struct Constant(Vec<f64>);
        impl ScorePredictor for Constant {
            fn dim(&self) -> usize {
                self.0.len()
            }
            fn evaluate_into(&self, _x: &[f64], _t: f64, _rng: &mut StreamRng, out: &mut [f64]) {
                out.copy_from_slice(&self.0);
            }
        }

        let draws = alloc::vec![LossDraw {
            x_t: alloc::vec![0.0],
            t: 0.5,
            target: alloc::vec![0.0],
            weight: 1.0,
        }];
        let mut rng = Stream::new(0).rng();

        // identical members: equality
        let base = Arc::new(
            AnalyticGaussianScore::new(alloc::vec![1.0], NoiseSchedule::default_vp()).unwrap(),
        );
        let members: Vec<Arc<dyn ScorePredictor>> =
            alloc::vec![base.clone(), base.clone(), base.clone()];
        let check = leave_one_out_jensen(&members, &draws, &mut rng).unwrap();
        assert!((check.lhs - check.rhs).abs() < 1e-15);

        // +c and -c against target 0: lhs = 0, rhs = c^2 (each leave-one-out
        // mean is one of the constants)
        let c = 1.5;
        let members: Vec<Arc<dyn ScorePredictor>> = alloc::vec![
            Arc::new(Constant(alloc::vec![c])),
            Arc::new(Constant(alloc::vec![-c])),
        ];
        let check = leave_one_out_jensen(&members, &draws, &mut rng).unwrap();
        assert!(check.lhs.abs() < 1e-15);
        assert!((check.rhs - c * c).abs() < 1e-12);

        let one: Vec<Arc<dyn ScorePredictor>> = alloc::vec![Arc::new(Constant(alloc::vec![c]))];
        assert!(leave_one_out_jensen(&one, &draws, &mut rng).is_err());
    }
}
