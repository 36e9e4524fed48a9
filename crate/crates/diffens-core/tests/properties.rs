//! Property tests over randomized inputs for the crate-wide invariants.

use std::sync::Arc;

use proptest::prelude::*;

use diffens_core::aggregate::{aggregate, leave_one_out_jensen, AggregationRule, LossDraw};
use diffens_core::dataset::Dataset;
use diffens_core::gaussian::{commutativity_gap, harmonic_mean, reverse_minkowski_check};
use diffens_core::linalg::Matrix;
use diffens_core::schedule::NoiseSchedule;
use diffens_core::score::ScorePredictor;
use diffens_core::{Stream, StreamRng};

fn finite_row(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1e3..1e3f64, d)
}

proptest! {
    #[test]
    fn scaler_round_trips_random_data(
        rows in proptest::collection::vec(finite_row(4), 2..40)
    ) {
        let m = Matrix::from_rows(&rows).unwrap();
        let names = (0..4).map(|i| format!("f{i}")).collect();
        let ds = Dataset::new(m, names).unwrap();
        let scaled = ds.scaled_points();
        let back = ds.scaler().inverse(&scaled).unwrap();
        for i in 0..ds.n_rows() {
            for j in 0..4 {
                let orig = ds.points().get(i, j);
                let rel = (back.get(i, j) - orig).abs() / orig.abs().max(1.0);
                prop_assert!(rel < 1e-12);
            }
        }
    }

    #[test]
    fn aggregation_rules_are_idempotent_and_permutation_invariant(
        row in finite_row(3),
        k in 2usize..6
    ) {
        let rows: Vec<Vec<f64>> = (0..k).map(|_| row.clone()).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        for rule in [
            AggregationRule::Arithmetic,
            AggregationRule::Geometric,
            AggregationRule::Median,
            AggregationRule::Dominant,
        ] {
            prop_assert_eq!(aggregate(&m, rule).unwrap(), row.clone());
        }
    }

    #[test]
    fn gamma_monotone_on_random_pairs(
        t1 in 0.0..0.998f64,
        gap in 1e-3..0.5f64,
        beta_max in 0.2..30.0f64
    ) {
        let t2 = (t1 + gap).min(1.0);
        let s = NoiseSchedule::linear(0.1, beta_max.max(0.1)).unwrap();
        prop_assert!(s.gamma(t1).unwrap() > s.gamma(t2).unwrap());
    }

    #[test]
    fn harmonic_mean_superadditive(
        a in proptest::collection::vec(1e-3..1e3f64, 2..8),
        bscale in proptest::collection::vec(1e-3..1e3f64, 2..8)
    ) {
        let k = a.len().min(bscale.len());
        let a = &a[..k];
        let b = &bscale[..k];
        let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        let lhs = harmonic_mean(a).unwrap() + harmonic_mean(b).unwrap();
        let rhs = harmonic_mean(&sum).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn commutativity_gap_is_nonnegative(
        alphas in proptest::collection::vec(1e-2..1e2f64, 2..8),
        gamma in 1e-6..0.999999f64
    ) {
        let out = commutativity_gap(&alphas, gamma).unwrap();
        prop_assert!(out.gap >= -1e-12);
    }

    #[test]
    fn reverse_minkowski_holds(
        a in proptest::collection::vec(1e-2..1e2f64, 2..6),
        braw in proptest::collection::vec(1e-2..1e2f64, 2..6),
        p in prop_oneof![Just(-2.0), Just(-1.0), Just(-0.5), Just(0.5), Just(0.9)]
    ) {
        let k = a.len().min(braw.len());
        let out = reverse_minkowski_check(&a[..k], &braw[..k], p).unwrap();
        prop_assert!(out.holds);
    }
}

struct AffineField {
    scale: Vec<f64>,
    shift: Vec<f64>,
}

impl ScorePredictor for AffineField {
    fn dim(&self) -> usize {
        self.scale.len()
    }
    fn evaluate_into(&self, x: &[f64], t: f64, _rng: &mut StreamRng, out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = self.scale[i] * x[i] + self.shift[i] * (1.0 + t);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn leave_one_out_jensen_inequality_holds(
        seed in 0u64..1_000_000,
        k in 2usize..7,
        n_draws in 1usize..12
    ) {
        use rand::Rng;
        let mut rng = Stream::new(seed).rng();
        let d = 3;
        let members: Vec<Arc<dyn ScorePredictor>> = (0..k)
            .map(|_| {
                Arc::new(AffineField {
                    scale: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    shift: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
                }) as Arc<dyn ScorePredictor>
            })
            .collect();
        let draws: Vec<LossDraw> = (0..n_draws)
            .map(|_| LossDraw {
                x_t: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                t: rng.random_range(0.01..1.0),
                target: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                weight: rng.random_range(0.01..2.0),
            })
            .collect();
        let mut eval_rng = Stream::new(1).rng();
        let check = leave_one_out_jensen(&members, &draws, &mut eval_rng).unwrap();
        prop_assert!(check.lhs <= check.rhs + 1e-12,
            "lhs {} rhs {}", check.lhs, check.rhs);
    }
}
