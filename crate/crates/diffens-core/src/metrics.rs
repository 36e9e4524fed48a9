//! Evaluation suite: denoising score-matching loss for any predictor or
//! aggregated ensemble, exact Wasserstein-1 via optimal assignment, coverage,
//! and predictive diversity.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::LossDraw;
use crate::error::{Error, Result};
use crate::fmath;
use crate::linalg::{dist, Matrix};
use crate::rng::{standard_normal_vec, Stream};
use crate::schedule::{forward_sample, NoiseSchedule};
use crate::score::ScorePredictor;

const TAG_DRAW: u64 = 0xd7;
const TAG_EVAL: u64 = 0xe1;

/// Loss weighting `lambda(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `lambda = 1 - gamma(t)` (the marginal variance), which turns the
    /// summand into the noise-prediction error `||sigma s + z||^2`.
    Sigma2,
    /// `lambda = 1`.
    Uniform,
}

/// Monte-Carlo options for the score-matching loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdsmOptions {
    pub n_mc: usize,
    pub weighting: Weighting,
    pub t_min: f64,
}

impl Default for DdsmOptions {
    fn default() -> Self {
        DdsmOptions {
            n_mc: 4096,
            weighting: Weighting::Sigma2,
            t_min: crate::schedule::DEFAULT_T_MIN,
        }
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

/// The evaluation batch behind the score-matching loss: per draw,
/// `t ~ U(t_min, 1)`, a uniformly chosen data row, `z ~ N(0, I)`,
/// `x_t = forward_sample(x0, t, z)` and the conditional-score target
/// `-z / sigma(t)`. Fixing the stream fixes the batch, so losses of different
/// predictors (or ensemble sizes) compare on common draws.
pub fn ddsm_draws(
    data: &Matrix,
    schedule: &NoiseSchedule,
    opts: &DdsmOptions,
    stream: Stream,
) -> Result<Vec<LossDraw>> {
    if data.rows() == 0 {
        return Err(Error::invalid("empty evaluation dataset"));
    }
    if opts.n_mc == 0 {
        return Err(Error::invalid("need at least one Monte-Carlo draw"));
    }
    if !(opts.t_min > 0.0 && opts.t_min < 1.0) {
        return Err(Error::domain("t_min must lie in (0, 1)"));
    }
    let d = data.cols();
    (0..opts.n_mc)
        .map(|m| {
            let mut rng = stream.indexed(TAG_DRAW, m as u64).rng();
            let t: f64 = rng.random_range(opts.t_min..1.0);
            let row = rng.random_range(0..data.rows());
            let z = standard_normal_vec(&mut rng, d);
            let x0 = data.row(row);
            let x_t = forward_sample(schedule, x0, t, &z)?;
            let gamma = schedule.gamma(t)?;
            let sigma = fmath::sqrt(1.0 - gamma);
            let target: Vec<f64> = z.iter().map(|zi| -zi / sigma).collect();
            let weight = match opts.weighting {
                Weighting::Sigma2 => 1.0 - gamma,
                Weighting::Uniform => 1.0,
            };
            Ok(LossDraw {
                x_t,
                t,
                target,
                weight,
            })
        })
        .collect()
}

/// Monte-Carlo denoising score-matching loss of a predictor (or aggregated
/// ensemble) on a dataset in scaled coordinates.
pub fn ddsm_loss(
    predictor: &dyn ScorePredictor,
    data: &Matrix,
    schedule: &NoiseSchedule,
    opts: &DdsmOptions,
    stream: Stream,
) -> Result<MeanStderr> {
    let draws = ddsm_draws(data, schedule, opts, stream)?;
    ddsm_loss_on_draws(predictor, &draws, stream)
}

/// The loss on a prebuilt draw batch (used when several predictors must see
/// identical draws).
pub fn ddsm_loss_on_draws(
    predictor: &dyn ScorePredictor,
    draws: &[LossDraw],
    stream: Stream,
) -> Result<MeanStderr> {
    if draws.is_empty() {
        return Err(Error::invalid("empty draw batch"));
    }
    let d = predictor.dim();
    let mut values = Vec::with_capacity(draws.len());
    let mut out = alloc::vec![0.0; d];
    for (m, draw) in draws.iter().enumerate() {
        let mut rng = stream.indexed(TAG_EVAL, m as u64).rng();
        predictor.evaluate_into(&draw.x_t, draw.t, &mut rng, &mut out);
        let mut err = 0.0;
        for (s, tgt) in out.iter().zip(&draw.target) {
            let e = s - tgt;
            err += e * e;
        }
        values.push(draw.weight * err);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(MeanStderr {
        mean,
        stderr: fmath::sqrt(var / n),
    })
}

/// Exact Wasserstein-1 between two equal-size point sets: the mean Euclidean
/// cost of the optimal one-to-one assignment.
pub fn wasserstein1_exact(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(Error::invalid("point sets must have equal sizes"));
    }
    if a.cols() != b.cols() {
        return Err(Error::Dimension {
            expected: a.cols(),
            got: b.cols(),
        });
    }
    if a.rows() == 0 {
        return Err(Error::invalid("empty point sets"));
    }
    let n = a.rows();
    let mut cost = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            cost.set(i, j, dist(a.row(i), b.row(j)));
        }
    }
    let (_, total) = min_cost_assignment(&cost);
    Ok(total / n as f64)
}

/// O(n^3) exact solution of the square assignment problem (Hungarian
/// algorithm with potentials). Returns `(col_of_row, total_cost)`.
pub fn min_cost_assignment(cost: &Matrix) -> (Vec<usize>, f64) {
    let n = cost.rows();
    debug_assert_eq!(n, cost.cols());
    // 1-indexed potentials; p[j] = row matched to column j
    let mut u = alloc::vec![0.0f64; n + 1];
    let mut v = alloc::vec![0.0f64; n + 1];
    let mut p = alloc::vec![0usize; n + 1];
    let mut way = alloc::vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = alloc::vec![f64::INFINITY; n + 1];
        let mut used = alloc::vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = alloc::vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
        total += cost.get(p[j] - 1, j - 1);
    }
    (assignment, total)
}

/// Fraction of real points with at least one fake point inside their k-NN
/// radius (distance to the k-th nearest *other* real point).
pub fn coverage(real: &Matrix, fake: &Matrix, k: usize) -> Result<f64> {
    let n = real.rows();
    if k == 0 || n <= k {
        return Err(Error::invalid("coverage needs n > k >= 1"));
    }
    if fake.rows() == 0 {
        return Err(Error::invalid("coverage needs at least one generated point"));
    }
    if fake.cols() != real.cols() {
        return Err(Error::Dimension {
            expected: real.cols(),
            got: fake.cols(),
        });
    }
    let mut covered = 0usize;
    let mut dists = alloc::vec![0.0f64; n - 1];
    for i in 0..n {
        let mut m = 0;
        for j in 0..n {
            if j != i {
                dists[m] = dist(real.row(i), real.row(j));
                m += 1;
            }
        }
        dists.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
        let radius = dists[k - 1];
        let nearest_fake = (0..fake.rows())
            .map(|j| dist(real.row(i), fake.row(j)))
            .fold(f64::INFINITY, f64::min);
        if nearest_fake <= radius {
            covered += 1;
        }
    }
    Ok(covered as f64 / n as f64)
}

/// Average over `(x, t)` pairs of the members' prediction variance
/// (per-coordinate population variance across the K members, averaged over
/// coordinates).
pub fn predictive_diversity(
    members: &[Arc<dyn ScorePredictor>],
    eval_points: &Matrix,
    eval_times: &[f64],
) -> Result<f64> {
    let k = members.len();
    if k < 2 {
        return Err(Error::invalid("diversity needs at least two members"));
    }
    if eval_points.rows() == 0 || eval_times.is_empty() {
        return Err(Error::invalid("diversity needs evaluation points and times"));
    }
    let d = members[0].dim();
    let mut rng = Stream::new(0).rng();
    let mut acc = 0.0;
    let mut outputs = Matrix::zeros(k, d);
    for i in 0..eval_points.rows() {
        for &t in eval_times {
            for (m, member) in members.iter().enumerate() {
                let mut row = alloc::vec![0.0; d];
                member.evaluate_into(eval_points.row(i), t, &mut rng, &mut row);
                outputs.row_mut(m).copy_from_slice(&row);
            }
            let mut var_sum = 0.0;
            for j in 0..d {
                let mean: f64 = (0..k).map(|m| outputs.get(m, j)).sum::<f64>() / k as f64;
                var_sum += (0..k)
                    .map(|m| {
                        let e = outputs.get(m, j) - mean;
                        e * e
                    })
                    .sum::<f64>()
                    / k as f64;
            }
            acc += var_sum / d as f64;
        }
    }
    Ok(acc / (eval_points.rows() * eval_times.len()) as f64)
}

/// Assembled evaluation results for one (rule, K, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ddsm_loss: Option<MeanStderr>,
    pub wasserstein1: Option<f64>,
    pub coverage: Option<f64>,
    pub diversity: Option<f64>,
    pub metadata: ReportMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub n_eval: usize,
    pub seed: u64,
    pub rule: Option<String>,
    pub k: Option<usize>,
}

impl MetricReport {
    /// All present metrics are finite and coverage lies in [0, 1].
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        if let Some(ms) = &self.ddsm_loss {
            if !finite(ms.mean) || !finite(ms.stderr) {
                return Err(Error::NonFinite("ddsm_loss".into()));
            }
        }
        if let Some(w) = self.wasserstein1 {
            if !finite(w) {
                return Err(Error::NonFinite("wasserstein1".into()));
            }
        }
        if let Some(c) = self.coverage {
            if !finite(c) || !(0.0..=1.0).contains(&c) {
                return Err(Error::domain("coverage must lie in [0, 1]"));
            }
        }
        if let Some(dv) = self.diversity {
            if !finite(dv) {
                return Err(Error::NonFinite("diversity".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::AnalyticGaussianScore;
    use crate::StreamRng;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    struct Zero(usize);
    impl ScorePredictor for Zero {
        fn dim(&self) -> usize {
            self.0
        }
        fn evaluate_into(&self, _x: &[f64], _t: f64, _rng: &mut StreamRng, out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    /// Knows the clean point and reproduces the conditional score exactly.
    struct ConditionalOracle {
        schedule: NoiseSchedule,
        x0: Vec<f64>,
    }
    impl ScorePredictor for ConditionalOracle {
        fn dim(&self) -> usize {
            self.x0.len()
        }
        fn evaluate_into(&self, x: &[f64], t: f64, _rng: &mut StreamRng, out: &mut [f64]) {
            let s = crate::schedule::conditional_score(&self.schedule, x, &self.x0, t).unwrap();
            out.copy_from_slice(&s);
        }
    }

    #[test]
    fn conditional_oracle_has_zero_loss() {
        let schedule = NoiseSchedule::default_vp();
        // all mass at the origin keeps the reconstruction exact in floats
        let data = mat(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let oracle = ConditionalOracle {
            schedule,
            x0: alloc::vec![0.0, 0.0],
        };
        let opts = DdsmOptions {
            n_mc: 500,
            ..DdsmOptions::default()
        };
        let out = ddsm_loss(&oracle, &data, &schedule, &opts, Stream::new(1)).unwrap();
        assert!(out.mean < 1e-24, "{}", out.mean);
    }

    #[test]
    fn zero_predictor_loss_is_the_dimension() {
        // lambda = 1 - gamma makes the summand ||z||^2 with E = d
        let schedule = NoiseSchedule::default_vp();
        let data = mat(&[&[0.2, -0.4, 0.6], &[-0.1, 0.3, 0.0], &[0.5, 0.5, -0.5]]);
        let opts = DdsmOptions {
            n_mc: 20_000,
            ..DdsmOptions::default()
        };
        let out = ddsm_loss(&Zero(3), &data, &schedule, &opts, Stream::new(2)).unwrap();
        assert!(
            (out.mean - 3.0).abs() < 5.0 * out.stderr,
            "mean {} stderr {}",
            out.mean,
            out.stderr
        );
    }

    #[test]
    fn loss_is_deterministic_given_the_stream() {
        let schedule = NoiseSchedule::default_vp();
        let data = mat(&[&[0.1, 0.2], &[-0.3, 0.4]]);
        let model = AnalyticGaussianScore::new(alloc::vec![1.0, 1.0], schedule).unwrap();
        let opts = DdsmOptions {
            n_mc: 64,
            ..DdsmOptions::default()
        };
        let a = ddsm_loss(&model, &data, &schedule, &opts, Stream::new(3)).unwrap();
        let b = ddsm_loss(&model, &data, &schedule, &opts, Stream::new(3)).unwrap();
        assert_eq!(a, b);
    }

    fn brute_force_w1(a: &Matrix, b: &Matrix) -> f64 {
        // exhaustive minimum over all permutations (Heap's algorithm)
        let n = a.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut c = alloc::vec![0usize; n];
        let total = |p: &[usize]| -> f64 {
            p.iter()
                .enumerate()
                .map(|(i, &j)| dist(a.row(i), b.row(j)))
                .sum::<f64>()
        };
        let mut best = total(&perm);
        let mut i = 1;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(total(&perm));
                c[i] += 1;
                i = 1;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best / n as f64
    }

    #[test]
    fn w1_trivial_cases() {
        let a = mat(&[&[0.0, 1.0], &[2.0, -1.0]]);
        assert_eq!(wasserstein1_exact(&a, &a).unwrap(), 0.0);
        let p = mat(&[&[1.0, 2.0]]);
        let q = mat(&[&[4.0, 6.0]]);
        assert!((wasserstein1_exact(&p, &q).unwrap() - 5.0).abs() < 1e-12);
        let c = mat(&[&[0.0, 0.0]]);
        assert!(wasserstein1_exact(&a, &c).is_err());
    }

    #[test]
    fn w1_matches_factorial_brute_force() {
        let mut rng = Stream::new(9).rng();
        for case in 0..50 {
            let n = 6;
            let d = 1 + (case % 3);
            let a: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let b: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let a = Matrix::from_rows(&a).unwrap();
            let b = Matrix::from_rows(&b).unwrap();
            let exact = wasserstein1_exact(&a, &b).unwrap();
            let brute = brute_force_w1(&a, &b);
            assert!((exact - brute).abs() < 1e-10, "case {case}: {exact} vs {brute}");
        }
    }

    #[test]
    fn w1_metric_axioms_on_samples() {
        let mut rng = Stream::new(10).rng();
        for _ in 0..20 {
            let n = 8;
            let make = |rng: &mut StreamRng| -> Matrix {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                Matrix::from_rows(&rows).unwrap()
            };
            let a = make(&mut rng);
            let b = make(&mut rng);
            let c = make(&mut rng);
            let ab = wasserstein1_exact(&a, &b).unwrap();
            let ba = wasserstein1_exact(&b, &a).unwrap();
            let bc = wasserstein1_exact(&b, &c).unwrap();
            let ac = wasserstein1_exact(&a, &c).unwrap();
            assert!((ab - ba).abs() < 1e-9);
            assert!(ac <= ab + bc + 1e-9);
        }
    }

    #[test]
    fn coverage_examples() {
        let real = mat(&[&[0.0], &[1.0], &[2.0]]);
        // generated equals real: everything covered
        assert_eq!(coverage(&real, &real, 1).unwrap(), 1.0);
        // generated far beyond every radius: nothing covered
        let far = mat(&[&[100.0]]);
        assert_eq!(coverage(&real, &far, 1).unwrap(), 0.0);
        // radii are 1,1,1; the fake at 0.1 lies inside the radius of the
        // points at 0 and 1 but not 2
        let fake = mat(&[&[0.1]]);
        assert!((coverage(&real, &fake, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        // degenerate n <= k
        assert!(coverage(&real, &fake, 3).is_err());
    }

    #[test]
    fn coverage_is_nondecreasing_in_k() {
        let mut rng = Stream::new(12).rng();
        let real: Vec<Vec<f64>> = (0..25)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let fake: Vec<Vec<f64>> = (0..15)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let real = Matrix::from_rows(&real).unwrap();
        let fake = Matrix::from_rows(&fake).unwrap();
        let mut prev = 0.0;
        for k in 1..8 {
            let c = coverage(&real, &fake, k).unwrap();
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn diversity_examples() {
        struct Constant(Vec<f64>);
        impl ScorePredictor for Constant {
            fn dim(&self) -> usize {
                self.0.len()
            }
            fn evaluate_into(&self, _x: &[f64], _t: f64, _rng: &mut StreamRng, out: &mut [f64]) {
                out.copy_from_slice(&self.0);
            }
        }
        let points = mat(&[&[0.0, 0.0], &[1.0, -1.0]]);
        let times = [0.2, 0.8];

        // identical members: zero diversity
        let schedule = NoiseSchedule::default_vp();
        let base = Arc::new(AnalyticGaussianScore::new(alloc::vec![1.0, 1.0], schedule).unwrap());
        let members: Vec<Arc<dyn ScorePredictor>> = alloc::vec![base.clone(), base.clone()];
        assert_eq!(predictive_diversity(&members, &points, &times).unwrap(), 0.0);

        // +c / -c constants: variance c^2
        let c = 0.7;
        let members: Vec<Arc<dyn ScorePredictor>> = alloc::vec![
            Arc::new(Constant(alloc::vec![c, c])),
            Arc::new(Constant(alloc::vec![-c, -c])),
        ];
        let d = predictive_diversity(&members, &points, &times).unwrap();
        assert!((d - c * c).abs() < 1e-12);

        let single: Vec<Arc<dyn ScorePredictor>> = alloc::vec![base];
        assert!(predictive_diversity(&single, &points, &times).is_err());
    }

    #[test]
    fn diversity_grows_with_perturbation_amplitude() {
        use crate::score::make_id_ensemble;
        let schedule = NoiseSchedule::default_vp();
        let base: Arc<dyn ScorePredictor> =
            Arc::new(AnalyticGaussianScore::new(alloc::vec![1.0, 1.0], schedule).unwrap());
        let points = mat(&[&[0.2, -0.3], &[0.7, 0.1], &[-0.5, 0.4]]);
        let times = [0.1, 0.5, 0.9];
        let mut prev = -1.0;
        for eps in [0.0, 0.1, 0.3, 0.6] {
            // average the diversity over several master seeds for a stable trend
            let mut acc = 0.0;
            for seed in 0..5u64 {
                let members =
                    make_id_ensemble(Arc::clone(&base), 6, eps, 64, Stream::new(seed)).unwrap();
                acc += predictive_diversity(&members, &points, &times).unwrap();
            }
            let d = acc / 5.0;
            assert!(d > prev, "eps {eps}: {d} vs {prev}");
            prev = d;
        }
    }

    #[test]
    fn report_validation() {
        let mut report = MetricReport {
            ddsm_loss: Some(MeanStderr {
                mean: 1.0,
                stderr: 0.1,
            }),
            wasserstein1: Some(0.5),
            coverage: Some(0.8),
            diversity: None,
            metadata: ReportMeta {
                n_eval: 100,
                seed: 1,
                rule: Some("arithmetic".into()),
                k: Some(4),
            },
        };
        assert!(report.validate().is_ok());
        report.coverage = Some(1.5);
        assert!(report.validate().is_err());
        report.coverage = Some(1.0);
        report.wasserstein1 = Some(f64::NAN);
        assert!(report.validate().is_err());
    }
}
