//! Score-predictor interface and the analytic/synthetic implementations used
//! for verification and the identically-distributed ensemble experiments.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::fmath;
use crate::linalg::{norm, Matrix};
use crate::rng::{unit_sphere_vec, Stream, StreamRng};
use crate::schedule::NoiseSchedule;

/// Anything mapping `(point, time)` to a score vector.
///
/// Deterministic predictors ignore `rng`; stochastic wrappers (sphere noise)
/// draw from it, so callers control reproducibility by deriving one stream per
/// evaluation context. Output dimension always equals input dimension.
pub trait ScorePredictor: Send + Sync {
    fn dim(&self) -> usize;

    /// Write the score at `(x, t)` into `out` (`x.len() == out.len() == dim`).
    fn evaluate_into(&self, x: &[f64], t: f64, rng: &mut StreamRng, out: &mut [f64]);

    fn evaluate(&self, x: &[f64], t: f64, rng: &mut StreamRng) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim()];
        self.evaluate_into(x, t, rng, &mut out);
        out
    }

    /// Row-wise evaluation of a batch at a shared time.
    fn evaluate_batch(&self, xs: &Matrix, t: f64, rng: &mut StreamRng) -> Matrix {
        let mut out = Matrix::zeros(xs.rows(), xs.cols());
        for i in 0..xs.rows() {
            let mut row = alloc::vec![0.0; xs.cols()];
            self.evaluate_into(xs.row(i), t, rng, &mut row);
            out.row_mut(i).copy_from_slice(&row);
        }
        out
    }
}

/// Exact score of a diffused centered Gaussian `N(0, diag(alpha))`:
/// per coordinate `-x_i / (gamma alpha_i + (1 - gamma))`.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianScore {
    alpha: Vec<f64>,
    schedule: NoiseSchedule,
}

impl AnalyticGaussianScore {
    pub fn new(alpha: Vec<f64>, schedule: NoiseSchedule) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("alpha must be nonempty"));
        }
        if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::domain("alpha entries must be positive and finite"));
        }
        Ok(AnalyticGaussianScore { alpha, schedule })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Marginal variances `gamma alpha_i + (1 - gamma)` at time `t`.
    pub fn marginal_variances(&self, t: f64) -> Result<Vec<f64>> {
        crate::schedule::marginal_gaussian_covariance(&self.schedule, &self.alpha, t)
    }
}

impl ScorePredictor for AnalyticGaussianScore {
    fn dim(&self) -> usize {
        self.alpha.len()
    }

    fn evaluate_into(&self, x: &[f64], t: f64, _rng: &mut StreamRng, out: &mut [f64]) {
        let gamma = self.schedule.gamma(t).expect("t within [0, 1]");
        for ((o, xi), a) in out.iter_mut().zip(x).zip(&self.alpha) {
            *o = -xi / (gamma * a + (1.0 - gamma));
        }
    }
}

/// Convenience form of the analytic score as a free function.
pub fn analytic_score(
    alpha: &[f64],
    schedule: &NoiseSchedule,
    x: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    if alpha.len() != x.len() {
        return Err(Error::Dimension {
            expected: alpha.len(),
            got: x.len(),
        });
    }
    let model = AnalyticGaussianScore::new(alpha.to_vec(), *schedule)?;
    let mut rng = Stream::new(0).rng();
    Ok(model.evaluate(x, t, &mut rng))
}

/// A smooth zero-mean random field over `(x, t)` built from random cosine
/// features, frozen at construction.
///
/// Per output coordinate the field is
/// `eps sqrt(2/M) sum_m cos(w_m . [x; t] + b_m)` with `w_m ~ N(0, I)` and
/// `b_m ~ U[0, 2 pi)`; uniform phases make the pointwise standard deviation
/// over field draws exactly `eps`.
#[derive(Debug, Clone)]
struct CosineField {
    dim_out: usize,
    n_features: usize,
    /// dim_out * n_features * (dim_out + 1) frequencies
    freqs: Vec<f64>,
    /// dim_out * n_features phases
    phases: Vec<f64>,
    scale: f64,
}

impl CosineField {
    fn sample(dim: usize, n_features: usize, epsilon: f64, stream: Stream) -> Self {
        let mut rng = stream.rng();
        let n_in = dim + 1;
        let mut freqs = alloc::vec![0.0; dim * n_features * n_in];
        crate::rng::fill_standard_normal(&mut rng, &mut freqs);
        let phases: Vec<f64> = (0..dim * n_features)
            .map(|_| rng.random_range(0.0..2.0 * core::f64::consts::PI))
            .collect();
        CosineField {
            dim_out: dim,
            n_features,
            freqs,
            phases,
            scale: epsilon * fmath::sqrt(2.0 / n_features as f64),
        }
    }

    fn add_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let n_in = self.dim_out + 1;
        for i in 0..self.dim_out {
            let mut acc = 0.0;
            for m in 0..self.n_features {
                let base = (i * self.n_features + m) * n_in;
                let w = &self.freqs[base..base + n_in];
                let mut arg = self.phases[i * self.n_features + m];
                for (wj, xj) in w[..self.dim_out].iter().zip(x) {
                    arg += wj * xj;
                }
                arg += w[self.dim_out] * t;
                acc += fmath::cos(arg);
            }
            out[i] += self.scale * acc;
        }
    }

    /// Upper bound on the field's gradient norm: `scale * sum_m ||w_m||`
    /// per coordinate (used as a smoothness sanity bound in tests).
    #[cfg(test)]
    fn lipschitz_bound(&self) -> f64 {
        let n_in = self.dim_out + 1;
        let mut worst: f64 = 0.0;
        for i in 0..self.dim_out {
            let mut sum = 0.0;
            for m in 0..self.n_features {
                let base = (i * self.n_features + m) * n_in;
                sum += norm(&self.freqs[base..base + n_in]);
            }
            worst = worst.max(sum);
        }
        self.scale * worst
    }
}

/// A base predictor plus a frozen smooth perturbation field; the building
/// block for identically distributed estimator families.
pub struct PerturbedScore {
    base: Arc<dyn ScorePredictor>,
    amplitude: f64,
    field: CosineField,
}

impl PerturbedScore {
    /// Default number of cosine features per output coordinate.
    pub const DEFAULT_N_FEATURES: usize = 64;

    pub fn new(
        base: Arc<dyn ScorePredictor>,
        amplitude: f64,
        n_features: usize,
        field_seed: Stream,
    ) -> Result<Self> {
        if amplitude < 0.0 {
            return Err(Error::domain("perturbation amplitude must be nonnegative"));
        }
        if n_features == 0 {
            return Err(Error::invalid("need at least one cosine feature"));
        }
        let dim = base.dim();
        Ok(PerturbedScore {
            field: CosineField::sample(dim, n_features, amplitude, field_seed),
            base,
            amplitude,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
}

impl ScorePredictor for PerturbedScore {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn evaluate_into(&self, x: &[f64], t: f64, rng: &mut StreamRng, out: &mut [f64]) {
        self.base.evaluate_into(x, t, rng, out);
        if self.amplitude > 0.0 {
            self.field.add_into(x, t, out);
        }
    }
}

/// `K` perturbed copies of `base` whose fields are i.i.d. draws under
/// `master_seed`; each copy evaluates deterministically thereafter.
pub fn make_id_ensemble(
    base: Arc<dyn ScorePredictor>,
    k: usize,
    epsilon: f64,
    n_features: usize,
    master_seed: Stream,
) -> Result<Vec<Arc<dyn ScorePredictor>>> {
    if k == 0 {
        return Err(Error::invalid("ensemble size must be at least 1"));
    }
    (0..k)
        .map(|i| {
            let member = PerturbedScore::new(
                Arc::clone(&base),
                epsilon,
                n_features,
                master_seed.indexed(0x1d, i as u64),
            )?;
            Ok(Arc::new(member) as Arc<dyn ScorePredictor>)
        })
        .collect()
}

/// `s + tau ||s|| z` with `z` uniform on the unit sphere; the relative
/// perturbation norm is exactly `tau`.
pub fn sphere_noise_wrap(
    base: &dyn ScorePredictor,
    tau: f64,
    x: &[f64],
    t: f64,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::domain("tau must lie in [0, 1]"));
    }
    let mut s = base.evaluate(x, t, rng);
    apply_sphere_noise(&mut s, tau, rng);
    Ok(s)
}

fn apply_sphere_noise(s: &mut [f64], tau: f64, rng: &mut StreamRng) {
    if tau == 0.0 {
        return;
    }
    let magnitude = tau * norm(s);
    let z = unit_sphere_vec(rng, s.len());
    for (si, zi) in s.iter_mut().zip(&z) {
        *si += magnitude * zi;
    }
}

/// Base predictor with sphere noise applied independently per evaluation.
pub struct SphereNoisyScore {
    base: Arc<dyn ScorePredictor>,
    tau: f64,
}

impl SphereNoisyScore {
    pub fn new(base: Arc<dyn ScorePredictor>, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::domain("tau must lie in [0, 1]"));
        }
        Ok(SphereNoisyScore { base, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl ScorePredictor for SphereNoisyScore {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn evaluate_into(&self, x: &[f64], t: f64, rng: &mut StreamRng, out: &mut [f64]) {
        self.base.evaluate_into(x, t, rng, out);
        apply_sphere_noise(out, self.tau, rng);
    }
}
