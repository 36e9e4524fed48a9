//! Reverse-time generation: Euler–Maruyama predictor steps with step-wise
//! ensemble aggregation, trajectory-level combination schemes, early-timestep
//! ensembling and the probability-flow ODE step.
//!
//! Every noise draw comes from a stream derived from
//! `(seed, sample, step, member)`, so parallel and serial execution agree
//! bit for bit, all schemes coincide exactly at `K = 1`, and step-wise rules
//! share one Brownian increment per sample per step (member slot 0).

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::aggregate::{aggregate_into, AggregationRule};
use crate::error::{Error, Result};
use crate::fmath;
use crate::linalg::{norm, Matrix};
use crate::rng::{fill_standard_normal, Stream};
use crate::schedule::{NoiseSchedule, TimeGrid};
use crate::score::ScorePredictor;

const TAG_SAMPLE: u64 = 0x5a;
const TAG_INIT: u64 = 0x1e;
const TAG_STEP: u64 = 0x57;
const TAG_NOISE: u64 = 0x2f;
const TAG_EVAL: u64 = 0xe7;
const TAG_SELECT: u64 = 0xc4;

/// How the K predictors combine during generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Evaluate every member at each step and combine with a rule; one shared
    /// Brownian increment per sample per step.
    StepWise(AggregationRule),
    /// Draw one member uniformly per sample before the trajectory.
    MixtureOfExperts,
    /// Fresh uniform member per step per sample.
    Alternating,
    /// K predictor updates, each with its own Gaussian increment, averaged.
    AverageOfNoises,
    /// K full trajectories from shared initial noise; terminal samples
    /// averaged.
    MeanOfPredictions,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::StepWise(_) => "stepwise",
            Scheme::MixtureOfExperts => "mixture",
            Scheme::Alternating => "alternating",
            Scheme::AverageOfNoises => "average-noises",
            Scheme::MeanOfPredictions => "mean-predictions",
        }
    }
}

/// Ensemble only while `t >= t_switch`; a single designated member below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlySwitch {
    pub t_switch: f64,
    pub model_index: usize,
}

impl EarlySwitch {
    /// Switch time putting the first `numer/denom` of the reverse steps
    /// (those nearest t = 1) into the ensemble phase.
    pub fn first_fraction(grid: &TimeGrid, numer: usize, denom: usize) -> Self {
        let n = grid.n_steps();
        let ensemble_steps = (n * numer).div_ceil(denom).clamp(1, n);
        EarlySwitch {
            t_switch: grid.levels()[n - ensemble_steps],
            model_index: 0,
        }
    }

    /// The default from the reference protocol: ensemble for the first third
    /// of the reverse steps.
    pub fn first_third(grid: &TimeGrid) -> Self {
        Self::first_fraction(grid, 1, 3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub scheme: Scheme,
    pub early_switch: Option<EarlySwitch>,
    pub n_samples: usize,
    pub seed: u64,
    pub record_diagnostics: bool,
    pub record_trajectories: bool,
}

impl SamplerConfig {
    pub fn new(scheme: Scheme, n_samples: usize, seed: u64) -> Self {
        SamplerConfig {
            scheme,
            early_switch: None,
            n_samples,
            seed,
            record_diagnostics: false,
            record_trajectories: false,
        }
    }
}

/// Per-step score statistics across the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    /// Overall standard deviation of the applied score across the batch:
    /// per-coordinate population variances, averaged over coordinates, square
    /// root taken (a constant field therefore reads exactly zero).
    pub score_std: f64,
    /// Mean Euclidean norm of the applied score across the batch.
    pub score_mean_norm: f64,
}

/// Generation output: terminal samples at `t_min` in scaled coordinates, plus
/// optional trajectories and per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub samples: Matrix,
    /// One `(n_steps + 1) x d` state matrix per sample when recorded
    /// (row 0 is the initial Gaussian draw at t = 1).
    pub trajectories: Option<Vec<Matrix>>,
    pub diagnostics: Option<Vec<StepDiagnostics>>,
}

/// One reverse Euler–Maruyama update stepping `t -> t - dt`:
/// `x + [beta t/2 x + beta t s] dt + sqrt(beta dt) z`.
pub fn reverse_em_step(
    schedule: &NoiseSchedule,
    x: &[f64],
    t: f64,
    dt: f64,
    score: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    if x.len() != score.len() || x.len() != z.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: score.len().max(z.len()),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::domain("step size must be positive"));
    }
    if x.iter().chain(score).chain(z).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reverse step input".into()));
    }
    let beta = schedule.beta(t);
    let diffusion = fmath::sqrt(beta * dt);
    Ok(x.iter()
        .zip(score)
        .zip(z)
        .map(|((&xi, &si), &zi)| xi + (0.5 * beta * xi + beta * si) * dt + diffusion * zi)
        .collect())
}

/// One deterministic probability-flow update stepping `t -> t - dt`:
/// `x + [beta t/2 x + beta t/2 s] dt`.
pub fn probability_flow_step(
    schedule: &NoiseSchedule,
    x: &[f64],
    t: f64,
    dt: f64,
    score: &[f64],
) -> Result<Vec<f64>> {
    if x.len() != score.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: score.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::domain("step size must be positive"));
    }
    if x.iter().chain(score).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probability flow input".into()));
    }
    let half_beta = 0.5 * schedule.beta(t);
    Ok(x.iter()
        .zip(score)
        .map(|(&xi, &si)| xi + (half_beta * xi + half_beta * si) * dt)
        .collect())
}

/// Per-sample, per-step accumulator feeding batch diagnostics: per-coordinate
/// moments of the applied scores (centered on the first absorbed value, so a
/// constant field accumulates exact zeros) plus norm totals.
#[derive(Debug, Clone, Default)]
pub struct StepScoreAccum {
    refs: Vec<f64>,
    sums: Vec<f64>,
    sum_sqs: Vec<f64>,
    count: usize,
    norm_sum: f64,
}

impl StepScoreAccum {
    fn absorb(&mut self, score: &[f64]) {
        if self.count == 0 {
            self.refs = score.to_vec();
            self.sums = alloc::vec![0.0; score.len()];
            self.sum_sqs = alloc::vec![0.0; score.len()];
        }
        for (j, &v) in score.iter().enumerate() {
            let c = v - self.refs[j];
            self.sums[j] += c;
            self.sum_sqs[j] += c * c;
        }
        self.count += 1;
        self.norm_sum += norm(score);
    }

    fn merge(&mut self, other: &StepScoreAccum) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let n = other.count as f64;
        for j in 0..other.sums.len() {
            // re-center the other accumulator onto our reference
            let delta = other.refs[j] - self.refs[j];
            self.sums[j] += other.sums[j] + n * delta;
            self.sum_sqs[j] += other.sum_sqs[j] + 2.0 * delta * other.sums[j] + n * delta * delta;
        }
        self.count += other.count;
        self.norm_sum += other.norm_sum;
    }
}

fn validate(
    members: &[Arc<dyn ScorePredictor>],
    grid: &TimeGrid,
    cfg: &SamplerConfig,
) -> Result<usize> {
    if members.is_empty() {
        return Err(Error::invalid("sampler needs at least one predictor"));
    }
    let d = members[0].dim();
    if members.iter().any(|m| m.dim() != d) {
        return Err(Error::invalid("ensemble members disagree on dimension"));
    }
    if let Some(early) = &cfg.early_switch {
        if !matches!(cfg.scheme, Scheme::StepWise(_)) {
            return Err(Error::SchemeMismatch(
                "early_switch requires a step-wise scheme".into(),
            ));
        }
        if !(early.t_switch > grid.t_min() && early.t_switch < 1.0) {
            return Err(Error::domain("early_switch time must lie in (t_min, 1)"));
        }
        if early.model_index >= members.len() {
            return Err(Error::invalid("early_switch model index out of range"));
        }
    }
    Ok(d)
}

/// Generate `cfg.n_samples` terminal samples; serial reference implementation
/// (a parallel driver over [`simulate_sample`] produces identical output).
pub fn sample(
    members: &[Arc<dyn ScorePredictor>],
    schedule: &NoiseSchedule,
    grid: &TimeGrid,
    cfg: &SamplerConfig,
) -> Result<SampleBatch> {
    let d = validate(members, grid, cfg)?;
    let mut samples = Matrix::zeros(cfg.n_samples, d);
    let mut trajectories = cfg.record_trajectories.then(Vec::new);
    let mut accums = cfg
        .record_diagnostics
        .then(|| alloc::vec![StepScoreAccum::default(); grid.n_steps()]);
    for j in 0..cfg.n_samples {
        let one = simulate_sample(members, schedule, grid, cfg, j)?;
        samples.row_mut(j).copy_from_slice(&one.terminal);
        if let (Some(ts), Some(t)) = (trajectories.as_mut(), one.trajectory) {
            ts.push(t);
        }
        if let (Some(acc), Some(sa)) = (accums.as_mut(), one.step_scores) {
            for (a, s) in acc.iter_mut().zip(&sa) {
                a.merge(s);
            }
        }
    }
    Ok(SampleBatch {
        samples,
        trajectories,
        diagnostics: accums.map(|acc| finalize_diagnostics(grid, &acc)),
    })
}

/// Assemble per-step diagnostics from per-sample accumulators (merged in
/// sample order; the parallel driver reuses this).
pub fn finalize_diagnostics(grid: &TimeGrid, accums: &[StepScoreAccum]) -> Vec<StepDiagnostics> {
    let n_steps = grid.n_steps();
    accums
        .iter()
        .enumerate()
        .map(|(step, a)| {
            let t = grid.nodes()[n_steps - step];
            let (std, mean_norm) = if a.count == 0 {
                (0.0, 0.0)
            } else {
                // overall std: per-coordinate population variances, averaged
                let n = a.count as f64;
                let mut var_sum = 0.0;
                for j in 0..a.sums.len() {
                    let mean_c = a.sums[j] / n;
                    var_sum += (a.sum_sqs[j] / n - mean_c * mean_c).max(0.0);
                }
                let var = var_sum / a.sums.len() as f64;
                (fmath::sqrt(var), a.norm_sum / n)
            };
            StepDiagnostics {
                step,
                t,
                score_std: std,
                score_mean_norm: mean_norm,
            }
        })
        .collect()
}

/// Result of simulating one sample.
pub struct SimulatedSample {
    pub terminal: Vec<f64>,
    pub trajectory: Option<Matrix>,
    pub step_scores: Option<Vec<StepScoreAccum>>,
}

/// Simulate sample `sample_index` under the configured scheme. All
/// stochasticity derives from `(cfg.seed, sample_index, step, member)`.
pub fn simulate_sample(
    members: &[Arc<dyn ScorePredictor>],
    schedule: &NoiseSchedule,
    grid: &TimeGrid,
    cfg: &SamplerConfig,
    sample_index: usize,
) -> Result<SimulatedSample> {
    let d = validate(members, grid, cfg)?;
    let k = members.len();
    let nodes = grid.nodes();
    let n_steps = grid.n_steps();
    let sample_stream = Stream::new(cfg.seed).indexed(TAG_SAMPLE, sample_index as u64);

    let mut init = alloc::vec![0.0; d];
    fill_standard_normal(&mut sample_stream.child(TAG_INIT).rng(), &mut init);

    let mut step_scores = cfg
        .record_diagnostics
        .then(|| alloc::vec![StepScoreAccum::default(); n_steps]);

    if matches!(cfg.scheme, Scheme::MeanOfPredictions) && k > 1 {
        // K full trajectories from shared initial noise, averaged at the end.
        let mut mean_states = Matrix::zeros(n_steps + 1, d);
        for path in 0..k {
            let mut x = init.clone();
            for (m, v) in mean_states.row_mut(0).iter_mut().zip(&x) {
                *m += v / k as f64;
            }
            for step in 0..n_steps {
                let node = n_steps - step;
                let t = nodes[node];
                let dt = t - nodes[node - 1];
                let step_stream = sample_stream.indexed(TAG_STEP, step as u64);
                let mut eval_rng = step_stream.indexed(TAG_EVAL, path as u64).rng();
                let score = members[path].evaluate(&x, t, &mut eval_rng);
                if let Some(acc) = step_scores.as_mut() {
                    acc[step].absorb(&score);
                }
                let mut z = alloc::vec![0.0; d];
                fill_standard_normal(&mut step_stream.indexed(TAG_NOISE, path as u64).rng(), &mut z);
                x = em_update(schedule, &x, t, dt, &score, &z)?;
                for (m, v) in mean_states.row_mut(step + 1).iter_mut().zip(&x) {
                    *m += v / k as f64;
                }
            }
        }
        let terminal = mean_states.row(n_steps).to_vec();
        return Ok(SimulatedSample {
            terminal,
            trajectory: cfg.record_trajectories.then_some(mean_states),
            step_scores,
        });
    }

    let chosen = match cfg.scheme {
        Scheme::MixtureOfExperts if k > 1 => {
            sample_stream.child(TAG_SELECT).rng().random_range(0..k)
        }
        _ => 0,
    };

    let mut states = cfg
        .record_trajectories
        .then(|| Matrix::zeros(n_steps + 1, d));
    let mut x = init;
    if let Some(s) = states.as_mut() {
        s.row_mut(0).copy_from_slice(&x);
    }

    let mut score = alloc::vec![0.0; d];
    let mut member_scores = Matrix::zeros(k, d);
    let mut z = alloc::vec![0.0; d];

    for step in 0..n_steps {
        let node = n_steps - step;
        let t = nodes[node];
        let dt = t - nodes[node - 1];
        let step_stream = sample_stream.indexed(TAG_STEP, step as u64);
        let eval_one = |index: usize, x: &[f64], out: &mut [f64]| {
            let mut rng = step_stream.indexed(TAG_EVAL, index as u64).rng();
            members[index].evaluate_into(x, t, &mut rng, out);
        };

        match cfg.scheme {
            Scheme::StepWise(rule) => {
                let single = match &cfg.early_switch {
                    Some(early) if t < early.t_switch => Some(early.model_index),
                    _ => None,
                };
                match single {
                    Some(index) => eval_one(index, &x, &mut score),
                    None if k == 1 => eval_one(0, &x, &mut score),
                    None => {
                        for i in 0..k {
                            let mut row = alloc::vec![0.0; d];
                            eval_one(i, &x, &mut row);
                            member_scores.row_mut(i).copy_from_slice(&row);
                        }
                        aggregate_into(&member_scores, rule, &mut score);
                    }
                }
                fill_standard_normal(&mut step_stream.indexed(TAG_NOISE, 0).rng(), &mut z);
                if let Some(acc) = step_scores.as_mut() {
                    acc[step].absorb(&score);
                }
                x = em_update(schedule, &x, t, dt, &score, &z)?;
            }
            Scheme::MixtureOfExperts | Scheme::MeanOfPredictions => {
                // MeanOfPredictions reaches here only when k == 1
                eval_one(chosen, &x, &mut score);
                fill_standard_normal(&mut step_stream.indexed(TAG_NOISE, 0).rng(), &mut z);
                if let Some(acc) = step_scores.as_mut() {
                    acc[step].absorb(&score);
                }
                x = em_update(schedule, &x, t, dt, &score, &z)?;
            }
            Scheme::Alternating => {
                let index = if k == 1 {
                    0
                } else {
                    step_stream.child(TAG_SELECT).rng().random_range(0..k)
                };
                eval_one(index, &x, &mut score);
                fill_standard_normal(&mut step_stream.indexed(TAG_NOISE, 0).rng(), &mut z);
                if let Some(acc) = step_scores.as_mut() {
                    acc[step].absorb(&score);
                }
                x = em_update(schedule, &x, t, dt, &score, &z)?;
            }
            Scheme::AverageOfNoises => {
                // mean of the K member updates, each with its own increment;
                // equals the update with mean score and mean noise
                let mut mean_score = alloc::vec![0.0; d];
                let mut mean_z = alloc::vec![0.0; d];
                for i in 0..k {
                    let mut row = alloc::vec![0.0; d];
                    eval_one(i, &x, &mut row);
                    if let Some(acc) = step_scores.as_mut() {
                        acc[step].absorb(&row);
                    }
                    for (m, v) in mean_score.iter_mut().zip(&row) {
                        *m += v / k as f64;
                    }
                    fill_standard_normal(&mut step_stream.indexed(TAG_NOISE, i as u64).rng(), &mut z);
                    for (m, v) in mean_z.iter_mut().zip(&z) {
                        *m += v / k as f64;
                    }
                }
                x = em_update(schedule, &x, t, dt, &mean_score, &mean_z)?;
            }
        }

        if let Some(s) = states.as_mut() {
            s.row_mut(step + 1).copy_from_slice(&x);
        }
    }

    Ok(SimulatedSample {
        terminal: x,
        trajectory: states,
        step_scores,
    })
}

#[inline]
fn em_update(
    schedule: &NoiseSchedule,
    x: &[f64],
    t: f64,
    dt: f64,
    score: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    let beta = schedule.beta(t);
    let diffusion = fmath::sqrt(beta * dt);
    let out: Vec<f64> = x
        .iter()
        .zip(score)
        .zip(z)
        .map(|((&xi, &si), &zi)| xi + (0.5 * beta * xi + beta * si) * dt + diffusion * zi)
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sampler state left the finite range".into()));
    }
    Ok(out)
}

/// Per-step standard deviation of the applied score components across a
/// recorded batch; the noise-magnitude diagnostic series.
pub fn score_std_profile(batch: &SampleBatch) -> Result<Vec<f64>> {
    let diag = batch
        .diagnostics
        .as_ref()
        .ok_or_else(|| Error::invalid("batch was sampled without diagnostics"))?;
    if batch.samples.rows() == 0 || diag.is_empty() {
        return Err(Error::invalid("empty batch has no score profile"));
    }
    Ok(diag.iter().map(|d| d.score_std).collect())
}
