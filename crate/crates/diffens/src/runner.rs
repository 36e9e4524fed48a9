//! Experiment runner: the operations behind every CLI subcommand, exposed as
//! library functions so tests drive them directly.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use serde::Serialize;

use diffens_core::aggregate::AggregationRule;
use diffens_core::dataset::Dataset;
use diffens_core::forest_vp::ForestVpModel;
use diffens_core::likelihood::{batch_ode_loglik, DivergenceEstimator, LikelihoodConfig, Probe};
use diffens_core::linalg::Matrix;
use diffens_core::metrics::{
    coverage, ddsm_loss, wasserstein1_exact, DdsmOptions, MeanStderr, MetricReport, ReportMeta,
};
use diffens_core::sampler::{
    sample, score_std_profile, EarlySwitch, SampleBatch, SamplerConfig, Scheme,
};
use diffens_core::schedule::{NoiseSchedule, TimeGrid};
use diffens_core::score::{AnalyticGaussianScore, ScorePredictor, SphereNoisyScore};
use diffens_core::Stream;

use crate::config::{into_anyhow, parse_scheme, ExperimentConfig};
use crate::io::{read_dataset, write_diagnostics_csv, write_matrix_csv};
use crate::persist::{file_sha256, save_model, RunManifest};
use crate::train::train_parallel;

const TAG_SPLIT: u64 = 0x51;
const TAG_SUBSAMPLE: u64 = 0x5b;
const TAG_REFERENCE: u64 = 0x8e;

/// Deterministic train/test split: a seeded shuffle of row indices.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = Stream::new(seed).child(TAG_SPLIT).rng();
    indices.shuffle(&mut rng);
    let n_test = ((n as f64) * test_fraction).round().max(1.0) as usize;
    let n_test = n_test.min(n - 1);
    let test = indices[..n_test].to_vec();
    let mut train = indices[n_test..].to_vec();
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    (train, test)
}

/// Equal-size subsample (without replacement) used before the exact W1.
pub fn subsample_rows(data: &Matrix, n: usize, seed: u64) -> Matrix {
    if data.rows() <= n {
        return data.clone();
    }
    let mut indices: Vec<usize> = (0..data.rows()).collect();
    let mut rng = Stream::new(seed).child(TAG_SUBSAMPLE).rng();
    indices.shuffle(&mut rng);
    indices.truncate(n);
    indices.sort_unstable();
    let rows: Vec<Vec<f64>> = indices.iter().map(|&i| data.row(i).to_vec()).collect();
    Matrix::from_rows(&rows).expect("uniform rows")
}

/// Train on the configured dataset and persist `model.json` plus a manifest.
pub fn cmd_train(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<()> {
    let start = Instant::now();
    let dataset = read_dataset(&cfg.dataset.path)?;
    let schedule = cfg.schedule.build()?;
    let grid = cfg.grid.build()?;
    let model = train_parallel(&dataset, &schedule, &grid, &cfg.forest.params(), Stream::new(seed))?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    save_model(&out_dir.join("model.json"), &model)?;
    let mut manifest = RunManifest::new(
        "train",
        seed,
        file_sha256(&cfg.dataset.path)?,
        cfg.to_toml()?,
    );
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(())
}

/// The ensemble members of a Forest-VP model: one predictor per tree.
pub fn model_members(model: &Arc<ForestVpModel>) -> Vec<Arc<dyn ScorePredictor>> {
    ForestVpModel::tree_predictors(model)
}

pub struct SampleRequest {
    pub scheme: Scheme,
    pub n_samples: usize,
    pub seed: u64,
    pub early_switch: Option<EarlySwitch>,
    pub record_diagnostics: bool,
}

/// Generate from a trained model; returns the batch in scaled coordinates.
pub fn sample_from_model(model: &Arc<ForestVpModel>, req: &SampleRequest) -> Result<SampleBatch> {
    let members = model_members(model);
    let cfg = SamplerConfig {
        scheme: req.scheme,
        early_switch: req.early_switch,
        n_samples: req.n_samples,
        seed: req.seed,
        record_diagnostics: req.record_diagnostics,
        record_trajectories: false,
    };
    sample(&members, model.schedule(), model.grid(), &cfg).map_err(into_anyhow)
}

/// `sample` subcommand: unscaled samples CSV plus optional diagnostics CSV.
pub fn cmd_sample(
    model_path: &Path,
    req: &SampleRequest,
    out_csv: &Path,
    diagnostics_csv: Option<&Path>,
) -> Result<()> {
    let model = Arc::new(crate::persist::load_model(model_path)?);
    let mut req = SampleRequest {
        record_diagnostics: req.record_diagnostics || diagnostics_csv.is_some(),
        ..*req
    };
    if diagnostics_csv.is_some() {
        req.record_diagnostics = true;
    }
    let batch = sample_from_model(&model, &req)?;
    let unscaled = model
        .scaler()
        .inverse(&batch.samples)
        .map_err(into_anyhow)?;
    write_matrix_csv(out_csv, &model.feature_names().to_vec(), &unscaled)?;
    if let Some(path) = diagnostics_csv {
        let diag = batch
            .diagnostics
            .as_ref()
            .expect("diagnostics were requested");
        write_diagnostics_csv(path, diag)?;
    }
    Ok(())
}

pub struct EvalRequest {
    pub metrics: Vec<String>,
    pub coverage_k: usize,
    pub w1_max_n: usize,
    pub seed: u64,
}

/// Compare generated samples against held-out data. Both sets are rescaled by
/// the real set's min-max transform so distances live on the training scale;
/// W1 subsamples both sides to `min(n, w1_max_n)` with a fixed seed.
pub fn evaluate_samples(real: &Dataset, fake: &Matrix, req: &EvalRequest) -> Result<MetricReport> {
    if fake.cols() != real.n_features() {
        bail!(
            "generated samples have {} columns, data has {}",
            fake.cols(),
            real.n_features()
        );
    }
    let real_scaled = real.scaled_points();
    let fake_scaled = real.scaler().transform(fake).map_err(into_anyhow)?;
    let mut report = MetricReport {
        ddsm_loss: None,
        wasserstein1: None,
        coverage: None,
        diversity: None,
        metadata: ReportMeta {
            n_eval: fake.rows(),
            seed: req.seed,
            rule: None,
            k: None,
        },
    };
    for metric in &req.metrics {
        match metric.as_str() {
            "wasserstein1" => {
                let n = real_scaled.rows().min(fake_scaled.rows()).min(req.w1_max_n);
                if n == 0 {
                    bail!("wasserstein1 needs at least one point on each side");
                }
                let a = subsample_rows(&real_scaled, n, req.seed);
                let b = subsample_rows(&fake_scaled, n, req.seed.wrapping_add(1));
                report.wasserstein1 = Some(wasserstein1_exact(&a, &b).map_err(into_anyhow)?);
            }
            "coverage" => {
                report.coverage =
                    Some(coverage(&real_scaled, &fake_scaled, req.coverage_k).map_err(into_anyhow)?);
            }
            other => bail!("unknown metric '{other}' (expected wasserstein1 or coverage)"),
        }
    }
    report.validate().map_err(into_anyhow)?;
    Ok(report)
}

/// One sweep cell: a (tree count, rule, split seed) evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub n_trees: usize,
    pub rule: String,
    pub seed: u64,
    pub wasserstein1: f64,
    pub coverage: f64,
    /// Per-step overall score std during generation (the noise-magnitude
    /// diagnostic series).
    pub score_std_profile: Vec<f64>,
}

/// Full tree-count x rule sweep over the configured train/test splits.
///
/// Training is rule-independent: each (split, tree count) model is trained
/// once and sampled under every rule with identical noise streams, so rule
/// differences are attributable to aggregation alone.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let dataset = read_dataset(&cfg.dataset.path)?;
    let schedule = cfg.schedule.build()?;
    let grid = cfg.grid.build()?;
    let rules: Vec<AggregationRule> = cfg
        .sweep
        .rules
        .iter()
        .map(|r| AggregationRule::parse(r).map_err(into_anyhow))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        let (train_idx, test_idx) = split_indices(dataset.n_rows(), cfg.sweep.test_fraction, seed);
        let train = dataset.subset(&train_idx).map_err(into_anyhow)?;
        let test_rows: Vec<Vec<f64>> = test_idx
            .iter()
            .map(|&i| dataset.points().row(i).to_vec())
            .collect();
        let test_raw = Matrix::from_rows(&test_rows).map_err(into_anyhow)?;
        // evaluation happens on the training scale
        let test_scaled = train.scaler().transform(&test_raw).map_err(into_anyhow)?;
        let n_gen = test_scaled.rows().min(cfg.metrics.w1_max_n);
        for &n_trees in &cfg.sweep.n_trees {
            let mut params = cfg.forest.params();
            params.forest.n_trees = n_trees;
            let model = Arc::new(train_parallel(
                &train,
                &schedule,
                &grid,
                &params,
                Stream::new(seed),
            )?);
            let members = model_members(&model);
            for &rule in &rules {
                let sampler_cfg = SamplerConfig {
                    scheme: Scheme::StepWise(rule),
                    early_switch: None,
                    n_samples: n_gen,
                    seed,
                    record_diagnostics: true,
                    record_trajectories: false,
                };
                let batch =
                    sample(&members, &schedule, &grid, &sampler_cfg).map_err(into_anyhow)?;
                let w1_n = test_scaled.rows().min(batch.samples.rows()).min(cfg.metrics.w1_max_n);
                let a = subsample_rows(&test_scaled, w1_n, seed);
                let b = subsample_rows(&batch.samples, w1_n, seed.wrapping_add(1));
                let w1 = wasserstein1_exact(&a, &b).map_err(into_anyhow)?;
                let cov = coverage(&test_scaled, &batch.samples, cfg.metrics.coverage_k)
                    .map_err(into_anyhow)?;
                let profile = score_std_profile(&batch).map_err(into_anyhow)?;
                cells.push(SweepCell {
                    n_trees,
                    rule: rule.as_str().to_string(),
                    seed,
                    wasserstein1: w1,
                    coverage: cov,
                    score_std_profile: profile,
                });
            }
        }
    }
    Ok(cells)
}

/// Mean metric per (tree count, rule) across splits.
pub fn sweep_table(cells: &[SweepCell], rules: &[String]) -> Vec<(usize, Vec<f64>)> {
    let mut by_k: Vec<usize> = cells.iter().map(|c| c.n_trees).collect();
    by_k.sort_unstable();
    by_k.dedup();
    by_k.iter()
        .map(|&k| {
            let row: Vec<f64> = rules
                .iter()
                .map(|rule| {
                    let vals: Vec<f64> = cells
                        .iter()
                        .filter(|c| c.n_trees == k && &c.rule == rule)
                        .map(|c| c.wasserstein1)
                        .collect();
                    vals.iter().sum::<f64>() / vals.len().max(1) as f64
                })
                .collect();
            (k, row)
        })
        .collect()
}

/// Write the sweep outputs: per-cell long CSV and the assembled wide table.
pub fn write_sweep_outputs(cfg: &ExperimentConfig, cells: &[SweepCell], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut writer = csv::Writer::from_path(out_dir.join("sweep_cells.csv"))?;
    writer.write_record(["n_trees", "rule", "seed", "wasserstein1", "coverage"])?;
    for c in cells {
        writer.write_record([
            c.n_trees.to_string(),
            c.rule.clone(),
            c.seed.to_string(),
            crate::io::format_float(c.wasserstein1),
            crate::io::format_float(c.coverage),
        ])?;
    }
    writer.flush()?;

    let table = sweep_table(cells, &cfg.sweep.rules);
    let mut writer = csv::Writer::from_path(out_dir.join("sweep_table.csv"))?;
    let mut header = vec!["n_trees".to_string()];
    header.extend(cfg.sweep.rules.iter().cloned());
    writer.write_record(&header)?;
    for (k, row) in &table {
        let mut record = vec![k.to_string()];
        record.extend(row.iter().map(|v| crate::io::format_float(*v)));
        writer.write_record(&record)?;
    }
    writer.flush()?;

    // per-cell diagnostics: one profile CSV per (k, rule, seed)
    let diag_dir = out_dir.join("profiles");
    std::fs::create_dir_all(&diag_dir)?;
    for c in cells {
        let path = diag_dir.join(format!("std_k{}_{}_seed{}.csv", c.n_trees, c.rule, c.seed));
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["step", "score_std"])?;
        for (i, v) in c.score_std_profile.iter().enumerate() {
            writer.write_record([i.to_string(), crate::io::format_float(*v)])?;
        }
        writer.flush()?;
    }
    Ok(())
}

/// One perturbation-sweep row.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbRow {
    pub tau: f64,
    pub seed: u64,
    pub ddsm_mean: f64,
    pub ddsm_stderr: f64,
    pub wasserstein1: f64,
}

/// Sphere-noise sensitivity sweep on the analytic Gaussian score: for each
/// `tau` and seed, the score-matching loss of the perturbed score and the W1
/// between perturbed-score samples and exact target draws. Draw streams are
/// shared across `tau` values, so rows differ only through the perturbation.
pub fn run_perturb(cfg: &ExperimentConfig) -> Result<Vec<PerturbRow>> {
    let schedule = cfg.schedule.build()?;
    let grid = cfg.grid.build()?;
    let alpha = cfg.perturb.alpha.clone();
    let d = alpha.len();
    if d == 0 {
        bail!("perturb.alpha must be nonempty");
    }
    let base: Arc<dyn ScorePredictor> = Arc::new(
        AnalyticGaussianScore::new(alpha.clone(), schedule).map_err(into_anyhow)?,
    );
    // reference draws from the exact target for the W1 column
    let make_reference = |seed: u64, n: usize| -> Matrix {
        let mut rng = Stream::new(seed).child(TAG_REFERENCE).rng();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                alpha
                    .iter()
                    .map(|a| a.sqrt() * diffens_core::rng::standard_normal(&mut rng))
                    .collect()
            })
            .collect();
        Matrix::from_rows(&rows).expect("uniform rows")
    };
    // loss draws live on a synthetic evaluation set: exact target samples
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let eval_points = make_reference(seed.wrapping_add(101), 256);
        let opts = DdsmOptions {
            n_mc: cfg.perturb.n_mc,
            weighting: cfg.metrics.weighting,
            t_min: cfg.grid.t_min,
        };
        let reference = make_reference(seed, cfg.perturb.n_samples);
        for &tau in &cfg.perturb.taus {
            let noisy: Arc<dyn ScorePredictor> = Arc::new(
                SphereNoisyScore::new(Arc::clone(&base), tau).map_err(into_anyhow)?,
            );
            let loss = ddsm_loss(
                noisy.as_ref(),
                &eval_points,
                &schedule,
                &opts,
                Stream::new(seed),
            )
            .map_err(into_anyhow)?;
            let sampler_cfg = SamplerConfig {
                scheme: Scheme::StepWise(AggregationRule::Arithmetic),
                early_switch: None,
                n_samples: cfg.perturb.n_samples,
                seed,
                record_diagnostics: false,
                record_trajectories: false,
            };
            let batch = sample(
                core::slice::from_ref(&noisy),
                &schedule,
                &grid,
                &sampler_cfg,
            )
            .map_err(into_anyhow)?;
            let n = reference.rows().min(batch.samples.rows()).min(cfg.metrics.w1_max_n);
            let a = subsample_rows(&reference, n, seed);
            let b = subsample_rows(&batch.samples, n, seed.wrapping_add(1));
            let w1 = wasserstein1_exact(&a, &b).map_err(into_anyhow)?;
            rows.push(PerturbRow {
                tau,
                seed,
                ddsm_mean: loss.mean,
                ddsm_stderr: loss.stderr,
                wasserstein1: w1,
            });
        }
    }
    Ok(rows)
}

pub fn write_perturb_csv(rows: &[PerturbRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["tau", "seed", "ddsm_mean", "ddsm_stderr", "wasserstein1"])?;
    for r in rows {
        writer.write_record([
            crate::io::format_float(r.tau),
            r.seed.to_string(),
            crate::io::format_float(r.ddsm_mean),
            crate::io::format_float(r.ddsm_stderr),
            crate::io::format_float(r.wasserstein1),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Predictive diversity of a model's tree ensemble over data points and grid
/// times.
pub fn run_diversity(model: &Arc<ForestVpModel>, data: &Dataset, max_points: usize) -> Result<f64> {
    let members = model_members(model);
    let scaled = data.scaled_points();
    let points = subsample_rows(&scaled, max_points, 0);
    let times: Vec<f64> = model.grid().levels().to_vec();
    diffens_core::metrics::predictive_diversity(&members, &points, &times).map_err(into_anyhow)
}

pub struct NllRequest {
    pub n_ode_steps: usize,
    pub hutchinson_probes: Option<usize>,
    pub seed: u64,
}

/// Per-point negative log-likelihood of the model on a dataset (scaled
/// coordinates, nats). Tree-based scores are piecewise constant, so their
/// divergence vanishes almost everywhere; a warning is emitted and results
/// should be read as the ODE functional of the tree field, not a calibrated
/// density.
pub fn run_nll(model: &Arc<ForestVpModel>, data: &Dataset, req: &NllRequest) -> Result<Vec<f64>> {
    eprintln!(
        "warning: tree-based scores are piecewise constant (divergence 0 almost everywhere); \
         the ODE likelihood of a forest model is a diagnostic, not a calibrated density"
    );
    let scaled = data.scaled_points();
    let divergence = match req.hutchinson_probes {
        Some(m) => DivergenceEstimator::Hutchinson {
            m,
            probe: Probe::Rademacher,
            h: DivergenceEstimator::DEFAULT_H,
        },
        None => DivergenceEstimator::exact(),
    };
    let cfg = LikelihoodConfig {
        n_ode_steps: req.n_ode_steps,
        divergence,
        t_min: model.grid().t_min(),
        blowup_threshold: 1e6,
        seed: req.seed,
    };
    let logliks = batch_ode_loglik(model.as_ref(), &scaled, model.schedule(), &cfg)
        .map_err(into_anyhow)?;
    Ok(logliks.iter().map(|ll| -ll).collect())
}

pub fn write_nll_csv(nlls: &[f64], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["point", "nll"])?;
    for (i, v) in nlls.iter().enumerate() {
        writer.write_record([i.to_string(), crate::io::format_float(*v)])?;
    }
    let mean = nlls.iter().sum::<f64>() / nlls.len().max(1) as f64;
    writer.write_record(["mean".to_string(), crate::io::format_float(mean)])?;
    writer.flush()?;
    Ok(())
}

/// Machine-readable outcome of the property verification sweep.
#[derive(Debug, Serialize)]
pub struct PropertyReport {
    pub proposition1: Prop1Report,
    pub proposition2: Prop2Report,
    pub reverse_minkowski: MinkowskiReport,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Prop1Report {
    pub cases: usize,
    /// max over cases of lhs - rhs (<= 0 means the inequality held).
    pub max_violation: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Prop2Report {
    pub random_cases: usize,
    pub equal_cases: usize,
    pub min_gap: f64,
    pub max_equal_gap: f64,
    pub violations: usize,
    pub equality_mismatches: usize,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct MinkowskiReport {
    pub cases: usize,
    pub failures: usize,
    pub pass: bool,
}

/// The closed-form verification sweep behind `verify-props`.
pub fn run_verify_props(seed: u64) -> Result<PropertyReport> {
    use diffens_core::aggregate::{leave_one_out_jensen, LossDraw};
    use diffens_core::gaussian::{proposition2_sweep, reverse_minkowski_check};
    use diffens_core::score::make_id_ensemble;
    use rand::Rng;

    // Proposition 2: randomized commutativity-gap sweep
    let sweep = proposition2_sweep(10_000, 1_000, Stream::new(seed));
    let prop2 = Prop2Report {
        random_cases: sweep.random_cases,
        equal_cases: sweep.equal_cases,
        min_gap: sweep.min_gap,
        max_equal_gap: sweep.max_equal_gap,
        violations: sweep.violations,
        equality_mismatches: sweep.equality_mismatches,
        pass: sweep.pass(),
    };

    // Proposition 1, deterministic half: random ensembles and batches
    let schedule = NoiseSchedule::default_vp();
    let mut max_violation = f64::NEG_INFINITY;
    let cases = 100;
    for case in 0..cases {
        let case_stream = Stream::new(seed).indexed(0x70, case as u64);
        let mut rng = case_stream.rng();
        let d = rng.random_range(1..4usize);
        let k = rng.random_range(2..7usize);
        let eps = rng.random_range(0.05..0.8);
        let alpha: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..4.0)).collect();
        let base: Arc<dyn ScorePredictor> = Arc::new(
            AnalyticGaussianScore::new(alpha, schedule).map_err(into_anyhow)?,
        );
        let members =
            make_id_ensemble(base, k, eps, 32, case_stream.child(1)).map_err(into_anyhow)?;
        let draws: Vec<LossDraw> = (0..rng.random_range(4..24usize))
            .map(|_| LossDraw {
                x_t: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                t: rng.random_range(0.01..1.0),
                target: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
                weight: rng.random_range(0.1..2.0),
            })
            .collect();
        let mut eval_rng = case_stream.child(2).rng();
        let check = leave_one_out_jensen(&members, &draws, &mut eval_rng).map_err(into_anyhow)?;
        max_violation = max_violation.max(check.lhs - check.rhs);
    }
    let prop1 = Prop1Report {
        cases,
        max_violation,
        pass: max_violation <= 1e-12,
    };

    // Reverse Minkowski: randomized positivity sweep
    let mut rng = Stream::new(seed).child(0x35).rng();
    let mut failures = 0usize;
    let minkowski_cases = 1000;
    for _ in 0..minkowski_cases {
        let k = rng.random_range(2..8usize);
        let a: Vec<f64> = (0..k).map(|_| rng.random_range(1e-2..1e2)).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.random_range(1e-2..1e2)).collect();
        let p = [-1.0, 0.5, -2.0][rng.random_range(0..3usize)];
        if !reverse_minkowski_check(&a, &b, p).map_err(into_anyhow)?.holds {
            failures += 1;
        }
    }
    let minkowski = MinkowskiReport {
        cases: minkowski_cases,
        failures,
        pass: failures == 0,
    };

    let pass = prop1.pass && prop2.pass && minkowski.pass;
    Ok(PropertyReport {
        proposition1: prop1,
        proposition2: prop2,
        reverse_minkowski: minkowski,
        pass,
    })
}

/// Parse the sampler section of a config into a runnable request.
pub fn request_from_config(
    cfg: &ExperimentConfig,
    grid: &TimeGrid,
    n_samples: usize,
    seed: u64,
) -> Result<SampleRequest> {
    let scheme = parse_scheme(&cfg.sampler.scheme, &cfg.sampler.rule)?;
    let early_switch = cfg.sampler.early_switch.map(|t| EarlySwitch {
        t_switch: t,
        model_index: cfg.sampler.early_model,
    });
    let _ = grid;
    Ok(SampleRequest {
        scheme,
        n_samples,
        seed,
        early_switch,
        record_diagnostics: false,
    })
}
