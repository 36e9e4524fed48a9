//! Experiment configuration: a single TOML file, schema-validated on load
//! (unknown keys are rejected). Every constant that is not pinned by the
//! method itself surfaces here with its default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use diffens_core::aggregate::AggregationRule;
use diffens_core::forest::ForestConfig;
use diffens_core::forest_vp::ForestVpParams;
use diffens_core::metrics::Weighting;
use diffens_core::schedule::{NoiseSchedule, ScheduleKind, TimeGrid};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset CSV (header row, numeric columns, comma-separated).
    pub dataset: DatasetSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub forest: ForestSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub perturb: PerturbSection,
    /// One experiment repetition (and train/test split) per seed.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory; subcommands may override with --out.
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub beta_min: f64,
    pub beta_max: f64,
    pub kind: ScheduleKind,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = NoiseSchedule::default_vp();
        ScheduleSection {
            beta_min: s.beta_min,
            beta_max: s.beta_max,
            kind: s.kind,
        }
    }
}

impl ScheduleSection {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.beta_min, self.beta_max).map_err(into_anyhow)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Number of reverse steps = number of noise levels.
    pub n_steps: usize,
    pub t_min: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n_steps: 50,
            t_min: diffens_core::schedule::DEFAULT_T_MIN,
        }
    }
}

impl GridSection {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.n_steps, self.t_min).map_err(into_anyhow)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestSection {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features considered per node; omit (or null) for all.
    pub feature_subsample: Option<usize>,
    pub bootstrap: bool,
    /// Noise duplications per data point at every level.
    pub n_rep: usize,
}

impl Default for ForestSection {
    fn default() -> Self {
        let f = ForestConfig::default();
        ForestSection {
            n_trees: f.n_trees,
            max_depth: f.max_depth,
            min_samples_leaf: f.min_samples_leaf,
            feature_subsample: f.feature_subsample,
            bootstrap: f.bootstrap,
            n_rep: 100,
        }
    }
}

impl ForestSection {
    pub fn params(&self) -> ForestVpParams {
        ForestVpParams {
            n_rep: self.n_rep,
            forest: ForestConfig {
                n_trees: self.n_trees,
                max_depth: self.max_depth,
                min_samples_leaf: self.min_samples_leaf,
                feature_subsample: self.feature_subsample,
                bootstrap: self.bootstrap,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    /// stepwise | mixture | alternating | average-noises | mean-predictions
    pub scheme: String,
    /// Step-wise rule: arithmetic | geometric | median | dominant | sum.
    pub rule: String,
    /// Samples per run; 0 means "match the evaluation split size".
    pub n_samples: usize,
    /// Optional switch time: ensemble for t >= value, single model below.
    pub early_switch: Option<f64>,
    /// Designated member once the switch triggers.
    pub early_model: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            scheme: "stepwise".into(),
            rule: "arithmetic".into(),
            n_samples: 0,
            early_switch: None,
            early_model: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Metrics computed by `eval`: wasserstein1 | coverage.
    pub list: Vec<String>,
    pub coverage_k: usize,
    pub ddsm_n_mc: usize,
    pub weighting: Weighting,
    /// Equal-size subsampling bound for the exact W1 assignment.
    pub w1_max_n: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            list: vec!["wasserstein1".into(), "coverage".into()],
            coverage_k: 5,
            ddsm_n_mc: 4096,
            weighting: Weighting::Sigma2,
            w1_max_n: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Tree counts (rows of the sweep table).
    pub n_trees: Vec<usize>,
    /// Aggregation rules (columns of the sweep table).
    pub rules: Vec<String>,
    /// Held-out fraction per split.
    pub test_fraction: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            n_trees: vec![25, 100, 1000],
            rules: vec!["arithmetic".into(), "dominant".into()],
            test_fraction: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbSection {
    pub taus: Vec<f64>,
    /// Monte-Carlo draws per loss estimate.
    pub n_mc: usize,
    /// Variances of the analytic Gaussian base used when no model is given.
    pub alpha: Vec<f64>,
    /// Samples per Wasserstein evaluation.
    pub n_samples: usize,
}

impl Default for PerturbSection {
    fn default() -> Self {
        PerturbSection {
            taus: vec![0.0, 0.25, 0.5, 1.0],
            n_mc: 20_000,
            alpha: vec![1.0, 4.0],
            n_samples: 256,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.build()?;
        self.grid.build()?;
        parse_scheme(&self.sampler.scheme, &self.sampler.rule)?;
        for r in &self.sweep.rules {
            AggregationRule::parse(r).map_err(into_anyhow)?;
        }
        if self.seeds.is_empty() {
            bail!("config needs at least one seed");
        }
        if !(self.sweep.test_fraction > 0.0 && self.sweep.test_fraction < 1.0) {
            bail!("sweep.test_fraction must lie in (0, 1)");
        }
        if self.perturb.taus.iter().any(|t| !(0.0..=1.0).contains(t)) {
            bail!("perturb.taus must lie in [0, 1]");
        }
        if let Some(t) = self.sampler.early_switch {
            if !(t > self.grid.t_min && t < 1.0) {
                bail!("sampler.early_switch must lie in (t_min, 1)");
            }
        }
        Ok(())
    }

    /// Canonical TOML echo written into run manifests.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

/// Parse scheme/rule names into the sampler scheme.
pub fn parse_scheme(scheme: &str, rule: &str) -> Result<diffens_core::sampler::Scheme> {
    use diffens_core::sampler::Scheme;
    match scheme {
        "stepwise" => Ok(Scheme::StepWise(
            AggregationRule::parse(rule).map_err(into_anyhow)?,
        )),
        "mixture" => Ok(Scheme::MixtureOfExperts),
        "alternating" => Ok(Scheme::Alternating),
        "average-noises" => Ok(Scheme::AverageOfNoises),
        "mean-predictions" => Ok(Scheme::MeanOfPredictions),
        other => bail!(
            "unknown scheme '{other}' (expected stepwise, mixture, alternating, \
             average-noises or mean-predictions)"
        ),
    }
}

pub fn into_anyhow(e: diffens_core::Error) -> anyhow::Error {
    anyhow::anyhow!("{e}")
}
