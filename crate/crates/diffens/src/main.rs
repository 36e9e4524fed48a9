use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};

use diffens::config::ExperimentConfig;
use diffens::io::{read_dataset, write_matrix_csv};
use diffens::persist::{file_sha256, load_model, RunManifest};
use diffens::runner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

/// Score-based diffusion on tabular data with pluggable score-predictor
/// ensembles: train tree-based score models, generate samples under different
/// aggregation rules, and evaluate them.
#[derive(Parser)]
#[command(name = "diffens", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a Forest-VP model and persist it with a run manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the first config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: config `output`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate samples from a trained model bundle.
    Sample {
        #[arg(long)]
        model: PathBuf,
        /// stepwise | mixture | alternating | average-noises | mean-predictions
        #[arg(long, default_value = "stepwise")]
        scheme: String,
        /// Step-wise rule: arithmetic | geometric | median | dominant | sum.
        #[arg(long, default_value = "arithmetic")]
        rule: String,
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Samples CSV (original feature units).
        #[arg(long)]
        out: PathBuf,
        /// Optional per-step diagnostics CSV (step, t, score-std, mean norm).
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Ensemble above this time, single designated member below.
        #[arg(long)]
        early_switch: Option<f64>,
        #[arg(long, default_value_t = 0)]
        early_model: usize,
    },
    /// Compare generated samples against held-out data, or compute model NLL.
    Eval {
        /// Held-out data CSV (ignored with --nll).
        #[arg(long, required_unless_present = "nll")]
        real: Option<PathBuf>,
        /// Generated samples CSV (ignored with --nll).
        #[arg(long, required_unless_present = "nll")]
        fake: Option<PathBuf>,
        /// Comma-separated metric list (wasserstein1, coverage).
        #[arg(long, default_value = "wasserstein1,coverage")]
        metrics: String,
        /// Coverage neighbourhood size.
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 500)]
        w1_max_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
        /// Switch to per-point negative log-likelihood of a model.
        #[arg(long)]
        nll: bool,
        /// Model bundle (with --nll).
        #[arg(long, requires = "nll")]
        model: Option<PathBuf>,
        /// Points to score (with --nll).
        #[arg(long, requires = "nll")]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        ode_steps: usize,
        /// Use the stochastic trace estimator with this many probes.
        #[arg(long)]
        hutchinson: Option<usize>,
    },
    /// Tree-count x aggregation-rule table over train/test splits.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score-noise sensitivity sweep on the analytic Gaussian base.
    Perturb {
        #[arg(long)]
        config: PathBuf,
        /// Rows CSV (tau, seed, ddsm, stderr, w1); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
    },
    /// Numerically verify the closed-form propositions; exit 1 on failure.
    VerifyProps {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Report JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predictive diversity of a model's tree ensemble on a dataset.
    Diversity {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 256)]
        max_points: usize,
        /// Report JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-point negative log-likelihood of a model on a dataset.
    Nll {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        ode_steps: usize,
        /// Use the stochastic trace estimator with this many probes.
        #[arg(long)]
        hutchinson: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-point CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    diffens::train::init_thread_pool();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let seed = seed.unwrap_or_else(|| cfg.seeds.first().copied().unwrap_or(0));
            let out_dir = out.unwrap_or_else(|| cfg.output.clone());
            runner::cmd_train(&cfg, seed, &out_dir)?;
            println!("model written to {}", out_dir.join("model.json").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample {
            model,
            scheme,
            rule,
            n,
            seed,
            out,
            diagnostics,
            early_switch,
            early_model,
        } => {
            let scheme = diffens::config::parse_scheme(&scheme, &rule)?;
            let req = runner::SampleRequest {
                scheme,
                n_samples: n,
                seed,
                early_switch: early_switch.map(|t| diffens_core::sampler::EarlySwitch {
                    t_switch: t,
                    model_index: early_model,
                }),
                record_diagnostics: diagnostics.is_some(),
            };
            runner::cmd_sample(&model, &req, &out, diagnostics.as_deref())?;
            println!("{n} samples written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            real,
            fake,
            metrics,
            k,
            w1_max_n,
            seed,
            out,
            format,
            nll,
            model,
            data,
            ode_steps,
            hutchinson,
        } => {
            if nll {
                let (Some(model), Some(data)) = (model, data) else {
                    bail!("--nll requires --model and --data");
                };
                let model = Arc::new(load_model(&model)?);
                let dataset = read_dataset(&data)?;
                let req = runner::NllRequest {
                    n_ode_steps: ode_steps,
                    hutchinson_probes: hutchinson,
                    seed,
                };
                let nlls = runner::run_nll(&model, &dataset, &req)?;
                match out {
                    Some(path) => runner::write_nll_csv(&nlls, &path)?,
                    None => print_nll(&nlls),
                }
                return Ok(ExitCode::SUCCESS);
            }
            let real = read_dataset(&real.expect("required by clap"))?;
            let fake_ds = read_dataset(&fake.expect("required by clap"))?;
            let req = runner::EvalRequest {
                metrics: metrics.split(',').map(|s| s.trim().to_string()).collect(),
                coverage_k: k,
                w1_max_n,
                seed,
            };
            let report = runner::evaluate_samples(&real, fake_ds.points(), &req)?;
            let text = match format {
                OutputFormat::Json => serde_json::to_string_pretty(&report)?,
                OutputFormat::Csv => report_csv(&report),
            };
            emit(out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out_dir = out.unwrap_or_else(|| cfg.output.clone());
            let cells = runner::run_sweep(&cfg)?;
            runner::write_sweep_outputs(&cfg, &cells, &out_dir)?;
            let manifest = RunManifest::new(
                "sweep",
                cfg.seeds[0],
                file_sha256(&cfg.dataset.path)?,
                cfg.to_toml()?,
            );
            manifest.write(&out_dir.join("manifest.json"))?;
            println!("sweep table written to {}", out_dir.join("sweep_table.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Perturb { config, out, format } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = runner::run_perturb(&cfg)?;
            match (out, format) {
                (Some(path), OutputFormat::Csv) => runner::write_perturb_csv(&rows, &path)?,
                (Some(path), OutputFormat::Json) => {
                    std::fs::write(&path, serde_json::to_string_pretty(&rows)?)?
                }
                (None, _) => println!("{}", serde_json::to_string_pretty(&rows)?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyProps { seed, out } => {
            let report = runner::run_verify_props(seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            emit(out.as_deref(), &text)?;
            if report.pass {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("property verification FAILED");
                Ok(ExitCode::from(1))
            }
        }
        Command::Diversity {
            model,
            data,
            max_points,
            out,
        } => {
            let model = Arc::new(load_model(&model)?);
            let dataset = read_dataset(&data)?;
            let diversity = runner::run_diversity(&model, &dataset, max_points)?;
            let text = serde_json::to_string_pretty(&serde_json::json!({
                "diversity": diversity,
                "k": model.n_trees(),
                "n_points": dataset.n_rows().min(max_points),
            }))?;
            emit(out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Nll {
            model,
            data,
            ode_steps,
            hutchinson,
            seed,
            out,
        } => {
            let model = Arc::new(load_model(&model)?);
            let dataset = read_dataset(&data)?;
            let req = runner::NllRequest {
                n_ode_steps: ode_steps,
                hutchinson_probes: hutchinson,
                seed,
            };
            let nlls = runner::run_nll(&model, &dataset, &req)?;
            match out {
                Some(path) => runner::write_nll_csv(&nlls, &path)?,
                None => print_nll(&nlls),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn emit(out: Option<&std::path::Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn print_nll(nlls: &[f64]) {
    for (i, v) in nlls.iter().enumerate() {
        println!("{i},{v}");
    }
    let mean = nlls.iter().sum::<f64>() / nlls.len().max(1) as f64;
    println!("mean,{mean}");
}

fn report_csv(report: &diffens_core::metrics::MetricReport) -> String {
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut text = String::from("ddsm_mean,ddsm_stderr,wasserstein1,coverage,diversity,n_eval,seed\n");
    text.push_str(&format!(
        "{},{},{},{},{},{},{}\n",
        fmt(report.ddsm_loss.map(|m| m.mean)),
        fmt(report.ddsm_loss.map(|m| m.stderr)),
        fmt(report.wasserstein1),
        fmt(report.coverage),
        fmt(report.diversity),
        report.metadata.n_eval,
        report.metadata.seed,
    ));
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
