use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use doa_core::features::Dataset;
use doa_core::harness::{
    evaluate_model, evaluate_music, load_or_generate_train, perturbation_for, run_experiment, snr_label,
    test_sets, train_estimator, write_error_report, EstimatorKind, EstimatorModel, ExperimentConfig,
    SeriesSummary,
};
use doa_core::DoaError;

/// Angle-of-arrival estimation with MUSIC and neural regressors.
#[derive(Debug, Parser)]
#[command(name = "doa", version)]
struct Cli {
    /// Overrides the master seed of the experiment config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Trainable {
    Mlp,
    RbfMlp,
    Bnn,
    Scheme,
}

impl From<Trainable> for EstimatorKind {
    fn from(t: Trainable) -> Self {
        match t {
            Trainable::Mlp => EstimatorKind::Mlp,
            Trainable::RbfMlp => EstimatorKind::RbfMlp,
            Trainable::Bnn => EstimatorKind::Bnn,
            Trainable::Scheme => EstimatorKind::Scheme,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset CSV (plus JSON sidecar) from an experiment config.
    GenData {
        config: PathBuf,
        out: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        /// SNR of a test split; defaults to the first configured test SNR.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
    },
    /// Train a neural estimator on a dataset and write the model JSON.
    Train {
        config: PathBuf,
        data: PathBuf,
        model_out: PathBuf,
        /// Defaults to the first neural estimator listed in the config.
        #[arg(long, value_enum)]
        estimator: Option<Trainable>,
    },
    /// Run MUSIC on a dataset and write a per-angle report CSV plus summary JSON.
    Music {
        config: PathBuf,
        data: PathBuf,
        report_out: PathBuf,
    },
    /// Evaluate a trained model on a dataset.
    Eval {
        model: PathBuf,
        data: PathBuf,
        report_out: PathBuf,
    },
    /// Run a full experiment: data, training, evaluation and reports.
    Compare { config: PathBuf, out_dir: PathBuf },
}

fn load_config(path: &Path, seed: Option<u64>) -> doa_core::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn load_data(path: &Path) -> doa_core::Result<Dataset> {
    Dataset::load(path).map_err(|e| e.context(format!("loading {}", path.display())))
}

fn print_summary(s: &SeriesSummary) {
    println!(
        "{} @ {} dB: n={} median={:.4} mean={:.4} p90={:.4} rmse={:.4} merged={}",
        s.estimator,
        snr_label(s.snr_db),
        s.summary.count,
        s.summary.median,
        s.summary.mean,
        s.summary.p90,
        s.summary.rmse,
        s.merged
    );
}

fn run(cli: Cli) -> doa_core::Result<()> {
    match cli.command {
        Command::GenData {
            config,
            out,
            split,
            snr,
        } => {
            let mut config = load_config(&config, cli.seed)?;
            let seeds = config.seeds();
            let perturbation = perturbation_for(&config, &seeds)?;
            let data = match split {
                Split::Train => {
                    config.train_data = None;
                    load_or_generate_train(&config, &seeds, &perturbation)?
                }
                Split::Test => {
                    config.test_data = None;
                    if let Some(s) = snr {
                        config.test_snr_db = vec![s];
                    }
                    config.test_snr_db.truncate(1);
                    test_sets(&config, &seeds, &perturbation)?
                        .pop()
                        .ok_or_else(|| DoaError::Config("no test SNR configured".into()))?
                        .1
                }
            };
            data.save(&out)?;
            println!(
                "wrote {} samples ({} features, {} angles) to {}",
                data.len(),
                data.feature_dim(),
                data.label_dim(),
                out.display()
            );
        }
        Command::Train {
            config,
            data,
            model_out,
            estimator,
        } => {
            let config = load_config(&config, cli.seed)?;
            let kind = match estimator {
                Some(t) => t.into(),
                None => config
                    .estimators
                    .iter()
                    .copied()
                    .find(|e| e.is_neural())
                    .unwrap_or(EstimatorKind::Mlp),
            };
            let data = load_data(&data)?;
            let (model, _) = train_estimator(kind, &config, &config.seeds(), &data)?;
            model.save(&model_out)?;
            println!("trained {} on {} samples, saved to {}", kind.name(), data.len(), model_out.display());
        }
        Command::Music {
            config,
            data,
            report_out,
        } => {
            let config = load_config(&config, cli.seed)?;
            let data = load_data(&data)?;
            let report = evaluate_music(&data, config.music_resolution_deg)?;
            print_summary(&write_error_report(&report_out, &report, data.meta.snr_db)?);
        }
        Command::Eval {
            model,
            data,
            report_out,
        } => {
            let model = EstimatorModel::load(&model).map_err(|e| e.context(format!("loading {}", model.display())))?;
            let name = match &model {
                EstimatorModel::Mlp(m) if m.rbf.is_some() => "rbf_mlp",
                EstimatorModel::Mlp(_) => "mlp",
                EstimatorModel::Bnn(_) => "bnn",
                EstimatorModel::Scheme(_) => "scheme",
            };
            let data = load_data(&data)?;
            let report = evaluate_model(name, &model, &data)?;
            print_summary(&write_error_report(&report_out, &report, data.meta.snr_db)?);
        }
        Command::Compare { config, out_dir } => {
            let config = load_config(&config, cli.seed)?;
            run_experiment(&config, &out_dir)?;
            let report = std::fs::read_to_string(out_dir.join("report.csv"))?;
            print!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
