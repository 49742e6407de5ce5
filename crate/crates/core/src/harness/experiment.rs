use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::{DerivedSeeds, EstimatorKind, ExperimentConfig};
use super::estimators::{evaluate_model, evaluate_music, EstimatorModel, TrainingRecord};
use super::metrics::ErrorReport;
use super::report::{snr_label, write_ecdf_csv, write_json, write_scatter_csv, write_summary_csv, SeriesSummary};
use crate::array_signal::SpacingPerturbation;
use crate::error::{DoaError, Result};
use crate::features::{Dataset, DatasetSpec};

/// One estimator evaluated on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub snr_db: f64,
    pub report: ErrorReport,
}

/// Everything [`run_experiment`] computed; the same content is on disk.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub seeds: DerivedSeeds,
    pub perturbation: Option<SpacingPerturbation>,
    pub models: Vec<(EstimatorKind, EstimatorModel)>,
    pub series: Vec<SeriesResult>,
}

impl ExperimentReport {
    pub fn find(&self, estimator: EstimatorKind, snr_db: f64) -> Option<&ErrorReport> {
        self.series
            .iter()
            .find(|s| s.report.estimator == estimator.name() && s.snr_db == snr_db)
            .map(|s| &s.report)
    }
}

#[derive(Serialize)]
struct NetworkSummary {
    epochs: usize,
    best_epoch: usize,
    best_val_loss: f64,
    stopped_early: bool,
}

#[derive(Serialize)]
struct TrainingSummary {
    estimator: &'static str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    networks: Vec<NetworkSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_objective: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    seeds: DerivedSeeds,
    #[serde(skip_serializing_if = "Option::is_none")]
    perturbation_epsilon: Option<&'a [f64]>,
    training: Vec<TrainingSummary>,
    results: &'a [SeriesSummary],
    config: &'a ExperimentConfig,
}

/// The spacing errors of a run, drawn once from the perturbation seed.
pub fn perturbation_for(config: &ExperimentConfig, seeds: &DerivedSeeds) -> Result<Option<SpacingPerturbation>> {
    config
        .perturbation_fraction
        .map(|f| SpacingPerturbation::uniform(&config.array, f, seeds.perturbation))
        .transpose()
}

fn dataset_spec(
    config: &ExperimentConfig,
    num_samples: usize,
    snr_db: f64,
    seed: u64,
    perturbation: &Option<SpacingPerturbation>,
) -> DatasetSpec {
    DatasetSpec {
        source_power: config.source_power,
        signal_kind: config.signal_kind,
        ..DatasetSpec::new(config.array.clone(), num_samples, config.num_sources, snr_db, seed)
    }
    .with_perturbation(perturbation.clone())
}

fn check_loaded(config: &ExperimentConfig, data: &Dataset, path: &Path) -> Result<()> {
    let (_, k) = data.validate()?;
    if k != config.num_sources || data.meta.config.num_antennas != config.array.num_antennas {
        return Err(DoaError::Config(format!(
            "{} holds {k} sources on {} antennas, config expects {} on {}",
            path.display(),
            data.meta.config.num_antennas,
            config.num_sources,
            config.array.num_antennas
        )));
    }
    Ok(())
}

/// The training set: loaded from `train_data` or generated at `train_snr_db`.
pub fn load_or_generate_train(
    config: &ExperimentConfig,
    seeds: &DerivedSeeds,
    perturbation: &Option<SpacingPerturbation>,
) -> Result<Dataset> {
    match &config.train_data {
        Some(path) => {
            let data = Dataset::load(path).map_err(|e| e.context(format!("loading {}", path.display())))?;
            check_loaded(config, &data, path)?;
            Ok(data)
        }
        None => dataset_spec(config, config.train_samples, config.train_snr_db, seeds.train_data, perturbation)
            .with_sampler(config.train_sampler)
            .generate()
            .map_err(|e| e.context("generating training data")),
    }
}

/// `(snr_db, dataset)` for every test series.
pub fn test_sets(
    config: &ExperimentConfig,
    seeds: &DerivedSeeds,
    perturbation: &Option<SpacingPerturbation>,
) -> Result<Vec<(f64, Dataset)>> {
    if let Some(path) = &config.test_data {
        let data = Dataset::load(path).map_err(|e| e.context(format!("loading {}", path.display())))?;
        check_loaded(config, &data, path)?;
        return Ok(vec![(data.meta.snr_db, data)]);
    }
    config
        .test_snr_db
        .iter()
        .map(|&snr| {
            dataset_spec(config, config.test_samples, snr, seeds.test_data, perturbation)
                .with_sampler(config.test_sampler)
                .generate()
                .map(|d| (snr, d))
                .map_err(|e| e.context(format!("generating test data at {snr} dB")))
        })
        .collect()
}

fn write_history(out_dir: &Path, kind: EstimatorKind, record: &TrainingRecord) -> Result<TrainingSummary> {
    let name = kind.name();
    Ok(match record {
        TrainingRecord::Histories(histories) => {
            for (i, h) in histories.iter().enumerate() {
                let file = if histories.len() == 1 {
                    format!("history_{name}.csv")
                } else {
                    format!("history_{name}_{i}.csv")
                };
                h.write_csv(&out_dir.join(file))?;
            }
            TrainingSummary {
                estimator: name,
                networks: histories
                    .iter()
                    .map(|h| NetworkSummary {
                        epochs: h.epochs.len(),
                        best_epoch: h.best_epoch,
                        best_val_loss: h.best_val_loss,
                        stopped_early: h.stopped_early,
                    })
                    .collect(),
                final_objective: None,
            }
        }
        TrainingRecord::Objective(objective) => {
            let mut w = std::io::BufWriter::new(fs::File::create(out_dir.join(format!("history_{name}.csv")))?);
            writeln!(w, "epoch,objective")?;
            for (i, v) in objective.iter().enumerate() {
                writeln!(w, "{},{v}", i + 1)?;
            }
            w.flush()?;
            TrainingSummary {
                estimator: name,
                networks: Vec::new(),
                final_objective: objective.last().copied(),
            }
        }
    })
}

/// Generates data, trains the selected estimators, evaluates them on every
/// test set and writes all artifacts into `out_dir`.
///
/// Files: `summary.json`, `report.csv`, `ecdf_<est>_snr<snr>.csv`,
/// `scatter_<est>_snr<snr>.csv`, `history_<est>*.csv` and `models/<est>.json`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    config.validate()?;
    fs::create_dir_all(out_dir.join("models"))?;
    let seeds = config.seeds();
    let perturbation = perturbation_for(config, &seeds)?;

    let mut models = Vec::new();
    let mut training = Vec::new();
    if config.needs_training() {
        let train_set = load_or_generate_train(config, &seeds, &perturbation)?;
        for &kind in config.estimators.iter().filter(|e| e.is_neural()) {
            let (model, record) = super::estimators::train_estimator(kind, config, &seeds, &train_set)?;
            model.save(&out_dir.join("models").join(format!("{}.json", kind.name())))?;
            training.push(write_history(out_dir, kind, &record)?);
            models.push((kind, model));
        }
    }

    let mut series = Vec::new();
    let mut rows = Vec::new();
    for (snr, test) in test_sets(config, &seeds, &perturbation)? {
        for &kind in &config.estimators {
            let report = match kind {
                EstimatorKind::Music => evaluate_music(&test, config.music_resolution_deg),
                _ => {
                    let model = &models.iter().find(|(k, _)| *k == kind).expect("trained above").1;
                    evaluate_model(kind.name(), model, &test)
                }
            }
            .map_err(|e| e.context(format!("evaluating {} at {} dB", kind.name(), snr_label(snr))))?;
            let tag = format!("{}_snr{}", kind.name(), snr_label(snr));
            write_ecdf_csv(&out_dir.join(format!("ecdf_{tag}.csv")), &report.ecdf()?)?;
            write_scatter_csv(&out_dir.join(format!("scatter_{tag}.csv")), &report)?;
            rows.push(SeriesSummary::new(&report, snr)?);
            series.push(SeriesResult { snr_db: snr, report });
        }
    }
    write_summary_csv(&out_dir.join("report.csv"), &rows)?;
    write_json(
        &out_dir.join("summary.json"),
        &Summary {
            name: &config.name,
            seeds,
            perturbation_epsilon: perturbation.as_ref().map(|p| p.epsilon.as_slice()),
            training,
            results: &rows,
            config,
        },
    )?;
    Ok(ExperimentReport {
        seeds,
        perturbation,
        models,
        series,
    })
}
