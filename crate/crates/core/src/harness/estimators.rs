use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DerivedSeeds, EstimatorKind, ExperimentConfig};
use super::metrics::{matched_error, ErrorReport, SampleResult};
use crate::array_signal::ArrayConfig;
use crate::error::{DoaError, Result};
use crate::features::{covariance_from_features, Dataset};
use crate::music::MusicEstimator;
use crate::neural::{kfold_train, predict_bnn_batch, train, train_bnn, BnnModel, MlpModel, TrainConfig, TrainHistory};
use crate::schemes::{predict_scheme_batch, train_scheme, SchemeModel, SchemeSpec};

/// Angles estimated for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// Sorted ascending.
    pub angles_deg: Vec<f64>,
    pub merged: bool,
    pub std_deg: Option<Vec<f64>>,
}

/// A trained neural estimator as stored in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum EstimatorModel {
    Mlp(MlpModel),
    Bnn(BnnEstimator),
    Scheme(SchemeModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnnEstimator {
    pub network: BnnModel,
    pub mc_samples: usize,
    pub seed: u64,
}

/// Training curves of whatever was fitted.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingRecord {
    /// One history per trained network (several for k-fold and schemes).
    Histories(Vec<TrainHistory>),
    /// Mean variational objective per epoch.
    Objective(Vec<f64>),
}

impl EstimatorModel {
    pub fn input_dim(&self) -> usize {
        match self {
            EstimatorModel::Mlp(m) => m.input_dim(),
            EstimatorModel::Bnn(b) => b.network.input_dim(),
            EstimatorModel::Scheme(s) => s.stages.first().map_or(0, MlpModel::input_dim),
        }
    }

    pub fn estimate<V: AsRef<[f64]> + Sync>(&self, rows: &[V]) -> Result<Vec<Estimate>> {
        let plain = |preds: Vec<Vec<f64>>| {
            preds
                .into_iter()
                .map(|mut p| {
                    p.sort_by(f64::total_cmp);
                    Estimate {
                        angles_deg: p,
                        merged: false,
                        std_deg: None,
                    }
                })
                .collect()
        };
        Ok(match self {
            EstimatorModel::Mlp(m) => plain(m.predict_batch(rows)?),
            EstimatorModel::Scheme(s) => {
                let owned: Vec<Vec<f64>> = rows.iter().map(|r| r.as_ref().to_vec()).collect();
                plain(predict_scheme_batch(s, &owned)?)
            }
            EstimatorModel::Bnn(b) => predict_bnn_batch(&b.network, rows, b.mc_samples, b.seed)?
                .into_iter()
                .map(|p| {
                    let mut order: Vec<usize> = (0..p.mean.len()).collect();
                    order.sort_by(|&i, &j| p.mean[i].total_cmp(&p.mean[j]));
                    Estimate {
                        angles_deg: order.iter().map(|&i| p.mean[i]).collect(),
                        merged: false,
                        std_deg: Some(order.iter().map(|&i| p.std[i]).collect()),
                    }
                })
                .collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: EstimatorModel = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        match &model {
            EstimatorModel::Mlp(m) => m.validate()?,
            EstimatorModel::Bnn(b) => b.network.validate()?,
            EstimatorModel::Scheme(s) => s.stages.iter().try_for_each(MlpModel::validate)?,
        }
        Ok(model)
    }
}

/// Trains the neural estimator `kind` as configured by `config`.
pub fn train_estimator(
    kind: EstimatorKind,
    config: &ExperimentConfig,
    seeds: &DerivedSeeds,
    data: &Dataset,
) -> Result<(EstimatorModel, TrainingRecord)> {
    let base = TrainConfig {
        seed: seeds.training,
        ..config.train.clone()
    };
    let fit_mlp = |cfg: &TrainConfig| -> Result<(EstimatorModel, TrainingRecord)> {
        match cfg.kfold_k {
            Some(k) => {
                let r = kfold_train(data, cfg, k)?;
                Ok((EstimatorModel::Mlp(r.model), TrainingRecord::Histories(r.histories)))
            }
            None => {
                let (m, h) = train(data, cfg)?;
                Ok((EstimatorModel::Mlp(m), TrainingRecord::Histories(vec![h])))
            }
        }
    };
    let result = match kind {
        EstimatorKind::Music => Err(DoaError::Config("MUSIC has nothing to train".into())),
        EstimatorKind::Mlp => fit_mlp(&TrainConfig {
            rbf_units: None,
            ..base
        }),
        EstimatorKind::RbfMlp => fit_mlp(&TrainConfig {
            rbf_units: Some(config.rbf_units),
            ..base
        }),
        EstimatorKind::Bnn => {
            let cfg = crate::neural::BnnConfig {
                seed: seeds.training,
                ..config.bnn.clone()
            };
            let (network, objective) = train_bnn(data, &cfg, config.bnn_train_mc_samples)?;
            Ok((
                EstimatorModel::Bnn(BnnEstimator {
                    network,
                    mc_samples: config.bnn_mc_samples,
                    seed: seeds.bnn_prediction,
                }),
                TrainingRecord::Objective(objective),
            ))
        }
        EstimatorKind::Scheme => {
            let spec = SchemeSpec::uniform(config.scheme, config.num_sources, &base);
            let (model, histories) = train_scheme(data, &spec)?;
            Ok((EstimatorModel::Scheme(model), TrainingRecord::Histories(histories)))
        }
    };
    result.map_err(|e| e.context(format!("training {}", kind.name())))
}

/// MUSIC applied to the covariance encoded in each feature vector.
#[derive(Debug, Clone)]
pub struct MusicRunner {
    estimator: MusicEstimator,
    num_sources: usize,
}

impl MusicRunner {
    pub fn new(config: &ArrayConfig, resolution_deg: f64, num_sources: usize) -> Result<Self> {
        Ok(MusicRunner {
            estimator: MusicEstimator::new(config, resolution_deg)?,
            num_sources,
        })
    }

    pub fn estimate<V: AsRef<[f64]> + Sync>(&self, rows: &[V]) -> Result<Vec<Estimate>> {
        let m = self.estimator.config().num_antennas;
        rows.par_iter()
            .map(|row| {
                let r = covariance_from_features(row.as_ref(), m)?;
                let pick = self.estimator.estimate_covariance(&r, self.num_sources)?;
                let mut angles = pick.angles_deg;
                angles.sort_by(f64::total_cmp);
                Ok(Estimate {
                    angles_deg: angles,
                    merged: pick.merged,
                    std_deg: None,
                })
            })
            .collect()
    }
}

/// Scores estimates against the labels of `data`.
pub fn score(name: &str, data: &Dataset, estimates: Vec<Estimate>) -> Result<ErrorReport> {
    if estimates.len() != data.len() {
        return Err(DoaError::Shape(format!(
            "{} estimates for {} samples",
            estimates.len(),
            data.len()
        )));
    }
    let samples = data
        .samples
        .iter()
        .zip(estimates)
        .map(|(s, e)| {
            let errors = matched_error(&s.labels_deg, &e.angles_deg)?;
            Ok(SampleResult {
                true_deg: s.labels_deg.clone(),
                predicted_deg: e.angles_deg,
                errors,
                merged: e.merged,
                std_deg: e.std_deg,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport::new(name, samples))
}

/// Runs MUSIC over a dataset.
pub fn evaluate_music(data: &Dataset, resolution_deg: f64) -> Result<ErrorReport> {
    let (_, k) = data.validate()?;
    let runner = MusicRunner::new(&data.meta.config, resolution_deg, k)?;
    score("music", data, runner.estimate(&data.features())?)
}

/// Runs a trained estimator over a dataset.
pub fn evaluate_model(name: &str, model: &EstimatorModel, data: &Dataset) -> Result<ErrorReport> {
    let (d, _) = data.validate()?;
    if d != model.input_dim() {
        return Err(DoaError::Shape(format!(
            "model expects {} features, dataset has {d}",
            model.input_dim()
        )));
    }
    score(name, data, model.estimate(&data.features())?)
}
