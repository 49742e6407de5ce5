//! Joint, parallel and serial compositions of regressors for several angles.
//!
//! * joint: one network with `K` outputs.
//! * parallel: `K` networks, network `i` learns the `i`-th smallest angle.
//! * serial: network `i` sees the features plus angles `0..i`. It is trained on
//!   the true angles and fed its predecessors' predictions at inference.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::features::Dataset;
use crate::neural::{train_arrays, MlpModel, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    #[default]
    Joint,
    Parallel,
    Serial,
}

impl SchemeKind {
    pub fn num_stages(self, num_angles: usize) -> usize {
        match self {
            SchemeKind::Joint => 1,
            SchemeKind::Parallel | SchemeKind::Serial => num_angles,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Joint => "joint",
            SchemeKind::Parallel => "parallel",
            SchemeKind::Serial => "serial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub num_angles: usize,
    /// One training configuration per stage.
    pub stage_configs: Vec<TrainConfig>,
}

impl SchemeSpec {
    /// Every stage uses `base`, with stage `i` seeded `base.seed + i`.
    pub fn uniform(kind: SchemeKind, num_angles: usize, base: &TrainConfig) -> Self {
        let stage_configs = (0..kind.num_stages(num_angles))
            .map(|i| TrainConfig {
                seed: base.seed.wrapping_add(i as u64),
                ..base.clone()
            })
            .collect();
        SchemeSpec {
            kind,
            num_angles,
            stage_configs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_angles == 0 {
            return Err(DoaError::Config("scheme needs at least one angle".into()));
        }
        let stages = self.kind.num_stages(self.num_angles);
        if self.stage_configs.len() != stages {
            return Err(DoaError::Config(format!(
                "{} scheme for {} angles needs {stages} stage configs, got {}",
                self.kind.name(),
                self.num_angles,
                self.stage_configs.len()
            )));
        }
        self.stage_configs.iter().try_for_each(TrainConfig::validate)
    }

    /// Input width of each stage for a given feature dimension.
    pub fn stage_input_dims(&self, feature_dim: usize) -> Vec<usize> {
        match self.kind {
            SchemeKind::Joint | SchemeKind::Parallel => vec![feature_dim; self.kind.num_stages(self.num_angles)],
            SchemeKind::Serial => (0..self.num_angles).map(|i| feature_dim + i).collect(),
        }
    }
}

/// Anything that maps input rows to output rows; lets schemes run over stubs.
pub trait AngleRegressor {
    fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

impl AngleRegressor for MlpModel {
    fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.predict_batch(rows)
    }
}

/// A trained scheme. Stages are stored in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeModel<M = MlpModel> {
    pub kind: SchemeKind,
    pub num_angles: usize,
    pub stages: Vec<M>,
}

impl SchemeModel<MlpModel> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let scheme: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if scheme.stages.len() != scheme.kind.num_stages(scheme.num_angles) {
            return Err(DoaError::Shape("scheme stage count does not match its kind".into()));
        }
        scheme.stages.iter().try_for_each(MlpModel::validate)?;
        Ok(scheme)
    }
}

/// Trains every stage of `spec`; parallel stages train concurrently.
pub fn train_scheme(dataset: &Dataset, spec: &SchemeSpec) -> Result<(SchemeModel, Vec<TrainHistory>)> {
    spec.validate()?;
    let (_, k) = dataset.validate()?;
    if k != spec.num_angles {
        return Err(DoaError::Config(format!(
            "dataset has {k} angles per sample, scheme expects {}",
            spec.num_angles
        )));
    }
    let features = dataset.features();
    let labels = dataset.labels();
    let trained: Vec<(MlpModel, TrainHistory)> = match spec.kind {
        SchemeKind::Joint => vec![train_arrays(&features, &labels, &spec.stage_configs[0])?],
        SchemeKind::Parallel => spec
            .stage_configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let targets: Vec<[f64; 1]> = labels.iter().map(|l| [l[i]]).collect();
                train_arrays(&features, &targets, cfg)
            })
            .collect::<Result<_>>()?,
        SchemeKind::Serial => spec
            .stage_configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let inputs: Vec<Vec<f64>> = features
                    .iter()
                    .zip(&labels)
                    .map(|(f, l)| f.iter().chain(&l[..i]).copied().collect())
                    .collect();
                let targets: Vec<[f64; 1]> = labels.iter().map(|l| [l[i]]).collect();
                train_arrays(&inputs, &targets, cfg)
            })
            .collect::<Result<_>>()?,
    };
    let (stages, histories) = trained.into_iter().unzip();
    Ok((
        SchemeModel {
            kind: spec.kind,
            num_angles: spec.num_angles,
            stages,
        },
        histories,
    ))
}

/// Sorted angle estimates for one feature vector.
pub fn predict_scheme<M: AngleRegressor>(scheme: &SchemeModel<M>, features: &[f64]) -> Result<Vec<f64>> {
    Ok(predict_scheme_batch(scheme, &[features.to_vec()])?
        .pop()
        .expect("one row"))
}

/// Sorted angle estimates for a batch of feature vectors.
pub fn predict_scheme_batch<M: AngleRegressor>(
    scheme: &SchemeModel<M>,
    rows: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let k = scheme.num_angles;
    if scheme.stages.len() != scheme.kind.num_stages(k) {
        return Err(DoaError::Shape("scheme stage count does not match its kind".into()));
    }
    let mut out: Vec<Vec<f64>> = match scheme.kind {
        SchemeKind::Joint => scheme.stages[0].predict_rows(rows)?,
        SchemeKind::Parallel => {
            let mut out = vec![Vec::with_capacity(k); rows.len()];
            for stage in &scheme.stages {
                for (o, p) in out.iter_mut().zip(stage.predict_rows(rows)?) {
                    o.push(first_output(&p)?);
                }
            }
            out
        }
        SchemeKind::Serial => {
            let mut inputs = rows.to_vec();
            let mut out = vec![Vec::with_capacity(k); rows.len()];
            for stage in &scheme.stages {
                let preds = stage.predict_rows(&inputs)?;
                for ((o, input), p) in out.iter_mut().zip(&mut inputs).zip(preds) {
                    let v = first_output(&p)?;
                    o.push(v);
                    input.push(v);
                }
            }
            out
        }
    };
    for o in &mut out {
        if o.len() != k {
            return Err(DoaError::Shape(format!("scheme produced {} angles, expected {k}", o.len())));
        }
        o.sort_by(f64::total_cmp);
    }
    Ok(out)
}

fn first_output(p: &[f64]) -> Result<f64> {
    match p {
        [v] => Ok(*v),
        _ => Err(DoaError::Shape(format!("stage returned {} outputs, expected 1", p.len()))),
    }
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use super::*;
    use crate::array_signal::ArrayConfig;
    use crate::features::generate_dataset;

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_sizes: vec![8],
            max_epochs: 15,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_angle_schemes_coincide() {
        let cfg = ArrayConfig::half_wavelength(4, 1e6, 64);
        let ds = generate_dataset(&cfg, 120, 1, 20.0, 5).unwrap();
        let test = generate_dataset(&cfg, 10, 1, 20.0, 6).unwrap();
        let rows: Vec<Vec<f64>> = test.samples.iter().map(|s| s.features.0.clone()).collect();
        let preds: Vec<Vec<Vec<f64>>> = [SchemeKind::Joint, SchemeKind::Parallel, SchemeKind::Serial]
            .into_iter()
            .map(|kind| {
                let (model, _) = train_scheme(&ds, &SchemeSpec::uniform(kind, 1, &small_config(3))).unwrap();
                predict_scheme_batch(&model, &rows).unwrap()
            })
            .collect();
        assert_eq!(preds[0], preds[1]);
        assert_eq!(preds[0], preds[2]);
    }

    #[test]
    fn stage_shapes() {
        let cfg = ArrayConfig::half_wavelength(6, 1e6, 32);
        let ds = generate_dataset(&cfg, 60, 2, 20.0, 1).unwrap();
        let (joint, _) = train_scheme(&ds, &SchemeSpec::uniform(SchemeKind::Joint, 2, &small_config(0))).unwrap();
        assert_eq!(joint.stages.len(), 1);
        assert_eq!(joint.stages[0].output_dim(), 2);

        let spec = SchemeSpec::uniform(SchemeKind::Serial, 3, &small_config(0));
        assert_eq!(spec.stage_input_dims(42), vec![42, 43, 44]);
        let ds3 = generate_dataset(&cfg, 60, 3, 20.0, 1).unwrap();
        let (serial, _) = train_scheme(&ds3, &spec).unwrap();
        let dims: Vec<usize> = serial.stages.iter().map(MlpModel::input_dim).collect();
        assert_eq!(dims, vec![42, 43, 44]);
        assert!(train_scheme(&ds, &spec).is_err());
    }

    #[test]
    fn uniform_spec_offsets_seeds() {
        let spec = SchemeSpec::uniform(SchemeKind::Parallel, 3, &small_config(10));
        let seeds: Vec<u64> = spec.stage_configs.iter().map(|c| c.seed).collect();
        assert_eq!(seeds, vec![10, 11, 12]);
    }

    /// Returns `offset + Σ inputs` and records every row it sees.
    struct Recorder {
        offset: f64,
        seen: RefCell<Vec<Vec<f64>>>,
    }

    impl AngleRegressor for Recorder {
        fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
            self.seen.borrow_mut().extend(rows.iter().cloned());
            Ok(rows.iter().map(|r| vec![self.offset + r.iter().sum::<f64>()]).collect())
        }
    }

    fn recorder(offset: f64) -> Recorder {
        Recorder {
            offset,
            seen: RefCell::new(Vec::new()),
        }
    }

    #[test]
    fn serial_feeds_predictions_forward() {
        let scheme = SchemeModel {
            kind: SchemeKind::Serial,
            num_angles: 2,
            stages: vec![recorder(1.0), recorder(-100.0)],
        };
        let out = predict_scheme(&scheme, &[2.0, 3.0]).unwrap();
        // stage 0: 1 + 5 = 6; stage 1 sees [2, 3, 6] and returns -100 + 11.
        assert_eq!(*scheme.stages[0].seen.borrow(), vec![vec![2.0, 3.0]]);
        assert_eq!(*scheme.stages[1].seen.borrow(), vec![vec![2.0, 3.0, 6.0]]);
        assert_eq!(out, vec![-89.0, 6.0]);
    }

    #[test]
    fn parallel_output_is_sorted_stage_outputs() {
        let scheme = SchemeModel {
            kind: SchemeKind::Parallel,
            num_angles: 2,
            stages: vec![recorder(10.0), recorder(-10.0)],
        };
        assert_eq!(predict_scheme(&scheme, &[1.0]).unwrap(), vec![-9.0, 11.0]);
        assert_eq!(*scheme.stages[1].seen.borrow(), vec![vec![1.0]]);
    }
}
