use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array_signal::{ArrayConfig, SignalKind};
use crate::error::{DoaError, Result};
use crate::features::AngleSampler;
use crate::neural::{BnnConfig, TrainConfig};
use crate::schemes::SchemeKind;

/// Estimators an experiment can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Music,
    Mlp,
    RbfMlp,
    Bnn,
    Scheme,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Music => "music",
            EstimatorKind::Mlp => "mlp",
            EstimatorKind::RbfMlp => "rbf_mlp",
            EstimatorKind::Bnn => "bnn",
            EstimatorKind::Scheme => "scheme",
        }
    }

    pub fn is_neural(self) -> bool {
        self != EstimatorKind::Music
    }
}

/// Human-editable JSON description of one comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub array: ArrayConfig,
    pub num_sources: usize,
    pub source_power: f64,
    pub signal_kind: SignalKind,
    pub train_snr_db: f64,
    /// One test set, and one ECDF series per estimator, for each entry.
    pub test_snr_db: Vec<f64>,
    /// Per-element spacing errors drawn once per run, uniform in `±fraction·d`.
    pub perturbation_fraction: Option<f64>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train_sampler: AngleSampler,
    pub test_sampler: AngleSampler,
    /// Existing dataset CSVs to use instead of generating them.
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub estimators: Vec<EstimatorKind>,
    pub music_resolution_deg: f64,
    pub train: TrainConfig,
    pub rbf_units: usize,
    pub bnn: BnnConfig,
    pub bnn_train_mc_samples: usize,
    pub bnn_mc_samples: usize,
    pub scheme: SchemeKind,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            array: ArrayConfig::half_wavelength(6, 1e6, 4000),
            num_sources: 2,
            source_power: 1.0,
            signal_kind: SignalKind::ComplexGaussian,
            train_snr_db: 20.0,
            test_snr_db: vec![20.0],
            perturbation_fraction: None,
            train_samples: 4000,
            test_samples: 2000,
            train_sampler: AngleSampler::Uniform,
            test_sampler: AngleSampler::Uniform,
            train_data: None,
            test_data: None,
            estimators: vec![EstimatorKind::Music, EstimatorKind::Mlp],
            music_resolution_deg: 0.01,
            train: TrainConfig::default(),
            rbf_units: 100,
            bnn: BnnConfig::default(),
            bnn_train_mc_samples: 1,
            bnn_mc_samples: 100,
            scheme: SchemeKind::Serial,
            seed: 0,
        }
    }
}

/// Seeds of every random consumer, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub master: u64,
    pub train_data: u64,
    /// Shared by all test SNRs, so the sets differ only in noise level.
    pub test_data: u64,
    pub perturbation: u64,
    pub training: u64,
    pub bnn_prediction: u64,
}

impl DerivedSeeds {
    pub fn from_master(master: u64) -> Self {
        let derive = |stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(master);
            rng.set_stream(stream);
            rng.random::<u64>()
        };
        DerivedSeeds {
            master,
            train_data: derive(1),
            test_data: derive(2),
            perturbation: derive(3),
            training: derive(4),
            bnn_prediction: derive(5),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| {
            DoaError::from(e).context(format!("opening config {}", path.display()))
        })?;
        let mut config: ExperimentConfig = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| DoaError::from(e).context(format!("parsing config {}", path.display())))?;
        // Dataset paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.train_data, &mut config.test_data].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn seeds(&self) -> DerivedSeeds {
        DerivedSeeds::from_master(self.seed)
    }

    pub fn needs_training(&self) -> bool {
        self.estimators.iter().any(|e| e.is_neural())
    }

    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        if self.num_sources == 0 || self.num_sources >= self.array.num_antennas {
            return Err(DoaError::Config(format!(
                "{} sources need between 1 and {} antennas",
                self.num_sources, self.array.num_antennas
            )));
        }
        if self.estimators.is_empty() {
            return Err(DoaError::Config("no estimators selected".into()));
        }
        for (i, e) in self.estimators.iter().enumerate() {
            if self.estimators[..i].contains(e) {
                return Err(DoaError::Config(format!("estimator {} listed twice", e.name())));
            }
        }
        if self.test_snr_db.is_empty() && self.test_data.is_none() {
            return Err(DoaError::Config("no test SNR given".into()));
        }
        if self.test_samples == 0 || (self.needs_training() && self.train_samples == 0 && self.train_data.is_none()) {
            return Err(DoaError::Config("dataset sizes must be positive".into()));
        }
        if !(self.music_resolution_deg > 0.0) {
            return Err(DoaError::Config("music_resolution_deg must be positive".into()));
        }
        if self.estimators.contains(&EstimatorKind::Bnn) && (self.bnn_mc_samples == 0 || self.bnn_train_mc_samples == 0) {
            return Err(DoaError::Config("BNN Monte-Carlo sample counts must be positive".into()));
        }
        if self.estimators.contains(&EstimatorKind::RbfMlp) && self.rbf_units == 0 {
            return Err(DoaError::Config("rbf_units must be positive".into()));
        }
        for p in [&self.train_data, &self.test_data].into_iter().flatten() {
            if !p.exists() {
                return Err(DoaError::Config(format!("dataset {} does not exist", p.display())));
            }
        }
        self.train.validate()?;
        self.bnn.validate()
    }
}
