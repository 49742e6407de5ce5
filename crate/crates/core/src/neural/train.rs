use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::adam::{Adam, AdamConfig};
use super::mlp::{Architecture, MlpModel, Pass};
use super::rbf::fit_rbf_centers;
use super::DEFAULT_LABEL_SCALE;
use crate::error::{DoaError, Result};
use crate::features::{Dataset, NormStats};

// ChaCha stream ids used by the trainer; each consumer gets its own sequence.
pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_SHUFFLE: u64 = 1;
pub(crate) const STREAM_DROPOUT: u64 = 2;
pub(crate) const STREAM_SPLIT: u64 = 3;
pub(crate) const STREAM_RBF: u64 = 4;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Mse,
}

/// Hyperparameters of the point-estimate trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub batch_norm: bool,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub l2_coeff: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    /// When set, [`crate::harness`] trains with k-fold weight averaging.
    pub kfold_k: Option<usize>,
    /// Width of a radial-basis front layer with k-means centers.
    pub rbf_units: Option<usize>,
    pub loss: Loss,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_sizes: vec![25, 25, 25],
            activation: Activation::Tanh,
            batch_norm: true,
            batch_size: 64,
            dropout_rate: 0.10,
            l2_coeff: 0.001,
            max_epochs: 2000,
            patience: 100,
            learning_rate: 1e-3,
            validation_fraction: 0.10,
            kfold_k: None,
            rbf_units: None,
            loss: Loss::Mse,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(DoaError::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(DoaError::Config("batch size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(DoaError::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(DoaError::Config("max_epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.l2_coeff >= 0.0) {
            return Err(DoaError::Config("learning rate must be positive and L2 non-negative".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(DoaError::Config(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.hidden_sizes.contains(&0) || self.rbf_units == Some(0) {
            return Err(DoaError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "epoch,train_loss,val_loss")?;
        for e in &self.epochs {
            writeln!(out, "{},{},{}", e.epoch, e.train_loss, e.val_loss)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once `patience` consecutive epochs fail to beat the best validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            StopDecision::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Inverted dropout: zeroes each entry with probability `rate` and scales
/// survivors by `1/(1−rate)`. Returns the applied mask.
pub fn apply_dropout<R: Rng + ?Sized>(a: &mut Array2<f64>, rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    let mask = Array2::from_shape_simple_fn(a.dim(), || if rng.random::<f64>() < rate { 0.0 } else { keep });
    *a *= &mask;
    mask
}

/// Mean squared error over all entries and its gradient with respect to `out`.
pub(crate) fn mse(out: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let count = out.len() as f64;
    let diff = out - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    (loss, diff * (2.0 / count))
}

pub(crate) fn targets_matrix<V: AsRef<[f64]>>(rows: &[V], scale: f64) -> Result<Array2<f64>> {
    let k = rows.first().map_or(0, |r| r.as_ref().len());
    let mut y = Array2::zeros((rows.len(), k));
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != k {
            return Err(DoaError::Shape(format!("target row {i} has {} entries, expected {k}", r.len())));
        }
        for (j, v) in r.iter().enumerate() {
            y[[i, j]] = v / scale;
        }
    }
    Ok(y)
}

/// Builds an untrained model for `config`, fitting RBF centers when requested.
pub(crate) fn initial_model<V: AsRef<[f64]>>(
    config: &TrainConfig,
    stats: NormStats,
    train_inputs: &[V],
    output_dim: usize,
) -> Result<MlpModel> {
    let input_dim = stats.dim();
    let rbf = match config.rbf_units {
        Some(units) => {
            let normed = train_inputs
                .iter()
                .map(|r| stats.apply(r.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            Some(fit_rbf_centers(&normed, units, config.seed ^ STREAM_RBF)?)
        }
        None => None,
    };
    let arch = Architecture {
        input_dim,
        hidden_sizes: config.hidden_sizes.clone(),
        activation: config.activation,
        batch_norm: config.batch_norm,
        output_dim,
        rbf,
    };
    let init_seed = stream_rng(config.seed, STREAM_INIT).random();
    MlpModel::new(&arch, stats, DEFAULT_LABEL_SCALE, init_seed)
}

/// Trains on a dataset, holding out `validation_fraction` for early stopping.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(MlpModel, TrainHistory)> {
    dataset.validate()?;
    train_arrays(&dataset.features(), &dataset.labels(), config)
}

/// As [`train`] on bare rows: raw inputs and targets in degrees.
pub fn train_arrays<V: AsRef<[f64]>, W: AsRef<[f64]>>(
    inputs: &[V],
    targets: &[W],
    config: &TrainConfig,
) -> Result<(MlpModel, TrainHistory)> {
    config.validate()?;
    let n = inputs.len();
    if n == 0 || targets.len() != n {
        return Err(DoaError::Config(format!(
            "{n} inputs and {} targets",
            targets.len()
        )));
    }
    let n_val = (n as f64 * config.validation_fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(DoaError::Config(format!(
            "validation split of {n_val} out of {n} samples leaves an empty partition"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(config.seed, STREAM_SPLIT));
    let (val_idx, train_idx) = order.split_at(n_val);

    let pick = |idx: &[usize]| -> (Vec<&[f64]>, Vec<&[f64]>) {
        (
            idx.iter().map(|&i| inputs[i].as_ref()).collect(),
            idx.iter().map(|&i| targets[i].as_ref()).collect(),
        )
    };
    let (train_x, train_y) = pick(train_idx);
    let (val_x, val_y) = pick(val_idx);

    let stats = NormStats::fit(&train_x)?;
    let output_dim = train_y[0].len();
    let model = initial_model(config, stats, &train_x, output_dim)?;
    fit(model, &train_x, &train_y, &val_x, &val_y, config)
}

/// Runs the epoch loop from `model`, returning the best-validation weights.
pub(crate) fn fit(
    mut model: MlpModel,
    train_x: &[&[f64]],
    train_y: &[&[f64]],
    val_x: &[&[f64]],
    val_y: &[&[f64]],
    config: &TrainConfig,
) -> Result<(MlpModel, TrainHistory)> {
    if val_x.is_empty() {
        return Err(DoaError::Config("empty validation split".into()));
    }
    if train_x.is_empty() {
        return Err(DoaError::Config("empty training split".into()));
    }
    let scale = model.label_scale;
    let x = model.prepare_inputs(train_x)?;
    let y = targets_matrix(train_y, scale)?;
    let vx = model.prepare_inputs(val_x)?;
    let vy = targets_matrix(val_y, scale)?;
    if y.ncols() != model.output_dim() || vy.ncols() != model.output_dim() {
        return Err(DoaError::Shape(format!(
            "targets have {} columns, model outputs {}",
            y.ncols(),
            model.output_dim()
        )));
    }

    let shapes: Vec<usize> = model.params().iter().map(|(p, _)| p.len()).collect();
    let decay: Vec<bool> = model.params().iter().map(|(_, d)| *d).collect();
    let mut adam = Adam::new(config.adam, config.learning_rate, &shapes);
    let mut shuffle_rng = stream_rng(config.seed, STREAM_SHUFFLE);
    let mut dropout_rng = stream_rng(config.seed, STREAM_DROPOUT);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = TrainHistory::default();
    let mut best = model.clone();

    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let bx = x.select(Axis(0), chunk);
            let by = y.select(Axis(0), chunk);
            let rng = (config.dropout_rate > 0.0).then_some(&mut dropout_rng);
            let (out, cache) = model.forward_train(&bx, config.dropout_rate, rng);
            let (data_loss, d_out) = mse(&out, &by);
            let penalty = config.l2_coeff * model.weight_norm_sq();
            let loss = data_loss + penalty;
            if !loss.is_finite() {
                return Err(DoaError::Numeric(format!(
                    "loss became {loss} at epoch {epoch}, batch {b}"
                )));
            }
            epoch_loss += data_loss * chunk.len() as f64;
            let mut grads = model.backward(&cache, &d_out);
            if config.l2_coeff > 0.0 {
                for ((g, (p, _)), &d) in grads.iter_mut().zip(model.params()).zip(&decay) {
                    if d {
                        for (gi, pi) in g.iter_mut().zip(p) {
                            *gi += 2.0 * config.l2_coeff * pi;
                        }
                    }
                }
            }
            adam.step(model.params_mut(), &grads);
        }
        let train_loss = epoch_loss / n as f64;
        let (val_out, _) = model.forward_prepared(&vx, Pass::Inference);
        let (val_loss, _) = mse(&val_out, &vy);
        if !val_loss.is_finite() {
            return Err(DoaError::Numeric(format!("validation loss became {val_loss} at epoch {epoch}")));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    history.best_epoch = stopper.best_epoch();
    history.best_val_loss = stopper.best_loss();
    Ok((best, history))
}

/// Data loss plus L2 penalty on prepared inputs, using batch statistics and no dropout.
pub(crate) fn objective(model: &MlpModel, x: &Array2<f64>, y: &Array2<f64>, l2: f64) -> f64 {
    let (out, _) = model.forward_prepared(
        x,
        Pass::Train {
            dropout: 0.0,
            rng: None,
            update_running: false,
        },
    );
    mse(&out, y).0 + l2 * model.weight_norm_sq()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_contract() {
        let mut stop = EarlyStopping::new(3);
        let losses = [1.0, 1.1, 1.2, 1.3, 1.4];
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            if stop.observe(i + 1, l) == StopDecision::Stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(4));
        assert_eq!(stop.best_epoch(), 1);
    }

    #[test]
    fn dropout_fraction_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = 0.1;
        let mut a = Array2::from_elem((1000, 100), 1.0);
        apply_dropout(&mut a, p, &mut rng);
        let zeros = a.iter().filter(|v| **v == 0.0).count() as f64 / 1e5;
        assert!((zeros - p).abs() < 0.02, "fraction {zeros}");
        assert!(a.iter().all(|v| *v == 0.0 || *v == 1.0 / (1.0 - p)));
    }

    #[test]
    fn l2_penalty_raises_loss() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0, 1.0]).collect();
        let arch = Architecture {
            input_dim: 2,
            hidden_sizes: vec![4],
            activation: Activation::Tanh,
            batch_norm: false,
            output_dim: 1,
            rbf: None,
        };
        let model = MlpModel::new(&arch, NormStats::identity(2), 1.0, 1).unwrap();
        let x = model.prepare_inputs(&rows).unwrap();
        let y = Array2::zeros((20, 1));
        assert!(objective(&model, &x, &y, 0.01) > objective(&model, &x, &y, 0.0));
    }

    fn linear_rows(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-50.0..50.0)).collect())
            .collect();
        let targets = inputs.iter().map(|r| vec![r[0]]).collect();
        (inputs, targets)
    }

    #[test]
    fn linear_target_is_learned() {
        let (inputs, targets) = linear_rows(400, 1);
        let config = TrainConfig {
            hidden_sizes: vec![],
            activation: Activation::Linear,
            batch_norm: false,
            dropout_rate: 0.0,
            l2_coeff: 0.0,
            max_epochs: 200,
            patience: 200,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let (model, history) = train_arrays(&inputs, &targets, &config).unwrap();
        let last = history.epochs.last().unwrap();
        assert!(history.epochs.len() <= 200);
        assert!(last.train_loss < 1e-6, "train mse {}", last.train_loss);
        let pred = model.predict(&[12.0, 3.0, -7.0]).unwrap();
        assert!((pred[0] - 12.0).abs() < 0.1);
    }

    #[test]
    fn training_is_deterministic() {
        let (inputs, targets) = linear_rows(200, 2);
        let config = TrainConfig {
            hidden_sizes: vec![8, 8],
            dropout_rate: 0.0,
            max_epochs: 15,
            seed: 4,
            ..TrainConfig::default()
        };
        let (a, ha) = train_arrays(&inputs, &targets, &config).unwrap();
        let (b, hb) = train_arrays(&inputs, &targets, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        let with_dropout = TrainConfig { dropout_rate: 0.1, ..config };
        let (c, _) = train_arrays(&inputs, &targets, &with_dropout).unwrap();
        let (d, _) = train_arrays(&inputs, &targets, &with_dropout).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn restores_best_epoch_weights() {
        let (inputs, targets) = linear_rows(200, 3);
        let config = TrainConfig {
            hidden_sizes: vec![16],
            max_epochs: 60,
            patience: 5,
            learning_rate: 0.05,
            seed: 9,
            ..TrainConfig::default()
        };
        let (model, history) = train_arrays(&inputs, &targets, &config).unwrap();
        let best = history
            .epochs
            .iter()
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
            .unwrap();
        assert_eq!(best.epoch, history.best_epoch);
        if history.stopped_early {
            assert_eq!(history.epochs.len(), history.best_epoch + config.patience);
        }
        // Recompute validation loss of the returned model on the same split.
        let mut order: Vec<usize> = (0..200).collect();
        order.shuffle(&mut stream_rng(config.seed, STREAM_SPLIT));
        let val: Vec<usize> = order[..20].to_vec();
        let vx = model
            .prepare_inputs(&val.iter().map(|&i| inputs[i].clone()).collect::<Vec<_>>())
            .unwrap();
        let vy = targets_matrix(&val.iter().map(|&i| targets[i].clone()).collect::<Vec<_>>(), 90.0).unwrap();
        let (out, _) = model.forward_prepared(&vx, Pass::Inference);
        assert_eq!(mse(&out, &vy).0, history.best_val_loss);
    }

    #[test]
    fn rejects_bad_configs() {
        let (inputs, targets) = linear_rows(10, 1);
        let tiny = TrainConfig {
            validation_fraction: 0.01,
            ..TrainConfig::default()
        };
        assert!(matches!(train_arrays(&inputs, &targets, &tiny), Err(DoaError::Config(_))));
        let bad = TrainConfig {
            dropout_rate: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train_arrays(&inputs, &targets, &bad), Err(DoaError::Config(_))));
    }

    #[test]
    fn diverging_training_reports_numeric_error() {
        let (inputs, mut targets) = linear_rows(50, 1);
        targets[3][0] = f64::NAN;
        let config = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let err = train_arrays(&inputs, &targets, &config).unwrap_err();
        assert!(err.is_numeric(), "{err}");
    }
}
