use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::adam::{Adam, AdamConfig};
use super::train::{stream_rng, targets_matrix, STREAM_DROPOUT, STREAM_INIT, STREAM_SHUFFLE};
use super::DEFAULT_LABEL_SCALE;
use crate::error::{DoaError, Result};
use crate::features::{Dataset, NormStats};

pub const BNN_FORMAT_VERSION: u32 = 1;

/// `ln(1 + eˣ)`, the map from ρ to a posterior standard deviation.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// KL divergence from `N(μ, σ²)` to the standard normal prior.
pub fn gaussian_kl(mu: f64, sigma: f64) -> f64 {
    0.5 * (mu * mu + sigma * sigma - 1.0 - 2.0 * sigma.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnnConfig {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Likelihood noise in scaled label units (degrees / label scale).
    pub likelihood_sigma: f64,
    /// Initial ρ for every weight, so the initial std is `softplus(init_rho)`.
    pub init_rho: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for BnnConfig {
    fn default() -> Self {
        BnnConfig {
            hidden_sizes: vec![25, 25, 25],
            activation: Activation::Relu,
            batch_size: 64,
            epochs: 300,
            learning_rate: 1e-3,
            likelihood_sigma: 0.02,
            init_rho: -5.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl BnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(DoaError::Config("batch_size must be at least 1".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(DoaError::Config("hidden layers must be non-empty".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.likelihood_sigma > 0.0) {
            return Err(DoaError::Config(
                "learning_rate and likelihood_sigma must be positive".into(),
            ));
        }
        if !self.init_rho.is_finite() {
            return Err(DoaError::Config("init_rho must be finite".into()));
        }
        Ok(())
    }
}

/// Dense layer with a factorized Gaussian posterior over weights and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnnLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `(fan_in, fan_out)`.
    pub weight_mu: Vec<f64>,
    pub weight_rho: Vec<f64>,
    pub bias_mu: Vec<f64>,
    pub bias_rho: Vec<f64>,
    pub activation: Activation,
}

impl BnnLayer {
    fn init<R: Rng>(fan_in: usize, fan_out: usize, activation: Activation, rho: f64, rng: &mut R) -> Self {
        let limit = (6.0 / fan_in as f64).sqrt();
        BnnLayer {
            fan_in,
            fan_out,
            weight_mu: (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect(),
            weight_rho: vec![rho; fan_in * fan_out],
            bias_mu: vec![0.0; fan_out],
            bias_rho: vec![rho; fan_out],
            activation,
        }
    }

    fn blocks(&self) -> [(&Vec<f64>, &Vec<f64>); 2] {
        [(&self.weight_mu, &self.weight_rho), (&self.bias_mu, &self.bias_rho)]
    }

    fn kl(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|(mu, rho)| mu.iter().zip(rho.iter()))
            .map(|(&m, &r)| gaussian_kl(m, softplus(r)))
            .sum()
    }
}

/// Variational network: per-weight means and raw scales plus input statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnnModel {
    pub format_version: u32,
    pub input_stats: NormStats,
    pub label_scale: f64,
    pub likelihood_sigma: f64,
    pub layers: Vec<BnnLayer>,
}

/// Monte-Carlo predictive summary in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnnPrediction {
    pub mean: Vec<f64>,
    /// Spread of the network output across posterior draws.
    pub std: Vec<f64>,
}

/// One concrete set of weights drawn from the posterior.
struct Draw {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    /// Standard-normal noise behind each weight and bias.
    xi_w: Vec<Vec<f64>>,
    xi_b: Vec<Vec<f64>>,
}

impl BnnModel {
    pub fn input_dim(&self) -> usize {
        self.input_stats.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    /// Total KL divergence of the posterior from the prior.
    pub fn kl(&self) -> f64 {
        self.layers.iter().map(BnnLayer::kl).sum()
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Draw {
        let mut draw = Draw {
            weights: Vec::with_capacity(self.layers.len()),
            biases: Vec::with_capacity(self.layers.len()),
            xi_w: Vec::with_capacity(self.layers.len()),
            xi_b: Vec::with_capacity(self.layers.len()),
        };
        for layer in &self.layers {
            let xi_w: Vec<f64> = (0..layer.weight_mu.len()).map(|_| rng.sample(StandardNormal)).collect();
            let xi_b: Vec<f64> = (0..layer.bias_mu.len()).map(|_| rng.sample(StandardNormal)).collect();
            let w: Vec<f64> = layer
                .weight_mu
                .iter()
                .zip(&layer.weight_rho)
                .zip(&xi_w)
                .map(|((m, r), x)| m + softplus(*r) * x)
                .collect();
            let b: Array1<f64> = layer
                .bias_mu
                .iter()
                .zip(&layer.bias_rho)
                .zip(&xi_b)
                .map(|((m, r), x)| m + softplus(*r) * x)
                .collect();
            draw.weights
                .push(Array2::from_shape_vec((layer.fan_in, layer.fan_out), w).expect("weight shape"));
            draw.biases.push(b);
            draw.xi_w.push(xi_w);
            draw.xi_b.push(xi_b);
        }
        draw
    }

    /// Returns the output and the per-layer `(input, pre-activation)` pairs.
    fn forward(&self, draw: &Draw, x: &Array2<f64>) -> (Array2<f64>, Vec<(Array2<f64>, Array2<f64>)>) {
        let mut h = x.clone();
        let mut cache = Vec::with_capacity(self.layers.len());
        for ((layer, w), b) in self.layers.iter().zip(&draw.weights).zip(&draw.biases) {
            let z = h.dot(w) + b;
            let act = layer.activation;
            let a = z.mapv(|v| act.apply(v));
            cache.push((h, z));
            h = a;
        }
        (h, cache)
    }

    fn prepare_inputs<V: AsRef<[f64]>>(&self, rows: &[V]) -> Result<Array2<f64>> {
        let mut x = Array2::zeros((rows.len(), self.input_dim()));
        for (i, row) in rows.iter().enumerate() {
            x.row_mut(i).assign(&Array1::from(self.input_stats.apply(row.as_ref())?));
        }
        Ok(x)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != BNN_FORMAT_VERSION {
            return Err(DoaError::Config(format!(
                "unsupported BNN format version {}",
                self.format_version
            )));
        }
        let mut width = self.input_dim();
        for layer in &self.layers {
            let nw = layer.fan_in * layer.fan_out;
            if layer.fan_in != width
                || layer.weight_mu.len() != nw
                || layer.weight_rho.len() != nw
                || layer.bias_mu.len() != layer.fan_out
                || layer.bias_rho.len() != layer.fan_out
            {
                return Err(DoaError::Shape("BNN layer shapes are inconsistent".into()));
            }
            let bad = layer
                .blocks()
                .iter()
                .any(|(mu, rho)| mu.iter().any(|v| !v.is_finite()) || rho.iter().any(|&r| !(softplus(r) > 0.0)));
            if bad {
                return Err(DoaError::Domain("BNN parameters must be finite with positive std".into()));
            }
            width = layer.fan_out;
        }
        if self.layers.is_empty() {
            return Err(DoaError::Shape("BNN has no layers".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: BnnModel = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        model.validate()?;
        Ok(model)
    }
}

/// Bayes-by-backprop training for a fixed number of epochs.
///
/// Each minibatch averages the gradient over `mc_samples` weight draws. The
/// per-sample objective is the Gaussian negative log-likelihood plus
/// `KL / N`, so the prior loses influence as the dataset grows. Returns the
/// model and the mean objective of each epoch.
pub fn train_bnn(dataset: &Dataset, config: &BnnConfig, mc_samples: usize) -> Result<(BnnModel, Vec<f64>)> {
    config.validate()?;
    let (_, label_dim) = dataset.validate()?;
    if mc_samples == 0 {
        return Err(DoaError::Config("mc_samples must be at least 1".into()));
    }
    let inputs = dataset.features();
    let stats = NormStats::fit(&inputs)?;
    let mut init_rng = stream_rng(config.seed, STREAM_INIT);
    let mut layers = Vec::new();
    let mut width = stats.dim();
    for &size in &config.hidden_sizes {
        layers.push(BnnLayer::init(width, size, config.activation, config.init_rho, &mut init_rng));
        width = size;
    }
    layers.push(BnnLayer::init(width, label_dim, Activation::Linear, config.init_rho, &mut init_rng));
    let mut model = BnnModel {
        format_version: BNN_FORMAT_VERSION,
        input_stats: stats,
        label_scale: DEFAULT_LABEL_SCALE,
        likelihood_sigma: config.likelihood_sigma,
        layers,
    };
    let x = model.prepare_inputs(&inputs)?;
    let y = targets_matrix(&dataset.labels(), model.label_scale)?;
    let n = x.nrows();
    let nf = n as f64;
    let var = config.likelihood_sigma * config.likelihood_sigma;

    let shapes: Vec<usize> = model
        .layers
        .iter()
        .flat_map(|l| [l.weight_mu.len(), l.weight_mu.len(), l.bias_mu.len(), l.bias_mu.len()])
        .collect();
    let mut adam = Adam::new(config.adam, config.learning_rate, &shapes);
    let mut shuffle_rng = stream_rng(config.seed, STREAM_SHUFFLE);
    let mut noise_rng = stream_rng(config.seed, STREAM_DROPOUT);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_nll = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let bx = x.select(Axis(0), chunk);
            let by = y.select(Axis(0), chunk);
            let b = chunk.len() as f64;
            let mut grads: Vec<Vec<f64>> = shapes.iter().map(|&s| vec![0.0; s]).collect();
            for _ in 0..mc_samples {
                let draw = model.sample(&mut noise_rng);
                let (out, cache) = model.forward(&draw, &bx);
                let diff = &out - &by;
                let nll = diff.iter().map(|d| d * d).sum::<f64>() / (2.0 * var * b);
                epoch_nll += nll * b / mc_samples as f64;
                let d_out = diff / (var * b);
                accumulate_gradients(&model, &draw, &cache, d_out, &mut grads, mc_samples as f64);
            }
            for (li, layer) in model.layers.iter().enumerate() {
                for (bi, (mu, rho)) in layer.blocks().iter().enumerate() {
                    let (gm, gr) = {
                        let (a, rest) = grads.split_at_mut(4 * li + 2 * bi + 1);
                        (&mut a[4 * li + 2 * bi], &mut rest[0])
                    };
                    for i in 0..mu.len() {
                        let sigma = softplus(rho[i]);
                        gm[i] += mu[i] / nf;
                        gr[i] += (sigma - 1.0 / sigma) / nf * logistic(rho[i]);
                    }
                }
            }
            let params: Vec<&mut Vec<f64>> = model
                .layers
                .iter_mut()
                .flat_map(|l| [&mut l.weight_mu, &mut l.weight_rho, &mut l.bias_mu, &mut l.bias_rho])
                .collect();
            adam.step(params, &grads);
        }
        let objective = epoch_nll / nf + model.kl() / nf;
        if !objective.is_finite() {
            return Err(DoaError::Numeric(format!("BNN objective became {objective} at epoch {epoch}")));
        }
        history.push(objective);
    }
    Ok((model, history))
}

/// Adds the likelihood gradient of one draw, divided by `count`, to `grads`.
fn accumulate_gradients(
    model: &BnnModel,
    draw: &Draw,
    cache: &[(Array2<f64>, Array2<f64>)],
    d_out: Array2<f64>,
    grads: &mut [Vec<f64>],
    count: f64,
) {
    let mut d_a = d_out;
    for li in (0..model.layers.len()).rev() {
        let layer = &model.layers[li];
        let (input, pre) = &cache[li];
        let act = layer.activation;
        let mut d_z = d_a;
        d_z.zip_mut_with(pre, |d, &z| *d *= act.derivative(z));
        let dw = input.t().dot(&d_z);
        let db = d_z.sum_axis(Axis(0));
        let blocks = [
            (dw.iter().cloned().collect::<Vec<_>>(), &layer.weight_rho, &draw.xi_w[li], 4 * li),
            (db.to_vec(), &layer.bias_rho, &draw.xi_b[li], 4 * li + 2),
        ];
        for (g, rho, xi, at) in blocks {
            for i in 0..g.len() {
                grads[at][i] += g[i] / count;
                grads[at + 1][i] += g[i] * xi[i] * logistic(rho[i]) / count;
            }
        }
        if li > 0 {
            d_a = d_z.dot(&draw.weights[li].t());
        } else {
            break;
        }
    }
}

/// Posterior predictive mean and spread for one raw feature vector.
pub fn predict_bnn(model: &BnnModel, features: &[f64], mc_samples: usize, seed: u64) -> Result<BnnPrediction> {
    Ok(predict_bnn_batch(model, &[features], mc_samples, seed)?
        .pop()
        .expect("one row"))
}

/// Batched prediction; every row sees the same `mc_samples` weight draws.
pub fn predict_bnn_batch<V: AsRef<[f64]>>(
    model: &BnnModel,
    rows: &[V],
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<BnnPrediction>> {
    if mc_samples == 0 {
        return Err(DoaError::Config("mc_samples must be at least 1".into()));
    }
    let x = model.prepare_inputs(rows)?;
    let k = model.output_dim();
    let mut sum = Array2::<f64>::zeros((x.nrows(), k));
    let mut sum_sq = Array2::<f64>::zeros((x.nrows(), k));
    let mut rng: ChaCha8Rng = stream_rng(seed, STREAM_DROPOUT);
    for _ in 0..mc_samples {
        let draw = model.sample(&mut rng);
        let (out, _) = model.forward(&draw, &x);
        let out = out * model.label_scale;
        sum += &out;
        sum_sq += &out.mapv(|v| v * v);
    }
    let m = mc_samples as f64;
    Ok(sum
        .rows()
        .into_iter()
        .zip(sum_sq.rows())
        .map(|(s, sq)| {
            let mean: Vec<f64> = s.iter().map(|v| v / m).collect();
            let std = sq
                .iter()
                .zip(&mean)
                .map(|(q, mu)| (q / m - mu * mu).max(0.0).sqrt())
                .collect();
            BnnPrediction { mean, std }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_signal::ArrayConfig;
    use crate::features::{FeatureVector, Sample};
    use crate::neural::train::{train, TrainConfig};

    #[test]
    fn kl_vanishes_at_the_prior() {
        let rho_one = (1f64.exp() - 1.0).ln();
        assert!((softplus(rho_one) - 1.0).abs() < 1e-15);
        assert_eq!(gaussian_kl(0.0, 1.0), 0.0);
        assert!((gaussian_kl(1.0, 1.0) - 0.5).abs() < 1e-15);
        let layer = BnnLayer {
            fan_in: 3,
            fan_out: 2,
            weight_mu: vec![0.0; 6],
            weight_rho: vec![rho_one; 6],
            bias_mu: vec![0.0; 2],
            bias_rho: vec![rho_one; 2],
            activation: Activation::Linear,
        };
        assert!(layer.kl().abs() < 1e-14);
    }

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let cfg = ArrayConfig::half_wavelength(3, 1e6, 8);
        let mut ds = crate::features::generate_dataset(&cfg, 1, 1, 20.0, 0).unwrap();
        let mut rng = stream_rng(seed, 0);
        ds.samples = (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                Sample {
                    features: FeatureVector(vec![a, b]),
                    labels_deg: vec![30.0 * a - 10.0 * b],
                }
            })
            .collect();
        ds
    }

    fn linear_bnn(rho: f64) -> BnnModel {
        BnnModel {
            format_version: BNN_FORMAT_VERSION,
            input_stats: NormStats::identity(2),
            label_scale: 1.0,
            likelihood_sigma: 0.1,
            layers: vec![BnnLayer {
                fan_in: 2,
                fan_out: 1,
                weight_mu: vec![2.0, -1.0],
                weight_rho: vec![rho; 2],
                bias_mu: vec![0.5],
                bias_rho: vec![rho],
                activation: Activation::Linear,
            }],
        }
    }

    #[test]
    fn collapsed_posterior_is_deterministic() {
        let model = linear_bnn(-60.0);
        let p = predict_bnn(&model, &[1.0, 3.0], 50, 9).unwrap();
        assert!((p.mean[0] - (2.0 - 3.0 + 0.5)).abs() < 1e-12);
        assert!(p.std[0] < 1e-12);
    }

    #[test]
    fn single_draw_is_reproducible() {
        let model = linear_bnn(0.0);
        let a = predict_bnn(&model, &[1.0, 3.0], 1, 5).unwrap();
        let b = predict_bnn(&model, &[1.0, 3.0], 1, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.std, vec![0.0]);
    }

    #[test]
    fn monte_carlo_means_agree() {
        let model = linear_bnn(-1.0);
        let few = predict_bnn(&model, &[1.0, 3.0], 10, 1).unwrap();
        let many = predict_bnn(&model, &[1.0, 3.0], 1000, 2).unwrap();
        let bound = 3.0 * many.std[0] / 10f64.sqrt();
        assert!((few.mean[0] - many.mean[0]).abs() < bound);
    }

    #[test]
    fn save_load_round_trip() {
        let model = linear_bnn(-2.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bnn.json");
        model.save(&path).unwrap();
        assert_eq!(BnnModel::load(&path).unwrap(), model);
    }

    #[test]
    fn trained_mean_tracks_point_network() {
        let ds = toy_dataset(1000, 3);
        let config = BnnConfig {
            hidden_sizes: vec![16],
            activation: Activation::Tanh,
            epochs: 400,
            learning_rate: 3e-3,
            likelihood_sigma: 0.01,
            ..BnnConfig::default()
        };
        let (bnn, history) = train_bnn(&ds, &config, 1).unwrap();
        assert!(history.last().unwrap() < &history[0]);
        let mlp_cfg = TrainConfig {
            hidden_sizes: vec![16],
            activation: Activation::Tanh,
            batch_norm: false,
            dropout_rate: 0.0,
            l2_coeff: 0.0,
            max_epochs: 400,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        };
        let (mlp, _) = train(&ds, &mlp_cfg).unwrap();
        let test = toy_dataset(50, 4);
        for s in &test.samples {
            let p = predict_bnn(&bnn, &s.features, 100, 0).unwrap();
            let q = mlp.predict(&s.features).unwrap();
            let truth = s.labels_deg[0];
            // Both fit the target to within a couple of degrees and agree with each other.
            assert!((p.mean[0] - truth).abs() < 1.5, "bnn {} mlp {} truth {truth}", p.mean[0], q[0]);
            assert!((p.mean[0] - q[0]).abs() < 2.0);
        }
    }
}
