use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::layers::{BatchNorm, DenseLayer, RbfParams};
use super::train::apply_dropout;
use crate::error::{DoaError, Result};
use crate::features::NormStats;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Network shape used to initialize an [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub batch_norm: bool,
    pub output_dim: usize,
    /// Optional fixed radial-basis front layer operating on normalized inputs.
    pub rbf: Option<RbfParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub dense: DenseLayer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_norm: Option<BatchNorm>,
}

/// Trained point-estimate regressor from raw features to angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub format_version: u32,
    pub input_stats: NormStats,
    pub label_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbf: Option<RbfParams>,
    pub hidden: Vec<HiddenLayer>,
    pub output: DenseLayer,
}

pub(crate) struct LayerCache {
    input: Array2<f64>,
    pre_activation: Array2<f64>,
    z_hat: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
    mask: Option<Array2<f64>>,
}

/// Intermediate values of a training-mode forward pass.
pub(crate) struct ForwardCache {
    layers: Vec<LayerCache>,
    output_input: Array2<f64>,
}

/// How a forward pass treats dropout and batch normalization.
pub(crate) enum Pass<'a> {
    /// Running batch-norm statistics, no dropout.
    Inference,
    /// Batch statistics; dropout when `rng` is given and `rate > 0`.
    Train {
        dropout: f64,
        rng: Option<&'a mut ChaCha8Rng>,
        update_running: bool,
    },
}

impl MlpModel {
    pub fn new(arch: &Architecture, input_stats: NormStats, label_scale: f64, seed: u64) -> Result<Self> {
        if input_stats.dim() != arch.input_dim {
            return Err(DoaError::Shape(format!(
                "statistics for {} features, architecture expects {}",
                input_stats.dim(),
                arch.input_dim
            )));
        }
        if arch.output_dim == 0 {
            return Err(DoaError::Config("network needs at least one output".into()));
        }
        if arch.hidden_sizes.contains(&0) {
            return Err(DoaError::Config("hidden layers must be non-empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut width = match &arch.rbf {
            Some(rbf) => {
                rbf.check()?;
                if rbf.fan_in != arch.input_dim {
                    return Err(DoaError::Shape("RBF layer fan-in differs from input".into()));
                }
                rbf.num_units
            }
            None => arch.input_dim,
        };
        let mut hidden = Vec::with_capacity(arch.hidden_sizes.len());
        for &size in &arch.hidden_sizes {
            hidden.push(HiddenLayer {
                dense: DenseLayer::init(width, size, arch.activation, &mut rng),
                batch_norm: arch.batch_norm.then(|| BatchNorm::new(size)),
            });
            width = size;
        }
        let output = DenseLayer::init(width, arch.output_dim, Activation::Linear, &mut rng);
        Ok(MlpModel {
            format_version: MODEL_FORMAT_VERSION,
            input_stats,
            label_scale,
            rbf: arch.rbf.clone(),
            hidden,
            output,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_stats.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.fan_out
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|(p, _)| p.len()).sum()
    }

    /// Normalizes raw feature rows and applies the RBF front layer if present.
    pub fn prepare_inputs<V: AsRef<[f64]>>(&self, rows: &[V]) -> Result<Array2<f64>> {
        let dim = self.input_dim();
        let mut x = Array2::zeros((rows.len(), dim));
        for (i, row) in rows.iter().enumerate() {
            let normed = self.input_stats.apply(row.as_ref())?;
            x.row_mut(i).assign(&Array1::from(normed));
        }
        Ok(match &self.rbf {
            Some(rbf) => rbf.apply(&x),
            None => x,
        })
    }

    /// Predicted angles in degrees for one raw feature vector.
    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_batch(&[features])?.pop().expect("one row"))
    }

    pub fn predict_batch<V: AsRef<[f64]>>(&self, rows: &[V]) -> Result<Vec<Vec<f64>>> {
        let x = self.prepare_inputs(rows)?;
        let (out, _) = self.forward_prepared(&x, Pass::Inference);
        Ok(out
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * self.label_scale).collect())
            .collect())
    }

    /// Forward pass on prepared inputs; outputs are in scaled label units.
    pub(crate) fn forward_prepared(&self, x: &Array2<f64>, pass: Pass<'_>) -> (Array2<f64>, Option<ForwardCache>) {
        self.forward_impl(x, pass, None)
    }

    pub(crate) fn forward_train(
        &mut self,
        x: &Array2<f64>,
        dropout: f64,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, ForwardCache) {
        let mut updates = Vec::new();
        let (out, cache) = self.forward_impl(
            x,
            Pass::Train {
                dropout,
                rng,
                update_running: true,
            },
            Some(&mut updates),
        );
        for (layer, (mean, var)) in self.hidden.iter_mut().zip(updates) {
            if let Some(bn) = layer.batch_norm.as_mut() {
                bn.update_running(&mean, &var);
            }
        }
        (out, cache.expect("training pass keeps cache"))
    }

    fn forward_impl(
        &self,
        x: &Array2<f64>,
        pass: Pass<'_>,
        mut running: Option<&mut Vec<(Vec<f64>, Vec<f64>)>>,
    ) -> (Array2<f64>, Option<ForwardCache>) {
        let (training, dropout, mut rng) = match pass {
            Pass::Inference => (false, 0.0, None),
            Pass::Train { dropout, rng, update_running } => {
                if !update_running {
                    running = None;
                }
                (true, dropout, rng)
            }
        };
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let z = layer.dense.affine(&h);
            let (pre, z_hat, inv_std) = match &layer.batch_norm {
                Some(bn) if training => {
                    let (z_hat, inv_std, mean, var) = bn.batch_statistics(&z);
                    if let Some(r) = running.as_deref_mut() {
                        r.push((mean, var));
                    }
                    (bn.scale_shift(&z_hat), Some(z_hat), Some(inv_std))
                }
                Some(bn) => {
                    let mut z = z;
                    bn.infer(&mut z);
                    (z, None, None)
                }
                None => {
                    if let Some(r) = running.as_deref_mut() {
                        r.push((Vec::new(), Vec::new()));
                    }
                    (z, None, None)
                }
            };
            let act = layer.dense.activation;
            let mut a = pre.mapv(|v| act.apply(v));
            let mask = match rng.as_deref_mut() {
                Some(r) if training && dropout > 0.0 => Some(apply_dropout(&mut a, dropout, r)),
                _ => None,
            };
            if training {
                caches.push(LayerCache {
                    input: h,
                    pre_activation: pre,
                    z_hat,
                    inv_std,
                    mask,
                });
            }
            h = a;
        }
        let out = self.output.affine(&h);
        let cache = training.then(|| ForwardCache {
            layers: caches,
            output_input: h,
        });
        (out, cache)
    }

    /// Gradients of a loss with output gradient `d_out`, in [`MlpModel::params`] order.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>) -> Vec<Vec<f64>> {
        let mut grads_rev: Vec<Vec<f64>> = Vec::new();
        // output layer
        let dw = cache.output_input.t().dot(d_out);
        let db = d_out.sum_axis(Axis(0));
        let mut d_h = d_out.dot(&self.output.weight_view().t());
        grads_rev.push(db.to_vec());
        grads_rev.push(dw.iter().cloned().collect());

        for (layer, lc) in self.hidden.iter().zip(&cache.layers).rev() {
            if let Some(mask) = &lc.mask {
                d_h *= mask;
            }
            let act = layer.dense.activation;
            let mut d_pre = d_h;
            d_pre.zip_mut_with(&lc.pre_activation, |d, &x| *d *= act.derivative(x));
            let d_z = match (&layer.batch_norm, &lc.z_hat, &lc.inv_std) {
                (Some(bn), Some(z_hat), Some(inv_std)) => {
                    let n = d_pre.nrows() as f64;
                    let d_gamma = (&d_pre * z_hat).sum_axis(Axis(0));
                    let d_beta = d_pre.sum_axis(Axis(0));
                    let gamma = ndarray::ArrayView1::from(&bn.gamma);
                    let d_zhat = &d_pre * &gamma;
                    let sum_d = d_zhat.sum_axis(Axis(0));
                    let sum_dz = (&d_zhat * z_hat).sum_axis(Axis(0));
                    let mut d_z = d_zhat * n;
                    d_z -= &sum_d;
                    d_z -= &(z_hat * &sum_dz);
                    d_z *= &(inv_std / n);
                    grads_rev.push(d_beta.to_vec());
                    grads_rev.push(d_gamma.to_vec());
                    d_z
                }
                _ => d_pre,
            };
            let dw = lc.input.t().dot(&d_z);
            let db = d_z.sum_axis(Axis(0));
            d_h = d_z.dot(&layer.dense.weight_view().t());
            grads_rev.push(db.to_vec());
            grads_rev.push(dw.iter().cloned().collect());
        }
        grads_rev.reverse();
        grads_rev
    }

    /// Trainable parameter blocks with a flag marking weight matrices (L2-decayed).
    pub fn params(&self) -> Vec<(&[f64], bool)> {
        let mut out: Vec<(&[f64], bool)> = Vec::new();
        for layer in &self.hidden {
            out.push((&layer.dense.weights, true));
            out.push((&layer.dense.biases, false));
            if let Some(bn) = &layer.batch_norm {
                out.push((&bn.gamma, false));
                out.push((&bn.beta, false));
            }
        }
        out.push((&self.output.weights, true));
        out.push((&self.output.biases, false));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for layer in &mut self.hidden {
            out.push(&mut layer.dense.weights);
            out.push(&mut layer.dense.biases);
            if let Some(bn) = &mut layer.batch_norm {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.push(&mut self.output.weights);
        out.push(&mut self.output.biases);
        out
    }

    /// `Σ w²` over all weight matrices.
    pub fn weight_norm_sq(&self) -> f64 {
        self.params()
            .iter()
            .filter(|(_, decay)| *decay)
            .map(|(p, _)| p.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(DoaError::Config(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let mut width = match &self.rbf {
            Some(rbf) => {
                rbf.check()?;
                rbf.num_units
            }
            None => self.input_dim(),
        };
        for layer in self.hidden.iter().map(|h| &h.dense).chain(std::iter::once(&self.output)) {
            layer.check()?;
            if layer.fan_in != width {
                return Err(DoaError::Shape(format!(
                    "layer expects {} inputs, previous layer gives {width}",
                    layer.fan_in
                )));
            }
            width = layer.fan_out;
        }
        for h in &self.hidden {
            if let Some(bn) = &h.batch_norm {
                if bn.width() != h.dense.fan_out {
                    return Err(DoaError::Shape("batch norm width mismatch".into()));
                }
            }
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
        let model: MlpModel = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        model.validate()?;
        Ok(model)
    }
}

/// Uniformly random model, handy for tests and gradient checks.
#[cfg(test)]
pub(crate) fn random_model<R: rand::Rng>(arch: &Architecture, rng: &mut R) -> MlpModel {
    let stats = NormStats::identity(arch.input_dim);
    MlpModel::new(arch, stats, 1.0, rng.random()).expect("valid architecture")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_relu(w: f64) -> MlpModel {
        MlpModel {
            format_version: MODEL_FORMAT_VERSION,
            input_stats: NormStats::identity(1),
            label_scale: 1.0,
            rbf: None,
            hidden: vec![HiddenLayer {
                dense: DenseLayer {
                    fan_in: 1,
                    fan_out: 1,
                    weights: vec![w],
                    biases: vec![0.0],
                    activation: Activation::Relu,
                },
                batch_norm: None,
            }],
            output: DenseLayer {
                fan_in: 1,
                fan_out: 1,
                weights: vec![1.0],
                biases: vec![0.0],
                activation: Activation::Linear,
            },
        }
    }

    #[test]
    fn relu_unit_examples() {
        let m = single_relu(1.0);
        assert_eq!(m.predict(&[2.0]).unwrap(), vec![2.0]);
        assert_eq!(m.predict(&[-3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let arch = Architecture {
            input_dim: 4,
            hidden_sizes: vec![3, 3],
            activation: Activation::Linear,
            batch_norm: false,
            output_dim: 2,
            rbf: None,
        };
        let mut m = MlpModel::new(&arch, NormStats::identity(4), 90.0, 1).unwrap();
        for p in m.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(m.predict(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let m = single_relu(1.0);
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(DoaError::Shape(_))));
    }

    #[test]
    fn inference_is_deterministic_with_batch_norm() {
        let arch = Architecture {
            input_dim: 5,
            hidden_sizes: vec![8, 8],
            activation: Activation::Tanh,
            batch_norm: true,
            output_dim: 2,
            rbf: None,
        };
        let m = MlpModel::new(&arch, NormStats::identity(5), 90.0, 3).unwrap();
        let x = [0.3, -1.0, 2.0, 0.1, 0.0];
        assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
        // A batch prediction agrees with per-row prediction.
        let rows = vec![x.to_vec(), vec![1.0; 5]];
        let batch = m.predict_batch(&rows).unwrap();
        assert_eq!(batch[0], m.predict(&x).unwrap());
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let arch = Architecture {
            input_dim: 3,
            hidden_sizes: vec![4],
            activation: Activation::Sigmoid,
            batch_norm: true,
            output_dim: 1,
            rbf: None,
        };
        let stats = NormStats {
            mean: vec![0.1, 0.2, 1.0 / 3.0],
            std: vec![1.5, 2.0 / 7.0, 1.0],
        };
        let m = MlpModel::new(&arch, stats, 90.0, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = MlpModel::load(&path).unwrap();
        assert_eq!(back, m);
        let x = [0.7, -0.1, 1e-3];
        assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
    }
}
