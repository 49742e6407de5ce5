use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{DoaError, Result};

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.9;

/// Fully connected layer. `weights` is row-major with shape `(fan_in, fan_out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        DenseLayer {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
            activation,
        }
    }

    /// Uniform He-style initialization, `U(±sqrt(6/fan_in))`, zero biases.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / fan_in.max(1) as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        DenseLayer {
            fan_in,
            fan_out,
            weights,
            biases: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn weight_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.fan_in, self.fan_out), &self.weights)
            .expect("weight buffer matches layer shape")
    }

    /// `x·W + b` for a batch of row vectors.
    pub fn affine(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight_view());
        let b = ArrayView2::from_shape((1, self.fan_out), &self.biases).expect("bias shape");
        z += &b;
        z
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.weights.len() != self.fan_in * self.fan_out || self.biases.len() != self.fan_out {
            return Err(DoaError::Shape(format!(
                "dense layer {}x{} has {} weights and {} biases",
                self.fan_in,
                self.fan_out,
                self.weights.len(),
                self.biases.len()
            )));
        }
        Ok(())
    }
}

/// Batch normalization applied between the affine map and the activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: BATCH_NORM_MOMENTUM,
            eps: BATCH_NORM_EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes with the running statistics.
    pub fn infer(&self, z: &mut Array2<f64>) {
        for mut row in z.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let zh = (*v - self.running_mean[j]) / (self.running_var[j] + self.eps).sqrt();
                *v = self.gamma[j] * zh + self.beta[j];
            }
        }
    }

    /// Normalizes with batch statistics, returning `(ẑ, 1/sqrt(var+ε), mean, var)`.
    ///
    /// The mean is accumulated as an offset from the first row so that a
    /// constant column yields exactly zero after centering.
    pub fn batch_statistics(&self, z: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Vec<f64>, Vec<f64>) {
        let n = z.nrows() as f64;
        let width = z.ncols();
        let first = z.row(0).to_owned();
        let mut mean = vec![0.0; width];
        for row in z.rows() {
            for j in 0..width {
                mean[j] += row[j] - first[j];
            }
        }
        for j in 0..width {
            mean[j] = first[j] + mean[j] / n;
        }
        let mut var = vec![0.0; width];
        for row in z.rows() {
            for j in 0..width {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        let inv_std = Array1::from_iter(var.iter().map(|v| 1.0 / (v + self.eps).sqrt()));
        let mut z_hat = z.clone();
        for mut row in z_hat.rows_mut() {
            for j in 0..width {
                row[j] = (row[j] - mean[j]) * inv_std[j];
            }
        }
        (z_hat, inv_std, mean, var)
    }

    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        let m = self.momentum;
        for j in 0..self.width() {
            self.running_mean[j] = m * self.running_mean[j] + (1.0 - m) * mean[j];
            self.running_var[j] = m * self.running_var[j] + (1.0 - m) * var[j];
        }
    }

    /// `γ·ẑ + β`.
    pub fn scale_shift(&self, z_hat: &Array2<f64>) -> Array2<f64> {
        let mut y = z_hat.clone();
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.gamma[j] * *v + self.beta[j];
            }
        }
        y
    }
}

/// Radial basis units `φ_u(x) = exp(-(σ_u·‖x − c_u‖)²)` with fixed centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfParams {
    pub num_units: usize,
    pub fan_in: usize,
    /// Row-major `(num_units, fan_in)`.
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
}

impl RbfParams {
    pub fn center(&self, unit: usize) -> &[f64] {
        &self.centers[unit * self.fan_in..(unit + 1) * self.fan_in]
    }

    pub fn respond(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_units)
            .map(|u| {
                let d2: f64 = self
                    .center(u)
                    .iter()
                    .zip(x)
                    .map(|(c, v)| (v - c) * (v - c))
                    .sum();
                let s = self.widths[u];
                (-(s * s) * d2).exp()
            })
            .collect()
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.num_units));
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            let row = row.to_vec();
            for (u, v) in self.respond(&row).into_iter().enumerate() {
                out[[i, u]] = v;
            }
        }
        out
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.centers.len() != self.num_units * self.fan_in || self.widths.len() != self.num_units {
            return Err(DoaError::Shape("RBF parameter sizes disagree".into()));
        }
        if self.widths.iter().any(|w| !(*w > 0.0)) {
            return Err(DoaError::Domain("RBF widths must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_norm_constant_batch_outputs_beta() {
        let mut bn = BatchNorm::new(3);
        bn.gamma = vec![2.0, -1.0, 0.5];
        bn.beta = vec![0.1, 0.2, -0.3];
        let z = Array2::from_shape_fn((5, 3), |(_, j)| [0.1, 7.3, -2.2][j]);
        let (z_hat, _, _, var) = bn.batch_statistics(&z);
        assert!(var.iter().all(|v| *v == 0.0));
        let y = bn.scale_shift(&z_hat);
        for row in y.rows() {
            assert_eq!(row.to_vec(), bn.beta);
        }
    }

    #[test]
    fn batch_norm_standardizes() {
        let bn = BatchNorm::new(1);
        let z = Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let (z_hat, _, mean, var) = bn.batch_statistics(&z);
        assert_eq!(mean, vec![3.0]);
        assert_eq!(var, vec![3.5]);
        let m: f64 = z_hat.iter().sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12);
    }

    #[test]
    fn affine_matches_manual() {
        let layer = DenseLayer {
            fan_in: 2,
            fan_out: 2,
            weights: vec![1.0, 2.0, 3.0, 4.0],
            biases: vec![0.5, -0.5],
            activation: Activation::Linear,
        };
        let x = Array2::from_shape_vec((1, 2), vec![1.0, -1.0]).unwrap();
        assert_eq!(layer.affine(&x).row(0).to_vec(), vec![1.0 - 3.0 + 0.5, 2.0 - 4.0 - 0.5]);
    }
}
