use ndarray::Array2;

use super::mlp::{MlpModel, Pass};
use super::train::{mse, objective, targets_matrix};
use crate::error::{DoaError, Result};

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely rather than relatively.
const GRADIENT_FLOOR: f64 = 1e-4;

/// Largest relative deviation between backprop and central finite differences
/// over every trainable parameter.
///
/// The objective is the training loss (MSE plus `l2·Σw²`) with batch
/// statistics in batch norm and dropout disabled. Inputs are raw features and
/// targets are in degrees. The deviation for a parameter is
/// `|g_bp − g_fd| / max(|g_bp|, |g_fd|, 1e-4)`.
pub fn gradient_check<V: AsRef<[f64]>, W: AsRef<[f64]>>(
    model: &MlpModel,
    inputs: &[V],
    targets: &[W],
    l2: f64,
) -> Result<f64> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(DoaError::Shape("gradient check needs matching non-empty batches".into()));
    }
    let x = model.prepare_inputs(inputs)?;
    let y = targets_matrix(targets, model.label_scale)?;
    Ok(gradient_check_model(model, &x, &y, l2).0)
}

/// Returns the maximum deviation together with the backprop and
/// finite-difference gradients, flattened in parameter order.
pub fn gradient_check_model(
    model: &MlpModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    l2: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let (out, cache) = model.forward_prepared(
        x,
        Pass::Train {
            dropout: 0.0,
            rng: None,
            update_running: false,
        },
    );
    let cache = cache.expect("training pass keeps cache");
    let (_, d_out) = mse(&out, y);
    let mut grads = model.backward(&cache, &d_out);
    for (g, (p, decay)) in grads.iter_mut().zip(model.params()) {
        if decay {
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi += 2.0 * l2 * pi;
            }
        }
    }
    let backprop: Vec<f64> = grads.into_iter().flatten().collect();

    let mut probe = model.clone();
    let mut numeric = Vec::with_capacity(backprop.len());
    let blocks = probe.params().len();
    for b in 0..blocks {
        let len = probe.params()[b].0.len();
        for i in 0..len {
            let original = probe.params()[b].0[i];
            probe.params_mut()[b][i] = original + GRADCHECK_STEP;
            let plus = objective(&probe, x, y, l2);
            probe.params_mut()[b][i] = original - GRADCHECK_STEP;
            let minus = objective(&probe, x, y, l2);
            probe.params_mut()[b][i] = original;
            numeric.push((plus - minus) / (2.0 * GRADCHECK_STEP));
        }
    }

    let worst = backprop
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(GRADIENT_FLOOR))
        .fold(0.0, f64::max);
    (worst, backprop, numeric)
}
