use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::mlp::MlpModel;
use super::train::{fit, initial_model, stream_rng, TrainConfig, TrainHistory, STREAM_SPLIT};
use crate::error::{DoaError, Result};
use crate::features::{Dataset, NormStats};

/// Output of [`kfold_train`].
#[derive(Debug, Clone)]
pub struct KFoldResult {
    /// Element-wise average of the fold models.
    pub model: MlpModel,
    pub fold_models: Vec<MlpModel>,
    pub histories: Vec<TrainHistory>,
    /// Validation indices of each fold.
    pub folds: Vec<Vec<usize>>,
}

/// Seeded shuffle of `0..n` cut into `k` contiguous folds.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(DoaError::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(DoaError::Config(format!("{k} folds for {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, STREAM_SPLIT));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = n / k + usize::from(f < n % k);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Trains one model per fold from a shared initialization and averages their weights.
///
/// Input statistics (and RBF centers, if any) come from the whole dataset so
/// that every fold model lives in the same input coordinates.
pub fn kfold_train(dataset: &Dataset, config: &TrainConfig, k: usize) -> Result<KFoldResult> {
    config.validate()?;
    dataset.validate()?;
    let folds = kfold_indices(dataset.len(), k, config.seed)?;
    let inputs = dataset.features();
    let labels = dataset.labels();
    let stats = NormStats::fit(&inputs)?;
    let init = initial_model(config, stats, &inputs, dataset.label_dim())?;

    let trained = folds
        .par_iter()
        .map(|val| {
            let mut is_val = vec![false; dataset.len()];
            val.iter().for_each(|&i| is_val[i] = true);
            let train_idx: Vec<usize> = (0..dataset.len()).filter(|&i| !is_val[i]).collect();
            let tx: Vec<&[f64]> = train_idx.iter().map(|&i| inputs[i]).collect();
            let ty: Vec<&[f64]> = train_idx.iter().map(|&i| labels[i]).collect();
            let vx: Vec<&[f64]> = val.iter().map(|&i| inputs[i]).collect();
            let vy: Vec<&[f64]> = val.iter().map(|&i| labels[i]).collect();
            fit(init.clone(), &tx, &ty, &vx, &vy, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let (fold_models, histories): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    let model = average_models(&fold_models)?;
    Ok(KFoldResult {
        model,
        fold_models,
        histories,
        folds,
    })
}

/// Arithmetic mean of trainable parameters and batch-norm running statistics.
pub fn average_models(models: &[MlpModel]) -> Result<MlpModel> {
    let first = models
        .first()
        .ok_or_else(|| DoaError::Config("no models to average".into()))?;
    let shape: Vec<usize> = first.params().iter().map(|(p, _)| p.len()).collect();
    for m in models {
        let s: Vec<usize> = m.params().iter().map(|(p, _)| p.len()).collect();
        if s != shape || m.input_stats != first.input_stats || m.rbf != first.rbf {
            return Err(DoaError::Shape("models to average differ in structure".into()));
        }
    }
    let k = models.len() as f64;
    let mut out = first.clone();
    {
        let mut blocks = out.params_mut();
        for (b, block) in blocks.iter_mut().enumerate() {
            for (i, v) in block.iter_mut().enumerate() {
                *v = models.iter().map(|m| m.params()[b].0[i]).sum::<f64>() / k;
            }
        }
    }
    for (l, layer) in out.hidden.iter_mut().enumerate() {
        if let Some(bn) = layer.batch_norm.as_mut() {
            for j in 0..bn.width() {
                let stats = models
                    .iter()
                    .map(|m| m.hidden[l].batch_norm.as_ref().expect("same structure"));
                let (sm, sv) = stats.fold((0.0, 0.0), |(a, b), s| (a + s.running_mean[j], b + s.running_var[j]));
                bn.running_mean[j] = sm / k;
                bn.running_var[j] = sv / k;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_signal::ArrayConfig;
    use crate::features::{generate_dataset, FeatureVector, Sample};

    #[test]
    fn folds_partition_the_dataset() {
        let folds = kfold_indices(103, 5, 7).unwrap();
        assert_eq!(folds.len(), 5);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert!(kfold_indices(3, 4, 0).is_err());
        assert!(kfold_indices(10, 1, 0).is_err());
    }

    #[test]
    fn identical_folds_average_to_the_fold_model() {
        let cfg = ArrayConfig::half_wavelength(3, 1e6, 10);
        let mut ds = generate_dataset(&cfg, 1, 1, 20.0, 1).unwrap();
        let sample = ds.samples[0].clone();
        ds.samples = vec![
            Sample {
                features: FeatureVector(sample.features.0.clone()),
                labels_deg: sample.labels_deg.clone(),
            };
            20
        ];
        let config = TrainConfig {
            hidden_sizes: vec![4],
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let result = kfold_train(&ds, &config, 2).unwrap();
        assert_eq!(result.fold_models[0], result.fold_models[1]);
        assert_eq!(result.model, result.fold_models[0]);
    }
}
