//! Feed-forward regression networks written from scratch.
//!
//! Networks map raw covariance features to source angles in degrees. Inputs
//! are z-scored with statistics stored in the model and targets are trained
//! in units of `angle / label_scale`, so every model file is self-contained.

mod activation;
mod adam;
mod bnn;
mod gradcheck;
mod kfold;
mod layers;
mod mlp;
mod rbf;
mod train;

pub use activation::{activation_apply, rbf_response, Activation, LEAKY_RELU_SLOPE};
pub use adam::{Adam, AdamConfig};
pub use bnn::{
    gaussian_kl, predict_bnn, predict_bnn_batch, softplus, train_bnn, BnnConfig, BnnLayer,
    BnnModel, BnnPrediction,
};
pub use gradcheck::{gradient_check, gradient_check_model, GRADCHECK_STEP};
pub use kfold::{average_models, kfold_indices, kfold_train, KFoldResult};
pub use layers::{BatchNorm, DenseLayer, RbfParams, BATCH_NORM_EPS, BATCH_NORM_MOMENTUM};
pub use mlp::{Architecture, HiddenLayer, MlpModel, MODEL_FORMAT_VERSION};
pub use rbf::fit_rbf_centers;
pub use train::{
    apply_dropout, train, train_arrays, EarlyStopping, EpochRecord, Loss, StopDecision,
    TrainConfig, TrainHistory,
};

/// Targets are divided by this before training so they lie in `[-1, 1]`.
pub const DEFAULT_LABEL_SCALE: f64 = 90.0;
