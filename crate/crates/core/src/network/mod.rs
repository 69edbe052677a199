//! Layers, reference architectures, training and weight files.

pub mod check;
mod layer;
mod loss;
mod model;
mod scaler;
pub mod train;
pub mod weights;

pub use layer::{softmax, Layer, LayerKind, LayerOp, PoolRounding, KERNEL};
pub use loss::{cross_entropy, cross_entropy_grad};
pub use model::{
    build_architecture, build_initialized, build_with_dropout, extract_features, ArchId,
    FeatureVector, ForwardCache, Gradients, Mode, Model, DEFAULT_DROPOUT, FEATURE_DIM, PATCH_SIZE,
};
pub use scaler::FeatureScaler;
pub use train::{
    evaluate, predict_all, train, train_on_split, train_with_observer, EpochLog, Optimizer, Sample,
    TrainConfig, TrainLog,
};
pub use weights::{load_weights, load_weights_as, save_weights};
