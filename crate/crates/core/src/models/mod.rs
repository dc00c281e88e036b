//! The label-blind autoencoder, the baseline's concept classifier, and their
//! checkpoint format.

mod autoencoder;
mod checkpoint;
mod classifier;
mod latent;
mod mlp;

pub use autoencoder::{train_autoencoder, Autoencoder, AutoencoderConfig, TrainingInfo};
pub use checkpoint::{
    CheckpointHeader, LayerSpec, AUTOENCODER_MAGIC, CHECKPOINT_VERSION, CLASSIFIER_MAGIC,
};
pub use classifier::{latent_gradient, train_classifier, Classifier, ClassifierConfig, ClassifierInfo};
pub use latent::LatentCode;
pub use mlp::{flatten_grads, Dense, GradientAt, LayerGrad, Mlp, Trace};
