//! Synthetic chest-like phantoms with injectable concepts and exact masks.

mod batch;
mod dataset;
mod phantom;

pub use batch::{balanced_batch, Batch};
pub use dataset::{
    default_prevalences, generate_dataset, generate_samples, load_images, Dataset, DatasetMeta,
    DATASET_FORMAT_VERSION,
};
pub use phantom::{
    generate_sample, CardioGeometry, ConceptId, EffusionGeometry, Ellipse, LungSide,
    NoduleGeometry, PhantomGeometry, Sample, StyleId, StyleParams, HEART, LUNG_LEFT, LUNG_RIGHT,
    TORSO,
};
