//! Attribution quality (IoU against concept masks), direction stability
//! (cosine similarity tables), and report rendering.

mod masks;
mod report;
mod similarity;

pub use masks::{binarize, iou, Binarized, Iou};
pub use report::{
    evaluate_iou, parse_iou_csv, render_iou, Format, IouReport, IouRow, SampleIou, IOU_CSV_HEADER,
};
pub use similarity::{
    render_similarity, similarity_report, SimilarityReport, VectorGroup, SIMILARITY_CSV_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Autoencoder;
use crate::synthgen::{ConceptId, Sample};

/// Reconstruction error restricted to one concept's mask pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskErrorRow {
    pub concept: ConceptId,
    /// Squared error averaged over all mask pixels of all positive samples.
    pub mean_squared_error: f64,
    pub n_samples: usize,
    pub n_pixels: usize,
}

pub fn mask_reconstruction_error(
    ae: &Autoencoder,
    samples: &[Sample],
    concept: ConceptId,
) -> Result<MaskErrorRow> {
    let positives: Vec<&Sample> = samples
        .iter()
        .filter(|s| s.masks.get(&concept).is_some_and(|m| !m.is_empty()))
        .collect();
    if positives.is_empty() {
        return Err(Error::InvalidArgument(format!("no {concept} masks to score")));
    }
    let images: Vec<_> = positives.iter().map(|s| s.image.clone()).collect();
    let latents = ae.encode_batch(&images)?;
    let (mut sum, mut count) = (0.0f64, 0usize);
    for (s, z) in positives.iter().zip(&latents) {
        let recon = ae.decode(z)?;
        let mask = &s.masks[&concept];
        for ((&m, &r), &x) in mask.bits().iter().zip(recon.pixels()).zip(s.image.pixels()) {
            if m {
                sum += ((r - x) as f64).powi(2);
                count += 1;
            }
        }
    }
    Ok(MaskErrorRow {
        concept,
        mean_squared_error: sum / count as f64,
        n_samples: positives.len(),
        n_pixels: count,
    })
}
