use super::dataset::Dataset;
use super::phantom::ConceptId;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Balanced concept batch. Entries are indices into `Dataset::samples`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub concept: ConceptId,
    pub seed: u64,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `n_pos` concept-positive and `n_neg` concept-negative samples, each
/// group uniformly without replacement.
pub fn balanced_batch(
    dataset: &Dataset,
    concept: ConceptId,
    n_pos: usize,
    n_neg: usize,
    seed: u64,
) -> Result<Batch> {
    let (pos, neg) = dataset.split_by(concept);
    if pos.len() < n_pos || neg.len() < n_neg {
        return Err(Error::InsufficientSamples {
            concept: concept.name().to_string(),
            need_pos: n_pos,
            need_neg: n_neg,
            have_pos: pos.len(),
            have_neg: neg.len(),
            short_pos: n_pos.saturating_sub(pos.len()),
            short_neg: n_neg.saturating_sub(neg.len()),
        });
    }
    let mut pos_rng = Rng::stream(seed, 0);
    let mut neg_rng = Rng::stream(seed, 1);
    Ok(Batch {
        concept,
        seed,
        positives: pos_rng.choose_without_replacement(&pos, n_pos),
        negatives: neg_rng.choose_without_replacement(&neg, n_neg),
    })
}
