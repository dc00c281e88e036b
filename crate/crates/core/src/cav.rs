//! Concept activation vectors: unit normals of logistic-regression
//! hyperplanes fitted in the flattened latent space.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Autoencoder;
use crate::numerics::{cosine_similarity, derive_seed, dot, l2_norm, sgd_step, Activation, Rng};
use crate::synthgen::{Batch, ConceptId, Dataset, StyleId};

pub const CONCEPT_VECTOR_VERSION: u32 = 1;

/// Validation accuracy below which a vector is flagged as weakly separable.
pub const LOW_SEPARABILITY_ACCURACY: f64 = 0.6;

/// Smallest norm a mean of directions may have before it counts as cancelled.
const CANCELLATION_NORM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorKind {
    Single,
    Averaged,
    Random,
}

/// Dataset style a vector was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StyleTag {
    A,
    B,
    #[serde(rename = "mixed")]
    Mixed,
}

impl From<StyleId> for StyleTag {
    fn from(s: StyleId) -> Self {
        match s {
            StyleId::A => StyleTag::A,
            StyleId::B => StyleTag::B,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptVector {
    direction: Arc<[f64]>,
    pub concept: Option<ConceptId>,
    pub style: StyleTag,
    /// Batch seed of a single vector, constituent seeds of an average, or the
    /// generator seed of a random vector.
    pub seeds: Vec<u64>,
    pub kind: VectorKind,
    pub val_accuracy: Option<f64>,
    pub low_separability: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConceptVectorFile {
    version: u32,
    concept: Option<ConceptId>,
    style: StyleTag,
    seeds: Vec<u64>,
    kind: VectorKind,
    val_accuracy: Option<f64>,
    low_separability: bool,
    d: usize,
    direction: Vec<f64>,
}

fn unit(mut v: Vec<f64>, what: &str) -> Result<Arc<[f64]>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    let norm = l2_norm(&v);
    if norm == 0.0 {
        return Err(Error::ZeroNorm(what.to_string()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v.into())
}

impl ConceptVector {
    /// Normalizes `direction`; zero or non-finite directions are rejected.
    pub fn new(
        direction: Vec<f64>,
        concept: Option<ConceptId>,
        style: StyleTag,
        seeds: Vec<u64>,
        kind: VectorKind,
    ) -> Result<Self> {
        Ok(Self {
            direction: unit(direction, "concept vector direction")?,
            concept,
            style,
            seeds,
            kind,
            val_accuracy: None,
            low_separability: false,
        })
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// Shared handle used by latent traversal.
    pub fn direction_arc(&self) -> &Arc<[f64]> {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn negated(&self) -> Self {
        Self {
            direction: self.direction.iter().map(|x| -x).collect::<Vec<_>>().into(),
            ..self.clone()
        }
    }

    pub fn cosine(&self, other: &ConceptVector) -> Result<f64> {
        cosine_similarity(self.direction(), other.direction())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ConceptVectorFile {
            version: CONCEPT_VECTOR_VERSION,
            concept: self.concept,
            style: self.style,
            seeds: self.seeds.clone(),
            kind: self.kind,
            val_accuracy: self.val_accuracy,
            low_separability: self.low_separability,
            d: self.dim(),
            direction: self.direction.to_vec(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let file: ConceptVectorFile =
            serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        if file.version != CONCEPT_VECTOR_VERSION {
            return Err(Error::format(origin, format!("unsupported version {}", file.version)));
        }
        if file.direction.len() != file.d {
            return Err(Error::format(
                origin,
                format!("d = {} but direction has {} entries", file.d, file.direction.len()),
            ));
        }
        let mut v = ConceptVector::new(file.direction, file.concept, file.style, file.seeds, file.kind)
            .map_err(|e| Error::format(origin, e.to_string()))?;
        v.val_accuracy = file.val_accuracy;
        v.low_separability = file.low_separability;
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|_| Error::MissingInput(format!("concept vector {}", path.display())))?;
        Self::from_json(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavConfig {
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for CavConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            l2: 1e-3,
            epochs: 200,
            val_fraction: 0.2,
            seed: 3,
        }
    }
}

impl CavConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::Config("cav lr and l2 must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "cav val_fraction must lie in [0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Where a single vector came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavSource {
    pub concept: Option<ConceptId>,
    pub style: StyleTag,
    pub batch_seed: u64,
}

/// Fits an L2-regularized logistic regression separating `positives` from
/// `negatives` by per-sample SGD and returns the unit hyperplane normal,
/// oriented so positives score higher. The bias is fitted and discarded.
///
/// Features are centered and divided by a single global RMS scale before
/// fitting. That leaves directions unchanged and makes the fit invariant to a
/// uniform rescaling of the latents.
pub fn fit_cav(
    positives: &[&[f32]],
    negatives: &[&[f32]],
    cfg: &CavConfig,
    source: CavSource,
) -> Result<ConceptVector> {
    cfg.validate()?;
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "CAV needs both sides: {} positives, {} negatives",
            positives.len(),
            negatives.len()
        )));
    }
    let d = positives[0].len();
    if positives.iter().chain(negatives).any(|x| x.len() != d) {
        return Err(Error::Shape("latents of differing dimension in one batch".into()));
    }

    let seed = derive_seed(cfg.seed, source.batch_seed);
    let split = |n: usize, stream: u64| -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..n).collect();
        Rng::stream(seed, stream).shuffle(&mut idx);
        let n_val = ((n as f64 * cfg.val_fraction).round() as usize).min(n - 1);
        let val = idx.split_off(n - n_val);
        (idx, val)
    };
    let (pos_train, pos_val) = split(positives.len(), 1);
    let (neg_train, neg_val) = split(negatives.len(), 2);

    // (row, label) pairs
    let train: Vec<(&[f32], f64)> = pos_train
        .iter()
        .map(|&i| (positives[i], 1.0))
        .chain(neg_train.iter().map(|&i| (negatives[i], 0.0)))
        .collect();
    let val: Vec<(&[f32], f64)> = pos_val
        .iter()
        .map(|&i| (positives[i], 1.0))
        .chain(neg_val.iter().map(|&i| (negatives[i], 0.0)))
        .collect();

    let mut mean = vec![0.0f64; d];
    for (x, _) in &train {
        for (m, &v) in mean.iter_mut().zip(*x) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train.len() as f64);
    let ms: f64 = train
        .iter()
        .map(|(x, _)| x.iter().zip(&mean).map(|(&v, m)| (v as f64 - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / train.len() as f64;
    if ms == 0.0 {
        return Err(Error::Degenerate(
            "all training activations are identical; the encoder maps every image to the same code".into(),
        ));
    }
    let scale = ms.sqrt();
    let normalize = |x: &[f32]| -> Vec<f64> {
        x.iter().zip(&mean).map(|(&v, m)| (v as f64 - m) / scale).collect()
    };
    let train_x: Vec<(Vec<f64>, f64)> = train.iter().map(|(x, y)| (normalize(x), *y)).collect();

    let mut w = vec![0.0f64; d];
    let mut b = [0.0f64];
    let mut grad = vec![0.0f64; d];
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 0..cfg.epochs {
        Rng::stream(seed, 100 + epoch as u64).shuffle(&mut order);
        for &i in &order {
            let (x, y) = &train_x[i];
            let p = Activation::Sigmoid.apply(dot(&w, x) + b[0]);
            let g = p - y;
            for (gi, xi) in grad.iter_mut().zip(x) {
                *gi = g * xi;
            }
            sgd_step(&mut w, &grad, cfg.lr, cfg.l2)?;
            sgd_step(&mut b, &[g], cfg.lr, 0.0)?;
        }
    }

    if l2_norm(&w) == 0.0 {
        return Err(Error::Degenerate(
            "logistic regression weights are zero; no hyperplane to normalize".into(),
        ));
    }

    let eval_set: Vec<(Vec<f64>, f64)> = if val.is_empty() {
        train_x.clone()
    } else {
        val.iter().map(|(x, y)| (normalize(x), *y)).collect()
    };
    let correct = eval_set
        .iter()
        .filter(|(x, y)| (dot(&w, x) + b[0] > 0.0) == (*y > 0.5))
        .count();
    let val_accuracy = correct as f64 / eval_set.len() as f64;

    let mean_score = |rows: &[&[f32]]| -> f64 {
        rows.iter().map(|x| dot(&w, &normalize(x))).sum::<f64>() / rows.len() as f64
    };
    if mean_score(positives) < mean_score(negatives) {
        w.iter_mut().for_each(|x| *x = -*x);
    }

    let mut cv = ConceptVector::new(
        w,
        source.concept,
        source.style,
        vec![source.batch_seed],
        VectorKind::Single,
    )?;
    cv.val_accuracy = Some(val_accuracy);
    cv.low_separability = val_accuracy < LOW_SEPARABILITY_ACCURACY;
    if cv.low_separability {
        log::warn!(
            "weakly separable concept vector ({:?}, batch seed {}): validation accuracy {val_accuracy:.3}",
            source.concept,
            source.batch_seed
        );
    }
    Ok(cv)
}

/// CAV for a batch using precomputed latents indexed like `Dataset::samples`.
pub fn extract_cav_from_latents(
    latents: &[Vec<f32>],
    style: StyleTag,
    batch: &Batch,
    cfg: &CavConfig,
) -> Result<ConceptVector> {
    let pick = |idx: &[usize]| -> Result<Vec<&[f32]>> {
        idx.iter()
            .map(|&i| {
                latents
                    .get(i)
                    .map(Vec::as_slice)
                    .ok_or_else(|| Error::InvalidArgument(format!("batch index {i} out of range")))
            })
            .collect()
    };
    fit_cav(
        &pick(&batch.positives)?,
        &pick(&batch.negatives)?,
        cfg,
        CavSource {
            concept: Some(batch.concept),
            style,
            batch_seed: batch.seed,
        },
    )
}

/// Encodes the batch's samples and fits a CAV on their latents.
pub fn extract_cav(
    ae: &Autoencoder,
    dataset: &Dataset,
    batch: &Batch,
    cfg: &CavConfig,
) -> Result<ConceptVector> {
    let encode = |idx: &[usize]| -> Result<Vec<Vec<f32>>> {
        let images: Vec<_> = idx.iter().map(|&i| dataset.samples[i].image.clone()).collect();
        ae.encode_batch(&images)
    };
    let pos = encode(&batch.positives)?;
    let neg = encode(&batch.negatives)?;
    let pos_refs: Vec<&[f32]> = pos.iter().map(Vec::as_slice).collect();
    let neg_refs: Vec<&[f32]> = neg.iter().map(Vec::as_slice).collect();
    fit_cav(
        &pos_refs,
        &neg_refs,
        cfg,
        CavSource {
            concept: Some(batch.concept),
            style: dataset.meta.style.into(),
            batch_seed: batch.seed,
        },
    )
}

/// Gaussian components, normalized: uniform on the unit sphere.
pub fn random_unit_vector(d: usize, seed: u64) -> Result<ConceptVector> {
    if d == 0 {
        return Err(Error::InvalidArgument("random vector needs d >= 1".into()));
    }
    let mut rng = Rng::new(seed);
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        if l2_norm(&v) > 0.0 {
            return ConceptVector::new(v, None, StyleTag::Mixed, vec![seed], VectorKind::Random);
        }
    }
}

/// Componentwise mean of unit directions, renormalized.
pub fn average_cavs(vectors: &[ConceptVector]) -> Result<ConceptVector> {
    if vectors.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "averaging needs at least 2 vectors, got {}",
            vectors.len()
        )));
    }
    let concept = vectors[0].concept;
    let d = vectors[0].dim();
    if vectors.iter().any(|v| v.concept != concept) {
        return Err(Error::InvalidArgument("cannot average vectors of different concepts".into()));
    }
    if vectors.iter().any(|v| v.dim() != d) {
        return Err(Error::Shape("cannot average vectors of different dimension".into()));
    }
    let mut mean = vec![0.0f64; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.direction()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= vectors.len() as f64);
    let norm = l2_norm(&mean);
    if norm < CANCELLATION_NORM {
        return Err(Error::Degenerate(format!(
            "averaged direction cancels out (norm {norm:.3e})"
        )));
    }
    let style = if vectors.iter().all(|v| v.style == vectors[0].style) {
        vectors[0].style
    } else {
        StyleTag::Mixed
    };
    let accs: Vec<f64> = vectors.iter().filter_map(|v| v.val_accuracy).collect();
    let mut out = ConceptVector::new(
        mean,
        concept,
        style,
        vectors.iter().flat_map(|v| v.seeds.iter().copied()).collect(),
        VectorKind::Averaged,
    )?;
    if accs.len() == vectors.len() {
        let acc = accs.iter().sum::<f64>() / accs.len() as f64;
        out.val_accuracy = Some(acc);
        out.low_separability = acc < LOW_SEPARABILITY_ACCURACY;
    }
    Ok(out)
}

/// Mean and population standard deviation of pairwise cosines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCell {
    pub mean: f64,
    pub std: f64,
    pub n_pairs: usize,
}

impl SimilarityCell {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            n_pairs: values.len(),
        }
    }
}

/// All cross pairs between two distinct groups.
pub fn similarity_cross(a: &[ConceptVector], b: &[ConceptVector]) -> Result<SimilarityCell> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("similarity of an empty group".into()));
    }
    let mut values = Vec::with_capacity(a.len() * b.len());
    for u in a {
        for v in b {
            values.push(u.cosine(v)?);
        }
    }
    Ok(SimilarityCell::from_values(&values))
}

/// Distinct unordered pairs within one group; self-pairs are excluded.
pub fn similarity_within(group: &[ConceptVector]) -> Result<SimilarityCell> {
    if group.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "self-similarity needs at least 2 vectors, group has {}",
            group.len()
        )));
    }
    let mut values = Vec::with_capacity(group.len() * (group.len() - 1) / 2);
    for i in 0..group.len() {
        for j in i + 1..group.len() {
            values.push(group[i].cosine(&group[j])?);
        }
    }
    Ok(SimilarityCell::from_values(&values))
}

/// Cross-pair statistics, or distinct-pair statistics when both arguments are
/// the same group (same slice).
pub fn similarity_stats(a: &[ConceptVector], b: &[ConceptVector]) -> Result<SimilarityCell> {
    if std::ptr::eq(a, b) {
        similarity_within(a)
    } else {
        similarity_cross(a, b)
    }
}
