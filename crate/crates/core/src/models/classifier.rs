use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::autoencoder::{momentum_step, zero_like, Autoencoder};
use super::mlp::{GradientAt, Mlp};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{Activation, Real, Rng};
use crate::synthgen::ConceptId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub momentum: f64,
    pub l2: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 30,
            lr: 0.01,
            batch: 32,
            momentum: 0.9,
            l2: 1e-4,
            val_fraction: 0.2,
            seed: 2,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch == 0 {
            return Err(Error::Config("classifier hidden and batch must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.l2 >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("classifier needs lr >= 0, l2 >= 0, 0 <= momentum < 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "classifier val_fraction must lie in [0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassifierInfo {
    pub config: Option<ClassifierConfig>,
    pub n_train: usize,
    pub n_val: usize,
    /// Mean binary cross-entropy per epoch (summed over concepts).
    pub loss_curve: Vec<f64>,
    pub val_accuracy: BTreeMap<ConceptId, f64>,
}

/// Multi-label concept classifier with one sigmoid output per concept. Only
/// the Latent Shift baseline uses it.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T: Real = f32> {
    pub net: Mlp<T>,
    pub concepts: Vec<ConceptId>,
    pub info: ClassifierInfo,
}

impl<T: Real> Classifier<T> {
    pub fn new(pixels: usize, hidden: usize, concepts: Vec<ConceptId>, seed: u64) -> Self {
        let mut rng = Rng::stream(seed, 0);
        let net = Mlp::new(
            &[pixels, hidden, concepts.len()],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        Self {
            net,
            concepts,
            info: ClassifierInfo::default(),
        }
    }

    pub fn cast<U: Real>(&self) -> Classifier<U> {
        Classifier {
            net: self.net.cast(),
            concepts: self.concepts.clone(),
            info: self.info.clone(),
        }
    }

    pub fn output_index(&self, concept: ConceptId) -> Result<usize> {
        self.concepts
            .iter()
            .position(|&c| c == concept)
            .ok_or_else(|| Error::InvalidArgument(format!("classifier has no output for {concept}")))
    }

    /// Pre-sigmoid scores, one per concept.
    pub fn logits_raw(&self, x: &[T]) -> Result<Vec<T>> {
        self.net.forward(x, 1)
    }
}

impl Classifier<f32> {
    pub fn logits(&self, image: &Image) -> Result<Vec<f32>> {
        self.logits_raw(image.pixels())
    }

    pub fn probabilities(&self, image: &Image) -> Result<Vec<f64>> {
        Ok(self
            .logits(image)?
            .into_iter()
            .map(|l| Activation::Sigmoid.apply(l as f64))
            .collect())
    }
}

fn targets<'a>(labels: &'a BTreeSet<ConceptId>, concepts: &'a [ConceptId]) -> impl Iterator<Item = f32> + 'a {
    concepts.iter().map(move |c| f32::from(u8::from(labels.contains(c))))
}

fn bce_from_logit(logit: f64, target: f64) -> f64 {
    // log(1 + e^l) - t * l, stable for both signs
    logit.max(0.0) - target * logit + (-logit.abs()).exp().ln_1p()
}

/// Trains with binary cross-entropy on a shuffled split; the last
/// `val_fraction` of the shuffled order is held out for accuracy.
pub fn train_classifier(
    images: &[Image],
    labels: &[BTreeSet<ConceptId>],
    cfg: &ClassifierConfig,
) -> Result<Classifier> {
    cfg.validate()?;
    if images.is_empty() || images.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "classifier needs one label set per image ({} images, {} label sets)",
            images.len(),
            labels.len()
        )));
    }
    let pixels = images[0].len();
    let concepts = ConceptId::ALL.to_vec();
    let k = concepts.len();
    let mut clf = Classifier::<f32>::new(pixels, cfg.hidden, concepts.clone(), cfg.seed);

    let mut order: Vec<usize> = (0..images.len()).collect();
    Rng::stream(cfg.seed, 1).shuffle(&mut order);
    let n_val = (images.len() as f64 * cfg.val_fraction).floor() as usize;
    let (train_idx, val_idx) = order.split_at(images.len() - n_val);
    let mut train_idx = train_idx.to_vec();

    let mut velocity = zero_like(&clf.net);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        Rng::stream(cfg.seed, 1000 + epoch as u64).shuffle(&mut train_idx);
        let mut epoch_loss = 0.0;
        for idx in train_idx.chunks(cfg.batch) {
            let b = idx.len();
            let mut x = Vec::with_capacity(b * pixels);
            let mut t = Vec::with_capacity(b * k);
            for &i in idx {
                x.extend_from_slice(images[i].pixels());
                t.extend(targets(&labels[i], &concepts));
            }
            let trace = clf.net.forward_trace(x, b)?;
            let inv_b = 1.0 / b as f32;
            let upstream: Vec<f32> = trace
                .output()
                .iter()
                .zip(&t)
                .map(|(&l, &tt)| {
                    epoch_loss += bce_from_logit(l as f64, tt as f64);
                    (Activation::Sigmoid.apply(l) - tt) * inv_b
                })
                .collect();
            let (mut grads, _) = clf.net.backward(&trace, &upstream, GradientAt::Logits, false);
            if cfg.l2 > 0.0 {
                for (g, layer) in grads.iter_mut().zip(clf.net.layers()) {
                    for (gw, w) in g.weights.iter_mut().zip(&layer.weights) {
                        *gw += cfg.l2 as f32 * w;
                    }
                }
            }
            momentum_step(&mut clf.net, &mut velocity, grads, cfg.lr, cfg.momentum)?;
        }
        let mean_loss = epoch_loss / train_idx.len().max(1) as f64;
        if !mean_loss.is_finite() || !clf.net.all_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: mean_loss,
            });
        }
        log::info!("classifier epoch {epoch}: bce {mean_loss:.5}");
        curve.push(mean_loss);
    }

    let mut correct = vec![0usize; k];
    for &i in val_idx {
        let logits = clf.logits(&images[i])?;
        for (j, c) in concepts.iter().enumerate() {
            if (logits[j] > 0.0) == labels[i].contains(c) {
                correct[j] += 1;
            }
        }
    }
    let val_accuracy = concepts
        .iter()
        .zip(&correct)
        .filter(|_| !val_idx.is_empty())
        .map(|(&c, &n)| (c, n as f64 / val_idx.len() as f64))
        .collect::<BTreeMap<_, _>>();
    for (c, acc) in &val_accuracy {
        log::info!("classifier validation accuracy {c}: {acc:.4}");
    }
    clf.info = ClassifierInfo {
        config: Some(cfg.clone()),
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        loss_curve: curve,
        val_accuracy,
    };
    Ok(clf)
}

/// Gradient of the classifier's `concept` logit evaluated on the decoded
/// image, taken w.r.t. the latent: `d f(D(z)) / dz`.
pub fn latent_gradient<T: Real>(
    ae: &Autoencoder<T>,
    clf: &Classifier<T>,
    z: &[T],
    concept: ConceptId,
) -> Result<Vec<T>> {
    if z.len() != ae.latent_dim() {
        return Err(Error::Shape(format!(
            "latent has {} dims, autoencoder expects {}",
            z.len(),
            ae.latent_dim()
        )));
    }
    if clf.net.n_in() != ae.pixels() {
        return Err(Error::Shape(format!(
            "classifier reads {} pixels, decoder emits {}",
            clf.net.n_in(),
            ae.pixels()
        )));
    }
    let out = clf.output_index(concept)?;
    let dec = ae.decoder.forward_trace(z.to_vec(), 1)?;
    let cls = clf.net.forward_trace(dec.output().to_vec(), 1)?;
    let mut seed_grad = vec![T::zero(); clf.concepts.len()];
    seed_grad[out] = T::one();
    let (_, d_image) = clf.net.backward(&cls, &seed_grad, GradientAt::Logits, true);
    let (_, dz) = ae
        .decoder
        .backward(&dec, &d_image.expect("requested"), GradientAt::Output, true);
    let dz = dz.expect("requested");
    if dz.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("latent gradient".into()));
    }
    Ok(dz)
}
