//! Concept-guided latent traversal: counterfactual pairs, attribution maps,
//! and the classifier-gradient Latent Shift baseline.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cav::ConceptVector;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::models::{latent_gradient, Autoencoder, Classifier, LatentCode};
use crate::numerics::l2_norm;
use crate::pgm::save_pgm;
use crate::synthgen::ConceptId;

/// Largest admissible |alpha| for a traversal step.
pub const MAX_STEP_SIZE: f64 = 1000.0;

/// Encoder/decoder pair seen by the traversal code.
pub trait LatentModel {
    fn image_shape(&self) -> (usize, usize);
    fn latent_dim(&self) -> usize;
    fn encode(&self, image: &Image) -> Result<LatentCode>;
    /// Decoded pixels, row-major, without clamping.
    fn decode(&self, z: &LatentCode) -> Result<Vec<f32>>;
}

impl LatentModel for Autoencoder {
    fn image_shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn latent_dim(&self) -> usize {
        Autoencoder::latent_dim(self)
    }

    fn encode(&self, image: &Image) -> Result<LatentCode> {
        Autoencoder::encode(self, image)
    }

    fn decode(&self, z: &LatentCode) -> Result<Vec<f32>> {
        if z.dim() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "latent has {} dims, decoder expects {}",
                z.dim(),
                self.latent_dim()
            )));
        }
        self.decode_raw(&z.values(), 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraversalMode {
    /// max over alphas of |D(E(x) + alpha v) - x|
    VsOriginal,
    /// |D(E(x) + a v) - D(E(x) - a v)|, max over the positive alphas
    ExaggerateMinusCurtail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraversalConfig {
    pub alphas: Vec<f64>,
    pub mode: TraversalMode,
    pub max_step: f64,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        Self {
            alphas: vec![-10.0, 10.0],
            mode: TraversalMode::VsOriginal,
            max_step: MAX_STEP_SIZE,
        }
    }
}

impl TraversalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step > 0.0 && self.max_step <= MAX_STEP_SIZE) {
            return Err(Error::Config(format!(
                "traversal max_step must lie in (0, {MAX_STEP_SIZE}], got {}",
                self.max_step
            )));
        }
        if self.alphas.is_empty() {
            return Err(Error::Config("traversal alphas must not be empty".into()));
        }
        for &a in &self.alphas {
            if !a.is_finite() || a.abs() > self.max_step {
                return Err(Error::Config(format!(
                    "traversal alpha {a} outside [-{m}, {m}]",
                    m = self.max_step
                )));
            }
        }
        if self.mode == TraversalMode::ExaggerateMinusCurtail {
            let symmetric = self.alphas.iter().all(|a| self.alphas.contains(&-a));
            if !symmetric || self.alphas.iter().all(|&a| a == 0.0) {
                return Err(Error::Config(
                    "exaggerate_minus_curtail needs alphas in +/- pairs".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `z + alpha * v`, exact under repeated and reversed steps.
pub fn traverse(z: &LatentCode, v: &ConceptVector, alpha: f64) -> Result<LatentCode> {
    traverse_within(z, v, alpha, MAX_STEP_SIZE)
}

fn traverse_within(z: &LatentCode, v: &ConceptVector, alpha: f64, max_step: f64) -> Result<LatentCode> {
    if !(alpha.abs() <= max_step) {
        return Err(Error::InvalidArgument(format!(
            "step {alpha} exceeds the traversal bound {max_step}"
        )));
    }
    z.shifted(v.direction_arc(), alpha)
}

fn to_image(model: &dyn LatentModel, mut pixels: Vec<f32>) -> Result<Image> {
    let (w, h) = model.image_shape();
    pixels.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
    Image::new(w, h, pixels)
}

/// `(D(E(x) - alpha v), D(E(x) + alpha v))`, i.e. (curtailed, exaggerated).
pub fn counterfactual_pair(
    model: &dyn LatentModel,
    image: &Image,
    v: &ConceptVector,
    alpha: f64,
) -> Result<(Image, Image)> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "counterfactual step must be positive, got {alpha}"
        )));
    }
    let z = model.encode(image)?;
    let curtailed = model.decode(&traverse(&z, v, -alpha)?)?;
    let exaggerated = model.decode(&traverse(&z, v, alpha)?)?;
    Ok((to_image(model, curtailed)?, to_image(model, exaggerated)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionSource {
    Cav,
    LatentShift,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classifier: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concept: Option<ConceptId>,
    pub coefficients: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<TraversalMode>,
    /// Latent Shift only: the classifier gradient vanished and the map is the
    /// reconstruction error.
    #[serde(default)]
    pub zero_gradient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
    pub source: AttributionSource,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl AttributionMap {
    pub fn new(
        width: usize,
        height: usize,
        values: Vec<f32>,
        source: AttributionSource,
        provenance: Provenance,
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} map with {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("attribution values must be finite and >= 0".into()));
        }
        Ok(Self {
            width,
            height,
            values,
            source,
            provenance,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn stats(&self) -> MapStats {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &v in &self.values {
            let v = v as f64;
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        MapStats {
            min,
            max,
            mean: sum / self.values.len().max(1) as f64,
        }
    }

    /// Min-max scaled to 0..=255; a constant map renders black.
    pub fn to_u8(&self) -> Vec<u8> {
        let s = self.stats();
        let range = s.max - s.min;
        self.values
            .iter()
            .map(|&v| {
                if range > 0.0 {
                    ((v as f64 - s.min) / range * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect()
    }

    /// Writes `<stem>.pgm` and a `<stem>.json` sidecar with raw statistics.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        save_pgm(&dir.join(format!("{stem}.pgm")), self.width, self.height, &self.to_u8())?;
        let json = self.sidecar_json()?;
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn sidecar_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            width: usize,
            height: usize,
            source: AttributionSource,
            #[serde(flatten)]
            stats: MapStats,
            provenance: &'a Provenance,
        }
        let doc = Sidecar {
            width: self.width,
            height: self.height,
            source: self.source,
            stats: self.stats(),
            provenance: &self.provenance,
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }
}

fn abs_diff(a: &[f32], b: &[f32]) -> Vec<f32> {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect()
}

fn max_into(acc: &mut [f32], other: &[f32]) {
    for (a, &o) in acc.iter_mut().zip(other) {
        *a = a.max(o);
    }
}

/// Pixelwise map for shifts `z + c * direction` over `coeffs`.
fn traversal_map(
    model: &dyn LatentModel,
    image: &Image,
    z: &LatentCode,
    direction: &Arc<[f64]>,
    coeffs: &[f64],
    mode: TraversalMode,
) -> Result<Vec<f32>> {
    let mut acc = vec![0.0f32; image.len()];
    match mode {
        TraversalMode::VsOriginal => {
            for &c in coeffs {
                let y = model.decode(&z.shifted(direction, c)?)?;
                max_into(&mut acc, &abs_diff(&y, image.pixels()));
            }
        }
        TraversalMode::ExaggerateMinusCurtail => {
            let mut seen: Vec<f64> = Vec::new();
            for &c in coeffs {
                let a = c.abs();
                if seen.contains(&a) {
                    continue;
                }
                seen.push(a);
                let up = model.decode(&z.shifted(direction, a)?)?;
                let down = model.decode(&z.shifted(direction, -a)?)?;
                max_into(&mut acc, &abs_diff(&up, &down));
            }
        }
    }
    Ok(acc)
}

fn check_shape(model: &dyn LatentModel, image: &Image) -> Result<(usize, usize)> {
    let (w, h) = model.image_shape();
    if image.width() != w || image.height() != h {
        return Err(Error::Shape(format!(
            "model expects {w}x{h} images, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    Ok((w, h))
}

/// Attribution of `image` under traversal along `v`.
pub fn attribution_map(
    model: &dyn LatentModel,
    image: &Image,
    v: &ConceptVector,
    cfg: &TraversalConfig,
) -> Result<AttributionMap> {
    cfg.validate()?;
    let (w, h) = check_shape(model, image)?;
    let z = model.encode(image)?;
    if v.dim() != z.dim() {
        return Err(Error::Shape(format!(
            "{}-dim concept vector for a {}-dim latent",
            v.dim(),
            z.dim()
        )));
    }
    let values = traversal_map(model, image, &z, v.direction_arc(), &cfg.alphas, cfg.mode)?;
    AttributionMap::new(
        w,
        h,
        values,
        AttributionSource::Cav,
        Provenance {
            concept: v.concept,
            coefficients: cfg.alphas.clone(),
            mode: Some(cfg.mode),
            ..Provenance::default()
        },
    )
}

/// Latent Shift baseline: the latent moves to `z - lambda * g` where `g` is
/// the gradient of the classifier's concept logit through the decoder.
pub fn latent_shift_attribution(
    ae: &Autoencoder,
    clf: &Classifier,
    image: &Image,
    concept: ConceptId,
    lambdas: &[f64],
    mode: TraversalMode,
) -> Result<AttributionMap> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument("latent shift needs finite lambdas".into()));
    }
    let (w, h) = check_shape(ae, image)?;
    let z = LatentModel::encode(ae, image)?;
    let g = latent_gradient(ae, clf, &z.values(), concept)?;
    let g: Vec<f64> = g.iter().map(|&x| x as f64).collect();
    let mut provenance = Provenance {
        concept: Some(concept),
        coefficients: lambdas.to_vec(),
        mode: Some(mode),
        ..Provenance::default()
    };
    let values = if l2_norm(&g) == 0.0 {
        log::warn!("latent shift: zero classifier gradient for {concept}; using reconstruction error");
        provenance.zero_gradient = true;
        abs_diff(&LatentModel::decode(ae, &z)?, image.pixels())
    } else {
        let direction: Arc<[f64]> = g.into();
        let coeffs: Vec<f64> = lambdas.iter().map(|l| -l).collect();
        traversal_map(ae, image, &z, &direction, &coeffs, mode)?
    };
    AttributionMap::new(w, h, values, AttributionSource::LatentShift, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cav::{random_unit_vector, StyleTag, VectorKind};

    /// E = id, D = id on 2x2 images.
    struct Identity;

    impl LatentModel for Identity {
        fn image_shape(&self) -> (usize, usize) {
            (2, 2)
        }
        fn latent_dim(&self) -> usize {
            4
        }
        fn encode(&self, image: &Image) -> Result<LatentCode> {
            Ok(LatentCode::new(image.pixels().to_vec()))
        }
        fn decode(&self, z: &LatentCode) -> Result<Vec<f32>> {
            Ok(z.values())
        }
    }

    fn image() -> Image {
        Image::new(2, 2, vec![0.5, 0.4, 0.3, 0.6]).unwrap()
    }

    fn vector(dir: &[f64]) -> ConceptVector {
        ConceptVector::new(dir.to_vec(), Some(ConceptId::Cardio), StyleTag::A, vec![0], VectorKind::Single)
            .unwrap()
    }

    #[test]
    fn traverse_examples() {
        let v = random_unit_vector(4, 1).unwrap();
        let z = LatentCode::new(vec![0.1, -0.2, 0.3, 0.7]);
        assert_eq!(traverse(&z, &v, 0.0).unwrap().values(), z.values());
        let back = traverse(&traverse(&z, &v, 3.7).unwrap(), &v, -3.7).unwrap();
        assert_eq!(back, z);
        let moved = traverse(&z, &v, -2.5).unwrap().values();
        let d: Vec<f64> = moved.iter().zip(z.values()).map(|(a, b)| (*a - b) as f64).collect();
        assert!((l2_norm(&d) - 2.5).abs() < 1e-5);
        assert!(traverse(&z, &v, 1000.5).is_err());
        assert!(traverse(&LatentCode::new(vec![0.0; 3]), &v, 1.0).is_err());
    }

    #[test]
    fn stub_counterfactuals() {
        let v = vector(&[1.0, -1.0, 0.5, 0.0]);
        let (cur, exa) = counterfactual_pair(&Identity, &image(), &v, 0.1).unwrap();
        for i in 0..4 {
            let expect = image().pixels()[i] as f64 + 0.1 * v.direction()[i];
            assert!((exa.pixels()[i] as f64 - expect).abs() < 1e-6);
            let expect = image().pixels()[i] as f64 - 0.1 * v.direction()[i];
            assert!((cur.pixels()[i] as f64 - expect).abs() < 1e-6);
        }
        let (cur2, exa2) = counterfactual_pair(&Identity, &image(), &v.negated(), 0.1).unwrap();
        assert_eq!((cur2, exa2), (exa, cur));
        assert!(counterfactual_pair(&Identity, &image(), &v, 0.0).is_err());

        let (a, b) = counterfactual_pair(&Identity, &image(), &v, 1e-6).unwrap();
        for (x, y) in a.pixels().iter().zip(b.pixels()) {
            assert!((x - y).abs() < 1e-3);
        }
    }

    #[test]
    fn stub_attribution_is_alpha_v() {
        let v = vector(&[1.0, -2.0, 0.5, 0.0]);
        let cfg = TraversalConfig {
            alphas: vec![3.0],
            ..TraversalConfig::default()
        };
        let map = attribution_map(&Identity, &image(), &v, &cfg).unwrap();
        for (m, d) in map.values().iter().zip(v.direction()) {
            assert!((*m as f64 - (3.0 * d).abs()).abs() < 1e-5);
        }
    }

    #[test]
    fn symmetric_alphas_take_the_pixelwise_max() {
        let v = vector(&[1.0, -2.0, 0.5, 0.25]);
        let single = |a: f64| {
            let cfg = TraversalConfig {
                alphas: vec![a],
                ..TraversalConfig::default()
            };
            attribution_map(&Identity, &image(), &v, &cfg).unwrap()
        };
        let both = attribution_map(&Identity, &image(), &v, &TraversalConfig::default()).unwrap();
        let (m1, m2) = (single(-10.0), single(10.0));
        for i in 0..4 {
            assert_eq!(both.values()[i], m1.values()[i].max(m2.values()[i]));
        }

        let emc = TraversalConfig {
            mode: TraversalMode::ExaggerateMinusCurtail,
            ..TraversalConfig::default()
        };
        let e = attribution_map(&Identity, &image(), &v, &emc).unwrap();
        for i in 0..4 {
            assert!(e.values()[i] <= m1.values()[i] + m2.values()[i] + 1e-6);
        }
    }

    #[test]
    fn zero_alpha_gives_reconstruction_error() {
        let ae = Autoencoder::new(4, 4, 8, 3, 9);
        let img = Image::new(4, 4, (0..16).map(|i| i as f32 / 16.0).collect()).unwrap();
        let v = random_unit_vector(3, 2).unwrap();
        let cfg = TraversalConfig {
            alphas: vec![0.0],
            ..TraversalConfig::default()
        };
        let map = attribution_map(&ae, &img, &v, &cfg).unwrap();
        let recon = ae.reconstruct(&img).unwrap();
        for ((m, r), x) in map.values().iter().zip(recon.pixels()).zip(img.pixels()) {
            assert_eq!(*m, (r - x).abs());
        }
    }

    #[test]
    fn config_validation() {
        assert!(TraversalConfig::default().validate().is_ok());
        let bad = |alphas: Vec<f64>, mode| TraversalConfig {
            alphas,
            mode,
            max_step: MAX_STEP_SIZE,
        };
        assert!(bad(vec![], TraversalMode::VsOriginal).validate().is_err());
        assert!(bad(vec![1001.0], TraversalMode::VsOriginal).validate().is_err());
        assert!(bad(vec![5.0], TraversalMode::ExaggerateMinusCurtail).validate().is_err());
        assert!(bad(vec![0.0], TraversalMode::ExaggerateMinusCurtail).validate().is_err());
        assert!(bad(vec![-5.0, 5.0], TraversalMode::ExaggerateMinusCurtail).validate().is_ok());
    }

    #[test]
    fn latent_shift_zero_lambda_and_shape() {
        let ae = Autoencoder::new(4, 4, 8, 3, 9);
        let clf = Classifier::new(16, 5, ConceptId::ALL.to_vec(), 4);
        let img = Image::new(4, 4, (0..16).map(|i| i as f32 / 20.0).collect()).unwrap();
        let map = latent_shift_attribution(&ae, &clf, &img, ConceptId::Nodule, &[0.0], TraversalMode::VsOriginal)
            .unwrap();
        let recon = ae.reconstruct(&img).unwrap();
        for ((m, r), x) in map.values().iter().zip(recon.pixels()).zip(img.pixels()) {
            assert_eq!(*m, (r - x).abs());
        }
        let map = latent_shift_attribution(
            &ae,
            &clf,
            &img,
            ConceptId::Nodule,
            &[0.1, 1.0, 10.0],
            TraversalMode::VsOriginal,
        )
        .unwrap();
        assert_eq!((map.width(), map.height()), (4, 4));
        assert!(map.values().iter().all(|v| *v >= 0.0));
        assert!(!map.provenance.zero_gradient);
    }

    #[test]
    fn export_scales_and_writes_sidecar() {
        let map = AttributionMap::new(
            2,
            1,
            vec![0.5, 1.5],
            AttributionSource::Cav,
            Provenance::default(),
        )
        .unwrap();
        assert_eq!(map.to_u8(), vec![0, 255]);
        let dir = tempfile::tempdir().unwrap();
        map.save(dir.path(), "m").unwrap();
        let side: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
        assert_eq!(side["max"], 1.5);
        assert_eq!(side["mean"], 1.0);
        assert!(dir.path().join("m.pgm").exists());
        assert!(AttributionMap::new(1, 1, vec![-1.0], AttributionSource::Cav, Provenance::default()).is_err());
    }
}
