//! Checkpoint files.
//!
//! Layout: 6-byte magic (`CAVAE1` autoencoder, `CAVCL1` classifier), a
//! little-endian `u32` header length, the JSON header (architecture, format
//! version, training metadata), then every parameter as a little-endian
//! `f32`: per layer the weights row-major followed by the biases, layers in
//! order from encoder input to decoder output.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::autoencoder::{Autoencoder, TrainingInfo};
use super::classifier::{Classifier, ClassifierInfo};
use super::mlp::{Dense, Mlp};
use crate::error::{Error, Result};
use crate::numerics::Activation;
use crate::synthgen::ConceptId;

pub const AUTOENCODER_MAGIC: &[u8; 6] = b"CAVAE1";
pub const CLASSIFIER_MAGIC: &[u8; 6] = b"CAVCL1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub kind: String,
    pub image_width: usize,
    pub image_height: usize,
    pub layers: Vec<LayerSpec>,
    /// Number of leading layers that form the encoder (autoencoders only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_layers: Option<usize>,
    /// Output order (classifiers only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concepts: Option<Vec<ConceptId>>,
    pub metadata: serde_json::Value,
}

fn encode(magic: &[u8; 6], header: &CheckpointHeader, layers: &[&Dense<f32>]) -> Result<Vec<u8>> {
    let header_bytes = serde_json::to_vec(header)?;
    let n_params: usize = layers.iter().map(|l| l.param_count()).sum();
    let mut out = Vec::with_capacity(10 + header_bytes.len() + 4 * n_params);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for l in layers {
        for v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn decode(bytes: &[u8], magic: &[u8; 6], path: &Path) -> Result<(CheckpointHeader, Vec<Dense<f32>>)> {
    let bad = |reason: String| Error::format(path, reason);
    if bytes.len() < 10 || &bytes[..6] != magic {
        return Err(bad(format!(
            "expected magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let header_end = 10 + header_len;
    if bytes.len() < header_end {
        return Err(bad("truncated header".into()));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[10..header_end]).map_err(|e| bad(format!("header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", header.format_version)));
    }
    let n_params: usize = header.layers.iter().map(|l| l.n_in * l.n_out + l.n_out).sum();
    let payload = &bytes[header_end..];
    if payload.len() != 4 * n_params {
        return Err(bad(format!(
            "payload has {} bytes, architecture needs {}",
            payload.len(),
            4 * n_params
        )));
    }
    let mut floats = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut layers = Vec::with_capacity(header.layers.len());
    for spec in &header.layers {
        let weights: Vec<f32> = floats.by_ref().take(spec.n_in * spec.n_out).collect();
        let bias: Vec<f32> = floats.by_ref().take(spec.n_out).collect();
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(bad("non-finite parameter".into()));
        }
        layers.push(Dense {
            n_in: spec.n_in,
            n_out: spec.n_out,
            weights,
            bias,
            activation: spec.activation,
        });
    }
    Ok((header, layers))
}

fn spec(l: &Dense<f32>) -> LayerSpec {
    LayerSpec {
        n_in: l.n_in,
        n_out: l.n_out,
        activation: l.activation,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|_| Error::MissingInput(format!("checkpoint {}", path.display())))
}

impl Autoencoder<f32> {
    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let layers: Vec<&Dense<f32>> = self
            .encoder
            .layers()
            .iter()
            .chain(self.decoder.layers())
            .collect();
        let header = CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            kind: "autoencoder".into(),
            image_width: self.width,
            image_height: self.height,
            layers: layers.iter().map(|l| spec(l)).collect(),
            encoder_layers: Some(self.encoder.layers().len()),
            concepts: None,
            metadata: serde_json::to_value(&self.info)?,
        };
        encode(AUTOENCODER_MAGIC, &header, &layers)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let (header, mut layers) = decode(bytes, AUTOENCODER_MAGIC, path)?;
        let split = header
            .encoder_layers
            .filter(|&s| s > 0 && s < layers.len())
            .ok_or_else(|| Error::format(path, "missing or invalid encoder_layers"))?;
        let decoder_layers = layers.split_off(split);
        let info: TrainingInfo = serde_json::from_value(header.metadata)
            .map_err(|e| Error::format(path, format!("metadata: {e}")))?;
        let ae = Autoencoder {
            encoder: Mlp::from_layers(layers)?,
            decoder: Mlp::from_layers(decoder_layers)?,
            width: header.image_width,
            height: header.image_height,
            info,
        };
        if ae.encoder.n_in() != ae.pixels() || ae.decoder.n_out() != ae.pixels() {
            return Err(Error::format(path, "architecture does not match image size"));
        }
        if ae.encoder.n_out() != ae.decoder.n_in() {
            return Err(Error::format(path, "encoder and decoder disagree on latent size"));
        }
        Ok(ae)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_checkpoint_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_bytes(&read_file(path)?, path)
    }
}

impl Classifier<f32> {
    pub fn to_checkpoint_bytes(&self, image_width: usize, image_height: usize) -> Result<Vec<u8>> {
        let layers: Vec<&Dense<f32>> = self.net.layers().iter().collect();
        let header = CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            kind: "classifier".into(),
            image_width,
            image_height,
            layers: layers.iter().map(|l| spec(l)).collect(),
            encoder_layers: None,
            concepts: Some(self.concepts.clone()),
            metadata: serde_json::to_value(&self.info)?,
        };
        encode(CLASSIFIER_MAGIC, &header, &layers)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let (header, layers) = decode(bytes, CLASSIFIER_MAGIC, path)?;
        let concepts = header
            .concepts
            .ok_or_else(|| Error::format(path, "classifier header lacks concepts"))?;
        let info: ClassifierInfo = serde_json::from_value(header.metadata)
            .map_err(|e| Error::format(path, format!("metadata: {e}")))?;
        let net = Mlp::from_layers(layers)?;
        if net.n_out() != concepts.len() || net.n_in() != header.image_width * header.image_height {
            return Err(Error::format(path, "architecture does not match header"));
        }
        Ok(Classifier { net, concepts, info })
    }

    pub fn save(&self, path: &Path, image_width: usize, image_height: usize) -> Result<()> {
        write_file(path, &self.to_checkpoint_bytes(image_width, image_height)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_bytes(&read_file(path)?, path)
    }
}
