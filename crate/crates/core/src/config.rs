//! Experiment configuration file (TOML). Every section is optional and falls
//! back to its defaults; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cav::CavConfig;
use crate::error::{Error, Result};
use crate::explain::TraversalConfig;
use crate::models::{AutoencoderConfig, ClassifierConfig};
use crate::synthgen::{default_prevalences, ConceptId, StyleId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub styles: Vec<StyleId>,
    /// Training images per style.
    pub n: usize,
    /// Held-out evaluation images per style.
    pub n_eval: usize,
    pub prevalences: BTreeMap<ConceptId, f64>,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            styles: StyleId::ALL.to_vec(),
            n: 1500,
            n_eval: 400,
            prevalences: default_prevalences(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavSection {
    pub n_pos: usize,
    pub n_neg: usize,
    /// Single vectors per (concept, style, rerun); each rerun's vectors are
    /// also averaged into one mean vector.
    pub n_cavs: usize,
    pub n_reruns: usize,
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl CavSection {
    pub fn fit(&self) -> CavConfig {
        CavConfig {
            lr: self.lr,
            l2: self.l2,
            epochs: self.epochs,
            val_fraction: self.val_fraction,
            seed: self.seed,
        }
    }
}

impl Default for CavSection {
    fn default() -> Self {
        let fit = CavConfig::default();
        Self {
            n_pos: 250,
            n_neg: 250,
            n_cavs: 10,
            n_reruns: 3,
            lr: fit.lr,
            l2: fit.l2,
            epochs: fit.epochs,
            val_fraction: fit.val_fraction,
            seed: fit.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub lambdas: Vec<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.1, 1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub percentile: f64,
    pub n_random: usize,
    /// Random vectors scored for IoU (the first ones of the similarity set).
    pub n_random_iou: usize,
    /// Cap on positive samples scored per (method, concept).
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            percentile: 95.0,
            n_random: 100,
            n_random_iou: 10,
            max_samples: 100,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub autoencoder: AutoencoderConfig,
    pub classifier: ClassifierConfig,
    pub cav: CavSection,
    pub traversal: TraversalConfig,
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.styles.is_empty() {
            return Err(Error::Config("data.styles must name at least one style".into()));
        }
        let mut styles = d.styles.clone();
        styles.sort();
        styles.dedup();
        if styles.len() != d.styles.len() {
            return Err(Error::Config("data.styles lists a style twice".into()));
        }
        if d.n == 0 || d.n_eval == 0 {
            return Err(Error::Config("data.n and data.n_eval must be positive".into()));
        }
        for (c, p) in &d.prevalences {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Config(format!("data.prevalences.{c} = {p} is outside [0, 1]")));
            }
        }
        self.autoencoder.validate()?;
        self.classifier.validate()?;
        let c = &self.cav;
        if c.n_pos == 0 || c.n_neg == 0 {
            return Err(Error::Config("cav.n_pos and cav.n_neg must be positive".into()));
        }
        if c.n_cavs < 2 || c.n_reruns < 2 {
            return Err(Error::Config(
                "cav.n_cavs and cav.n_reruns must be >= 2 so groups have distinct pairs".into(),
            ));
        }
        c.fit().validate()?;
        self.traversal.validate()?;
        if self.baseline.lambdas.is_empty() || self.baseline.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("baseline.lambdas must be a nonempty list of finite numbers".into()));
        }
        let e = &self.eval;
        if !(e.percentile > 0.0 && e.percentile < 100.0) {
            return Err(Error::Config(format!("eval.percentile must lie in (0, 100), got {}", e.percentile)));
        }
        if e.n_random == 0 || e.max_samples == 0 || e.n_random_iou == 0 || e.n_random_iou > e.n_random {
            return Err(Error::Config(
                "eval needs n_random >= 1, max_samples >= 1 and 1 <= n_random_iou <= n_random".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, without the output section, so
    /// the same experiment hashes identically wherever it is written.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        hex::encode(digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT_TOML: &str = include_str!("../configs/default.toml");

    #[test]
    fn shipped_default_matches_code_defaults() {
        assert_eq!(ExperimentConfig::from_toml(DEFAULT_TOML).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[data]\nsize = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[cav]\nlearning_rate = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[extra]\n").is_err());
    }

    #[test]
    fn out_of_bounds_alpha_is_rejected() {
        let err = ExperimentConfig::from_toml("[traversal]\nalphas = [-2000.0, 2000.0]\n").unwrap_err();
        assert!(err.is_user_error());
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output.directory = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.cav.n_cavs = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
