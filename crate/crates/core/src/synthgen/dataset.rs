//! On-disk dataset layout:
//!
//! ```text
//! meta.json                   generation parameters
//! labels.csv                  id,CARDIO,NODULE,EFFUSION with 0/1 flags
//! images/000000.pgm           P5, round(255 * intensity)
//! masks/000000_CARDIO.pgm     P5, 0/255, one file per present concept
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phantom::{generate_sample, ConceptId, Sample, StyleId, StyleParams};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, Image, IMAGE_SIZE};
use crate::numerics::{derive_seed, Rng};
use crate::pgm;

pub const DATASET_FORMAT_VERSION: u32 = 1;
const STREAM_LABELS: u64 = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub style: StyleId,
    pub style_params: StyleParams,
    pub seed: u64,
    pub n: usize,
    pub image_size: usize,
    pub prevalences: BTreeMap<ConceptId, f64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Indices of samples labeled with / without `concept`, in id order.
    pub fn split_by(&self, concept: ConceptId) -> (Vec<usize>, Vec<usize>) {
        (0..self.samples.len()).partition(|&i| self.samples[i].has(concept))
    }

    pub fn images(&self) -> Vec<Image> {
        self.samples.iter().map(|s| s.image.clone()).collect()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = read_meta(dir)?;
        let labels = read_labels(&dir.join("labels.csv"), meta.n)?;
        let samples = labels
            .into_par_iter()
            .enumerate()
            .map(|(id, labels)| {
                let image = read_image(dir, id)?;
                let mut masks = BTreeMap::new();
                for &c in &labels {
                    let path = dir.join("masks").join(mask_name(id, c));
                    let (w, h, bytes) = pgm::load_pgm(&path)?;
                    masks.insert(c, BinaryMask::from_u8(w, h, &bytes)?);
                }
                Ok(Sample {
                    id: id as u64,
                    image,
                    labels,
                    masks,
                    style: meta.style,
                    seed: derive_seed(meta.seed, id as u64),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { meta, samples })
    }
}

impl DatasetMeta {
    /// Reads `meta.json` of a dataset directory.
    pub fn read(dir: &Path) -> Result<Self> {
        read_meta(dir)
    }
}

pub fn default_prevalences() -> BTreeMap<ConceptId, f64> {
    ConceptId::ALL.iter().map(|&c| (c, 0.3)).collect()
}

fn validate_prevalences(prevalences: &BTreeMap<ConceptId, f64>) -> Result<()> {
    for (c, p) in prevalences {
        if !(0.0..=1.0).contains(p) {
            return Err(Error::InvalidArgument(format!(
                "prevalence of {c} must lie in [0, 1], got {p}"
            )));
        }
    }
    Ok(())
}

/// Sample `id` of a dataset: labels drawn independently per concept from the
/// per-sample seed `derive_seed(seed, id)`.
fn dataset_sample(
    style: StyleId,
    prevalences: &BTreeMap<ConceptId, f64>,
    seed: u64,
    id: u64,
) -> Sample {
    let sample_seed = derive_seed(seed, id);
    let mut rng = Rng::stream(sample_seed, STREAM_LABELS);
    let labels: BTreeSet<ConceptId> = ConceptId::ALL
        .into_iter()
        .filter(|c| {
            let u = rng.next_f64();
            u < prevalences.get(c).copied().unwrap_or(0.0)
        })
        .collect();
    let mut sample = generate_sample(style, &labels, sample_seed);
    sample.id = id;
    sample
}

/// In-memory dataset generation, parallel over samples.
pub fn generate_samples(
    style: StyleId,
    n: usize,
    prevalences: &BTreeMap<ConceptId, f64>,
    seed: u64,
) -> Result<Vec<Sample>> {
    validate_prevalences(prevalences)?;
    Ok((0..n as u64)
        .into_par_iter()
        .map(|id| dataset_sample(style, prevalences, seed, id))
        .collect())
}

pub fn generate_dataset(
    style: StyleId,
    n: usize,
    prevalences: &BTreeMap<ConceptId, f64>,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetMeta> {
    validate_prevalences(prevalences)?;
    let images_dir = out_dir.join("images");
    let masks_dir = out_dir.join("masks");
    for d in [out_dir, &images_dir, &masks_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let meta = DatasetMeta {
        format_version: DATASET_FORMAT_VERSION,
        style,
        style_params: style.params(),
        seed,
        n,
        image_size: IMAGE_SIZE,
        prevalences: prevalences.clone(),
    };

    let label_rows = (0..n as u64)
        .into_par_iter()
        .map(|id| {
            let sample = dataset_sample(style, prevalences, seed, id);
            let path = images_dir.join(format!("{id:06}.pgm"));
            pgm::save_pgm(&path, IMAGE_SIZE, IMAGE_SIZE, &sample.image.to_u8())?;
            for (c, mask) in &sample.masks {
                let path = masks_dir.join(mask_name(id as usize, *c));
                pgm::save_pgm(&path, IMAGE_SIZE, IMAGE_SIZE, &mask.to_u8())?;
            }
            Ok(sample.labels)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut csv = String::from("id,CARDIO,NODULE,EFFUSION\n");
    for (id, labels) in label_rows.iter().enumerate() {
        let _ = write!(csv, "{id}");
        for c in ConceptId::ALL {
            let _ = write!(csv, ",{}", u8::from(labels.contains(&c)));
        }
        csv.push('\n');
    }
    let labels_path = out_dir.join("labels.csv");
    fs::write(&labels_path, csv).map_err(|e| Error::io(&labels_path, e))?;

    let meta_path = out_dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta)? + "\n";
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    Ok(meta)
}

/// Reads only `meta.json` and `images/`; labels and masks are never opened.
pub fn load_images(dir: &Path) -> Result<Vec<Image>> {
    let meta = read_meta(dir)?;
    (0..meta.n)
        .into_par_iter()
        .map(|id| read_image(dir, id))
        .collect()
}

fn mask_name(id: usize, concept: ConceptId) -> String {
    format!("{id:06}_{}.pgm", concept.name())
}

fn read_meta(dir: &Path) -> Result<DatasetMeta> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path)
        .map_err(|_| Error::MissingInput(format!("dataset metadata {}", path.display())))?;
    let meta: DatasetMeta =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if meta.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported format version {}", meta.format_version),
        ));
    }
    Ok(meta)
}

fn read_image(dir: &Path, id: usize) -> Result<Image> {
    let path = dir.join("images").join(format!("{id:06}.pgm"));
    let (w, h, bytes) = pgm::load_pgm(&path)?;
    Image::from_u8(w, h, &bytes)
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<BTreeSet<ConceptId>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let columns: Vec<ConceptId> = header
        .split(',')
        .skip(1)
        .map(str::parse)
        .collect::<Result<_>>()
        .map_err(|e| Error::format(path, format!("header: {e}")))?;
    if !header.starts_with("id,") {
        return Err(Error::format(path, "header must start with `id`"));
    }
    let mut out = Vec::with_capacity(n);
    for (row, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let id: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::format(path, format!("row {row}: bad id")))?;
        if id != row {
            return Err(Error::format(path, format!("row {row} has id {id}")));
        }
        let mut labels = BTreeSet::new();
        for &c in &columns {
            match fields.next() {
                Some("1") => {
                    labels.insert(c);
                }
                Some("0") => {}
                other => {
                    return Err(Error::format(
                        path,
                        format!("row {row}: bad flag {other:?} for {c}"),
                    ))
                }
            }
        }
        out.push(labels);
    }
    if out.len() != n {
        return Err(Error::format(
            path,
            format!("{} rows but meta.json says n = {n}", out.len()),
        ));
    }
    Ok(out)
}
