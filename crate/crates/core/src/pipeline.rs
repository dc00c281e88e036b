//! On-disk experiment runs. A run directory is named by the config hash and
//! laid out as
//!
//! ```text
//! config.json                       the config (output section excluded)
//! data/{train,eval}_<STYLE>/        datasets
//! models/autoencoder.ckpt
//! models/classifier.ckpt
//! cavs/<CONCEPT>/<STYLE>/r<R>_<I>.json   single vectors
//! cavs/<CONCEPT>/<STYLE>/mean_r<R>.json  per-rerun averages
//! reports/                          similarity, IoU and reconstruction tables
//! explain/<panel>/                  counterfactual and attribution images
//! manifest.json                     sha256 of every file above
//! ```
//!
//! Stages skip work whose outputs already exist. Files are never overwritten
//! with different content: that raises an artifact conflict.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cav::{average_cavs, extract_cav_from_latents, random_unit_vector, ConceptVector, StyleTag};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_iou, mask_reconstruction_error, render_iou, render_similarity, similarity_report, Format,
    IouReport, IouRow, MaskErrorRow, SimilarityReport, VectorGroup,
};
use crate::explain::{attribution_map, counterfactual_pair, latent_shift_attribution, AttributionMap};
use crate::image::{Image, IMAGE_SIZE};
use crate::models::{train_autoencoder, train_classifier, Autoencoder, Classifier};
use crate::numerics::derive_seed;
use crate::pgm::encode_pgm;
use crate::synthgen::{balanced_batch, generate_dataset, load_images, ConceptId, Dataset, DatasetMeta, StyleId};

/// Hex digits of the config hash used in the run directory name.
const RUN_DIR_HASH_LEN: usize = 16;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `bytes` to `path` unless an identical file is already there.
pub fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    match fs::read(path) {
        Ok(existing) if existing == bytes => return Ok(()),
        Ok(_) => return Err(Error::ArtifactConflict(path.to_path_buf())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(Error::io(path, e)),
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_new(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}

fn write_image(path: &Path, image: &Image) -> Result<()> {
    write_new(path, &encode_pgm(image.width(), image.height(), &image.to_u8()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

/// Attribution method for single explanations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CavMean,
    CavSingle,
    LatentShift,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::CavMean => "cav_mean",
            Method::CavSingle => "cav_single",
            Method::LatentShift => "latent_shift",
            Method::Random => "random",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::CavMean, Method::CavSingle, Method::LatentShift, Method::Random]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// The vectors of one (concept, style): singles per rerun and rerun means.
#[derive(Debug, Clone)]
pub struct CavSet {
    pub singles: Vec<Vec<ConceptVector>>,
    pub means: Vec<ConceptVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRow {
    pub style: StyleId,
    /// Per-pixel squared error over the whole held-out set.
    pub mse: f64,
    pub in_mask: Vec<MaskErrorRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub config_hash: String,
    pub similarity: Vec<SimilarityReport>,
    pub iou: IouReport,
    pub reconstruction: Vec<ReconstructionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    /// sha256 over the `path sha256` lines of all entries.
    pub run_hash: String,
    pub files: Vec<ManifestEntry>,
}

pub struct Pipeline {
    cfg: ExperimentConfig,
    hash: String,
    root: PathBuf,
}

impl Pipeline {
    /// Run rooted at `<out or config output directory>/<hash prefix>`.
    pub fn new(cfg: ExperimentConfig, out: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash();
        let base = out.map_or_else(|| cfg.output.directory.clone(), Path::to_path_buf);
        let root = base.join(&hash[..RUN_DIR_HASH_LEN]);
        Ok(Self { cfg, hash, root })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_config(&self) -> Result<()> {
        let mut value = serde_json::to_value(&self.cfg)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        write_json(&self.root.join("config.json"), &value)
    }

    pub fn data_dir(&self, split: Split, style: StyleId) -> PathBuf {
        self.root.join("data").join(format!("{}_{}", split.name(), style.name()))
    }

    fn style_index(style: StyleId) -> u64 {
        StyleId::ALL.iter().position(|&s| s == style).expect("known style") as u64
    }

    fn data_seed(&self, split: Split, style: StyleId) -> u64 {
        let split_index = match split {
            Split::Train => 0,
            Split::Eval => 1,
        };
        derive_seed(derive_seed(self.cfg.data.seed, split_index), Self::style_index(style))
    }

    fn autoencoder_path(&self) -> PathBuf {
        self.root.join("models").join("autoencoder.ckpt")
    }

    fn classifier_path(&self) -> PathBuf {
        self.root.join("models").join("classifier.ckpt")
    }

    fn cav_dir(&self, concept: ConceptId, style: StyleId) -> PathBuf {
        self.root.join("cavs").join(concept.name()).join(style.name())
    }

    fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn gen_data(&self) -> Result<()> {
        self.write_config()?;
        let d = &self.cfg.data;
        for &style in &d.styles {
            for (split, n) in [(Split::Train, d.n), (Split::Eval, d.n_eval)] {
                let dir = self.data_dir(split, style);
                let seed = self.data_seed(split, style);
                if dir.join("meta.json").exists() {
                    let meta = DatasetMeta::read(&dir)?;
                    if meta.style != style || meta.n != n || meta.seed != seed || meta.prevalences != d.prevalences {
                        return Err(Error::ArtifactConflict(dir));
                    }
                    log::info!("dataset {} exists, skipping", dir.display());
                    continue;
                }
                log::info!("generating {n} style {style} images into {}", dir.display());
                let tmp = dir.with_extension("partial");
                if tmp.exists() {
                    fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
                }
                generate_dataset(style, n, &d.prevalences, seed, &tmp)?;
                fs::rename(&tmp, &dir).map_err(|e| Error::io(&dir, e))?;
            }
        }
        Ok(())
    }

    fn load_dataset(&self, split: Split, style: StyleId) -> Result<Dataset> {
        let dir = self.data_dir(split, style);
        if !dir.join("meta.json").exists() {
            return Err(Error::MissingInput(format!(
                "dataset {} (run gen-data first)",
                dir.display()
            )));
        }
        Dataset::load(&dir)
    }

    pub fn train(&self) -> Result<()> {
        self.write_config()?;
        let ae_path = self.autoencoder_path();
        if ae_path.exists() {
            log::info!("{} exists, skipping autoencoder training", ae_path.display());
        } else {
            let mut images = Vec::new();
            for &style in &self.cfg.data.styles {
                let dir = self.data_dir(Split::Train, style);
                if !dir.join("meta.json").exists() {
                    return Err(Error::MissingInput(format!(
                        "dataset {} (run gen-data first)",
                        dir.display()
                    )));
                }
                images.extend(load_images(&dir)?);
            }
            log::info!("training autoencoder on {} images", images.len());
            let ae = train_autoencoder(&images, &self.cfg.autoencoder)?;
            write_new(&ae_path, &ae.to_checkpoint_bytes()?)?;
        }

        let clf_path = self.classifier_path();
        if clf_path.exists() {
            log::info!("{} exists, skipping classifier training", clf_path.display());
        } else {
            let mut images = Vec::new();
            let mut labels = Vec::new();
            for &style in &self.cfg.data.styles {
                let ds = self.load_dataset(Split::Train, style)?;
                for s in ds.samples {
                    images.push(s.image);
                    labels.push(s.labels);
                }
            }
            log::info!("training classifier on {} images", images.len());
            let clf = train_classifier(&images, &labels, &self.cfg.classifier)?;
            write_new(&clf_path, &clf.to_checkpoint_bytes(IMAGE_SIZE, IMAGE_SIZE)?)?;
        }
        Ok(())
    }

    pub fn load_autoencoder(&self) -> Result<Autoencoder> {
        let path = self.autoencoder_path();
        if !path.exists() {
            return Err(Error::MissingInput(format!("{} (run train first)", path.display())));
        }
        Autoencoder::load(&path)
    }

    pub fn load_classifier(&self) -> Result<Classifier> {
        let path = self.classifier_path();
        if !path.exists() {
            return Err(Error::MissingInput(format!("{} (run train first)", path.display())));
        }
        Classifier::load(&path)
    }

    fn batch_seed(&self, concept: ConceptId, style: StyleId, rerun: usize, index: usize) -> u64 {
        let c = &self.cfg.cav;
        let per_pair = derive_seed(derive_seed(c.seed, concept.index() as u64), Self::style_index(style));
        derive_seed(per_pair, (rerun * c.n_cavs + index) as u64)
    }

    fn single_path(&self, concept: ConceptId, style: StyleId, rerun: usize, index: usize) -> PathBuf {
        self.cav_dir(concept, style).join(format!("r{rerun}_{index}.json"))
    }

    fn mean_path(&self, concept: ConceptId, style: StyleId, rerun: usize) -> PathBuf {
        self.cav_dir(concept, style).join(format!("mean_r{rerun}.json"))
    }

    pub fn extract_cavs(&self) -> Result<()> {
        self.write_config()?;
        let c = &self.cfg.cav;
        let fit = c.fit();
        let mut ae = None;
        for &style in &self.cfg.data.styles {
            let complete = ConceptId::ALL
                .iter()
                .all(|&concept| (0..c.n_reruns).all(|r| self.mean_path(concept, style, r).exists()));
            if complete {
                log::info!("concept vectors for style {style} exist, skipping");
                continue;
            }
            let ae = match &ae {
                Some(ae) => ae,
                None => ae.insert(self.load_autoencoder()?),
            };
            let ds = self.load_dataset(Split::Train, style)?;
            let latents = ae.encode_batch(&ds.images())?;
            for concept in ConceptId::ALL {
                for r in 0..c.n_reruns {
                    let singles = (0..c.n_cavs)
                        .into_par_iter()
                        .map(|i| {
                            let batch = balanced_batch(&ds, concept, c.n_pos, c.n_neg, self.batch_seed(concept, style, r, i))?;
                            extract_cav_from_latents(&latents, StyleTag::from(style), &batch, &fit)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    for (i, v) in singles.iter().enumerate() {
                        write_new(&self.single_path(concept, style, r, i), v.to_json()?.as_bytes())?;
                    }
                    let mean = average_cavs(&singles)?;
                    write_new(&self.mean_path(concept, style, r), mean.to_json()?.as_bytes())?;
                    let low = singles.iter().filter(|v| v.low_separability).count();
                    log::info!(
                        "{concept}/{style} rerun {r}: {} vectors, {low} weakly separable",
                        singles.len()
                    );
                }
            }
        }
        Ok(())
    }

    pub fn load_cavs(&self, concept: ConceptId, style: StyleId) -> Result<CavSet> {
        let c = &self.cfg.cav;
        let mut singles = Vec::with_capacity(c.n_reruns);
        let mut means = Vec::with_capacity(c.n_reruns);
        for r in 0..c.n_reruns {
            singles.push(
                (0..c.n_cavs)
                    .map(|i| ConceptVector::load(&self.single_path(concept, style, r, i)))
                    .collect::<Result<Vec<_>>>()?,
            );
            means.push(ConceptVector::load(&self.mean_path(concept, style, r))?);
        }
        Ok(CavSet { singles, means })
    }

    fn random_vectors(&self, d: usize) -> Result<Vec<ConceptVector>> {
        (0..self.cfg.eval.n_random as u64)
            .map(|i| random_unit_vector(d, derive_seed(self.cfg.eval.seed, i)))
            .collect()
    }

    pub fn evaluate(&self) -> Result<Evaluation> {
        self.write_config()?;
        let ae = self.load_autoencoder()?;
        let clf = self.load_classifier()?;
        let styles = &self.cfg.data.styles;
        let e = &self.cfg.eval;

        let mut cavs = BTreeMap::new();
        for concept in ConceptId::ALL {
            for &style in styles {
                cavs.insert((concept, style), self.load_cavs(concept, style)?);
            }
        }
        let randoms = self.random_vectors(ae.latent_dim())?;

        let mut similarity = Vec::new();
        for concept in ConceptId::ALL {
            let mut groups = Vec::new();
            for &style in styles {
                groups.push(VectorGroup {
                    name: format!("{style} singles"),
                    vectors: cavs[&(concept, style)].singles[0].clone(),
                });
            }
            for &style in styles {
                groups.push(VectorGroup {
                    name: format!("{style} mean"),
                    vectors: cavs[&(concept, style)].means.clone(),
                });
            }
            similarity.push(similarity_report(&groups, e.n_random, ae.latent_dim(), e.seed)?);
        }

        let mut rows = Vec::new();
        let mut reconstruction = Vec::new();
        for &style in styles {
            let ds = self.load_dataset(Split::Eval, style)?;
            for concept in ConceptId::ALL {
                let set = &cavs[&(concept, style)];
                let score = |vectors: &[ConceptVector]| -> Result<Vec<f64>> {
                    let mut all = Vec::new();
                    for v in vectors {
                        let res = evaluate_iou(&ds.samples, concept, e.percentile, e.max_samples, |img| {
                            attribution_map(&ae, img, v, &self.cfg.traversal)
                        })?;
                        all.extend(res.iter().map(|r| r.iou));
                    }
                    Ok(all)
                };
                let shift = evaluate_iou(&ds.samples, concept, e.percentile, e.max_samples, |img| {
                    latent_shift_attribution(&ae, &clf, img, concept, &self.cfg.baseline.lambdas, self.cfg.traversal.mode)
                })?;
                let shift: Vec<f64> = shift.iter().map(|r| r.iou).collect();
                rows.push(IouRow::from_values(&format!("latent_shift_{style}"), concept, &shift)?);
                rows.push(IouRow::from_values(&format!("cav_single_{style}"), concept, &score(&set.singles[0])?)?);
                rows.push(IouRow::from_values(
                    &format!("cav_mean_{style}"),
                    concept,
                    &score(std::slice::from_ref(&set.means[0]))?,
                )?);
                rows.push(IouRow::from_values(
                    &format!("random_{style}"),
                    concept,
                    &score(&randoms[..e.n_random_iou])?,
                )?);
                log::info!("IoU rows for {concept}/{style} done");
            }
            let in_mask = ConceptId::ALL
                .into_iter()
                .map(|c| mask_reconstruction_error(&ae, &ds.samples, c))
                .collect::<Result<Vec<_>>>()?;
            reconstruction.push(ReconstructionRow {
                style,
                mse: ae.reconstruction_mse(&ds.images())?,
                in_mask,
            });
        }
        let iou = IouReport {
            percentile: e.percentile,
            config_hash: self.hash.clone(),
            rows,
        };
        let evaluation = Evaluation {
            config_hash: self.hash.clone(),
            similarity,
            iou,
            reconstruction,
        };
        self.write_reports(&evaluation)?;
        Ok(evaluation)
    }

    fn write_reports(&self, ev: &Evaluation) -> Result<()> {
        let dir = self.reports_dir();
        write_new(&dir.join("iou.csv"), render_iou(&ev.iou, Format::Csv).as_bytes())?;
        write_new(&dir.join("iou.md"), render_iou(&ev.iou, Format::Markdown).as_bytes())?;
        write_new(
            &dir.join("similarity.csv"),
            render_similarity(&ev.similarity, Format::Csv, &self.hash).as_bytes(),
        )?;
        write_new(
            &dir.join("similarity.md"),
            render_similarity(&ev.similarity, Format::Markdown, &self.hash).as_bytes(),
        )?;
        write_new(&dir.join("reconstruction.md"), render_reconstruction(&ev.reconstruction, &self.hash).as_bytes())?;
        write_json(&dir.join("evaluation.json"), ev)
    }

    /// Reads the evaluation written by [`Pipeline::evaluate`].
    pub fn load_evaluation(&self) -> Result<Evaluation> {
        let path = self.reports_dir().join("evaluation.json");
        let text = fs::read_to_string(&path)
            .map_err(|_| Error::MissingInput(format!("{} (run evaluate first)", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }

    /// Counterfactual pair and attribution map for one held-out sample.
    /// Returns the panel directory.
    pub fn explain(&self, style: StyleId, sample_id: usize, concept: ConceptId, method: Method) -> Result<PathBuf> {
        let ae = self.load_autoencoder()?;
        let ds = self.load_dataset(Split::Eval, style)?;
        let sample = ds.samples.get(sample_id).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "sample {sample_id} out of range; the {style} evaluation set has {}",
                ds.samples.len()
            ))
        })?;
        let dir = self
            .root
            .join("explain")
            .join(format!("{style}_{sample_id:06}_{concept}_{}", method.name()));
        write_image(&dir.join("original.pgm"), &sample.image)?;
        write_image(&dir.join("reconstruction.pgm"), &ae.reconstruct(&sample.image)?)?;
        if let Some(mask) = sample.masks.get(&concept) {
            write_new(&dir.join("mask.pgm"), &encode_pgm(mask.width(), mask.height(), &mask.to_u8()))?;
        }

        let map: AttributionMap = match method {
            Method::LatentShift => {
                let clf = self.load_classifier()?;
                latent_shift_attribution(
                    &ae,
                    &clf,
                    &sample.image,
                    concept,
                    &self.cfg.baseline.lambdas,
                    self.cfg.traversal.mode,
                )?
            }
            _ => {
                let v = match method {
                    Method::CavMean => self.load_cavs(concept, style)?.means.swap_remove(0),
                    Method::CavSingle => ConceptVector::load(&self.single_path(concept, style, 0, 0))?,
                    _ => self.random_vectors(ae.latent_dim())?.swap_remove(0),
                };
                let alpha = self
                    .cfg
                    .traversal
                    .alphas
                    .iter()
                    .map(|a| a.abs())
                    .fold(0.0, f64::max);
                if alpha > 0.0 {
                    let (curtailed, exaggerated) = counterfactual_pair(&ae, &sample.image, &v, alpha)?;
                    write_image(&dir.join("curtailed.pgm"), &curtailed)?;
                    write_image(&dir.join("exaggerated.pgm"), &exaggerated)?;
                }
                attribution_map(&ae, &sample.image, &v, &self.cfg.traversal)?
            }
        };
        let mut map = map;
        map.provenance.checkpoint = Some("models/autoencoder.ckpt".into());
        map.provenance.vector = match method {
            Method::CavMean => Some(format!("cavs/{concept}/{style}/mean_r0.json")),
            Method::CavSingle => Some(format!("cavs/{concept}/{style}/r0_0.json")),
            Method::Random => Some(format!("random:{}", derive_seed(self.cfg.eval.seed, 0))),
            Method::LatentShift => None,
        };
        if method == Method::LatentShift {
            map.provenance.classifier = Some("models/classifier.ckpt".into());
        }
        write_new(&dir.join("attribution.pgm"), &encode_pgm(map.width(), map.height(), &map.to_u8()))?;
        write_new(&dir.join("attribution.json"), map.sidecar_json()?.as_bytes())?;
        Ok(dir)
    }

    /// One panel per (concept, method) for the first held-out positive of the
    /// first style.
    fn explain_panels(&self) -> Result<()> {
        let style = self.cfg.data.styles[0];
        let ds = self.load_dataset(Split::Eval, style)?;
        for concept in ConceptId::ALL {
            if let Some(idx) = ds.samples.iter().position(|s| s.has(concept)) {
                for method in [Method::CavMean, Method::LatentShift] {
                    self.explain(style, idx, concept, method)?;
                }
            }
        }
        Ok(())
    }

    /// Every stage in order, then the manifest.
    pub fn reproduce(&self) -> Result<Manifest> {
        self.gen_data()?;
        self.train()?;
        self.extract_cavs()?;
        self.evaluate()?;
        self.explain_panels()?;
        self.write_manifest()
    }

    pub fn write_manifest(&self) -> Result<Manifest> {
        let manifest = build_manifest(&self.root, &self.hash)?;
        write_json(&self.root.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

fn render_reconstruction(rows: &[ReconstructionRow], config_hash: &str) -> String {
    let mut out = String::from("| style | all pixels |");
    for c in ConceptId::ALL {
        let _ = write!(out, " {c} mask |");
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(ConceptId::ALL.len()));
    out.push('\n');
    for r in rows {
        let _ = write!(out, "| {} | {:.6} |", r.style, r.mse);
        for m in &r.in_mask {
            let _ = write!(out, " {:.6} |", m.mean_squared_error);
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "\nPer-pixel squared reconstruction error on held-out images. config hash: {config_hash}"
    );
    out
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Hashes every file under `root` except the manifest itself.
pub fn build_manifest(root: &Path, config_hash: &str) -> Result<Manifest> {
    let mut paths = Vec::new();
    collect_files(root, &mut paths)?;
    let mut files: Vec<ManifestEntry> = paths
        .par_iter()
        .filter_map(|p| {
            let rel = p.strip_prefix(root).expect("under root");
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            (rel != MANIFEST_FILE).then_some((p, rel))
        })
        .map(|(p, rel)| {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            Ok(ManifestEntry {
                path: rel,
                sha256: hex::encode(Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            })
        })
        .collect::<Result<_>>()?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let mut hasher = Sha256::new();
    for f in &files {
        hasher.update(format!("{} {}\n", f.path, f.sha256).as_bytes());
    }
    Ok(Manifest {
        config_hash: config_hash.to_string(),
        run_hash: hex::encode(hasher.finalize()),
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_new_refuses_to_change_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_new(&p, b"one").unwrap();
        write_new(&p, b"one").unwrap();
        assert!(matches!(write_new(&p, b"two"), Err(Error::ArtifactConflict(_))));
        assert_eq!(fs::read(&p).unwrap(), b"one");
    }

    #[test]
    fn manifest_is_order_independent_and_skips_itself() {
        let dir = tempfile::tempdir().unwrap();
        write_new(&dir.path().join("z.txt"), b"z").unwrap();
        write_new(&dir.path().join("sub/a.txt"), b"a").unwrap();
        let m = build_manifest(dir.path(), "h").unwrap();
        assert_eq!(
            m.files.iter().map(|f| f.path.as_str()).collect::<Vec<_>>(),
            vec!["sub/a.txt", "z.txt"]
        );
        write_json(&dir.path().join(MANIFEST_FILE), &m).unwrap();
        assert_eq!(build_manifest(dir.path(), "h").unwrap(), m);
    }

    #[test]
    fn methods_parse() {
        assert_eq!("cav_mean".parse::<Method>().unwrap(), Method::CavMean);
        assert!("cav".parse::<Method>().is_err());
    }
}
