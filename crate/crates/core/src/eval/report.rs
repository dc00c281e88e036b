use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::masks::{binarize, iou};
use crate::error::{Error, Result};
use crate::explain::AttributionMap;
use crate::image::Image;
use crate::synthgen::{ConceptId, Sample};

/// IoU of one sample's binarized attribution against its concept mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleIou {
    pub id: u64,
    pub iou: f64,
    pub degenerate: bool,
}

/// Scores `attribute` on up to `max_samples` concept-positive samples, in id
/// order. Samples are processed in parallel; results are collected in order.
pub fn evaluate_iou<F>(
    samples: &[Sample],
    concept: ConceptId,
    percentile: f64,
    max_samples: usize,
    attribute: F,
) -> Result<Vec<SampleIou>>
where
    F: Fn(&Image) -> Result<AttributionMap> + Sync,
{
    let positives: Vec<&Sample> = samples.iter().filter(|s| s.has(concept)).take(max_samples).collect();
    if positives.is_empty() {
        return Err(Error::InvalidArgument(format!("no {concept} positives to evaluate")));
    }
    positives
        .par_iter()
        .map(|s| {
            let truth = s.masks.get(&concept).ok_or_else(|| {
                Error::InvalidArgument(format!("sample {} lacks a {concept} mask", s.id))
            })?;
            let map = attribute(&s.image)?;
            let b = binarize(map.width(), map.height(), map.values(), percentile)?;
            Ok(SampleIou {
                id: s.id,
                iou: iou(&b.mask, truth)?.value,
                degenerate: b.degenerate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouRow {
    pub method: String,
    pub concept: ConceptId,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl IouRow {
    /// Mean and population std of `values`, summed in the given order.
    pub fn from_values(method: &str, concept: ConceptId, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!("{method}/{concept}: no IoU values")));
        }
        let (mean, std) = mean_std(values);
        Ok(Self {
            method: method.to_string(),
            concept,
            mean,
            std,
            n: values.len(),
        })
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub percentile: f64,
    pub config_hash: String,
    pub rows: Vec<IouRow>,
}

impl IouReport {
    pub fn get(&self, method: &str, concept: ConceptId) -> Option<&IouRow> {
        self.rows.iter().find(|r| r.method == method && r.concept == concept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Markdown,
}

pub const IOU_CSV_HEADER: &str = "method,concept,mean_iou,std_iou,n,percentile,config_hash";

pub(crate) fn cell(mean: f64, std: f64) -> String {
    format!("{mean:.4}±{std:.4}")
}

pub fn render_iou(report: &IouReport, format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(IOU_CSV_HEADER);
            out.push('\n');
            for r in &report.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.method, r.concept, r.mean, r.std, r.n, report.percentile, report.config_hash
                );
            }
        }
        Format::Markdown => {
            let concepts: Vec<ConceptId> =
                ConceptId::ALL.into_iter().filter(|c| report.rows.iter().any(|r| r.concept == *c)).collect();
            let mut methods: Vec<&str> = Vec::new();
            for r in &report.rows {
                if !methods.contains(&r.method.as_str()) {
                    methods.push(&r.method);
                }
            }
            out.push_str("| method |");
            for c in &concepts {
                let _ = write!(out, " {c} |");
            }
            out.push_str("\n|---|");
            out.push_str(&"---|".repeat(concepts.len()));
            out.push('\n');
            for m in methods {
                let _ = write!(out, "| {m} |");
                for &c in &concepts {
                    match report.get(m, c) {
                        Some(r) => {
                            let _ = write!(out, " {} (n={}) |", cell(r.mean, r.std), r.n);
                        }
                        None => out.push_str(" - |"),
                    }
                }
                out.push('\n');
            }
            let _ = write!(
                out,
                "\nIoU at percentile {}, mean±std over evaluated samples. config hash: {}\n",
                report.percentile, report.config_hash
            );
        }
    }
    out
}

/// Parses the CSV produced by [`render_iou`].
pub fn parse_iou_csv(text: &str) -> Result<IouReport> {
    let origin = std::path::Path::new("<iou csv>");
    let mut lines = text.lines();
    if lines.next() != Some(IOU_CSV_HEADER) {
        return Err(Error::format(origin, "missing header"));
    }
    let mut report = IouReport {
        percentile: f64::NAN,
        config_hash: String::new(),
        rows: Vec::new(),
    };
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::format(origin, format!("bad row {line:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::format(origin, e.to_string()));
        report.rows.push(IouRow {
            method: f[0].to_string(),
            concept: f[1].parse().map_err(|e: Error| Error::format(origin, e.to_string()))?,
            mean: num(f[2])?,
            std: num(f[3])?,
            n: f[4].parse().map_err(|_| Error::format(origin, format!("bad n {:?}", f[4])))?,
        });
        report.percentile = num(f[5])?;
        report.config_hash = f[6].to_string();
    }
    Ok(report)
}
