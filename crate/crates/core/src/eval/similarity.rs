use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::report::{cell, Format};
use crate::cav::{random_unit_vector, similarity_cross, similarity_within, ConceptVector, SimilarityCell};
use crate::error::{Error, Result};
use crate::numerics::derive_seed;
use crate::synthgen::ConceptId;

#[derive(Debug, Clone)]
pub struct VectorGroup {
    pub name: String,
    pub vectors: Vec<ConceptVector>,
}

/// Pairwise cosine statistics between vector groups, plus each group against
/// a batch of random unit vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub concept: Option<ConceptId>,
    pub groups: Vec<String>,
    pub group_sizes: Vec<usize>,
    /// `cells[i][j]` compares group i with group j; the diagonal uses distinct
    /// pairs within the group.
    pub cells: Vec<Vec<SimilarityCell>>,
    pub random: Vec<SimilarityCell>,
    pub n_random: usize,
    pub d: usize,
    pub seed: u64,
}

impl SimilarityReport {
    pub fn index(&self, group: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == group)
    }

    pub fn cell(&self, a: &str, b: &str) -> Option<SimilarityCell> {
        Some(self.cells[self.index(a)?][self.index(b)?])
    }

    pub fn random_cell(&self, group: &str) -> Option<SimilarityCell> {
        Some(self.random[self.index(group)?])
    }
}

pub fn similarity_report(
    groups: &[VectorGroup],
    n_random: usize,
    d: usize,
    seed: u64,
) -> Result<SimilarityReport> {
    if groups.iter().any(|g| g.vectors.is_empty()) {
        return Err(Error::InvalidArgument("every similarity group needs a vector".into()));
    }
    if n_random == 0 {
        return Err(Error::InvalidArgument("n_random must be >= 1".into()));
    }
    let randoms: Vec<ConceptVector> = (0..n_random as u64)
        .map(|i| random_unit_vector(d, derive_seed(seed, i)))
        .collect::<Result<_>>()?;
    let k = groups.len();
    let mut cells = vec![Vec::with_capacity(k); k];
    for i in 0..k {
        for j in 0..k {
            let c = if i == j {
                similarity_within(&groups[i].vectors)?
            } else if j < i {
                cells[j][i]
            } else {
                similarity_cross(&groups[i].vectors, &groups[j].vectors)?
            };
            cells[i].push(c);
        }
    }
    let random = groups
        .iter()
        .map(|g| similarity_cross(&g.vectors, &randoms))
        .collect::<Result<_>>()?;
    let concept = groups.first().and_then(|g| g.vectors[0].concept);
    Ok(SimilarityReport {
        concept,
        groups: groups.iter().map(|g| g.name.clone()).collect(),
        group_sizes: groups.iter().map(|g| g.vectors.len()).collect(),
        cells,
        random,
        n_random,
        d,
        seed,
    })
}

pub const SIMILARITY_CSV_HEADER: &str = "concept,row,column,mean,std,n_pairs";

pub fn render_similarity(reports: &[SimilarityReport], format: Format, config_hash: &str) -> String {
    let mut out = String::new();
    let concept_name = |r: &SimilarityReport| r.concept.map_or("-".to_string(), |c| c.to_string());
    match format {
        Format::Csv => {
            out.push_str(SIMILARITY_CSV_HEADER);
            out.push('\n');
            for r in reports {
                let c = concept_name(r);
                for (i, row) in r.groups.iter().enumerate() {
                    for (j, col) in r.groups.iter().enumerate() {
                        let s = r.cells[i][j];
                        let _ = writeln!(out, "{c},{row},{col},{},{},{}", s.mean, s.std, s.n_pairs);
                    }
                }
                for (j, col) in r.groups.iter().enumerate() {
                    let s = r.random[j];
                    let _ = writeln!(out, "{c},random,{col},{},{},{}", s.mean, s.std, s.n_pairs);
                }
            }
        }
        Format::Markdown => {
            for r in reports {
                let _ = writeln!(out, "### {}\n", concept_name(r));
                out.push_str("| |");
                for g in &r.groups {
                    let _ = write!(out, " {g} |");
                }
                out.push_str("\n|---|");
                out.push_str(&"---|".repeat(r.groups.len()));
                out.push('\n');
                for (i, g) in r.groups.iter().enumerate() {
                    let _ = write!(out, "| {g} |");
                    for s in &r.cells[i] {
                        let _ = write!(out, " {} |", cell(s.mean, s.std));
                    }
                    out.push('\n');
                }
                out.push_str("| random vector |");
                for s in &r.random {
                    let _ = write!(out, " {} |", cell(s.mean, s.std));
                }
                let _ = writeln!(out, "\n\n{} random vectors, d = {}.\n", r.n_random, r.d);
            }
            let _ = writeln!(out, "Cosine similarity, mean±std over vector pairs. config hash: {config_hash}");
        }
    }
    out
}
