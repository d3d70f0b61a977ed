//! Chi-square feature-indicative scores and the Normalized Feature
//! Indicative Score (NFIS).
//!
//! For a term `t` and label `c`, the 2x2 document contingency table
//! (term present/absent x label c/not c) gives
//!
//! ```text
//! chi2(t, c) = N * (p(t,c) p(!t,!c) - p(t,!c) p(!t,c))^2 / (p(t) p(!t) p(c) p(!c))
//! ```
//!
//! with every probability a document count over `N`. The NFIS of label `c`
//! is the sum of its `K` highest scores divided by its highest score, so it
//! lies in `[1, K]`: near `K` when many terms are about equally indicative,
//! near 1 when a single term dominates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::group_indices;
use crate::error::{Error, Result};
use crate::vectorize::{SparseDocMatrix, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyCounts {
    pub term_label: u64,
    pub term_other: u64,
    pub absent_label: u64,
    pub absent_other: u64,
}

impl ContingencyCounts {
    pub fn new(term_label: u64, term_other: u64, absent_label: u64, absent_other: u64) -> Self {
        Self {
            term_label,
            term_other,
            absent_label,
            absent_other,
        }
    }

    /// Builds the table from margins: `df` documents contain the term,
    /// `label_docs` carry the label, `both` do both, out of `n`.
    pub fn from_margins(n: u64, df: u64, label_docs: u64, both: u64) -> Self {
        Self {
            term_label: both,
            term_other: df - both,
            absent_label: label_docs - both,
            absent_other: n - df - (label_docs - both),
        }
    }

    pub fn total(&self) -> u64 {
        self.term_label + self.term_other + self.absent_label + self.absent_other
    }
}

/// Counts the four cells for term column `term` and `label`. `presence`
/// is read as binary: any stored entry means the term occurs.
pub fn contingency(
    presence: &SparseDocMatrix,
    y: &[String],
    term: usize,
    label: &str,
) -> Result<ContingencyCounts> {
    if presence.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: presence.n_rows(),
            got: y.len(),
        });
    }
    if term >= presence.n_cols() {
        return Err(Error::UnknownTerm(term));
    }
    if !y.iter().any(|l| l == label) {
        return Err(Error::UnknownLabel(label.to_string()));
    }
    let mut t = ContingencyCounts::new(0, 0, 0, 0);
    for (row, l) in presence.rows().iter().zip(y) {
        let has = row.binary_search_by_key(&term, |&(c, _)| c).is_ok();
        match (has, l == label) {
            (true, true) => t.term_label += 1,
            (true, false) => t.term_other += 1,
            (false, true) => t.absent_label += 1,
            (false, false) => t.absent_other += 1,
        }
    }
    Ok(t)
}

/// Chi-square statistic of a 2x2 table; 0 when any margin is empty.
pub fn chi2(t: &ContingencyCounts) -> Result<f64> {
    let n = t.total();
    if n == 0 {
        return Err(Error::invalid("contingency table is empty"));
    }
    let nf = n as f64;
    let p_tc = t.term_label as f64 / nf;
    let p_tnc = t.term_other as f64 / nf;
    let p_ntc = t.absent_label as f64 / nf;
    let p_ntnc = t.absent_other as f64 / nf;
    let p_t = (t.term_label + t.term_other) as f64 / nf;
    let p_nt = (t.absent_label + t.absent_other) as f64 / nf;
    let p_c = (t.term_label + t.absent_label) as f64 / nf;
    let p_nc = (t.term_other + t.absent_other) as f64 / nf;
    let denom = p_t * p_nt * p_c * p_nc;
    if denom == 0.0 {
        return Ok(0.0);
    }
    let diff = p_tc * p_ntnc - p_tnc * p_ntc;
    Ok(nf * diff * diff / denom)
}

/// Chi-square score of every (term, label) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTable {
    pub labels: Vec<String>,
    pub n_docs: usize,
    /// `scores[t][c]`, one row per term column.
    pub scores: Vec<Vec<f64>>,
}

impl ChiSquareTable {
    pub fn n_terms(&self) -> usize {
        self.scores.len()
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// The feature-indicative vector of `label` over all terms.
    pub fn label_scores(&self, label: &str) -> Result<Vec<f64>> {
        let c = self.label_index(label)?;
        Ok(self.scores.iter().map(|row| row[c]).collect())
    }

    /// The `k` highest-scoring term indices for `label` (ties by index).
    pub fn top_terms(&self, label: &str, k: usize) -> Result<Vec<(usize, f64)>> {
        let scores = self.label_scores(label)?;
        Ok(top_k(&scores, k))
    }

    /// Top terms rendered through the vocabulary.
    pub fn top_term_names(&self, vocab: &Vocabulary, label: &str, k: usize) -> Result<Vec<(String, f64)>> {
        Ok(self
            .top_terms(label, k)?
            .into_iter()
            .map(|(i, s)| (vocab.term(i).unwrap_or("?").to_string(), s))
            .collect())
    }
}

/// Builds the table from per-term, per-label document counts gathered in
/// one pass over `presence`. Labels are sorted.
pub fn chi2_table(presence: &SparseDocMatrix, y: &[String]) -> Result<ChiSquareTable> {
    if presence.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: presence.n_rows(),
            got: y.len(),
        });
    }
    let groups = group_indices(y);
    if groups.len() < 2 {
        return Err(Error::SingleLabel(groups.len()));
    }
    let labels: Vec<String> = groups.keys().cloned().collect();
    let label_docs: Vec<u64> = groups.values().map(|v| v.len() as u64).collect();
    let label_of: Vec<usize> = y
        .iter()
        .map(|l| labels.binary_search(l).unwrap())
        .collect();
    let m = labels.len();

    let mut both = vec![vec![0u64; m]; presence.n_cols()];
    for (row, &c) in presence.rows().iter().zip(&label_of) {
        for &(t, _) in row {
            both[t][c] += 1;
        }
    }
    let n = y.len() as u64;
    let scores = both
        .par_iter()
        .map(|per_label| {
            let df: u64 = per_label.iter().sum();
            per_label
                .iter()
                .zip(&label_docs)
                .map(|(&b, &ld)| chi2(&ContingencyCounts::from_margins(n, df, ld, b)).unwrap())
                .collect()
        })
        .collect();
    Ok(ChiSquareTable {
        labels,
        n_docs: y.len(),
        scores,
    })
}

/// Indices of the `k` largest values, largest first; equal values keep
/// the lower index first.
fn top_k(values: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| (i, values[i])).collect()
}

/// NFIS of a raw score vector: sum of the `k` largest over the largest.
pub fn nfis_of_scores(scores: &[f64], k: usize) -> std::result::Result<f64, NfisError> {
    if k == 0 {
        return Err(NfisError::ZeroK);
    }
    if scores.len() < k {
        return Err(NfisError::TooFewTerms { have: scores.len(), k });
    }
    let top = top_k(scores, k);
    let max = top[0].1;
    if !(max > 0.0) {
        return Err(NfisError::AllZero);
    }
    Ok(top.iter().map(|(_, s)| s).sum::<f64>() / max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfisError {
    ZeroK,
    TooFewTerms { have: usize, k: usize },
    AllZero,
}

pub fn nfis(table: &ChiSquareTable, label: &str, k: usize) -> Result<f64> {
    let scores = table.label_scores(label)?;
    nfis_of_scores(&scores, k).map_err(|e| match e {
        NfisError::ZeroK => Error::invalid("K must be at least 1"),
        NfisError::TooFewTerms { have, k } => {
            Error::invalid(format!("vocabulary has {have} terms, fewer than K = {k}"))
        }
        NfisError::AllZero => Error::UndefinedNfis(label.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelNfis {
    pub label: String,
    /// `None` when the label has no indicative term at all.
    pub nfis: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfisDistribution {
    pub k: usize,
    pub per_label: Vec<LabelNfis>,
    /// `max / min` NFIS over labels where it is defined.
    pub imbalance: Option<f64>,
}

pub fn nfis_distribution(table: &ChiSquareTable, k: usize) -> Result<NfisDistribution> {
    let mut per_label = Vec::with_capacity(table.labels.len());
    for label in &table.labels {
        let value = match nfis(table, label, k) {
            Ok(v) => Some(v),
            Err(Error::UndefinedNfis(_)) => None,
            Err(e) => return Err(e),
        };
        per_label.push(LabelNfis {
            label: label.clone(),
            nfis: value,
        });
    }
    let defined: Vec<f64> = per_label.iter().filter_map(|l| l.nfis).collect();
    let imbalance = if defined.is_empty() {
        None
    } else {
        let max = defined.iter().copied().fold(f64::MIN, f64::max);
        let min = defined.iter().copied().fold(f64::MAX, f64::min);
        Some(max / min)
    };
    Ok(NfisDistribution {
        k,
        per_label,
        imbalance,
    })
}
