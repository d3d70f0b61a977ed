//! Tokenization and TF-IDF bag-of-n-grams vectors.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};

/// Lowercases and splits on every maximal run of non-alphanumeric chars.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Every n-gram of length `1..=ngram_max`, bigrams joined by one space.
pub fn ngrams(tokens: &[String], ngram_max: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len() * ngram_max);
    for n in 1..=ngram_max {
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Sorted; a term's position is its column index.
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs: usize,
    ngram_max: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.doc_freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_freq.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn ngram_max(&self) -> usize {
        self.ngram_max
    }

    pub fn index(&self, term: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    /// Terms in column order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    /// Smoothed inverse document frequency, `ln((1+n)/(1+df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq[index] as f64)).ln() + 1.0
    }
}

/// Collects every n-gram with document frequency `>= min_df`; column
/// indices follow lexicographic term order.
pub fn build_vocabulary(
    corpus: &LabeledCorpus,
    ngram_max: usize,
    min_df: usize,
) -> Result<Vocabulary> {
    let texts: Vec<&str> = corpus.texts().collect();
    vocabulary_from_texts(&texts, ngram_max, min_df)
}

pub fn vocabulary_from_texts(texts: &[&str], ngram_max: usize, min_df: usize) -> Result<Vocabulary> {
    if texts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(1..=2).contains(&ngram_max) {
        return Err(Error::invalid(format!("ngram_max must be 1 or 2, got {ngram_max}")));
    }
    if min_df == 0 {
        return Err(Error::invalid("min_df must be at least 1"));
    }
    let counts = texts
        .par_iter()
        .fold(HashMap::<String, usize>::new, |mut acc, text| {
            let unique: HashSet<String> = ngrams(&tokenize(text), ngram_max).into_iter().collect();
            for g in unique {
                *acc.entry(g).or_insert(0) += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let kept: BTreeMap<String, usize> = counts.into_iter().filter(|(_, df)| *df >= min_df).collect();
    let doc_freq = kept.values().copied().collect();
    let terms = kept.into_keys().collect();
    Ok(Vocabulary {
        terms,
        doc_freq,
        n_docs: texts.len(),
        ngram_max,
    })
}

/// Row-sparse document-by-term matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDocMatrix {
    n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseDocMatrix {
    /// Builds a matrix, sorting each row by column and dropping zeros.
    pub fn new(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut clean = Vec::with_capacity(rows.len());
        for mut row in rows {
            row.retain(|&(_, v)| v != 0.0);
            row.sort_by_key(|&(c, _)| c);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid("duplicate column in sparse row"));
            }
            if let Some(&(c, _)) = row.last() {
                if c >= n_cols {
                    return Err(Error::DimensionMismatch { expected: n_cols, got: c + 1 });
                }
            }
            if row.iter().any(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFinite("sparse matrix"));
            }
            clean.push(row);
        }
        Ok(Self { n_cols, rows: clean })
    }

    /// Dense rows, convenient for small fixtures.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let sparse = rows
            .iter()
            .map(|r| r.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect())
            .collect();
        Self::new(n_cols, sparse)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            n_cols: self.n_cols,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// TF-IDF rows for every document in `corpus`.
pub fn tfidf_transform(corpus: &LabeledCorpus, vocab: &Vocabulary, normalize: bool) -> SparseDocMatrix {
    let texts: Vec<&str> = corpus.texts().collect();
    tfidf_texts(&texts, vocab, normalize)
}

pub fn tfidf_texts(texts: &[&str], vocab: &Vocabulary, normalize: bool) -> SparseDocMatrix {
    let rows = texts
        .par_iter()
        .map(|t| tfidf_row(t, vocab, normalize))
        .collect();
    SparseDocMatrix {
        n_cols: vocab.len(),
        rows,
    }
}

/// One document's weights: raw count times idf, optionally L2-normalized.
/// Out-of-vocabulary n-grams are ignored.
pub fn tfidf_row(text: &str, vocab: &Vocabulary, normalize: bool) -> Vec<(usize, f64)> {
    let mut tf: BTreeMap<usize, usize> = BTreeMap::new();
    for g in ngrams(&tokenize(text), vocab.ngram_max) {
        if let Some(i) = vocab.index(&g) {
            *tf.entry(i).or_insert(0) += 1;
        }
    }
    let mut row: Vec<(usize, f64)> = tf
        .into_iter()
        .map(|(i, n)| (i, n as f64 * vocab.idf(i)))
        .collect();
    if normalize {
        let norm = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|(_, w)| *w /= norm);
        }
    }
    row
}

/// Replaces every stored weight with 1.
pub fn binarize(matrix: &SparseDocMatrix) -> SparseDocMatrix {
    SparseDocMatrix {
        n_cols: matrix.n_cols,
        rows: matrix
            .rows
            .iter()
            .map(|r| r.iter().map(|&(c, _)| (c, 1.0)).collect())
            .collect(),
    }
}
