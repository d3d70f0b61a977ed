//! Labeled text corpora: ingestion, length filters, stratified splits and
//! label distributions.
//!
//! A [`Document`] carries one label per *target class* (a categorical
//! column such as `poverty_level` or `grade_level`). Every operation here
//! is order-preserving and never mutates document contents.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

/// What to do with a record that lacks a configured field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnMissing {
    #[default]
    Skip,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub labels: BTreeMap<String, String>,
    pub char_count: usize,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        labels: BTreeMap<String, String>,
    ) -> Self {
        let text = text.into();
        let char_count = text.chars().count();
        Self {
            id: id.into(),
            text,
            labels,
            char_count,
        }
    }

    /// Whitespace-separated token count.
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    pub fn label(&self, class: &str) -> Option<&str> {
        self.labels.get(class).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    documents: Vec<Document>,
    target_classes: Vec<String>,
    label_sets: BTreeMap<String, Vec<String>>,
}

impl LabeledCorpus {
    /// Builds a corpus, checking that every document is labeled for every
    /// target class. Label sets are sorted lexicographically.
    pub fn new(documents: Vec<Document>, target_classes: Vec<String>) -> Result<Self> {
        if target_classes.is_empty() {
            return Err(Error::invalid("at least one target class is required"));
        }
        let mut sets: BTreeMap<String, BTreeSet<String>> = target_classes
            .iter()
            .map(|c| (c.clone(), BTreeSet::new()))
            .collect();
        for (i, doc) in documents.iter().enumerate() {
            for class in &target_classes {
                let label = doc.labels.get(class).ok_or_else(|| Error::MalformedRecord {
                    index: i,
                    reason: format!("missing label for class `{class}`"),
                })?;
                sets.get_mut(class).unwrap().insert(label.clone());
            }
        }
        let label_sets = sets
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect();
        Ok(Self {
            documents,
            target_classes,
            label_sets,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn target_classes(&self) -> &[String] {
        &self.target_classes
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.target_classes.iter().any(|c| c == class)
    }

    /// Distinct labels observed for `class`, sorted.
    pub fn label_set(&self, class: &str) -> Result<&[String]> {
        self.label_sets
            .get(class)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownClass(class.to_string()))
    }

    /// Labels of every document for `class`, in document order.
    pub fn labels(&self, class: &str) -> Result<Vec<String>> {
        if !self.has_class(class) {
            return Err(Error::UnknownClass(class.to_string()));
        }
        Ok(self
            .documents
            .iter()
            .map(|d| d.labels[class].clone())
            .collect())
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.text.as_str())
    }

    /// Sub-corpus made of the documents at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let docs = indices.iter().map(|&i| self.documents[i].clone()).collect();
        Self::new(docs, self.target_classes.clone()).expect("subset of a valid corpus")
    }

    fn retain(&self, mut keep: impl FnMut(&Document) -> bool) -> Self {
        let docs = self.documents.iter().filter(|d| keep(d)).cloned().collect();
        Self::new(docs, self.target_classes.clone()).expect("filtered valid corpus")
    }
}

/// Field mapping used by [`load_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub format: Format,
    pub text_fields: Vec<String>,
    pub class_fields: Vec<String>,
    #[serde(default)]
    pub id_field: Option<String>,
    #[serde(default)]
    pub on_missing: OnMissing,
}

impl LoadOptions {
    pub fn new(format: Format, text_fields: &[&str], class_fields: &[&str]) -> Self {
        Self {
            format,
            text_fields: text_fields.iter().map(|s| s.to_string()).collect(),
            class_fields: class_fields.iter().map(|s| s.to_string()).collect(),
            id_field: None,
            on_missing: OnMissing::Skip,
        }
    }

    pub fn with_id_field(mut self, field: &str) -> Self {
        self.id_field = Some(field.to_string());
        self
    }

    pub fn with_on_missing(mut self, on_missing: OnMissing) -> Self {
        self.on_missing = on_missing;
        self
    }
}

/// Reads a JSONL or CSV file into a corpus.
///
/// The document text is the configured text fields joined by `\n`; labels
/// are taken verbatim after trimming surrounding whitespace. Records that
/// lack a field (or fail to parse) are skipped or rejected according to
/// `opts.on_missing`. When no id field is configured the record index is
/// used as the id.
pub fn load_corpus(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    if opts.text_fields.is_empty() || opts.class_fields.is_empty() {
        return Err(Error::invalid(
            "text_fields and class_fields must be non-empty",
        ));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let records = match opts.format {
        Format::Jsonl => read_jsonl(BufReader::new(file), path)?,
        Format::Csv => read_csv(file)?,
    };

    let mut docs = Vec::new();
    let mut seen_ids = HashSet::new();
    for (index, record) in records.into_iter().enumerate() {
        let built = record.and_then(|fields| build_document(index, &fields, opts));
        let doc = match built {
            Ok(doc) => doc,
            Err(reason) => match opts.on_missing {
                OnMissing::Skip => continue,
                OnMissing::Error => return Err(Error::MalformedRecord { index, reason }),
            },
        };
        if !seen_ids.insert(doc.id.clone()) {
            match opts.on_missing {
                OnMissing::Skip => continue,
                OnMissing::Error => {
                    return Err(Error::MalformedRecord {
                        index,
                        reason: format!("duplicate id `{}`", doc.id),
                    })
                }
            }
        }
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(Error::NoRecords(path.to_path_buf()));
    }
    LabeledCorpus::new(docs, opts.class_fields.clone())
}

type RawRecord = std::result::Result<BTreeMap<String, String>, String>;

fn build_document(
    index: usize,
    fields: &BTreeMap<String, String>,
    opts: &LoadOptions,
) -> std::result::Result<Document, String> {
    let get = |name: &str| {
        fields
            .get(name)
            .ok_or_else(|| format!("missing field `{name}`"))
    };
    let mut parts = Vec::with_capacity(opts.text_fields.len());
    for f in &opts.text_fields {
        parts.push(get(f)?.as_str());
    }
    let mut labels = BTreeMap::new();
    for f in &opts.class_fields {
        let label = get(f)?.trim();
        if label.is_empty() {
            return Err(format!("empty label in field `{f}`"));
        }
        labels.insert(f.clone(), label.to_string());
    }
    let id = match &opts.id_field {
        Some(f) => get(f)?.trim().to_string(),
        None => index.to_string(),
    };
    Ok(Document::new(id, parts.join("\n"), labels))
}

fn read_jsonl(reader: impl BufRead, path: &Path) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(map)) => Ok(map
                .into_iter()
                .filter_map(|(k, v)| json_scalar(v).map(|s| (k, s)))
                .collect()),
            Ok(_) => Err("record is not a JSON object".to_string()),
            Err(e) => Err(format!("invalid JSON: {e}")),
        };
        out.push(record);
    }
    Ok(out)
}

// Nulls count as missing; nested values are not supported as fields.
fn json_scalar(v: serde_json::Value) -> Option<String> {
    use serde_json::Value;
    match v {
        Value::String(s) => Some(s),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Null | Value::Array(_) | Value::Object(_) => None,
    }
}

fn read_csv(file: File) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = rdr.headers()?.clone();
    let mut out = Vec::new();
    for row in rdr.records() {
        let record = match row {
            Ok(row) => Ok(headers
                .iter()
                .zip(row.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()),
            Err(e) => Err(format!("invalid CSV row: {e}")),
        };
        out.push(record);
    }
    Ok(out)
}

/// Keeps documents with `min_chars <= char_count <= max_chars`.
pub fn filter_by_char_length(
    corpus: &LabeledCorpus,
    min_chars: usize,
    max_chars: usize,
) -> LabeledCorpus {
    corpus.retain(|d| d.char_count >= min_chars && d.char_count <= max_chars)
}

/// Keeps documents whose word-count z-score is strictly below `z_max`.
///
/// Uses the population standard deviation; when it is zero every document
/// is kept.
pub fn filter_by_length_zscore(corpus: &LabeledCorpus, z_max: f64) -> Result<LabeledCorpus> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let counts: Vec<f64> = corpus
        .documents()
        .iter()
        .map(|d| d.word_count() as f64)
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return Ok(corpus.clone());
    }
    let mut it = counts.iter();
    Ok(corpus.retain(|_| (it.next().unwrap() - mean) / sd < z_max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPair {
    pub train: LabeledCorpus,
    pub test: LabeledCorpus,
    pub seed: u64,
}

/// Splits per label of `target_class` so that each label contributes
/// `round(train_fraction * count)` documents to train (clamped so both
/// sides keep at least one). Both halves keep the input order.
pub fn stratified_split(
    corpus: &LabeledCorpus,
    target_class: &str,
    train_fraction: f64,
    seed: u64,
) -> Result<SplitPair> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let labels = corpus.labels(target_class)?;
    let groups = group_indices(&labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; labels.len()];
    for (label, mut idx) in groups {
        if idx.len() < 2 {
            return Err(Error::LabelTooRare {
                label,
                count: idx.len(),
                needed: 2,
            });
        }
        idx.shuffle(&mut rng);
        let n_train = ((train_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<usize>, Vec<usize>) =
        (0..labels.len()).partition(|&i| in_train[i]);
    Ok(SplitPair {
        train: corpus.subset(&train),
        test: corpus.subset(&test),
        seed,
    })
}

/// Document indices per label, labels in sorted order.
pub(crate) fn group_indices(labels: &[String]) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.clone()).or_default().push(i);
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelShare {
    pub label: String,
    pub count: usize,
    pub percent: f64,
}

/// Label counts and percentages, most frequent first (ties by label).
pub fn label_distribution(corpus: &LabeledCorpus, target_class: &str) -> Result<Vec<LabelShare>> {
    let labels = corpus.labels(target_class)?;
    let counts: Vec<(String, usize)> = group_indices(&labels)
        .into_iter()
        .map(|(l, v)| (l, v.len()))
        .collect();
    Ok(shares_from_counts(counts))
}

pub fn shares_from_counts(mut counts: Vec<(String, usize)>) -> Vec<LabelShare> {
    counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let total: usize = counts.iter().map(|c| c.1).sum();
    counts
        .into_iter()
        .map(|(label, count)| LabelShare {
            label,
            count,
            percent: if total == 0 {
                0.0
            } else {
                100.0 * count as f64 / total as f64
            },
        })
        .collect()
}
