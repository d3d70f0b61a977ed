//! Ground-truth utilities: mapping measured rates onto ordinal levels,
//! comparing user-given labels with true labels, and generating synthetic
//! corpora whose reported labels are corrupted in a controlled way.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::confusion_matrix;
use crate::corpus::{Document, LabeledCorpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBin {
    pub lower: f64,
    pub upper: f64,
    pub level: String,
}

/// Ordered bins tiling `[0, 100]`. Each bin is lower-inclusive and
/// upper-exclusive, except the last one which also contains 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScale {
    bins: Vec<LevelBin>,
}

impl LevelScale {
    pub fn new(bins: Vec<LevelBin>) -> Result<Self> {
        let first = bins.first().ok_or_else(|| Error::invalid("level scale has no bins"))?;
        if first.lower != 0.0 || bins.last().unwrap().upper != 100.0 {
            return Err(Error::invalid("level scale must span [0, 100]"));
        }
        for b in &bins {
            if !(b.lower < b.upper) {
                return Err(Error::invalid(format!("empty bin for `{}`", b.level)));
            }
        }
        for w in bins.windows(2) {
            if w[0].upper != w[1].lower {
                return Err(Error::invalid(format!(
                    "bins `{}` and `{}` leave a gap or overlap",
                    w[0].level, w[1].level
                )));
            }
        }
        Ok(Self { bins })
    }

    /// School poverty scale: 0-25 Low, 25-50 Moderate, 50-75 High,
    /// 75-100 Highest.
    pub fn poverty() -> Self {
        let bin = |lower: f64, upper: f64, level: &str| LevelBin { lower, upper, level: level.into() };
        Self::new(vec![
            bin(0.0, 25.0, "Low Poverty"),
            bin(25.0, 50.0, "Moderate Poverty"),
            bin(50.0, 75.0, "High Poverty"),
            bin(75.0, 100.0, "Highest Poverty"),
        ])
        .unwrap()
    }

    pub fn bins(&self) -> &[LevelBin] {
        &self.bins
    }

    pub fn levels(&self) -> Vec<String> {
        self.bins.iter().map(|b| b.level.clone()).collect()
    }
}

pub fn map_rate_to_level(rate: f64, scale: &LevelScale) -> Result<&str> {
    if !(0.0..=100.0).contains(&rate) {
        return Err(Error::invalid(format!("rate {rate} is outside [0, 100]")));
    }
    let last = scale.bins.len() - 1;
    scale
        .bins
        .iter()
        .enumerate()
        .find(|(i, b)| rate >= b.lower && (rate < b.upper || *i == last))
        .map(|(_, b)| b.level.as_str())
        .ok_or_else(|| Error::invalid(format!("rate {rate} falls in no bin")))
}

/// User-given labels (rows) against true labels (columns), each row in
/// percent of that row's documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub percent: Vec<Vec<f64>>,
}

pub fn truth_matrix(user_labels: &[String], true_labels: &[String], labels: &[String]) -> Result<TruthMatrix> {
    let cm = confusion_matrix(user_labels, true_labels, labels)?;
    let percent = cm
        .row_normalized()
        .into_iter()
        .map(|row| row.into_iter().map(|v| 100.0 * v).collect())
        .collect();
    Ok(TruthMatrix { labels: cm.labels, counts: cm.counts, percent })
}

/// Recipe for a synthetic corpus with one target class.
///
/// Each document draws a true label from `priors`, then fills `doc_length`
/// token slots: with probability `signal_strength` a slot holds one of the
/// true label's `signal_terms_per_label` terms, otherwise a uniformly drawn
/// background term. The reported label is drawn from the true label's row
/// of `corruption`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_docs: usize,
    pub labels: Vec<String>,
    /// Uniform when absent.
    #[serde(default)]
    pub priors: Option<Vec<f64>>,
    pub signal_terms_per_label: usize,
    pub signal_strength: f64,
    /// `corruption[t][r]`: probability that true label `t` is reported as `r`.
    pub corruption: Vec<Vec<f64>>,
    pub vocab_noise: usize,
    #[serde(default = "default_doc_length")]
    pub doc_length: usize,
    #[serde(default = "default_class_name")]
    pub class_name: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_doc_length() -> usize {
    100
}

fn default_class_name() -> String {
    "level".into()
}

const ROW_TOL: f64 = 1e-9;

fn four_levels() -> Vec<String> {
    ["low", "moderate", "high", "highest"].map(String::from).to_vec()
}

impl SynthSpec {
    /// Balanced labels reported honestly.
    pub fn objective(n_docs: usize, vocab_noise: usize, seed: u64) -> Self {
        let labels = four_levels();
        let m = labels.len();
        Self {
            n_docs,
            corruption: (0..m).map(|i| (0..m).map(|j| f64::from(u8::from(i == j))).collect()).collect(),
            labels,
            priors: None,
            signal_terms_per_label: 4,
            signal_strength: 0.1,
            vocab_noise,
            doc_length: default_doc_length(),
            class_name: default_class_name(),
            seed,
        }
    }

    /// Most documents are truly `low` or `moderate`, yet every true level
    /// reports `highest` half of the time, so `highest` reports carry the
    /// corpus-wide mix and only 3% of them are truly `highest`. Users
    /// exaggerate by a level or more: under 10% of `moderate` and `high`
    /// reports are correct, while the rare `low` reports are all honest.
    pub fn subjective(n_docs: usize, vocab_noise: usize, seed: u64) -> Self {
        Self {
            n_docs,
            labels: four_levels(),
            priors: Some(vec![0.55, 0.35, 0.07, 0.03]),
            signal_terms_per_label: 4,
            signal_strength: 0.1,
            corruption: vec![
                vec![0.20, 0.30, 0.00, 0.50],
                vec![0.00, 0.02, 0.48, 0.50],
                vec![0.00, 0.30, 0.20, 0.50],
                vec![0.00, 0.00, 0.50, 0.50],
            ],
            vocab_noise,
            doc_length: default_doc_length(),
            class_name: default_class_name(),
            seed,
        }
    }

    /// Five ordinal ratings where users mostly report the true value and
    /// otherwise an adjacent one.
    pub fn rating_like(n_docs: usize, vocab_noise: usize, seed: u64) -> Self {
        let labels: Vec<String> = (1..=5).map(|r| r.to_string()).collect();
        let m = labels.len();
        let corruption = (0..m)
            .map(|t| {
                let mut row: Vec<f64> = (0..m)
                    .map(|r| match t.abs_diff(r) {
                        0 => 0.6,
                        1 => 0.2,
                        _ => 0.0,
                    })
                    .collect();
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
                row
            })
            .collect();
        Self {
            n_docs,
            labels,
            priors: None,
            signal_terms_per_label: 4,
            signal_strength: 0.1,
            corruption,
            vocab_noise,
            doc_length: default_doc_length(),
            class_name: "rating".into(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.labels.len();
        let bad = |msg: String| Err(Error::invalid(format!("synthetic spec: {msg}")));
        if m < 2 {
            return bad("need at least two labels".into());
        }
        let mut sorted = self.labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != m || self.labels.iter().any(|l| l.trim().is_empty() || l.trim() != l) {
            return bad("labels must be distinct, non-empty and trimmed".into());
        }
        if self.n_docs == 0 || self.doc_length == 0 || self.signal_terms_per_label == 0 {
            return bad("n_docs, doc_length and signal_terms_per_label must be positive".into());
        }
        if self.vocab_noise == 0 && self.signal_strength < 1.0 {
            return bad("background vocabulary is empty".into());
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad(format!("signal_strength {} is not a probability", self.signal_strength));
        }
        check_distribution("priors", self.priors.as_deref().unwrap_or(&vec![1.0 / m as f64; m]), m)?;
        if self.corruption.len() != m {
            return bad(format!("corruption has {} rows for {m} labels", self.corruption.len()));
        }
        for (label, row) in self.labels.iter().zip(&self.corruption) {
            check_distribution(&format!("corruption row `{label}`"), row, m)?;
        }
        Ok(())
    }

    fn term_width(&self) -> usize {
        let total = self.vocab_noise + self.labels.len() * self.signal_terms_per_label;
        total.saturating_sub(1).to_string().len().max(5)
    }

    /// Pseudo-word for vocabulary index `i`. Background terms come first,
    /// then each label's signal block in label order.
    pub fn term(&self, i: usize) -> String {
        format!("w{i:0width$}", width = self.term_width())
    }

    pub fn signal_terms(&self, label: &str) -> Result<Vec<String>> {
        let l = self
            .labels
            .iter()
            .position(|x| x == label)
            .ok_or_else(|| Error::UnknownLabel(label.into()))?;
        let start = self.vocab_noise + l * self.signal_terms_per_label;
        Ok((start..start + self.signal_terms_per_label).map(|i| self.term(i)).collect())
    }
}

fn check_distribution(what: &str, p: &[f64], m: usize) -> Result<()> {
    if p.len() != m {
        return Err(Error::invalid(format!("synthetic spec: {what} has {} entries, expected {m}", p.len())));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid(format!("synthetic spec: {what} has entries outside [0, 1]")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(Error::invalid(format!("synthetic spec: {what} sums to {s}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    /// Documents labeled with the reported labels.
    pub corpus: LabeledCorpus,
    pub true_labels: Vec<String>,
}

/// Generates the corpus; document `i` uses its own ChaCha stream keyed by
/// `i`, so output is independent of thread count.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let m = spec.labels.len();
    let uniform = vec![1.0 / m as f64; m];
    let priors = WeightedIndex::new(spec.priors.as_deref().unwrap_or(&uniform))
        .map_err(|e| Error::invalid(format!("synthetic priors: {e}")))?;
    let rows: Vec<WeightedIndex<f64>> = spec
        .corruption
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| Error::invalid(format!("synthetic corruption: {e}"))))
        .collect::<Result<_>>()?;
    let width = spec.term_width();

    let generated: Vec<(Document, String)> = (0..spec.n_docs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let truth = priors.sample(&mut rng);
            let reported = rows[truth].sample(&mut rng);
            let signal_base = spec.vocab_noise + truth * spec.signal_terms_per_label;
            let mut text = String::with_capacity(spec.doc_length * (width + 2));
            for slot in 0..spec.doc_length {
                let term = if rng.random_bool(spec.signal_strength) {
                    signal_base + rng.random_range(0..spec.signal_terms_per_label)
                } else {
                    rng.random_range(0..spec.vocab_noise)
                };
                if slot > 0 {
                    text.push(' ');
                }
                text.push_str(&format!("w{term:0width$}"));
            }
            let labels = BTreeMap::from([(spec.class_name.clone(), spec.labels[reported].clone())]);
            (Document::new(format!("doc{i:06}"), text, labels), spec.labels[truth].clone())
        })
        .collect();
    let (docs, true_labels): (Vec<_>, Vec<_>) = generated.into_iter().unzip();
    let corpus = LabeledCorpus::new(docs, vec![spec.class_name.clone()])?;
    Ok(SyntheticCorpus { corpus, true_labels })
}

/// Writes one JSON object per document with fields `id`, `text`, the
/// class name (reported label) and `true_<class>`.
pub fn write_synthetic_jsonl(synth: &SyntheticCorpus, path: &Path) -> Result<()> {
    let class = synth
        .corpus
        .target_classes()
        .first()
        .ok_or_else(|| Error::invalid("corpus has no target class"))?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (doc, truth) in synth.corpus.documents().iter().zip(&synth.true_labels) {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), doc.id.clone().into());
        obj.insert("text".into(), doc.text.clone().into());
        obj.insert(class.clone(), doc.label(class).unwrap_or_default().into());
        obj.insert(format!("true_{class}"), truth.clone().into());
        serde_json::to_writer(&mut w, &obj)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, Format, LoadOptions};
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn poverty_scale_representative_rates() {
        let scale = LevelScale::poverty();
        for (rate, level) in [
            (10.0, "Low Poverty"),
            (30.0, "Moderate Poverty"),
            (60.0, "High Poverty"),
            (90.0, "Highest Poverty"),
            (0.0, "Low Poverty"),
            (25.0, "Moderate Poverty"),
            (50.0, "High Poverty"),
            (75.0, "Highest Poverty"),
            (100.0, "Highest Poverty"),
        ] {
            assert_eq!(map_rate_to_level(rate, &scale).unwrap(), level, "rate {rate}");
        }
        assert!(map_rate_to_level(-0.1, &scale).is_err());
        assert!(map_rate_to_level(100.1, &scale).is_err());
        assert!(map_rate_to_level(f64::NAN, &scale).is_err());
    }

    #[test]
    fn scale_rejects_gaps_and_overlaps() {
        let bin = |lower: f64, upper: f64, level: &str| LevelBin { lower, upper, level: level.into() };
        assert!(LevelScale::new(vec![bin(0.0, 40.0, "a"), bin(50.0, 100.0, "b")]).is_err());
        assert!(LevelScale::new(vec![bin(0.0, 60.0, "a"), bin(50.0, 100.0, "b")]).is_err());
        assert!(LevelScale::new(vec![bin(0.0, 50.0, "a")]).is_err());
        assert!(LevelScale::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn mapping_is_total_and_monotone(a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
            let scale = LevelScale::poverty();
            let levels = scale.levels();
            let rank = |r: f64| {
                let l = map_rate_to_level(r, &scale).unwrap();
                levels.iter().position(|x| x == l).unwrap()
            };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(rank(lo) <= rank(hi));
        }

        #[test]
        fn truth_matrix_of_self_is_identity(idx in proptest::collection::vec(0usize..4, 1..60)) {
            let labels = s(&["a", "b", "c", "d"]);
            let x: Vec<String> = idx.iter().map(|&i| labels[i].clone()).collect();
            let t = truth_matrix(&x, &x, &labels).unwrap();
            for (i, row) in t.percent.iter().enumerate() {
                let present = idx.contains(&i);
                for (j, &v) in row.iter().enumerate() {
                    let expect = if i == j && present { 100.0 } else { 0.0 };
                    prop_assert!((v - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn truth_matrix_row_example() {
        let labels = s(&["highest", "high", "moderate", "low"]);
        let user = vec!["highest".to_string(); 100];
        let mut truth = vec!["highest".to_string(); 3];
        truth.extend(vec!["low".to_string(); 97]);
        let t = truth_matrix(&user, &truth, &labels).unwrap();
        assert_eq!(t.percent[0], vec![3.0, 0.0, 0.0, 97.0]);
        assert!(t.percent[1].iter().all(|&v| v == 0.0));
        assert!(truth_matrix(&user, &truth[..5], &labels).is_err());
        assert!(truth_matrix(&s(&["zzz"]), &s(&["low"]), &labels).is_err());
    }

    #[test]
    fn identity_corruption_reports_truth() {
        let g = generate_synthetic(&SynthSpec::objective(400, 50, 1)).unwrap();
        assert_eq!(g.corpus.labels("level").unwrap(), g.true_labels);
    }

    #[test]
    fn degenerate_corruption_reports_constant() {
        let mut spec = SynthSpec::objective(300, 50, 2);
        spec.corruption = vec![vec![0.0, 0.0, 1.0, 0.0]; 4];
        let g = generate_synthetic(&spec).unwrap();
        assert!(g.corpus.labels("level").unwrap().iter().all(|l| l == "high"));
        assert!(g.true_labels.iter().any(|l| l != "high"));
    }

    #[test]
    fn texts_follow_the_recipe() {
        let mut spec = SynthSpec::objective(50, 30, 3);
        spec.signal_strength = 1.0;
        spec.doc_length = 20;
        let g = generate_synthetic(&spec).unwrap();
        for (doc, truth) in g.corpus.documents().iter().zip(&g.true_labels) {
            let signal = spec.signal_terms(truth).unwrap();
            let words: Vec<&str> = doc.text.split(' ').collect();
            assert_eq!(words.len(), 20);
            assert!(words.iter().all(|w| signal.iter().any(|s| s == w)));
        }
        spec.signal_strength = 0.0;
        let g = generate_synthetic(&spec).unwrap();
        let noise: Vec<String> = (0..30).map(|i| spec.term(i)).collect();
        for doc in g.corpus.documents() {
            assert!(doc.text.split(' ').all(|w| noise.iter().any(|n| n == w)));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec::subjective(500, 100, 11);
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SynthSpec { seed: 12, ..spec.clone() };
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let base = SynthSpec::objective(10, 10, 0);
        let mut a = base.clone();
        a.corruption[1] = vec![0.5, 0.4, 0.0, 0.0];
        assert!(generate_synthetic(&a).is_err());
        let mut b = base.clone();
        b.labels[1] = b.labels[0].clone();
        assert!(b.validate().is_err());
        let mut c = base.clone();
        c.signal_strength = 1.5;
        assert!(c.validate().is_err());
        let mut d = base.clone();
        d.priors = Some(vec![1.0, 0.0, 0.0]);
        assert!(d.validate().is_err());
        let mut e = base;
        e.corruption.pop();
        assert!(e.validate().is_err());
        for spec in [
            SynthSpec::objective(10, 10, 0),
            SynthSpec::subjective(10, 10, 0),
            SynthSpec::rating_like(10, 10, 0),
        ] {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let spec = SynthSpec::rating_like(60, 40, 5);
        let g = generate_synthetic(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.jsonl");
        write_synthetic_jsonl(&g, &path).unwrap();
        let opts = LoadOptions::new(Format::Jsonl, &["text"], &["rating"]).with_id_field("id");
        assert_eq!(load_corpus(&path, &opts).unwrap(), g.corpus);
        let truth = load_corpus(&path, &LoadOptions::new(Format::Jsonl, &["text"], &["true_rating"])).unwrap();
        assert_eq!(truth.labels("true_rating").unwrap(), g.true_labels);
    }
}
