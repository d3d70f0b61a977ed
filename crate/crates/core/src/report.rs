//! End-to-end audit: per target class, classification quality, indicative
//! feature balance and 2D label separation, combined into a verdict and
//! written out as a directory of artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{
    confusion_matrix, cross_validate, f1_metrics, train_svm, ClassMetrics, ConfusionMatrix, CvResult, LinearModel,
    SvmParams,
};
use crate::config::AuditConfig;
use crate::corpus::{
    filter_by_char_length, filter_by_length_zscore, label_distribution, load_corpus, stratified_split, LabelShare,
    LabeledCorpus,
};
use crate::embed::{train_pvdbow, EmbeddingModel};
use crate::error::{Error, Result};
use crate::groundtruth::generate_synthetic;
use crate::indicative::{chi2_table, nfis_distribution, ChiSquareTable, NfisDistribution};
use crate::plot;
use crate::project::{silhouette, tsne, Projection2D};
use crate::vectorize::{binarize, build_vocabulary, tfidf_transform, SparseDocMatrix, Vocabulary};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Filter,
    Split,
    Vectorize,
    CrossValidate,
    Train,
    Evaluate,
    Indicative,
    Embed,
    Project,
    Emit,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from));
        f.write_str(name.as_deref().unwrap_or("unknown"))
    }
}

/// A failed stage, with whatever finished before it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub class: Option<String>,
    pub source: Error,
    pub partial: Option<Box<SubjectivityReport>>,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.class {
            Some(c) => write!(f, "stage `{}` failed for class `{c}`: {}", self.stage, self.source),
            None => write!(f, "stage `{}` failed: {}", self.stage, self.source),
        }
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn at(stage: Stage, class: Option<&str>) -> impl FnOnce(Error) -> StageError + '_ {
    move |source| StageError { stage, class: class.map(String::from), source, partial: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    ObjectiveLike,
    SubjectiveSuspect,
    Inconclusive,
}

impl std::fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictKind::ObjectiveLike => "objective-like",
            VerdictKind::SubjectiveSuspect => "subjective-suspect",
            VerdictKind::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub macro_f1: f64,
    pub imbalance: Option<f64>,
    pub silhouette: f64,
    /// Human-readable account of which thresholds fired.
    pub evidence: Vec<String>,
}

impl Verdict {
    pub fn decide(rule: &crate::config::VerdictRule, macro_f1: f64, imbalance: Option<f64>, silhouette: f64) -> Self {
        let mut evidence = Vec::new();
        let kind = match imbalance {
            None => {
                evidence.push("NFIS imbalance undefined (fewer than one label with indicative terms)".into());
                VerdictKind::Inconclusive
            }
            Some(imb) => {
                let low_f1 = macro_f1 < rule.subjective_f1_below;
                let skewed = imb > rule.subjective_imbalance_above;
                let mixed = silhouette < rule.subjective_silhouette_below;
                if low_f1 && skewed && mixed {
                    evidence.push(format!("macro-F1 {macro_f1:.4} < {}", rule.subjective_f1_below));
                    evidence.push(format!("NFIS imbalance {imb:.4} > {}", rule.subjective_imbalance_above));
                    evidence.push(format!("2D silhouette {silhouette:.4} < {}", rule.subjective_silhouette_below));
                    VerdictKind::SubjectiveSuspect
                } else if macro_f1 >= rule.objective_f1_at_least && imb <= rule.objective_imbalance_at_most {
                    evidence.push(format!("macro-F1 {macro_f1:.4} >= {}", rule.objective_f1_at_least));
                    evidence.push(format!("NFIS imbalance {imb:.4} <= {}", rule.objective_imbalance_at_most));
                    VerdictKind::ObjectiveLike
                } else {
                    evidence.push(format!(
                        "macro-F1 {macro_f1:.4}, NFIS imbalance {imb:.4}, silhouette {silhouette:.4} match neither rule"
                    ));
                    VerdictKind::Inconclusive
                }
            }
        };
        Self { kind, macro_f1, imbalance, silhouette, evidence }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub train_docs: usize,
    pub test_docs: usize,
    pub vocabulary_terms: usize,
    pub cv: CvResult,
    pub metrics: ClassMetrics,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub sampled_docs: usize,
    pub final_kl: f64,
    pub silhouette: f64,
    pub barnes_hut: bool,
    pub kl_trace: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopTerm {
    pub term: String,
    pub chi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub label_distribution: Vec<LabelShare>,
    pub classification: ClassificationSummary,
    pub nfis: NfisDistribution,
    /// Ten most indicative terms per label.
    pub top_terms: BTreeMap<String, Vec<TopTerm>>,
    pub projection: ProjectionSummary,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub loaded_docs: usize,
    pub filtered_docs: usize,
}

/// Projected coordinates, kept out of `report.json` and written to
/// `tsne.csv` instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionData {
    pub ids: Vec<String>,
    pub coordinates: Vec<[f64; 2]>,
    /// Per audited class, the label of each sampled document.
    pub labels: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectivityReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: AuditConfig,
    pub corpus: CorpusSummary,
    pub classes: Vec<ClassReport>,
    /// Seconds per stage; omitted in deterministic mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
    #[serde(skip)]
    pub projection: Option<ProjectionData>,
}

impl SubjectivityReport {
    pub fn class(&self, name: &str) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.class == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Loads (or generates) the corpus and applies the configured filters.
pub fn prepare_corpus(cfg: &AuditConfig) -> Result<(LabeledCorpus, CorpusSummary), StageError> {
    let loaded = match (&cfg.input, &cfg.synthetic) {
        (Some(input), _) => load_corpus(&input.path, &input.load_options()),
        (None, Some(spec)) => generate_synthetic(spec).map(|g| g.corpus),
        (None, None) => Err(Error::invalid("config has no input")),
    }
    .map_err(at(Stage::Load, None))?;
    let loaded_docs = loaded.len();
    let mut corpus = filter_by_char_length(&loaded, cfg.filter.min_chars, cfg.filter.max_chars.unwrap_or(usize::MAX));
    if let Some(z) = cfg.filter.zscore_max {
        corpus = filter_by_length_zscore(&corpus, z).map_err(at(Stage::Filter, None))?;
    }
    if corpus.is_empty() {
        return Err(at(Stage::Filter, None)(Error::EmptyCorpus));
    }
    let summary = CorpusSummary { loaded_docs, filtered_docs: corpus.len() };
    Ok((corpus, summary))
}

/// Output of the classification stage for one class, including the
/// artifacts worth caching.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOutput {
    pub summary: ClassificationSummary,
    pub vocabulary: Vocabulary,
    pub train_matrix: SparseDocMatrix,
    pub model: LinearModel,
}

/// Split, vectorize on the training half, select C by stratified k-fold,
/// retrain, and score the held-out half.
pub fn classify_class(cfg: &AuditConfig, corpus: &LabeledCorpus, class: &str) -> Result<ClassifyOutput, StageError> {
    let stage = |s| at(s, Some(class));
    let split = stratified_split(corpus, class, cfg.classify.train_fraction, cfg.seed).map_err(stage(Stage::Split))?;
    let v = &cfg.vectorize;
    let vocabulary = build_vocabulary(&split.train, v.ngram_max, v.min_df).map_err(stage(Stage::Vectorize))?;
    let x_train = tfidf_transform(&split.train, &vocabulary, v.normalize);
    let x_test = tfidf_transform(&split.test, &vocabulary, v.normalize);
    let y_train = split.train.labels(class).map_err(stage(Stage::Vectorize))?;
    let y_test = split.test.labels(class).map_err(stage(Stage::Vectorize))?;
    let params = SvmParams {
        c: cfg.classify.c_grid[0],
        max_epochs: cfg.classify.max_epochs,
        tolerance: cfg.classify.tolerance,
        seed: cfg.seed,
    };
    let cv = cross_validate(&x_train, &y_train, cfg.classify.folds, &cfg.classify.c_grid, &params)
        .map_err(stage(Stage::CrossValidate))?;
    let model = train_svm(&x_train, &y_train, &params.with_c(cv.best_c)).map_err(stage(Stage::Train))?;
    let predicted = model.predict(&x_test).map_err(stage(Stage::Evaluate))?;
    let labels = corpus.label_set(class).map_err(stage(Stage::Evaluate))?;
    let confusion = confusion_matrix(&y_test, &predicted, labels).map_err(stage(Stage::Evaluate))?;
    let summary = ClassificationSummary {
        train_docs: split.train.len(),
        test_docs: split.test.len(),
        vocabulary_terms: vocabulary.len(),
        cv,
        metrics: f1_metrics(&confusion),
        confusion,
    };
    Ok(ClassifyOutput { summary, vocabulary, train_matrix: x_train, model })
}

/// Term-presence matrix over the whole corpus, shared by every class.
pub fn presence_matrix(cfg: &AuditConfig, corpus: &LabeledCorpus) -> Result<(Vocabulary, SparseDocMatrix), StageError> {
    let vocab = build_vocabulary(corpus, cfg.vectorize.ngram_max, cfg.vectorize.min_df)
        .map_err(at(Stage::Indicative, None))?;
    let presence = binarize(&tfidf_transform(corpus, &vocab, false));
    Ok((vocab, presence))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicativeOutput {
    pub table: ChiSquareTable,
    pub nfis: NfisDistribution,
    pub top_terms: BTreeMap<String, Vec<TopTerm>>,
}

pub fn indicative_class(
    cfg: &AuditConfig,
    corpus: &LabeledCorpus,
    vocab: &Vocabulary,
    presence: &SparseDocMatrix,
    class: &str,
) -> Result<IndicativeOutput, StageError> {
    let stage = at(Stage::Indicative, Some(class));
    let run = || -> Result<IndicativeOutput> {
        let y = corpus.labels(class)?;
        let table = chi2_table(presence, &y)?;
        let nfis = nfis_distribution(&table, cfg.nfis.k)?;
        let mut top_terms = BTreeMap::new();
        for label in &table.labels {
            let top = table
                .top_term_names(vocab, label, 10.min(vocab.len()))?
                .into_iter()
                .map(|(term, chi2)| TopTerm { term, chi2 })
                .collect();
            top_terms.insert(label.clone(), top);
        }
        Ok(IndicativeOutput { table, nfis, top_terms })
    };
    run().map_err(stage)
}

/// Seeded sample of at most `cap` document indices, in corpus order.
pub fn sample_indices(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    idx
}

pub fn embed_corpus(cfg: &AuditConfig, corpus: &LabeledCorpus) -> Result<EmbeddingModel, StageError> {
    let mut params = cfg.embed;
    params.seed = cfg.seed;
    train_pvdbow(corpus, &params).map_err(at(Stage::Embed, None))
}

pub fn project_vectors(cfg: &AuditConfig, vectors: &[Vec<f64>]) -> Result<Projection2D, StageError> {
    let mut params = cfg.project.tsne;
    params.seed = cfg.seed;
    tsne(vectors, &params).map_err(at(Stage::Project, None))
}

/// Runs every stage for every audited class.
pub fn run_audit(cfg: &AuditConfig) -> Result<SubjectivityReport, StageError> {
    let mut cfg = cfg.clone();
    cfg.propagate_seed();
    cfg.validate().map_err(at(Stage::Load, None))?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        *timings.entry(name.to_string()).or_insert(0.0) += clock.elapsed().as_secs_f64();
        clock = Instant::now();
    };

    let (corpus, corpus_summary) = prepare_corpus(&cfg)?;
    lap("load", &mut timings);
    let classes = cfg.audited_classes();
    for c in &classes {
        if !corpus.has_class(c) {
            return Err(at(Stage::Load, None)(Error::UnknownClass(c.clone())));
        }
    }

    let mut report = SubjectivityReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        config: cfg.clone(),
        corpus: corpus_summary,
        classes: Vec::new(),
        timings: None,
        projection: None,
    };
    let fail = |mut e: StageError, report: &SubjectivityReport| {
        e.partial = Some(Box::new(report.clone()));
        e
    };

    let (vocab, presence) = presence_matrix(&cfg, &corpus).map_err(|e| fail(e, &report))?;
    lap("indicative", &mut timings);
    let model = embed_corpus(&cfg, &corpus).map_err(|e| fail(e, &report))?;
    lap("embed", &mut timings);
    let picked = sample_indices(corpus.len(), cfg.project.sample_cap, cfg.seed);
    let vectors: Vec<Vec<f64>> = picked.iter().map(|&i| model.doc_vector(i).to_vec()).collect();
    let projection = project_vectors(&cfg, &vectors).map_err(|e| fail(e, &report))?;
    lap("project", &mut timings);
    let sampled = corpus.subset(&picked);
    let mut data = ProjectionData {
        ids: sampled.documents().iter().map(|d| d.id.clone()).collect(),
        coordinates: projection.coordinates.clone(),
        labels: BTreeMap::new(),
    };

    for class in &classes {
        let distribution = label_distribution(&corpus, class).map_err(|e| fail(at(Stage::Load, Some(class))(e), &report))?;
        let classified = classify_class(&cfg, &corpus, class).map_err(|e| fail(e, &report))?;
        lap("classify", &mut timings);
        let indicative = indicative_class(&cfg, &corpus, &vocab, &presence, class).map_err(|e| fail(e, &report))?;
        lap("indicative", &mut timings);
        let labels = sampled.labels(class).map_err(|e| fail(at(Stage::Project, Some(class))(e), &report))?;
        let sil = silhouette(&projection.coordinates, &labels)
            .map_err(|e| fail(at(Stage::Project, Some(class))(e), &report))?;
        lap("project", &mut timings);
        let verdict = Verdict::decide(
            &cfg.verdict,
            classified.summary.metrics.macro_f1,
            indicative.nfis.imbalance,
            sil,
        );
        report.classes.push(ClassReport {
            class: class.clone(),
            label_distribution: distribution,
            classification: classified.summary,
            nfis: indicative.nfis,
            top_terms: indicative.top_terms,
            projection: ProjectionSummary {
                sampled_docs: picked.len(),
                final_kl: projection.final_kl,
                silhouette: sil,
                barnes_hut: projection.barnes_hut,
                kl_trace: projection.kl_trace.clone(),
            },
            verdict,
        });
        data.labels.insert(class.clone(), labels);
        report.projection = Some(data.clone());
    }
    report.projection = Some(data);
    if !cfg.deterministic {
        report.timings = Some(timings);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub complete: bool,
    pub failure: Option<String>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// `sha256sum`-compatible lines preceded by a status comment.
    pub fn render(&self) -> String {
        let mut out = match &self.failure {
            None => "# status: complete\n".to_string(),
            Some(f) => format!("# status: incomplete; {}\n", f.replace('\n', " ")),
        };
        for e in &self.entries {
            out.push_str(&format!("{}  {}\n", e.sha256, e.path));
        }
        out
    }

    pub fn get(&self, path: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.path == path)
    }
}

/// Directory name for a class: ASCII alphanumerics, `-` and `_` kept,
/// everything else replaced by `_`.
pub fn class_dir_name(class: &str) -> String {
    let s: String = class
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() { "_".into() } else { s }
}

struct Writer<'a> {
    root: &'a Path,
    entries: Vec<ManifestEntry>,
}

impl Writer<'_> {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.entries.push(ManifestEntry {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn write_csv(&mut self, rel: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
        self.write(rel, &bytes)
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub fn metrics_rows(m: &ClassMetrics) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["label", "precision", "recall", "f1", "support"].map(String::from).to_vec();
    let mut rows: Vec<Vec<String>> = m
        .per_label
        .iter()
        .map(|l| vec![l.label.clone(), num(l.precision), num(l.recall), num(l.f1), l.support.to_string()])
        .collect();
    rows.push(vec!["macro".into(), String::new(), String::new(), num(m.macro_f1), String::new()]);
    (header, rows)
}

pub fn confusion_rows(cm: &ConfusionMatrix) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(cm.labels.iter().cloned());
    let rows = cm
        .labels
        .iter()
        .zip(&cm.counts)
        .map(|(l, row)| std::iter::once(l.clone()).chain(row.iter().map(|c| c.to_string())).collect())
        .collect();
    (header, rows)
}

pub fn nfis_rows(n: &NfisDistribution) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["label", "nfis"].map(String::from).to_vec();
    let rows = n
        .per_label
        .iter()
        .map(|l| vec![l.label.clone(), l.nfis.map(num).unwrap_or_default()])
        .collect();
    (header, rows)
}

pub fn tsne_rows(ids: &[String], coords: &[[f64; 2]], labels: &[String]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["id", "x", "y", "label"].map(String::from).to_vec();
    let rows = ids
        .iter()
        .zip(coords)
        .zip(labels)
        .map(|((id, p), l)| vec![id.clone(), num(p[0]), num(p[1]), l.clone()])
        .collect();
    (header, rows)
}

fn write_class(w: &mut Writer<'_>, c: &ClassReport, projection: Option<&ProjectionData>) -> Result<()> {
    let dir = class_dir_name(&c.class);
    let (h, r) = metrics_rows(&c.classification.metrics);
    w.write_csv(&format!("{dir}/metrics.csv"), &h, &r)?;
    let (h, r) = confusion_rows(&c.classification.confusion);
    w.write_csv(&format!("{dir}/confusion.csv"), &h, &r)?;
    let (h, r) = nfis_rows(&c.nfis);
    w.write_csv(&format!("{dir}/nfis.csv"), &h, &r)?;
    let bars: Vec<(String, Option<f64>)> = c.nfis.per_label.iter().map(|l| (l.label.clone(), l.nfis)).collect();
    let svg = plot::bar_chart(&format!("NFIS (K = {}) for {}", c.nfis.k, c.class), &bars);
    w.write(&format!("{dir}/nfis.svg"), svg.as_bytes())?;
    if let Some(p) = projection {
        if let Some(labels) = p.labels.get(&c.class) {
            let (h, r) = tsne_rows(&p.ids, &p.coordinates, labels);
            w.write_csv(&format!("{dir}/tsne.csv"), &h, &r)?;
            let svg = plot::scatter(&format!("t-SNE of document vectors by {}", c.class), &p.coordinates, labels);
            w.write(&format!("{dir}/tsne.svg"), svg.as_bytes())?;
        }
    }
    Ok(())
}

fn emit_with_status(report: &SubjectivityReport, outdir: &Path, failure: Option<String>) -> Result<Manifest> {
    if outdir.as_os_str().is_empty() {
        return Err(Error::invalid("output directory path is empty"));
    }
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut w = Writer { root: outdir, entries: Vec::new() };
    w.write("report.json", report.to_json()?.as_bytes())?;
    for c in &report.classes {
        write_class(&mut w, c, report.projection.as_ref())?;
    }
    let manifest = Manifest { complete: failure.is_none(), failure, entries: w.entries };
    let path = outdir.join("MANIFEST");
    fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Writes `report.json`, per-class CSV/SVG artifacts and a `MANIFEST` of
/// sha256 hashes.
pub fn emit(report: &SubjectivityReport, outdir: &Path) -> Result<Manifest> {
    emit_with_status(report, outdir, None)
}

/// Writes what a failed audit produced, marking the manifest incomplete.
pub fn emit_partial(err: &StageError, outdir: &Path) -> Result<Manifest> {
    let failure = Some(err.to_string());
    match &err.partial {
        Some(report) => emit_with_status(report, outdir, failure),
        None => {
            fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
            let manifest = Manifest { complete: false, failure, entries: Vec::new() };
            let path = outdir.join("MANIFEST");
            fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))?;
            Ok(manifest)
        }
    }
}

/// Resolves the output directory: explicit argument, then config, then
/// `./audit-out`.
pub fn output_dir(cfg: &AuditConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("audit-out"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::VerdictRule;
    use crate::groundtruth::SynthSpec;

    #[test]
    fn verdict_rule_boundaries() {
        let r = VerdictRule::default();
        assert_eq!(Verdict::decide(&r, 0.54, Some(3.0), 0.0).kind, VerdictKind::SubjectiveSuspect);
        assert_eq!(Verdict::decide(&r, 0.84, Some(1.2), 0.3).kind, VerdictKind::ObjectiveLike);
        assert_eq!(Verdict::decide(&r, 0.75, Some(2.0), 0.3).kind, VerdictKind::ObjectiveLike);
        assert_eq!(Verdict::decide(&r, 0.60, Some(3.0), 0.0).kind, VerdictKind::Inconclusive);
        assert_eq!(Verdict::decide(&r, 0.54, Some(2.0), 0.0).kind, VerdictKind::Inconclusive);
        assert_eq!(Verdict::decide(&r, 0.54, Some(3.0), 0.05).kind, VerdictKind::Inconclusive);
        assert_eq!(Verdict::decide(&r, 0.9, None, 0.5).kind, VerdictKind::Inconclusive);
        assert!(!Verdict::decide(&r, 0.54, Some(3.0), 0.0).evidence.is_empty());
    }

    #[test]
    fn class_dir_names_are_safe() {
        assert_eq!(class_dir_name("poverty_level"), "poverty_level");
        assert_eq!(class_dir_name("../a b"), "___a_b");
        assert_eq!(class_dir_name(""), "_");
    }

    #[test]
    fn sampling_is_seeded_and_sorted() {
        assert_eq!(sample_indices(5, 10, 0), vec![0, 1, 2, 3, 4]);
        let a = sample_indices(1000, 50, 3);
        assert_eq!(a.len(), 50);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, sample_indices(1000, 50, 3));
        assert_ne!(a, sample_indices(1000, 50, 4));
    }

    fn small_config() -> AuditConfig {
        let mut cfg = AuditConfig::synthetic(SynthSpec::objective(240, 60, 5));
        cfg.classify.folds = 3;
        cfg.vectorize.ngram_max = 1;
        cfg.nfis.k = 10;
        cfg.embed.dim = 16;
        cfg.embed.epochs = 3;
        cfg.embed.min_count = 2;
        cfg.project.tsne.perplexity = 10.0;
        cfg.project.tsne.iterations = 300;
        cfg
    }

    #[test]
    fn small_audit_emits_every_artifact() {
        let cfg = small_config();
        let report = run_audit(&cfg).unwrap();
        let c = report.class("level").unwrap();
        assert_eq!(c.verdict.kind, VerdictKind::ObjectiveLike, "{:?}", c.verdict);
        assert!(report.timings.is_none());
        let dir = tempfile::tempdir().unwrap();
        let m = emit(&report, dir.path()).unwrap();
        assert!(m.complete);
        assert_eq!(m.entries.len(), 7);
        for f in ["report.json", "level/metrics.csv", "level/confusion.csv", "level/nfis.csv", "level/nfis.svg", "level/tsne.csv", "level/tsne.svg"] {
            assert!(m.get(f).is_some(), "{f}");
            assert!(dir.path().join(f).exists());
        }
        let again = emit(&report, dir.path()).unwrap();
        assert_eq!(m, again);
        let manifest = fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
        assert!(manifest.starts_with("# status: complete"));
        assert!(emit(&report, Path::new("")).is_err());
    }

    #[test]
    fn unknown_class_is_named() {
        let mut cfg = small_config();
        cfg.classes = Some(vec!["grade".into()]);
        let err = run_audit(&cfg).unwrap_err();
        assert!(matches!(&err.source, Error::UnknownClass(c) if c == "grade"));
    }

    #[test]
    fn failure_writes_incomplete_manifest() {
        let mut cfg = small_config();
        cfg.nfis.k = 100_000;
        let err = run_audit(&cfg).unwrap_err();
        assert_eq!(err.stage, Stage::Indicative);
        let dir = tempfile::tempdir().unwrap();
        let m = emit_partial(&err, dir.path()).unwrap();
        assert!(!m.complete);
        assert!(m.get("report.json").is_some());
        let text = fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
        assert!(text.starts_with("# status: incomplete; stage `indicative` failed for class `level`"));
    }
}
