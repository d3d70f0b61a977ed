//! PV-DBOW paragraph vectors trained with negative sampling.
//!
//! Every document owns a vector `v_d`; every word owns an output vector
//! `u_w`. For each word occurrence `w` in `d` the model minimizes
//!
//! ```text
//! L = -log sigma(v_d . u_w) - sum_k log sigma(-v_d . u_k)
//! ```
//!
//! over `negatives` words `u_k` drawn from the unigram distribution raised
//! to 0.75. Training is single-threaded and fully determined by the seed.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::vectorize::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedParams {
    pub dim: usize,
    pub min_count: u64,
    pub negatives: usize,
    pub epochs: usize,
    /// Accepted for parity with PV-DM style configs; PV-DBOW does not use a window.
    pub window: usize,
    pub initial_lr: f64,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for EmbedParams {
    fn default() -> Self {
        Self {
            dim: 300,
            min_count: 10,
            negatives: 5,
            epochs: 10,
            window: 8,
            initial_lr: 0.025,
            min_lr: 0.0001,
            seed: 0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Loss of one (document, word, negatives) example.
pub fn pair_loss(doc: &[f64], word: &[f64], negatives: &[&[f64]]) -> f64 {
    // -log sigma(x) = ln(1 + e^-x)
    let softplus = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    softplus(-dot(doc, word)) + negatives.iter().map(|u| softplus(dot(doc, u))).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub doc: Vec<f64>,
    pub word: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Analytic gradient of [`pair_loss`] with respect to every input vector.
pub fn sg_neg_gradient(doc: &[f64], word: &[f64], negatives: &[&[f64]]) -> PairGradient {
    let g_pos = sigmoid(dot(doc, word)) - 1.0;
    let mut g_doc: Vec<f64> = word.iter().map(|u| g_pos * u).collect();
    let g_word = doc.iter().map(|v| g_pos * v).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for u in negatives {
        let g = sigmoid(dot(doc, u));
        for (gd, ui) in g_doc.iter_mut().zip(u.iter()) {
            *gd += g * ui;
        }
        g_negs.push(doc.iter().map(|v| g * v).collect());
    }
    PairGradient {
        doc: g_doc,
        word: g_word,
        negatives: g_negs,
    }
}

/// Word vocabulary with corpus frequencies, words sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVocab {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl WordVocab {
    fn from_parts(words: Vec<String>, counts: Vec<u64>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, counts, index }
    }

    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: u64) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for t in texts {
            for w in tokenize(t) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        kept.sort();
        let (words, counts) = kept.into_iter().unzip();
        Self::from_parts(words, counts)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    /// In-vocabulary word ids of `text`, in order.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().filter_map(|w| self.index(w)).collect()
    }
}

/// Draws negative words with probability proportional to `count^0.75`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    dist: WeightedIndex<f64>,
}

impl NegativeSampler {
    pub fn new(vocab: &WordVocab) -> Result<Self> {
        let weights: Vec<f64> = vocab.counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let dist = WeightedIndex::new(weights).map_err(|_| Error::EmptyVocabulary)?;
        Ok(Self { dist })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.dist.sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub params: EmbedParams,
    pub vocab: WordVocab,
    pub doc_ids: Vec<String>,
    doc_vectors: Vec<f64>,
    word_output: Vec<f64>,
    /// Mean pair loss on a fixed sampled batch, before training and after each epoch.
    pub loss_history: Vec<f64>,
}

const LOSS_BATCH: usize = 1000;

struct Example {
    doc: usize,
    word: usize,
    negatives: Vec<usize>,
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_vector(&self, i: usize) -> &[f64] {
        let d = self.params.dim;
        &self.doc_vectors[i * d..(i + 1) * d]
    }

    pub fn word_output_vector(&self, w: usize) -> &[f64] {
        let d = self.params.dim;
        &self.word_output[w * d..(w + 1) * d]
    }

    pub fn doc_embeddings(&self) -> DocEmbeddings {
        DocEmbeddings {
            ids: self.doc_ids.clone(),
            vectors: (0..self.n_docs()).map(|i| self.doc_vector(i).to_vec()).collect(),
        }
    }

    fn batch_loss(&self, batch: &[Example]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let total: f64 = batch
            .iter()
            .map(|ex| {
                let negs: Vec<&[f64]> = ex.negatives.iter().map(|&n| self.word_output_vector(n)).collect();
                pair_loss(self.doc_vector(ex.doc), self.word_output_vector(ex.word), &negs)
            })
            .sum();
        total / batch.len() as f64
    }
}

fn init_doc_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let half = 0.5 / dim as f64;
    (0..dim).map(|_| rng.random_range(-half..half)).collect()
}

fn draw_negatives(sampler: &NegativeSampler, rng: &mut impl Rng, k: usize, target: usize, out: &mut Vec<usize>) {
    out.clear();
    for _ in 0..k {
        let n = sampler.sample(rng);
        if n != target {
            out.push(n);
        }
    }
}

/// One SGD step on a single example, updating the document vector and
/// every touched output vector. Equivalent to subtracting `lr` times
/// [`sg_neg_gradient`] when the sampled words are distinct.
fn sgd_step(
    doc: &mut [f64],
    word_output: &mut [f64],
    dim: usize,
    target: usize,
    negatives: &[usize],
    lr: f64,
    doc_grad: &mut [f64],
) {
    doc_grad.iter_mut().for_each(|g| *g = 0.0);
    let targets = std::iter::once((target, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (t, label) in targets {
        let u = &mut word_output[t * dim..(t + 1) * dim];
        let g = label - sigmoid(dot(doc, u));
        for ((gd, ui), vi) in doc_grad.iter_mut().zip(u.iter_mut()).zip(doc.iter()) {
            *gd += g * *ui;
            *ui += lr * g * vi;
        }
    }
    for (v, g) in doc.iter_mut().zip(doc_grad.iter()) {
        *v += lr * g;
    }
}

/// Trains document vectors for every document in `corpus`.
pub fn train_pvdbow(corpus: &LabeledCorpus, params: &EmbedParams) -> Result<EmbeddingModel> {
    let ids: Vec<String> = corpus.documents().iter().map(|d| d.id.clone()).collect();
    let texts: Vec<&str> = corpus.texts().collect();
    train_pvdbow_texts(&ids, &texts, params)
}

pub fn train_pvdbow_texts(ids: &[String], texts: &[&str], params: &EmbedParams) -> Result<EmbeddingModel> {
    if texts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if ids.len() != texts.len() {
        return Err(Error::DimensionMismatch { expected: texts.len(), got: ids.len() });
    }
    if params.dim == 0 || params.negatives == 0 {
        return Err(Error::invalid("dim and negatives must be at least 1"));
    }
    let vocab = WordVocab::build(texts.iter().copied(), params.min_count);
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let sampler = NegativeSampler::new(&vocab)?;
    let docs: Vec<Vec<usize>> = texts.iter().map(|t| vocab.encode(t)).collect();
    let dim = params.dim;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut doc_vectors = Vec::with_capacity(docs.len() * dim);
    for _ in 0..docs.len() {
        doc_vectors.extend(init_doc_vector(&mut rng, dim));
    }
    let mut model = EmbeddingModel {
        params: *params,
        doc_ids: ids.to_vec(),
        doc_vectors,
        word_output: vec![0.0; vocab.len() * dim],
        vocab,
        loss_history: Vec::with_capacity(params.epochs + 1),
    };

    let batch = sample_batch(&docs, &sampler, params, params.seed.wrapping_add(1));
    model.loss_history.push(model.batch_loss(&batch));

    let total_words = (docs.iter().map(Vec::len).sum::<usize>() * params.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut negs = Vec::with_capacity(params.negatives);
    let mut grad = vec![0.0; dim];
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &d in &order {
            let doc = &mut model.doc_vectors[d * dim..(d + 1) * dim];
            for &w in &docs[d] {
                let lr = params.initial_lr
                    - (params.initial_lr - params.min_lr) * (processed as f64 / total_words);
                draw_negatives(&sampler, &mut rng, params.negatives, w, &mut negs);
                sgd_step(doc, &mut model.word_output, dim, w, &negs, lr, &mut grad);
                processed += 1;
            }
        }
        model.loss_history.push(model.batch_loss(&batch));
    }
    if model.doc_vectors.iter().chain(&model.word_output).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding parameters"));
    }
    Ok(model)
}

fn sample_batch(docs: &[Vec<usize>], sampler: &NegativeSampler, params: &EmbedParams, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nonempty: Vec<usize> = (0..docs.len()).filter(|&d| !docs[d].is_empty()).collect();
    if nonempty.is_empty() {
        return Vec::new();
    }
    (0..LOSS_BATCH)
        .map(|_| {
            let doc = nonempty[rng.random_range(0..nonempty.len())];
            let word = docs[doc][rng.random_range(0..docs[doc].len())];
            let mut negatives = Vec::new();
            draw_negatives(sampler, &mut rng, params.negatives, word, &mut negatives);
            Example { doc, word, negatives }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferredVector {
    pub vector: Vec<f64>,
    /// False when the text has no in-vocabulary word; the vector is then zero.
    pub in_vocabulary: bool,
}

/// Fits a fresh document vector against the frozen word vectors.
pub fn infer_vector(model: &EmbeddingModel, text: &str, steps: usize, seed: u64) -> Result<InferredVector> {
    let dim = model.dim();
    let words = model.vocab.encode(text);
    if words.is_empty() {
        return Ok(InferredVector { vector: vec![0.0; dim], in_vocabulary: false });
    }
    let sampler = NegativeSampler::new(&model.vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut doc = init_doc_vector(&mut rng, dim);
    let total = (words.len() * steps).max(1) as f64;
    let p = &model.params;
    let mut processed = 0usize;
    let mut negs = Vec::with_capacity(p.negatives);
    let mut grad = vec![0.0; dim];
    for _ in 0..steps {
        for &w in &words {
            let lr = p.initial_lr - (p.initial_lr - p.min_lr) * (processed as f64 / total);
            draw_negatives(&sampler, &mut rng, p.negatives, w, &mut negs);
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (t, label) in std::iter::once((w, 1.0)).chain(negs.iter().map(|&n| (n, 0.0))) {
                let u = model.word_output_vector(t);
                let g = label - sigmoid(dot(&doc, u));
                for (gd, ui) in grad.iter_mut().zip(u) {
                    *gd += g * ui;
                }
            }
            for (v, g) in doc.iter_mut().zip(&grad) {
                *v += lr * g;
            }
            processed += 1;
        }
    }
    Ok(InferredVector { vector: doc, in_vocabulary: true })
}

/// Document vectors keyed by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEmbeddings {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl DocEmbeddings {
    /// CSV with header `id,v0,...,v{dim-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let dim = self.vectors.first().map_or(0, Vec::len);
        let mut header = vec!["id".to_string()];
        header.extend((0..dim).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            let mut rec = vec![id.clone()];
            rec.extend(v.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut it = rec.iter();
            ids.push(it.next().unwrap_or_default().to_string());
            let v = it
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::MalformedRecord { index: i, reason: e.to_string() })?;
            vectors.push(v);
        }
        Ok(Self { ids, vectors })
    }
}

const MAGIC: &[u8; 8] = b"PVDBOW\x00\x01";

/// Binary model file (all integers u64 and floats f64, little-endian):
///
/// ```text
/// magic "PVDBOW\0\x01"
/// dim, min_count, negatives, epochs, window, seed   (u64)
/// initial_lr, min_lr                                (f64)
/// n_words, then per word: u32 byte length, UTF-8 bytes, u64 count
/// n_docs, then per doc: u32 byte length, UTF-8 id bytes
/// n_docs * dim document vector entries              (f64, row-major)
/// n_words * dim output vector entries               (f64, row-major)
/// n_loss, then n_loss loss-history values           (f64)
/// ```
pub fn save_model(model: &EmbeddingModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let p = &model.params;
    for v in [p.dim as u64, p.min_count, p.negatives as u64, p.epochs as u64, p.window as u64, p.seed] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&p.initial_lr.to_le_bytes());
    buf.extend_from_slice(&p.min_lr.to_le_bytes());
    buf.extend_from_slice(&(model.vocab.len() as u64).to_le_bytes());
    for (w, c) in model.vocab.words.iter().zip(&model.vocab.counts) {
        put_str(&mut buf, w);
        buf.extend_from_slice(&c.to_le_bytes());
    }
    buf.extend_from_slice(&(model.doc_ids.len() as u64).to_le_bytes());
    for id in &model.doc_ids {
        put_str(&mut buf, id);
    }
    for v in model.doc_vectors.iter().chain(&model.word_output) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(model.loss_history.len() as u64).to_le_bytes());
    for v in &model.loss_history {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::InvalidModel("unexpected end of file".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| Error::InvalidModel(e.to_string()))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.data.len())
            .ok_or_else(|| Error::InvalidModel(format!("implausible length {n}")))
    }
}

pub fn load_model(path: &Path) -> Result<EmbeddingModel> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::InvalidModel("bad magic".into()));
    }
    let dim = c.u64()? as usize;
    let min_count = c.u64()?;
    let negatives = c.u64()? as usize;
    let epochs = c.u64()? as usize;
    let window = c.u64()? as usize;
    let seed = c.u64()?;
    let initial_lr = c.f64()?;
    let min_lr = c.f64()?;
    let params = EmbedParams { dim, min_count, negatives, epochs, window, initial_lr, min_lr, seed };
    let n_words = c.len()?;
    let mut words = Vec::with_capacity(n_words);
    let mut counts = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        words.push(c.string()?);
        counts.push(c.u64()?);
    }
    let n_docs = c.len()?;
    let doc_ids = (0..n_docs).map(|_| c.string()).collect::<Result<Vec<_>>>()?;
    let doc_vectors = (0..n_docs * dim).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let word_output = (0..n_words * dim).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let n_loss = c.len()?;
    let loss_history = (0..n_loss).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    if c.pos != data.len() {
        return Err(Error::InvalidModel("trailing bytes".into()));
    }
    Ok(EmbeddingModel {
        params,
        vocab: WordVocab::from_parts(words, counts),
        doc_ids,
        doc_vectors,
        word_output,
        loss_history,
    })
}
