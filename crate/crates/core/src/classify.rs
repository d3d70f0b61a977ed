//! One-vs-rest linear SVMs and the F1 family of metrics.
//!
//! Each binary problem minimizes the L2-regularized hinge loss
//! `0.5 * |w|^2 + C * sum_i max(0, 1 - y_i (w . x_i + b))` by dual coordinate
//! descent: coordinates are visited in a seeded random order per epoch and
//! each step solves its one-dimensional box-constrained subproblem exactly.
//! The bias is handled as an extra feature fixed at 1 (so it is regularized
//! like any other weight).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::group_indices;
use crate::error::{Error, Result};
use crate::vectorize::SparseDocMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Hinge-loss penalty.
    pub c: f64,
    pub max_epochs: usize,
    /// Stop once the largest projected-gradient magnitude in a pass falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 5.0,
            max_epochs: 1000,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl SvmParams {
    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }
}

/// Solver trace for one binary problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual objective `0.5 |w|^2 - sum(alpha)` before the first epoch and after each epoch.
    pub dual_objective: Vec<f64>,
    pub primal_objective: f64,
    pub epochs: usize,
    pub converged: bool,
}

impl BinaryFit {
    /// Number of epochs whose dual objective rose above the previous one
    /// (beyond floating-point noise).
    pub fn objective_increases(&self) -> usize {
        self.dual_objective
            .windows(2)
            .filter(|w| w[1] > w[0] + 1e-12 * w[0].abs().max(1.0))
            .count()
    }
}

/// Fits one binary problem. `signs` holds +1 / -1 per row.
pub fn train_binary(x: &SparseDocMatrix, signs: &[f64], params: &SvmParams) -> Result<BinaryFit> {
    if x.n_rows() != signs.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: signs.len(),
        });
    }
    if !(params.c > 0.0) || !params.c.is_finite() {
        return Err(Error::invalid(format!("C must be positive, got {}", params.c)));
    }
    let n = x.n_rows();
    let c = params.c;
    let mut w = vec![0.0; x.n_cols()];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    let q_diag: Vec<f64> = x
        .rows()
        .iter()
        .map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>() + 1.0)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = vec![0.0];
    let mut epochs = 0;
    let mut converged = false;

    while epochs < params.max_epochs {
        order.shuffle(&mut rng);
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let row = x.row(i);
            let yi = signs[i];
            let g = yi * (dot(&w, row) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * yi;
                if step != 0.0 {
                    for &(j, v) in row {
                        w[j] += step * v;
                    }
                    b += step;
                }
            }
        }
        epochs += 1;
        history.push(dual_objective(&w, b, &alpha));
        if max_violation < params.tolerance {
            converged = true;
            break;
        }
    }

    let hinge: f64 = x
        .rows()
        .iter()
        .zip(signs)
        .map(|(r, &y)| (1.0 - y * (dot(&w, r) + b)).max(0.0))
        .sum();
    let primal = 0.5 * (norm_sq(&w) + b * b) + c * hinge;
    Ok(BinaryFit {
        weights: w,
        bias: b,
        dual_objective: history,
        primal_objective: primal,
        epochs,
        converged,
    })
}

fn dual_objective(w: &[f64], b: f64, alpha: &[f64]) -> f64 {
    0.5 * (norm_sq(w) + b * b) - alpha.iter().sum::<f64>()
}

fn dot(w: &[f64], row: &[(usize, f64)]) -> f64 {
    row.iter().map(|&(j, v)| w[j] * v).sum()
}

fn norm_sq(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFitSummary {
    pub label: String,
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub epochs: usize,
    pub converged: bool,
    pub objective_increases: usize,
}

/// One weight vector and bias per label, scored by argmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub labels: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub n_features: usize,
    pub params: SvmParams,
    pub fits: Vec<LabelFitSummary>,
}

/// Trains one binary classifier per distinct label (sorted label order).
pub fn train_svm(x: &SparseDocMatrix, y: &[String], params: &SvmParams) -> Result<LinearModel> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    let labels: Vec<String> = group_indices(y).into_keys().collect();
    if labels.len() < 2 {
        return Err(Error::SingleLabel(labels.len()));
    }
    let fits = labels
        .par_iter()
        .enumerate()
        .map(|(k, label)| {
            let signs: Vec<f64> = y.iter().map(|l| if l == label { 1.0 } else { -1.0 }).collect();
            let p = SvmParams {
                seed: params.seed.wrapping_add(k as u64),
                ..*params
            };
            train_binary(x, &signs, &p)
        })
        .collect::<Result<Vec<_>>>()?;

    let summaries = labels
        .iter()
        .zip(&fits)
        .map(|(label, f)| LabelFitSummary {
            label: label.clone(),
            dual_objective: *f.dual_objective.last().unwrap(),
            primal_objective: f.primal_objective,
            epochs: f.epochs,
            converged: f.converged,
            objective_increases: f.objective_increases(),
        })
        .collect();
    let (weights, biases) = fits.into_iter().map(|f| (f.weights, f.bias)).unzip();
    Ok(LinearModel {
        labels,
        weights,
        biases,
        n_features: x.n_cols(),
        params: *params,
        fits: summaries,
    })
}

impl LinearModel {
    pub fn scores(&self, row: &[(usize, f64)]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, row) + b)
            .collect()
    }

    /// Argmax label per row; ties go to the earlier label.
    pub fn predict(&self, x: &SparseDocMatrix) -> Result<Vec<String>> {
        if x.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.n_cols(),
            });
        }
        Ok(x.rows()
            .iter()
            .map(|r| {
                let scores = self.scores(r);
                let mut best = 0;
                for (k, &s) in scores.iter().enumerate().skip(1) {
                    if s > scores[best] {
                        best = k;
                    }
                }
                self.labels[best].clone()
            })
            .collect())
    }
}

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Each nonzero row divided by its sum; all-zero rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }
}

pub fn confusion_matrix(
    y_true: &[String],
    y_pred: &[String],
    labels: &[String],
) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    let position = |l: &String| {
        labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::UnknownLabel(l.clone()))
    };
    let m = labels.len();
    let mut counts = vec![vec![0; m]; m];
    for (t, p) in y_true.iter().zip(y_pred) {
        counts[position(t)?][position(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub per_label: Vec<LabelMetrics>,
    pub macro_f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_metrics(cm: &ConfusionMatrix) -> ClassMetrics {
    let m = cm.labels.len();
    let per_label = (0..m)
        .map(|i| {
            let tp = cm.counts[i][i];
            let row: usize = cm.counts[i].iter().sum();
            let col: usize = (0..m).map(|r| cm.counts[r][i]).sum();
            let precision = ratio(tp, col);
            let recall = ratio(tp, row);
            LabelMetrics {
                label: cm.labels[i].clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: row,
            }
        })
        .collect();
    ClassMetrics::from_labels(per_label)
}

impl ClassMetrics {
    /// Macro-F1 is the unweighted mean over every label, including labels
    /// never predicted.
    pub fn from_labels(per_label: Vec<LabelMetrics>) -> Self {
        let macro_f1 = if per_label.is_empty() {
            0.0
        } else {
            per_label.iter().map(|l| l.f1).sum::<f64>() / per_label.len() as f64
        };
        Self { per_label, macro_f1 }
    }

    /// Metrics from published `(label, precision, recall)` triples.
    pub fn from_precision_recall<'a>(
        rows: impl IntoIterator<Item = (&'a str, f64, f64)>,
    ) -> Self {
        Self::from_labels(
            rows.into_iter()
                .map(|(label, precision, recall)| LabelMetrics {
                    label: label.to_string(),
                    precision,
                    recall,
                    f1: f1_score(precision, recall),
                    support: 0,
                })
                .collect(),
        )
    }
}

/// Fold id per row: within each label, a seeded shuffle dealt round-robin.
pub fn stratified_folds(y: &[String], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    for (label, mut idx) in group_indices(y) {
        if idx.len() < k {
            return Err(Error::LabelTooRare {
                label,
                count: idx.len(),
                needed: k,
            });
        }
        idx.shuffle(&mut rng);
        for (pos, &i) in idx.iter().enumerate() {
            fold[i] = pos % k;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_c: f64,
    /// `(C, mean macro-F1 over folds)` in candidate order.
    pub scores: Vec<(f64, f64)>,
}

/// Stratified k-fold search over `candidate_cs`; ties prefer the smaller C.
pub fn cross_validate(
    x: &SparseDocMatrix,
    y: &[String],
    k: usize,
    candidate_cs: &[f64],
    params: &SvmParams,
) -> Result<CvResult> {
    if candidate_cs.is_empty() {
        return Err(Error::invalid("candidate_cs is empty"));
    }
    let folds = stratified_folds(y, k, params.seed)?;
    let labels: Vec<String> = group_indices(y).into_keys().collect();
    let mut scores = Vec::with_capacity(candidate_cs.len());
    for &c in candidate_cs {
        let per_fold = (0..k)
            .into_par_iter()
            .map(|f| {
                let (val, train): (Vec<usize>, Vec<usize>) =
                    (0..y.len()).partition(|&i| folds[i] == f);
                let y_train: Vec<String> = train.iter().map(|&i| y[i].clone()).collect();
                let y_val: Vec<String> = val.iter().map(|&i| y[i].clone()).collect();
                let model = train_svm(&x.select_rows(&train), &y_train, &params.with_c(c))?;
                let pred = model.predict(&x.select_rows(&val))?;
                Ok(f1_metrics(&confusion_matrix(&y_val, &pred, &labels)?).macro_f1)
            })
            .collect::<Result<Vec<f64>>>()?;
        scores.push((c, per_fold.iter().sum::<f64>() / k as f64));
    }
    let mut best = scores[0];
    for &(c, s) in &scores[1..] {
        if s > best.1 || (s == best.1 && c < best.0) {
            best = (c, s);
        }
    }
    Ok(CvResult {
        best_c: best.0,
        scores,
    })
}
