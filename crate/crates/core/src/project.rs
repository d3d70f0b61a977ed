//! t-SNE projection to two dimensions.
//!
//! Input affinities are Gaussian conditionals whose bandwidths are
//! calibrated per point to a target perplexity, then symmetrized. The
//! low-dimensional similarities use a Student-t kernel and the layout
//! minimizes `KL(P || Q)` by gradient descent with momentum, per-parameter
//! gains and early exaggeration. Up to [`TsneParams::exact_threshold`]
//! points the gradient is exact; above it, `P` is restricted to the
//! `3 * perplexity` nearest neighbours and repulsion is approximated with
//! a Barnes-Hut quadtree.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to distance scales so duplicate points never divide by zero.
pub const DISTANCE_FLOOR: f64 = 1e-12;
const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 50;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Conditional distribution of one point given squared distances to its
/// candidate neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalRow {
    pub probs: Vec<f64>,
    pub beta: f64,
    /// Shannon entropy in bits actually achieved.
    pub entropy_bits: f64,
}

fn row_with_beta(d: &[f64], d_min: f64, beta: f64) -> (Vec<f64>, f64) {
    let mut p: Vec<f64> = d.iter().map(|&x| (-beta * (x - d_min)).exp()).collect();
    let z: f64 = p.iter().sum();
    let mut weighted = 0.0;
    for (pi, &x) in p.iter_mut().zip(d) {
        *pi /= z;
        weighted += *pi * (x - d_min);
    }
    let h_nats = z.ln() + beta * weighted;
    (p, h_nats / std::f64::consts::LN_2)
}

/// Finds the precision `beta` whose conditional has entropy
/// `log2(perplexity)`: expand a bracket geometrically, then bisect in
/// log-space for at most 50 steps or until within 1e-5 bits.
pub fn calibrate_row(sq_dists: &[f64], perplexity: f64) -> ConditionalRow {
    let target = perplexity.log2();
    let d_min = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = sq_dists.iter().sum::<f64>() / sq_dists.len() as f64;
    let entropy = |beta: f64| row_with_beta(sq_dists, d_min, beta).1;
    let mut beta = 1.0 / scale.max(DISTANCE_FLOOR);
    let mut h = entropy(beta);

    let (mut lo, mut hi);
    if h > target {
        lo = beta;
        hi = beta;
        for _ in 0..2000 {
            hi *= 2.0;
            if entropy(hi) <= target || !hi.is_finite() {
                break;
            }
            lo = hi;
        }
    } else {
        lo = beta;
        hi = beta;
        for _ in 0..2000 {
            lo /= 2.0;
            if entropy(lo) >= target || lo == 0.0 {
                break;
            }
            hi = lo;
        }
    }
    if (h - target).abs() >= ENTROPY_TOL && lo > 0.0 && hi.is_finite() {
        for _ in 0..MAX_BISECTIONS {
            beta = (lo * hi).sqrt();
            h = entropy(beta);
            if (h - target).abs() < ENTROPY_TOL {
                break;
            }
            if h > target {
                lo = beta;
            } else {
                hi = beta;
            }
        }
    }
    let (probs, entropy_bits) = row_with_beta(sq_dists, d_min, beta);
    ConditionalRow { probs, beta, entropy_bits }
}

/// Dense symmetric joint affinities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    pub n: usize,
    /// Row-major `n * n`, zero diagonal, sums to 1.
    pub p: Vec<f64>,
    pub perplexity: f64,
    pub sigmas: Vec<f64>,
    pub row_entropy_bits: Vec<f64>,
}

impl AffinityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }
}

fn check_points(x: &[Vec<f64>], perplexity: f64) -> Result<usize> {
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid(format!("t-SNE needs at least 3 points, got {n}")));
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE input"));
    }
    if !(perplexity >= 2.0 && perplexity < n as f64) {
        return Err(Error::invalid(format!(
            "perplexity must lie in [2, {n}), got {perplexity}"
        )));
    }
    Ok(n)
}

fn sigma_of(beta: f64) -> f64 {
    (1.0 / (2.0 * beta)).sqrt()
}

/// Calibrated conditionals `p_{j|i}` symmetrized to `(p_{j|i} + p_{i|j}) / 2n`.
pub fn conditional_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<AffinityMatrix> {
    let n = check_points(x, perplexity)?;
    let rows: Vec<ConditionalRow> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| sq_dist(&x[i], &x[j])).collect();
            calibrate_row(&d, perplexity)
        })
        .collect();
    let mut cond = vec![0.0; n * n];
    for (i, r) in rows.iter().enumerate() {
        let mut it = r.probs.iter();
        for j in (0..n).filter(|&j| j != i) {
            cond[i * n + j] = *it.next().unwrap();
        }
    }
    let denom = 2.0 * n as f64;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
        }
    }
    Ok(AffinityMatrix {
        n,
        p,
        perplexity,
        sigmas: rows.iter().map(|r| sigma_of(r.beta)).collect(),
        row_entropy_bits: rows.iter().map(|r| r.entropy_bits).collect(),
    })
}

/// Unnormalized Student-t kernel values and their total over `i != j`.
fn student_t(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { 1.0 / (1.0 + sq_dist(&y[i], &y[j])) })
                .collect()
        })
        .collect();
    let z = rows.iter().map(|r| r.iter().sum::<f64>()).sum();
    (rows.concat(), z)
}

/// `KL(P || Q)` with Student-t `Q`.
pub fn kl_divergence(p: &AffinityMatrix, y: &[[f64; 2]]) -> f64 {
    let (num, z) = student_t(y);
    p.p.iter()
        .zip(&num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &nij)| pij * (pij / (nij / z)).ln())
        .sum()
}

/// Exact gradient `4 * sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)`.
pub fn kl_gradient(p: &AffinityMatrix, y: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    if p.n != y.len() {
        return Err(Error::DimensionMismatch { expected: p.n, got: y.len() });
    }
    Ok(exact_gradient(p, y, 1.0))
}

fn exact_gradient(p: &AffinityMatrix, y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = y.len();
    let z: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| 1.0 / (1.0 + sq_dist(&y[i], &y[j])))
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let num = 1.0 / (1.0 + sq_dist(&y[i], &y[j]));
                let coef = (exaggeration * p.p[i * n + j] - num / z) * num;
                g[0] += coef * (y[i][0] - y[j][0]);
                g[1] += coef * (y[i][1] - y[j][1]);
            }
            [4.0 * g[0], 4.0 * g[1]]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneParams {
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    /// Largest point count that uses the exact O(n^2) gradient.
    pub exact_threshold: usize,
    /// Barnes-Hut opening angle.
    pub theta: f64,
    /// Record KL every this many iterations once exaggeration has ended.
    pub kl_every: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            learning_rate: 200.0,
            iterations: 1000,
            seed: 0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            exact_threshold: 5000,
            theta: 0.5,
            kl_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub coordinates: Vec<[f64; 2]>,
    /// KL divergence without exaggeration at the end of optimization.
    pub final_kl: f64,
    /// `(iteration, KL)` samples taken after exaggeration ends.
    pub kl_trace: Vec<(usize, f64)>,
    pub params: TsneParams,
    pub barnes_hut: bool,
}

impl Projection2D {
    /// Fraction of consecutive KL samples that did not increase.
    pub fn kl_nonincreasing_fraction(&self) -> f64 {
        let pairs = self.kl_trace.windows(2).count();
        if pairs == 0 {
            return 1.0;
        }
        let ok = self.kl_trace.windows(2).filter(|w| w[1].1 <= w[0].1).count();
        ok as f64 / pairs as f64
    }
}

/// Seeded Gaussian layout with standard deviation 1e-4, point `i` taking
/// the `i`-th draw pair.
pub fn initial_layout(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-4).unwrap();
    (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect()
}

pub fn tsne(x: &[Vec<f64>], params: &TsneParams) -> Result<Projection2D> {
    let init = initial_layout(x.len(), params.seed);
    tsne_from(x, params, init)
}

/// Runs t-SNE from a caller-supplied initial layout.
pub fn tsne_from(x: &[Vec<f64>], params: &TsneParams, init: Vec<[f64; 2]>) -> Result<Projection2D> {
    let n = check_points(x, params.perplexity)?;
    if init.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init.len() });
    }
    if n <= params.exact_threshold {
        let p = conditional_affinities(x, params.perplexity)?;
        Ok(optimize(
            params,
            init,
            |y, ex| exact_gradient(&p, y, ex),
            |y| kl_divergence(&p, y),
            false,
        ))
    } else {
        let p = sparse_affinities(x, params.perplexity)?;
        let theta = params.theta;
        Ok(optimize(
            params,
            init,
            |y, ex| barnes_hut_gradient(&p, y, ex, theta),
            |y| p.kl_divergence(y),
            true,
        ))
    }
}

fn optimize(
    params: &TsneParams,
    mut y: Vec<[f64; 2]>,
    gradient: impl Fn(&[[f64; 2]], f64) -> Vec<[f64; 2]>,
    kl: impl Fn(&[[f64; 2]]) -> f64,
    barnes_hut: bool,
) -> Projection2D {
    let n = y.len();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut trace = Vec::new();
    for iter in 0..params.iterations {
        let exaggeration = if iter < params.exaggeration_iters { params.early_exaggeration } else { 1.0 };
        let momentum = if iter < params.momentum_switch_iter {
            params.initial_momentum
        } else {
            params.final_momentum
        };
        let grad = gradient(&y, exaggeration);
        for i in 0..n {
            for d in 0..2 {
                gains[i][d] = if (grad[i][d] > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                update[i][d] = momentum * update[i][d] - params.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = [
            y.iter().map(|p| p[0]).sum::<f64>() / n as f64,
            y.iter().map(|p| p[1]).sum::<f64>() / n as f64,
        ];
        for p in &mut y {
            p[0] -= mean[0];
            p[1] -= mean[1];
        }
        let done = iter + 1;
        if params.kl_every > 0 && done > params.exaggeration_iters && done % params.kl_every == 0 {
            trace.push((done, kl(&y)));
        }
    }
    let final_kl = kl(&y).max(0.0);
    Projection2D {
        coordinates: y,
        final_kl,
        kl_trace: trace,
        params: *params,
        barnes_hut,
    }
}

/// Sparse symmetric affinities over nearest neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinity {
    /// Per row, `(column, p_ij)` sorted by column.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseAffinity {
    pub fn kl_divergence(&self, y: &[[f64; 2]]) -> f64 {
        let n = y.len();
        let z: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| 1.0 / (1.0 + sq_dist(&y[i], &y[j])))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, p)| (i, j, p)))
            .filter(|&(_, _, p)| p > 0.0)
            .map(|(i, j, p)| {
                let q = 1.0 / (1.0 + sq_dist(&y[i], &y[j])) / z;
                p * (p / q).ln()
            })
            .sum()
    }
}

pub fn sparse_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<SparseAffinity> {
    let n = check_points(x, perplexity)?;
    let k = ((3.0 * perplexity) as usize).clamp(1, n - 1);
    let cond: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (sq_dist(&x[i], &x[j]), j)).collect();
            if k < d.len() {
                d.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.truncate(k);
            }
            d.sort_by_key(|&(_, j)| j);
            let dists: Vec<f64> = d.iter().map(|e| e.0).collect();
            let row = calibrate_row(&dists, perplexity);
            d.iter().map(|e| e.1).zip(row.probs).collect()
        })
        .collect();
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    for (i, row) in cond.iter().enumerate() {
        for &(j, p) in row {
            triples.push((i, j, p));
            triples.push((j, i, p));
        }
    }
    triples.sort_by_key(|t| (t.0, t.1));
    let denom = 2.0 * n as f64;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, j, p) in triples {
        match rows[i].last_mut() {
            Some(last) if last.0 == j => last.1 += p / denom,
            _ => rows[i].push((j, p / denom)),
        }
    }
    Ok(SparseAffinity { rows })
}

#[derive(Debug)]
struct QuadNode {
    center: [f64; 2],
    half: f64,
    mass_center: [f64; 2],
    count: usize,
    children: Option<[usize; 4]>,
    points: Vec<usize>,
}

struct QuadTree {
    nodes: Vec<QuadNode>,
}

const MAX_DEPTH: usize = 48;

impl QuadTree {
    fn build(y: &[[f64; 2]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in y {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let half = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / 2.0).max(DISTANCE_FLOOR) * (1.0 + 1e-9);
        let mut tree = QuadTree { nodes: vec![QuadTree::leaf(center, half)] };
        for i in 0..y.len() {
            tree.insert(0, i, y, 0);
        }
        tree
    }

    fn leaf(center: [f64; 2], half: f64) -> QuadNode {
        QuadNode { center, half, mass_center: [0.0; 2], count: 0, children: None, points: Vec::new() }
    }

    fn insert(&mut self, node: usize, i: usize, y: &[[f64; 2]], depth: usize) {
        let p = y[i];
        {
            let n = &mut self.nodes[node];
            let c = n.count as f64;
            n.mass_center = [
                (n.mass_center[0] * c + p[0]) / (c + 1.0),
                (n.mass_center[1] * c + p[1]) / (c + 1.0),
            ];
            n.count += 1;
        }
        if let Some(children) = self.nodes[node].children {
            let q = self.quadrant(node, p);
            self.insert(children[q], i, y, depth + 1);
            return;
        }
        let n = &mut self.nodes[node];
        n.points.push(i);
        if n.points.len() == 1 || depth >= MAX_DEPTH {
            return;
        }
        let existing = std::mem::take(&mut n.points);
        let (center, half) = (n.center, n.half / 2.0);
        let base = self.nodes.len();
        for q in 0..4 {
            let cx = center[0] + if q & 1 == 1 { half } else { -half };
            let cy = center[1] + if q & 2 == 2 { half } else { -half };
            self.nodes.push(QuadTree::leaf([cx, cy], half));
        }
        self.nodes[node].children = Some([base, base + 1, base + 2, base + 3]);
        for j in existing {
            let q = self.quadrant(node, y[j]);
            let child = base + q;
            // re-insert without double counting the parent's mass
            self.insert(child, j, y, depth + 1);
        }
    }

    fn quadrant(&self, node: usize, p: [f64; 2]) -> usize {
        let c = self.nodes[node].center;
        (p[0] > c[0]) as usize | (((p[1] > c[1]) as usize) << 1)
    }

    /// Accumulates `sum q_unnorm` and `sum q_unnorm^2 (y_i - y_j)` over j != i.
    fn repulsion(&self, node: usize, i: usize, y: &[[f64; 2]], theta: f64, z: &mut f64, f: &mut [f64; 2]) {
        let n = &self.nodes[node];
        if n.count == 0 {
            return;
        }
        let yi = y[i];
        match n.children {
            None => {
                for &j in &n.points {
                    if j == i {
                        continue;
                    }
                    let q = 1.0 / (1.0 + sq_dist(&yi, &y[j]));
                    *z += q;
                    f[0] += q * q * (yi[0] - y[j][0]);
                    f[1] += q * q * (yi[1] - y[j][1]);
                }
            }
            Some(children) => {
                let d2 = sq_dist(&yi, &n.mass_center);
                let width = 2.0 * n.half;
                if d2 > 0.0 && width * width < theta * theta * d2 {
                    let q = 1.0 / (1.0 + d2);
                    let m = n.count as f64;
                    *z += m * q;
                    f[0] += m * q * q * (yi[0] - n.mass_center[0]);
                    f[1] += m * q * q * (yi[1] - n.mass_center[1]);
                } else {
                    for c in children {
                        self.repulsion(c, i, y, theta, z, f);
                    }
                }
            }
        }
    }
}

fn barnes_hut_gradient(p: &SparseAffinity, y: &[[f64; 2]], exaggeration: f64, theta: f64) -> Vec<[f64; 2]> {
    let tree = QuadTree::build(y);
    let rep: Vec<(f64, [f64; 2])> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut z = 0.0;
            let mut f = [0.0; 2];
            tree.repulsion(0, i, y, theta, &mut z, &mut f);
            (z, f)
        })
        .collect();
    let z: f64 = rep.iter().map(|r| r.0).sum();
    (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut attr = [0.0; 2];
            for &(j, pij) in &p.rows[i] {
                let q = 1.0 / (1.0 + sq_dist(&y[i], &y[j]));
                attr[0] += pij * q * (y[i][0] - y[j][0]);
                attr[1] += pij * q * (y[i][1] - y[j][1]);
            }
            [
                4.0 * (exaggeration * attr[0] - rep[i].1[0] / z),
                4.0 * (exaggeration * attr[1] - rep[i].1[1] / z),
            ]
        })
        .collect()
}

/// Mean silhouette coefficient of `labels` under Euclidean distance in
/// the plane. Points alone in their label score 0.
pub fn silhouette(points: &[[f64; 2]], labels: &[String]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: labels.len() });
    }
    let names: Vec<&String> = {
        let mut v: Vec<&String> = labels.iter().collect();
        v.sort();
        v.dedup();
        v
    };
    if names.len() < 2 {
        return Ok(0.0);
    }
    let idx: Vec<usize> = labels.iter().map(|l| names.binary_search(&l).unwrap()).collect();
    let sizes: Vec<usize> = (0..names.len()).map(|c| idx.iter().filter(|&&k| k == c).count()).collect();
    let scores: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let own = idx[i];
            if sizes[own] < 2 {
                return 0.0;
            }
            let mut sums = vec![0.0; names.len()];
            for j in 0..points.len() {
                if j != i {
                    sums[idx[j]] += sq_dist(&points[i], &points[j]).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..names.len())
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 { 0.0 } else { (b - a) / m }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
    }

    #[test]
    fn equidistant_points_share_mass() {
        let h = 3f64.sqrt() / 2.0;
        let x = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]];
        let p = conditional_affinities(&x, 2.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 1.0 / 6.0 };
                assert!((p.get(i, j) - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rows_hit_target_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..25 {
            let n = rng.random_range(10..40);
            let x = random_points(&mut rng, n, 5);
            let perp = rng.random_range(2.0..(n as f64 - 1.0).min(15.0));
            let p = conditional_affinities(&x, perp).unwrap();
            for h in &p.row_entropy_bits {
                assert!((h - perp.log2()).abs() < 1e-5);
            }
            let total: f64 = p.p.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            for i in 0..n {
                assert_eq!(p.get(i, i), 0.0);
                for j in 0..n {
                    assert!((p.get(i, j) - p.get(j, i)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(conditional_affinities(&[vec![0.0], vec![1.0]], 2.0).is_err());
        assert!(conditional_affinities(&[vec![0.0], vec![1.0], vec![2.0]], 5.0).is_err());
        assert!(conditional_affinities(&[vec![0.0], vec![f64::NAN], vec![2.0]], 2.0).is_err());
    }

    #[test]
    fn duplicate_points_stay_finite() {
        let x = vec![vec![1.0, 1.0]; 6];
        let p = conditional_affinities(&x, 3.0).unwrap();
        assert!(p.p.iter().all(|v| v.is_finite()));
        assert!((p.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_vanishes_when_q_equals_p() {
        // Equilateral triangle in both spaces: P and Q are uniform off the diagonal.
        let h = 3f64.sqrt() / 2.0;
        let x = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]];
        let p = conditional_affinities(&x, 2.0).unwrap();
        let y = [[0.0, 0.0], [1.0, 0.0], [0.5, h]];
        for g in kl_gradient(&p, &y).unwrap() {
            assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
        }
        assert!(kl_divergence(&p, &y).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_points(&mut rng, 12, 4);
        let p = conditional_affinities(&x, 4.0).unwrap();
        let y: Vec<[f64; 2]> = (0..12).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let shifted: Vec<[f64; 2]> = y.iter().map(|p| [p[0] + 3.5, p[1] - 1.25]).collect();
        let a = kl_gradient(&p, &y).unwrap();
        let b = kl_gradient(&p, &shifted).unwrap();
        for (ga, gb) in a.iter().zip(&b) {
            assert!((ga[0] - gb[0]).abs() < 1e-12 && (ga[1] - gb[1]).abs() < 1e-12);
        }
    }

    pub(crate) fn fd_relative_error(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(4..=20);
        let x = random_points(&mut rng, n, 3);
        let perp = rng.random_range(2.0..(n as f64 - 1.0));
        let p = conditional_affinities(&x, perp).unwrap();
        let mut y: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let g = kl_gradient(&p, &y).unwrap();
        let h = 1e-5;
        let (mut num2, mut diff2) = (0.0, 0.0);
        for i in 0..n {
            for d in 0..2 {
                let v = y[i][d];
                y[i][d] = v + h;
                let up = kl_divergence(&p, &y);
                y[i][d] = v - h;
                let dn = kl_divergence(&p, &y);
                y[i][d] = v;
                let fd = (up - dn) / (2.0 * h);
                num2 += g[i][d] * g[i][d];
                diff2 += (g[i][d] - fd).powi(2);
            }
        }
        (diff2 / num2).sqrt()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..50 {
            let err = fd_relative_error(seed);
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    fn two_blobs(n_per: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for (label, offset) in [("a", -5.0), ("b", 5.0)] {
            for _ in 0..n_per {
                x.push((0..dim).map(|_| offset + normal.sample(&mut rng)).collect());
                labels.push(label.to_string());
            }
        }
        (x, labels)
    }

    #[test]
    fn separates_two_blobs_deterministically() {
        let (x, labels) = two_blobs(50, 300, 2);
        let params = TsneParams { perplexity: 20.0, iterations: 500, seed: 3, ..TsneParams::default() };
        let proj = tsne(&x, &params).unwrap();
        let s = silhouette(&proj.coordinates, &labels).unwrap();
        assert!(s > 0.5, "silhouette {s} kl {:?} first {:?}", proj.kl_trace, &proj.coordinates[..3]);
        assert!(proj.final_kl >= 0.0);
        assert!(proj.kl_nonincreasing_fraction() >= 0.9, "{:?}", proj.kl_trace);
        assert_eq!(proj, tsne(&x, &params).unwrap());
    }

    #[test]
    fn permuting_points_permutes_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_points(&mut rng, 15, 3);
        let params = TsneParams { perplexity: 4.0, iterations: 60, exaggeration_iters: 20, momentum_switch_iter: 20, ..TsneParams::default() };
        let init = initial_layout(15, 1);
        let perm: Vec<usize> = (0..15).rev().collect();
        let a = tsne_from(&x, &params, init.clone()).unwrap();
        let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
        let ip: Vec<[f64; 2]> = perm.iter().map(|&i| init[i]).collect();
        let b = tsne_from(&xp, &params, ip).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            for d in 0..2 {
                assert!((b.coordinates[k][d] - a.coordinates[i][d]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn barnes_hut_tracks_exact_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_points(&mut rng, 60, 3);
        let y: Vec<[f64; 2]> = (0..60).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        // With k >= n - 1 neighbours the sparse P equals the dense one.
        let dense = conditional_affinities(&x, 25.0).unwrap();
        let sparse = sparse_affinities(&x, 25.0).unwrap();
        for (i, row) in sparse.rows.iter().enumerate() {
            for &(j, p) in row {
                assert!((p - dense.get(i, j)).abs() < 1e-12);
            }
        }
        let exact = kl_gradient(&dense, &y).unwrap();
        let exact_theta0 = barnes_hut_gradient(&sparse, &y, 1.0, 0.0);
        let approx = barnes_hut_gradient(&sparse, &y, 1.0, 0.5);
        let norm: f64 = exact.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum::<f64>().sqrt();
        let err = |other: &[[f64; 2]]| {
            exact.iter().zip(other).map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sum::<f64>().sqrt() / norm
        };
        assert!(err(&exact_theta0) < 1e-10);
        assert!(err(&approx) < 0.1, "{}", err(&approx));
        assert!((sparse.kl_divergence(&y) - kl_divergence(&dense, &y)).abs() < 1e-10);
    }

    #[test]
    fn barnes_hut_path_separates_blobs() {
        let (x, labels) = two_blobs(40, 10, 5);
        let params = TsneParams { perplexity: 10.0, iterations: 400, exact_threshold: 10, seed: 2, ..TsneParams::default() };
        let proj = tsne(&x, &params).unwrap();
        assert!(proj.barnes_hut);
        assert!(silhouette(&proj.coordinates, &labels).unwrap() > 0.5);
    }

    #[test]
    fn silhouette_reference_values() {
        let pts = [[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let labels: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        // a = 1, b = mean(10, sqrt(101)) for every point
        let b = (10.0 + 101f64.sqrt()) / 2.0;
        let expected = (b - 1.0) / b;
        assert!((silhouette(&pts, &labels).unwrap() - expected).abs() < 1e-12);
        let same: Vec<String> = vec!["a".into(); 4];
        assert_eq!(silhouette(&pts, &same).unwrap(), 0.0);
    }
}
