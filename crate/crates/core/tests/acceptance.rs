//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use approx::relative_eq;
use labelaudit::classify::{train_binary, train_svm, ClassMetrics, SvmParams};
use labelaudit::embed::{pair_loss, sg_neg_gradient};
use labelaudit::groundtruth::{generate_synthetic, map_rate_to_level, truth_matrix, LevelScale, SynthSpec};
use labelaudit::indicative::{chi2, nfis_of_scores, ContingencyCounts};
use labelaudit::project::{
    calibrate_row, conditional_affinities, kl_divergence, kl_gradient, silhouette, tsne, TsneParams,
};
use labelaudit::vectorize::SparseDocMatrix;
use labelaudit::{emit, run_audit, AuditConfig, SubjectivityReport, VerdictKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

const SYNTH_SEED: u64 = 1;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

// Published (label, recall, precision, printed F1) rows.
const POVERTY: [(&str, f64, f64, f64); 4] = [
    ("Highest Poverty", 0.89, 0.75, 0.81),
    ("High Poverty", 0.43, 0.56, 0.49),
    ("Moderate Poverty", 0.42, 0.60, 0.50),
    ("Low Poverty", 0.23, 0.88, 0.36),
];
const GRADE: [(&str, f64, f64, f64); 4] = [
    ("Grades PreK-2", 0.88, 0.89, 0.89),
    ("Grades 3-5", 0.83, 0.79, 0.81),
    ("Grades 6-8", 0.73, 0.82, 0.77),
    ("Grades 9-12", 0.89, 0.87, 0.88),
];

fn f1_arithmetic() -> Outcome {
    let mut misses = Vec::new();
    let mut worst: f64 = 0.0;
    for (table, macro_printed) in [(&POVERTY, 0.54), (&GRADE, 0.84)] {
        let metrics = ClassMetrics::from_precision_recall(table.iter().map(|&(l, r, p, _)| (l, p, r)));
        for (m, &(label, r, p, printed)) in metrics.per_label.iter().zip(table.iter()) {
            // independent harmonic mean
            let oracle = 2.0 * p * r / (p + r);
            if !relative_eq!(m.f1, oracle, epsilon = 1e-12) {
                return Err(format!("{label}: f1 {} disagrees with harmonic mean {oracle}", m.f1));
            }
            let dev = (m.f1 - printed).abs();
            worst = worst.max(dev);
            if dev > 0.005 {
                misses.push(format!("{label} {:.4} vs {printed}", m.f1));
            }
        }
        let dev = (metrics.macro_f1 - macro_printed).abs();
        worst = worst.max(dev);
        if dev > 0.005 {
            misses.push(format!("macro {:.4} vs {macro_printed}", metrics.macro_f1));
        }
    }
    if misses.is_empty() {
        Ok(format!("10 values within 0.005 (worst {worst:.4})"))
    } else {
        Err(format!("outside 0.005: {}", misses.join("; ")))
    }
}

fn chi2_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 1000 {
        let o = [0; 4].map(|_| rng.random_range(0..=500u64));
        let (rows, cols) = ([o[0] + o[1], o[2] + o[3]], [o[0] + o[2], o[1] + o[3]]);
        if rows.contains(&0) || cols.contains(&0) {
            continue;
        }
        let n = (rows[0] + rows[1]) as f64;
        let mut pearson = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = rows[i] as f64 * cols[j] as f64 / n;
                pearson += (o[2 * i + j] as f64 - e).powi(2) / e;
            }
        }
        let got = chi2(&ContingencyCounts::new(o[0], o[1], o[2], o[3])).map_err(|e| e.to_string())?;
        let err = if pearson == 0.0 { got.abs() } else { (got - pearson).abs() / pearson };
        worst = worst.max(err);
        done += 1;
    }
    check(worst < 1e-10, format!("1000 tables, worst relative error {worst:.2e}"))
}

fn nfis_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checks = 0usize;
    for v in 0..200 {
        let len = rng.random_range(1..=150);
        let scores: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..100.0)).collect();
        let alpha = rng.random_range(1e-3..1e3);
        let scaled: Vec<f64> = scores.iter().map(|s| s * alpha).collect();
        let nf = |s: &[f64], k| nfis_of_scores(s, k).map_err(|e| format!("vector {v}, K={k}: {e:?}"));
        if nf(&scores, 1)? != 1.0 {
            return Err(format!("vector {v}: nfis(1) != 1"));
        }
        let mut prev = 0.0;
        for k in 1..=len {
            let x = nf(&scores, k)?;
            if x > k as f64 + 1e-12 {
                return Err(format!("vector {v}: nfis({k}) = {x} > K"));
            }
            if x < prev {
                return Err(format!("vector {v}: nfis({k}) = {x} < nfis({}) = {prev}", k - 1));
            }
            let y = nf(&scaled, k)?;
            if !relative_eq!(x, y, max_relative = 1e-12) {
                return Err(format!("vector {v}: scaling by {alpha} moved nfis({k}) {x} -> {y}"));
            }
            prev = x;
            checks += 1;
        }
    }
    Ok(format!("200 vectors, {checks} (vector, K) pairs"))
}

fn preset_config(spec: SynthSpec) -> AuditConfig {
    let mut cfg = AuditConfig::synthetic(spec);
    cfg.project.sample_cap = 2000;
    cfg.embed.dim = 100;
    cfg
}

fn subjective_config() -> AuditConfig {
    preset_config(SynthSpec::subjective(5000, 2000, SYNTH_SEED))
}

static SUBJECTIVE_RUN: OnceLock<Result<SubjectivityReport, String>> = OnceLock::new();

fn subjective_run() -> Result<&'static SubjectivityReport, String> {
    SUBJECTIVE_RUN
        .get_or_init(|| run_audit(&subjective_config()).map_err(|e| e.to_string()))
        .as_ref()
        .map_err(Clone::clone)
}

fn synthetic_detection() -> Outcome {
    let started = Instant::now();
    let objective = run_audit(&preset_config(SynthSpec::objective(5000, 2000, SYNTH_SEED))).map_err(|e| e.to_string())?;
    let t_obj = started.elapsed().as_secs_f64();
    let started = Instant::now();
    let subjective = subjective_run()?;
    let t_subj = started.elapsed().as_secs_f64();
    let (o, s) = (&objective.classes[0], &subjective.classes[0]);
    let (of1, sf1) = (o.classification.metrics.macro_f1, s.classification.metrics.macro_f1);
    let (oimb, simb) = (o.nfis.imbalance.unwrap_or(f64::NAN), s.nfis.imbalance.unwrap_or(f64::NAN));
    let detail = format!(
        "objective F1 {of1:.4} imbalance {oimb:.3} {:?} ({t_obj:.0}s); subjective F1 {sf1:.4} imbalance {simb:.3} silhouette {:.3} {:?} ({t_subj:.0}s)",
        o.verdict.kind, s.projection.silhouette, s.verdict.kind
    );
    check(
        of1 >= 0.90
            && oimb <= 1.5
            && o.verdict.kind == VerdictKind::ObjectiveLike
            && sf1 <= 0.55
            && simb >= 3.0
            && s.verdict.kind == VerdictKind::SubjectiveSuspect,
        detail,
    )
}

fn truth_matrix_fidelity() -> Outcome {
    let spec = SynthSpec::subjective(10_000, 2000, SYNTH_SEED);
    let synth = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let reported = synth.corpus.labels(&spec.class_name).map_err(|e| e.to_string())?;
    // rows keyed by true label so each row estimates one row of the corruption matrix
    let tm = truth_matrix(&synth.true_labels, &reported, &spec.labels).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (t, label) in spec.labels.iter().enumerate() {
        let row = tm.labels.iter().position(|l| l == label).ok_or(format!("missing row {label}"))?;
        for (r, col) in spec.labels.iter().enumerate() {
            let c = tm.labels.iter().position(|l| l == col).ok_or(format!("missing column {col}"))?;
            worst = worst.max((tm.percent[row][c] - 100.0 * spec.corruption[t][r]).abs());
        }
    }
    check(worst <= 3.0, format!("n=10000, worst cell deviation {worst:.2} pp"))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-6;
    let mut worst_pv: f64 = 0.0;
    for _ in 0..60 {
        let dim = rng.random_range(2..40);
        let k = rng.random_range(1..8);
        let doc = random_vec(&mut rng, dim, 1.0);
        let word = random_vec(&mut rng, dim, 1.0);
        let negs: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut rng, dim, 1.0)).collect();
        let neg_refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
        let g = sg_neg_gradient(&doc, &word, &neg_refs);
        let mut analytic = g.doc.clone();
        analytic.extend(&g.word);
        g.negatives.iter().for_each(|n| analytic.extend(n));
        // flatten every input, perturb one coordinate at a time
        let mut flat = doc.clone();
        flat.extend(&word);
        negs.iter().for_each(|n| flat.extend(n));
        let loss = |f: &[f64]| {
            let negs: Vec<&[f64]> = (0..k).map(|i| &f[(2 + i) * dim..(3 + i) * dim]).collect();
            pair_loss(&f[..dim], &f[dim..2 * dim], &negs)
        };
        let numeric: Vec<f64> = (0..flat.len())
            .map(|i| {
                let mut up = flat.clone();
                let mut down = flat.clone();
                up[i] += h;
                down[i] -= h;
                (loss(&up) - loss(&down)) / (2.0 * h)
            })
            .collect();
        worst_pv = worst_pv.max(rel_err(&analytic, &numeric));
    }

    let h = 1e-5;
    let mut worst_kl: f64 = 0.0;
    for _ in 0..60 {
        let n = rng.random_range(6..=20);
        let dim = rng.random_range(2..10);
        let x: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, dim, 1.0)).collect();
        let perplexity = rng.random_range(2.0..(n as f64 - 1.0));
        let p = conditional_affinities(&x, perplexity).map_err(|e| e.to_string())?;
        let y: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let analytic: Vec<f64> = kl_gradient(&p, &y).map_err(|e| e.to_string())?.into_iter().flatten().collect();
        let mut numeric = Vec::with_capacity(2 * n);
        for i in 0..n {
            for d in 0..2 {
                let mut up = y.clone();
                let mut down = y.clone();
                up[i][d] += h;
                down[i][d] -= h;
                numeric.push((kl_divergence(&p, &up) - kl_divergence(&p, &down)) / (2.0 * h));
            }
        }
        worst_kl = worst_kl.max(rel_err(&analytic, &numeric));
    }
    check(
        worst_pv < 1e-4 && worst_kl < 1e-5,
        format!("60 + 60 instances, worst relative error PV-DBOW {worst_pv:.2e}, t-SNE KL {worst_kl:.2e}"),
    )
}

fn perplexity_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for _ in 0..100 {
        let n = rng.random_range(20..80);
        let dim = rng.random_range(2..30);
        let spread = 10f64.powf(rng.random_range(-2.0..2.0));
        let x: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, dim, spread)).collect();
        let perplexity = rng.random_range(2.0..(n as f64 - 1.0).min(50.0));
        let target = perplexity.log2();
        for i in 0..n {
            let d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum())
                .collect();
            let row = calibrate_row(&d, perplexity);
            let h: f64 = -row.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>();
            worst = worst.max((h - target).abs());
            rows += 1;
        }
    }

    let normal = Normal::new(0.0, 1.0).unwrap();
    let dim = 50;
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for (blob, centre) in [("a", -4.0), ("b", 4.0)] {
        for _ in 0..60 {
            x.push((0..dim).map(|_| centre + normal.sample(&mut rng)).collect::<Vec<f64>>());
            labels.push(blob.to_string());
        }
    }
    let params = TsneParams { perplexity: 20.0, seed: 7, ..TsneParams::default() };
    let proj = tsne(&x, &params).map_err(|e| e.to_string())?;
    let sil = silhouette(&proj.coordinates, &labels).map_err(|e| e.to_string())?;
    check(
        worst < 1e-5 && sil > 0.5,
        format!("{rows} rows over 100 sets, worst entropy error {worst:.2e} bits; two-blob silhouette {sil:.3}"),
    )
}

fn poverty_mapping() -> Outcome {
    let scale = LevelScale::poverty();
    let cases = [
        (10.0, "Low Poverty"),
        (30.0, "Moderate Poverty"),
        (60.0, "High Poverty"),
        (90.0, "Highest Poverty"),
        // bins include their lower bound
        (25.0, "Moderate Poverty"),
        (50.0, "High Poverty"),
        (75.0, "Highest Poverty"),
        (0.0, "Low Poverty"),
        (100.0, "Highest Poverty"),
    ];
    for (rate, want) in cases {
        let got = map_rate_to_level(rate, &scale).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("{rate} -> {got}, expected {want}"));
        }
    }
    for bad in [-0.1, 100.1, f64::NAN] {
        if map_rate_to_level(bad, &scale).is_ok() {
            return Err(format!("{bad} accepted"));
        }
    }
    Ok("representative rates, boundaries 25/50/75 (lower-inclusive), 0/100 and out-of-range".into())
}

fn svm_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let normal = Normal::new(0.0, 0.5).unwrap();
    let mut dense = Vec::new();
    let mut signs = Vec::new();
    let mut labels = Vec::new();
    for (sign, centre) in [(1.0, 2.0), (-1.0, -2.0)] {
        for _ in 0..100 {
            dense.push(vec![centre + normal.sample(&mut rng), centre + normal.sample(&mut rng)]);
            signs.push(sign);
            labels.push(if sign > 0.0 { "pos" } else { "neg" }.to_string());
        }
    }
    let x = SparseDocMatrix::from_dense(&dense).map_err(|e| e.to_string())?;
    let params = SvmParams { seed: 4, ..SvmParams::default() };
    let fit = train_binary(&x, &signs, &params).map_err(|e| e.to_string())?;
    let correct = dense
        .iter()
        .zip(&signs)
        .filter(|(row, s)| {
            let score: f64 = row.iter().zip(&fit.weights).map(|(a, w)| a * w).sum::<f64>() + fit.bias;
            score * **s > 0.0
        })
        .count();
    let again = train_binary(&x, &signs, &params).map_err(|e| e.to_string())?;
    let model = train_svm(&x, &labels, &params).map_err(|e| e.to_string())?;
    let predicted = model.predict(&x).map_err(|e| e.to_string())?;
    let multi_correct = predicted.iter().zip(&labels).filter(|(a, b)| a == b).count();
    let increases = fit.objective_increases() + model.fits.iter().map(|f| f.objective_increases).sum::<usize>();
    let identical = fit.weights == again.weights && fit.bias == again.bias;
    check(
        correct == dense.len() && multi_correct == dense.len() && increases == 0 && identical,
        format!(
            "accuracy {correct}/{n} binary, {multi_correct}/{n} one-vs-rest; dual increases {increases}; identical weights {identical}",
            n = dense.len()
        ),
    )
}

fn determinism() -> Outcome {
    let first = subjective_run()?;
    let second = run_audit(&subjective_config()).map_err(|e| e.to_string())?;
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    emit(first, dirs[0].path()).map_err(|e| e.to_string())?;
    emit(&second, dirs[1].path()).map_err(|e| e.to_string())?;
    let a = std::fs::read(dirs[0].path().join("report.json")).map_err(|e| e.to_string())?;
    let b = std::fs::read(dirs[1].path().join("report.json")).map_err(|e| e.to_string())?;
    check(a == b, format!("report.json {} vs {} bytes, identical {}", a.len(), b.len(), a == b))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("f1_arithmetic", f1_arithmetic),
        ("chi2_oracle", chi2_oracle),
        ("nfis_properties", nfis_properties),
        ("synthetic_detection", synthetic_detection),
        ("truth_matrix_fidelity", truth_matrix_fidelity),
        ("gradient_checks", gradient_checks),
        ("perplexity_calibration", perplexity_calibration),
        ("poverty_mapping", poverty_mapping),
        ("svm_sanity", svm_sanity),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
