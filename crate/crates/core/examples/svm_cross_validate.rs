//! Cross-validates C for the one-vs-rest linear SVM on a synthetic corpus,
//! then reports held-out metrics and the confusion matrix.
//!
//!     cargo run --release --example svm_cross_validate

use labelaudit::classify::{confusion_matrix, cross_validate, f1_metrics, train_svm, SvmParams};
use labelaudit::corpus::stratified_split;
use labelaudit::groundtruth::{generate_synthetic, SynthSpec};
use labelaudit::vectorize::{build_vocabulary, tfidf_transform};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec::rating_like(1500, 500, 3);
    let synth = generate_synthetic(&spec)?;
    let split = stratified_split(&synth.corpus, "rating", 0.7, 3)?;

    let vocab = build_vocabulary(&split.train, 2, 2)?;
    let x_train = tfidf_transform(&split.train, &vocab, true);
    let x_test = tfidf_transform(&split.test, &vocab, true);
    let y_train = split.train.labels("rating")?;
    let y_test = split.test.labels("rating")?;

    let params = SvmParams { seed: 3, ..SvmParams::default() };
    let cv = cross_validate(&x_train, &y_train, 5, &[0.01, 0.1, 1.0, 5.0], &params)?;
    for (c, score) in &cv.scores {
        println!("C = {c:<5} mean macro-F1 {score:.4}");
    }
    let model = train_svm(&x_train, &y_train, &params.with_c(cv.best_c))?;
    let predicted = model.predict(&x_test)?;
    let cm = confusion_matrix(&y_test, &predicted, &model.labels)?;
    let metrics = f1_metrics(&cm);
    println!("best C {}; held-out macro-F1 {:.4}", cv.best_c, metrics.macro_f1);
    for l in &metrics.per_label {
        println!("  {} precision {:.3} recall {:.3} f1 {:.3}", l.label, l.precision, l.recall, l.f1);
    }
    println!("confusion (rows true, columns predicted):");
    for (label, row) in cm.labels.iter().zip(&cm.counts) {
        println!("  {label}: {row:?}");
    }
    Ok(())
}
