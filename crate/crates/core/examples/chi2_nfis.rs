//! Chi-square indicative terms and NFIS for an objective and a subjective
//! synthetic corpus.
//!
//!     cargo run --release --example chi2_nfis

use labelaudit::groundtruth::{generate_synthetic, SynthSpec};
use labelaudit::indicative::{chi2_table, nfis_distribution};
use labelaudit::vectorize::{binarize, build_vocabulary, tfidf_transform};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, spec) in [
        ("objective", SynthSpec::objective(3000, 1000, 4)),
        ("subjective", SynthSpec::subjective(3000, 1000, 4)),
    ] {
        let synth = generate_synthetic(&spec)?;
        let y = synth.corpus.labels(&spec.class_name)?;
        let vocab = build_vocabulary(&synth.corpus, 2, 2)?;
        let presence = binarize(&tfidf_transform(&synth.corpus, &vocab, false));
        let table = chi2_table(&presence, &y)?;
        let dist = nfis_distribution(&table, 100)?;
        println!("{name}: NFIS imbalance {:.3}", dist.imbalance.unwrap_or(f64::NAN));
        for l in &dist.per_label {
            let top = table.top_term_names(&vocab, &l.label, 3)?;
            let terms: Vec<String> = top.iter().map(|(t, s)| format!("{t} ({s:.0})")).collect();
            println!("  {:<9} NFIS {:>6.2}  top: {}", l.label, l.nfis.unwrap_or(f64::NAN), terms.join(", "));
        }
    }
    Ok(())
}
