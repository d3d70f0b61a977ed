//! Audits the shipped synthetic presets end to end and prints the three
//! signals plus the verdict for each.
//!
//!     cargo run --release --example synthetic_audit -- [n_docs] [vocab_noise]

use std::time::Instant;

use labelaudit::groundtruth::SynthSpec;
use labelaudit::{run_audit, AuditConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n_docs = args.next().map(|a| a.parse()).transpose()?.unwrap_or(5000);
    let vocab_noise = args.next().map(|a| a.parse()).transpose()?.unwrap_or(2000);

    for (name, spec) in [
        ("objective", SynthSpec::objective(n_docs, vocab_noise, 1)),
        ("subjective", SynthSpec::subjective(n_docs, vocab_noise, 1)),
        ("rating-like", SynthSpec::rating_like(n_docs, vocab_noise, 1)),
    ] {
        let started = Instant::now();
        let mut cfg = AuditConfig::synthetic(spec);
        cfg.project.sample_cap = 2000;
        cfg.embed.dim = 100;
        let report = run_audit(&cfg)?;
        for c in &report.classes {
            println!("{name} ({:.1}s)", started.elapsed().as_secs_f64());
            println!("  macro-F1   {:.4}", c.classification.metrics.macro_f1);
            for l in &c.nfis.per_label {
                println!("  NFIS {:<10} {}", l.label, l.nfis.map_or("n/a".into(), |v| format!("{v:.2}")));
            }
            println!("  imbalance  {}", c.nfis.imbalance.map_or("n/a".into(), |v| format!("{v:.3}")));
            println!("  silhouette {:.4}", c.projection.silhouette);
            println!("  verdict    {:?}", c.verdict.kind);
        }
    }
    Ok(())
}
