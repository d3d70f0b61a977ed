//! Runs a small audit from a TOML config and writes every artifact plus the
//! MANIFEST.
//!
//!     cargo run --release --example emit_report [outdir]

use labelaudit::groundtruth::SynthSpec;
use labelaudit::{emit, run_audit, AuditConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("labelaudit-report"));
    let mut cfg = AuditConfig::synthetic(SynthSpec::subjective(1000, 400, 8));
    cfg.embed.dim = 50;
    cfg.project.sample_cap = 500;
    // configs round-trip through TOML
    let cfg = AuditConfig::from_toml(&cfg.to_toml()?)?;

    let report = run_audit(&cfg)?;
    let manifest = emit(&report, &out)?;
    for c in &report.classes {
        println!("{}: {}", c.class, c.verdict.kind);
        for e in &c.verdict.evidence {
            println!("  {e}");
        }
    }
    print!("{}", manifest.render());
    println!("written to {}", out.display());
    Ok(())
}
