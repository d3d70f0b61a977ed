//! Maps poverty rates to levels and tabulates reported against true levels
//! for the subjective synthetic preset.
//!
//!     cargo run --release --example poverty_truth_matrix

use labelaudit::groundtruth::{generate_synthetic, map_rate_to_level, truth_matrix, LevelScale, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scale = LevelScale::poverty();
    for rate in [0.0, 10.0, 24.9, 25.0, 30.0, 50.0, 60.0, 75.0, 90.0, 100.0] {
        println!("{rate:>5.1}% -> {}", map_rate_to_level(rate, &scale)?);
    }

    let spec = SynthSpec::subjective(10_000, 500, 2);
    let synth = generate_synthetic(&spec)?;
    let reported = synth.corpus.labels(&spec.class_name)?;
    let tm = truth_matrix(&reported, &synth.true_labels, &spec.labels)?;
    println!("\nreported (rows) vs true (columns), % of row:");
    println!("{:<10}{}", "", tm.labels.iter().map(|l| format!("{l:>10}")).collect::<String>());
    for (label, row) in tm.labels.iter().zip(&tm.percent) {
        println!("{label:<10}{}", row.iter().map(|v| format!("{v:>10.1}")).collect::<String>());
    }
    Ok(())
}
