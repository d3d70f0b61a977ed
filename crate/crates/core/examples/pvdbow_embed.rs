//! Trains PV-DBOW document vectors, round-trips the binary model file and
//! infers a vector for unseen text.
//!
//!     cargo run --release --example pvdbow_embed

use labelaudit::embed::{cosine, infer_vector, load_model, save_model, train_pvdbow, EmbedParams};
use labelaudit::groundtruth::{generate_synthetic, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec::objective(800, 300, 9);
    let synth = generate_synthetic(&spec)?;
    let params = EmbedParams { dim: 50, min_count: 2, epochs: 10, seed: 9, ..EmbedParams::default() };
    let model = train_pvdbow(&synth.corpus, &params)?;
    println!("{} documents x {} dimensions", model.n_docs(), model.dim());

    // documents sharing a label should sit closer than documents that do not
    let labels = synth.corpus.labels(&spec.class_name)?;
    let (mut same, mut diff) = ((0.0, 0), (0.0, 0));
    for i in 0..100 {
        for j in (i + 1)..100 {
            let c = cosine(model.doc_vector(i), model.doc_vector(j));
            let acc = if labels[i] == labels[j] { &mut same } else { &mut diff };
            acc.0 += c;
            acc.1 += 1;
        }
    }
    println!("mean cosine same label {:.3}, different label {:.3}", same.0 / same.1 as f64, diff.0 / diff.1 as f64);

    let path = std::env::temp_dir().join(format!("labelaudit-{}.bin", std::process::id()));
    save_model(&model, &path)?;
    let reloaded = load_model(&path)?;
    std::fs::remove_file(&path)?;
    println!("reloaded model identical: {}", reloaded == model);

    let text = &synth.corpus.documents()[0].text;
    let inferred = infer_vector(&model, text, 50, 1)?;
    println!("inferred vs trained cosine for doc 0: {:.3}", cosine(&inferred.vector, model.doc_vector(0)));
    Ok(())
}
