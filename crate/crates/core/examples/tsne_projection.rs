//! Projects three Gaussian blobs to 2-D with t-SNE, reports the label
//! silhouette and writes a scatter plot.
//!
//!     cargo run --release --example tsne_projection [out.svg]

use labelaudit::plot::scatter;
use labelaudit::project::{silhouette, tsne, TsneParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1.0)?;
    let (mut x, mut labels) = (Vec::new(), Vec::new());
    for (k, name) in ["a", "b", "c"].iter().enumerate() {
        for _ in 0..100 {
            x.push((0..20).map(|d| if d == k { 6.0 } else { 0.0 } + noise.sample(&mut rng)).collect::<Vec<f64>>());
            labels.push(name.to_string());
        }
    }
    let proj = tsne(&x, &TsneParams { perplexity: 30.0, seed: 5, ..TsneParams::default() })?;
    for (iter, kl) in &proj.kl_trace {
        println!("iter {iter:>4} KL {kl:.4}");
    }
    println!("final KL {:.4}, silhouette {:.3}", proj.final_kl, silhouette(&proj.coordinates, &labels)?);
    if let Some(out) = std::env::args().nth(1) {
        std::fs::write(&out, scatter("three blobs", &proj.coordinates, &labels))?;
        println!("wrote {out}");
    }
    Ok(())
}
