//! Builds a unigram+bigram vocabulary and prints tf-idf rows.
//!
//!     cargo run --example tfidf_vocabulary

use labelaudit::vectorize::{tfidf_texts, vocabulary_from_texts};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let texts = [
        "students need new books for reading time",
        "our students need chromebooks for coding",
        "new books spark a love of reading",
        "coding club needs robots",
    ];
    let vocab = vocabulary_from_texts(&texts, 2, 2)?;
    println!("{} terms with doc_freq >= 2:", vocab.len());
    for (i, term) in vocab.terms().enumerate() {
        println!("  {term:<12} df {} idf {:.3}", vocab.doc_freq(i), vocab.idf(i));
    }
    let x = tfidf_texts(&texts, &vocab, true);
    for (d, row) in x.rows().iter().enumerate() {
        let cells: Vec<String> =
            row.iter().map(|&(j, v)| format!("{}={v:.3}", vocab.term(j).unwrap())).collect();
        println!("doc {d}: {}", cells.join(" "));
    }
    Ok(())
}
