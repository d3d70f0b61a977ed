//! Loads a multi-field CSV of reviews, filters by length, and makes a
//! stratified train/test split.
//!
//!     cargo run --example load_and_split

use labelaudit::corpus::{
    filter_by_char_length, filter_by_length_zscore, label_distribution, load_corpus, stratified_split, Format,
    LoadOptions,
};

const REVIEWS: &str = "\
id,title,body,stars
r1,Great,Loved every minute of the stay,5
r2,Awful,Cold room and rude staff,1
r3,Fine,Nothing special but clean,3
r4,Superb,Would come back any time,5
r5,Meh,Breakfast was stale,2
r6,Lovely,Friendly people and a quiet street,5
r7,Bad,Noisy all night,1
r8,Okay,Average in every way,3
r9,Nice,Good value for money,4
r10,Poor,Dirty towels and broken lamp,1
r11,Decent,Would stay again if cheap,4
r12,Terrible,Never again,1
r13,Tired,Dated decor and thin walls,2
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("reviews.csv");
    std::fs::write(&path, REVIEWS)?;

    // title and body are joined with a newline, in that order
    let opts = LoadOptions::new(Format::Csv, &["title", "body"], &["stars"]).with_id_field("id");
    let corpus = load_corpus(&path, &opts)?;
    println!("loaded {} reviews; first text: {:?}", corpus.len(), corpus.documents()[0].text);

    let kept = filter_by_char_length(&corpus, 15, 60);
    let kept = filter_by_length_zscore(&kept, 2.0)?;
    println!("kept {} after length filters", kept.len());

    for share in label_distribution(&kept, "stars")? {
        println!("  {} stars: {} ({:.1}%)", share.label, share.count, share.percent);
    }

    let split = stratified_split(&kept, "stars", 0.7, 7)?;
    println!("train {} / test {}", split.train.len(), split.test.len());
    Ok(())
}
