//! Train byte-level BPE tokenizers and compare their compression.
//!
//! ```text
//! cargo run --release --example train_tokenizer [corpus.jsonl]
//! ```

mod common;

use trgpt::bpe::{corpus_stats, train_bpe_with, TokenizerModel, TrainOptions};
use trgpt::corpus::load_records;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let docs: Vec<String> = match std::env::args().nth(1) {
        Some(path) => load_records(path.as_ref())?.into_iter().map(|r| r.body).collect(),
        None => common::articles(200, 2),
    };
    let options = TrainOptions { reserve_separator: true };

    let mut largest = None;
    for vocab in [300, 500, 1000, 2000] {
        let model = train_bpe_with(docs.iter(), vocab, options)?;
        let stats = corpus_stats(&model, docs.iter());
        println!(
            "vocab {vocab:>5}: {:>4} merges, {:>7} tokens, {:.2} bytes/token",
            model.merges().len(),
            stats.total_tokens,
            stats.bytes_per_token
        );
        largest = Some(model);
    }
    let model: TokenizerModel = largest.unwrap();

    println!("\nfirst merges:");
    for (i, &(a, b)) in model.merges().iter().take(8).enumerate() {
        let show = |id| model.token_bytes(id).unwrap().escape_ascii().to_string();
        println!("  {:>3}: \"{}\" + \"{}\"", 256 + i, show(a), show(b));
    }

    let text = "İstanbul boğazı üzerinde köprüler vardır.";
    let ids = model.encode(text);
    assert_eq!(model.decode(&ids)?, text);
    println!("\n{text:?} -> {ids:?}");

    let path = common::work_dir("tokenizer").join("tok.bpe");
    model.save(&path)?;
    assert_eq!(TokenizerModel::load(&path)?.merges(), model.merges());
    println!("saved {}", path.display());
    Ok(())
}
