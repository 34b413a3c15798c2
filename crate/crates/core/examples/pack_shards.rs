//! Split a record file by document, write binary token shards and draw a
//! batch from them.
//!
//! ```text
//! cargo run --example pack_shards
//! ```

mod common;

use trgpt::bpe::{train_bpe_with, TrainOptions};
use trgpt::corpus::{write_records, ArticleRecord};
use trgpt::data::{pack_corpus, BatchSampler, SplitSpec, TokenShard, HEADER_LEN};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = common::work_dir("shards");
    let records: Vec<ArticleRecord> = common::articles(300, 3)
        .into_iter()
        .enumerate()
        .map(|(i, body)| ArticleRecord::new(i as u64 + 1, format!("Madde {i}"), body))
        .collect();
    let corpus = dir.join("corpus.jsonl");
    write_records(&corpus, &records)?;

    let tokenizer = train_bpe_with(records.iter().map(|r| &r.body), 600, TrainOptions { reserve_separator: true })?;
    let split = SplitSpec::new(0.05, 1337)?;
    let report = pack_corpus(&corpus, &tokenizer, &split, &dir)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let bytes = std::fs::read(dir.join("train.bin"))?;
    println!("\nheader: {:02x?}", &bytes[..HEADER_LEN]);

    let train = TokenShard::read(&dir.join("train.bin"))?;
    println!("{} documents, separator {:?}", train.documents().len(), train.separator);

    let mut sampler = BatchSampler::new(7);
    let batch = sampler.sample(&train, 2, 12)?;
    for b in 0..batch.batch_size {
        let row = &batch.inputs[b * 12..(b + 1) * 12];
        println!("input  {row:?}\n  text {:?}", tokenizer.decode(row)?);
        println!("target {:?}", &batch.targets[b * 12..(b + 1) * 12]);
    }
    Ok(())
}
