//! Turn a wiki XML dump into a JSONL record file.
//!
//! ```text
//! cargo run --example ingest_dump [dump.xml[.bz2|.gz]] [out.jsonl]
//! ```
//! Without arguments a small generated dump is used.

mod common;

use std::path::PathBuf;

use trgpt::corpus::{ingest, load_records, IngestOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = common::work_dir("ingest");
    let dump = match args.next() {
        Some(p) => PathBuf::from(p),
        None => {
            let p = dir.join("dump.xml");
            std::fs::write(&p, common::dump_xml(&common::articles(20, 1)))?;
            p
        }
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| dir.join("corpus.jsonl"));

    let report = ingest(&dump, &out, IngestOptions { min_chars: 20 })?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let records = load_records(&out)?;
    if let Some(first) = records.first() {
        let preview: String = first.body.chars().take(120).collect();
        println!("\n#{} {} ({} chars)\n{preview}…", first.id, first.title, first.char_len);
    }
    println!("\nwrote {}", out.display());
    Ok(())
}
