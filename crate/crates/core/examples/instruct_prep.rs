//! Instruction data: translate records with a lookup-table adapter, render
//! the prompt template and pack masked finetuning examples.
//!
//! ```text
//! cargo run --example instruct_prep
//! ```

mod common;

use std::collections::HashMap;

use trgpt::bpe::{train_bpe_with, TrainOptions};
use trgpt::gpt::{GptConfig, GptParams};
use trgpt::instruct::{
    load_dataset, pack_finetune, render_prompt, translate_file, write_dataset, FileTranslator, InstructionRecord,
    PackOptions, TranslateOptions,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = common::work_dir("instruct");
    let english = [
        InstructionRecord::new("What are the three primary colors?", "", "Red, blue and yellow."),
        InstructionRecord::new("Translate the word.", "cat", "kedi"),
        InstructionRecord::new("Name a planet.", "", "Mars."),
    ];
    let source = dir.join("en.jsonl");
    write_dataset(&source, &english)?;

    let table: HashMap<String, String> = [
        ("What are the three primary colors?", "Üç ana renk nedir?"),
        ("Red, blue and yellow.", "Kırmızı, mavi ve sarı."),
        ("Translate the word.", "Kelimeyi çevir."),
        ("cat", "cat"),
        ("kedi", "kedi"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    // The planet record has no table entry, so it lands in the failures file.
    let translator = FileTranslator::new(table);
    let target = dir.join("tr.jsonl");
    let report = translate_file(&source, &target, &translator, "en", "tr", &TranslateOptions::default())?;
    println!("{}", serde_json::to_string(&report)?);
    print!("{}", std::fs::read_to_string(&target)?);
    print!("failures: {}", std::fs::read_to_string(&report.failures_file)?);

    let records = load_dataset(&target)?.records;
    println!("\n{}", render_prompt(&records[1]));

    let rendered: Vec<String> = records.iter().map(render_prompt).collect();
    let tokenizer = train_bpe_with(rendered.iter().cycle().take(20), 320, TrainOptions { reserve_separator: true })?;
    let pack = pack_finetune(&records, &tokenizer, &PackOptions::new(128))?;
    println!("\n{} examples from {} records", pack.examples.len(), pack.accepted);

    let ex = &pack.examples[0];
    let masked = ex.loss_mask.iter().filter(|&&m| m == 0).count();
    println!("{} tokens, {masked} prompt tokens carry no loss", ex.token_ids.len());

    let cfg = GptConfig {
        n_layer: 1,
        n_head: 2,
        d_model: 16,
        vocab_size: tokenizer.vocab_size(),
        context_len: 128,
        dropout: 0.0,
    };
    let params = GptParams::<f32>::init(&cfg, 1)?;
    let (batch, mask) = ex.to_batch().expect("at least two tokens");
    println!(
        "untrained response-only loss {:.4} (ln V = {:.4})",
        params.forward_masked(&batch, &mask)?.loss,
        (cfg.vocab_size as f64).ln()
    );
    Ok(())
}
