//! Train a one-layer GPT on a repeated phrase, sample from it, then stop
//! and resume from the checkpoint.
//!
//! ```text
//! cargo run --release --example train_tiny_gpt
//! ```

mod common;

use trgpt::bpe::{train_bpe_with, TrainOptions};
use trgpt::data::TokenShard;
use trgpt::gpt::{Checkpoint, GptConfig, Sampling};
use trgpt::train::{read_log, LrSchedule, TrainConfig, Trainer, CHECKPOINT_FILE, LOG_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = common::work_dir("tiny-gpt");
    let text = "kedi halının üstünde uyur, köpek bahçede koşar. ".repeat(300);
    let tokenizer = train_bpe_with([text.as_str()], 280, TrainOptions { reserve_separator: true })?;
    let tokens = tokenizer.encode(&text);
    let vocab = tokenizer.vocab_size();
    let shard = TokenShard::new(vocab as u32, tokenizer.separator(), tokens.clone())?;

    let mut cfg = TrainConfig::desk(vocab);
    cfg.model = GptConfig {
        n_layer: 1,
        n_head: 2,
        d_model: 32,
        vocab_size: vocab,
        context_len: 16,
        dropout: 0.0,
    };
    cfg.schedule = LrSchedule::new(1e-2, 20, 200)?;
    cfg.eval_interval = 50;
    cfg.eval_iters = 4;
    println!("{} parameters", cfg.model.param_count());

    let mut trainer = Trainer::new(cfg, &shard, None)?;
    trainer.run(100, &dir)?;
    println!("stopped at step {}", trainer.step());

    // Pick up where the checkpoint left off, as a restarted process would.
    let ckpt = Checkpoint::load(&dir.join(CHECKPOINT_FILE))?;
    let mut trainer = Trainer::resume(cfg, &shard, None, &ckpt)?;
    let summary = trainer.run(200, &dir)?;
    for row in read_log(&dir.join(LOG_FILE))? {
        println!("step {:>4}  lr {:.2e}  loss {:.4}", row.step, row.lr, row.train_loss);
    }
    println!("final loss {:.4}", summary.final_train_loss);

    let prompt = &tokens[..8];
    let greedy = trainer.params().generate(prompt, 24, &Sampling::greedy())?;
    println!("\nprompt  {:?}", tokenizer.decode(prompt)?);
    println!("greedy  {:?}", tokenizer.decode(&greedy)?);
    let sampled = trainer.params().generate(
        prompt,
        24,
        &Sampling {
            temperature: 1.0,
            top_k: Some(5),
            seed: 42,
        },
    )?;
    println!("top-5   {:?}", tokenizer.decode(&sampled)?);
    Ok(())
}
