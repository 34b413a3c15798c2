//! The masked finetune loss equals the mean cross-entropy over response
//! tokens, recomputed here from prefix-only forwards.

use trgpt::bpe::{train_bpe_with, TrainOptions};
use trgpt::gpt::{GptConfig, GptParams};
use trgpt::instruct::{pack_finetune, render_prompt, InstructionRecord, PackOptions};

fn log_softmax_at(row: &[f64], target: usize) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row[target] - lse
}

#[test]
fn masked_loss_is_response_only_cross_entropy() {
    let records = vec![
        InstructionRecord::new("Üç ana renk nedir?", "", "Kırmızı, mavi ve sarı."),
        InstructionRecord::new("Topla.", "2 ve 3", "5"),
    ];
    let text: Vec<String> = records.iter().map(render_prompt).collect();
    let tokenizer = train_bpe_with(text.iter(), 300, TrainOptions { reserve_separator: true }).unwrap();
    let opts = PackOptions {
        epochs: 1,
        ..PackOptions::new(128)
    };
    let pack = pack_finetune(&records, &tokenizer, &opts).unwrap();
    assert_eq!(pack.examples.len(), 2);

    let cfg = GptConfig {
        n_layer: 2,
        n_head: 2,
        d_model: 16,
        vocab_size: tokenizer.vocab_size(),
        context_len: 128,
        dropout: 0.0,
    };
    let params = GptParams::<f64>::init(&cfg, 21).unwrap();
    for ex in &pack.examples {
        let (batch, mask) = ex.to_batch().unwrap();
        let got = params.forward_masked(&batch, &mask).unwrap().loss;

        let mut total = 0.0;
        let mut counted = 0;
        for (t, &m) in mask.iter().enumerate() {
            if m == 0 {
                continue;
            }
            let prefix = &batch.inputs[..=t];
            let logits = params.logits(prefix, 1, t + 1).unwrap();
            let v = cfg.vocab_size;
            total -= log_softmax_at(&logits[t * v..(t + 1) * v], batch.targets[t] as usize);
            counted += 1;
        }
        assert!(counted > 0);
        let expected = total / counted as f64;
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");

        // Prompt tokens carry no loss: changing the prompt targets leaves it alone.
        let mut altered = batch.clone();
        for (t, &m) in mask.iter().enumerate() {
            if m == 0 {
                altered.targets[t] = (altered.targets[t] + 1) % cfg.vocab_size as u32;
            }
        }
        assert_eq!(params.forward_masked(&altered, &mask).unwrap().loss, got);
    }
}
