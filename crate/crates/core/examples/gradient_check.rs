//! Compare backpropagated gradients with central finite differences for
//! every parameter tensor of a small model.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use trgpt::data::Batch;
use trgpt::gpt::gradcheck::gradient_check;
use trgpt::gpt::{GptConfig, GptParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = GptConfig {
        n_layer: 2,
        n_head: 2,
        d_model: 8,
        vocab_size: 16,
        context_len: 4,
        dropout: 0.0,
    };
    let params = GptParams::<f64>::init(&cfg, 3)?;
    let batch = Batch {
        batch_size: 2,
        context_len: 4,
        inputs: vec![1, 7, 3, 12, 9, 9, 0, 15],
        targets: vec![7, 3, 12, 5, 9, 0, 15, 2],
    };
    let checks = gradient_check(&params, &batch, 1e-5)?;
    println!("{:<32} {:>12} {:>12} {:>10}", "tensor", "|analytic|", "|numeric|", "rel err");
    for c in &checks {
        println!("{:<32} {:>12.4e} {:>12.4e} {:>10.2e}", c.name, c.analytic_norm, c.numeric_norm, c.rel_error);
    }
    let worst = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    println!("\nworst relative error {worst:.2e}");
    Ok(())
}
