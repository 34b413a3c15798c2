//! Warmup plus cosine learning rate, and one AdamW update by hand.

use trgpt::train::{adamw_update, AdamWConfig, LrSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schedule = LrSchedule::new(6e-4, 200, 2000)?;
    for step in [0, 50, 100, 199, 200, 500, 1100, 1500, 1999, 2000, 2500] {
        let lr = schedule.lr_at(step);
        let bar = "#".repeat((lr / schedule.lr_max * 50.0).round() as usize);
        println!("{step:>5} {lr:.3e} {bar}");
    }

    // theta=1, g=1, lr=0.1 on the first step: the bias-corrected ratio is
    // ~1, so theta' = 1 - 0.1 * (1 + 0.1 * 1) = 0.89.
    let (mut theta, mut m, mut v) = ([1.0f64], [0.0], [0.0]);
    adamw_update(&mut theta, &[1.0], &mut m, &mut v, 1, 0.1, &AdamWConfig::default(), true);
    println!("\nAdamW: theta' = {:.10}, m = {}, v = {}", theta[0], m[0], v[0]);
    Ok(())
}
