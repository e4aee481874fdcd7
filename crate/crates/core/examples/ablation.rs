//! The strategy ablation on a short budget: every strategy from the same seed.
//!
//! `cargo run --release --example ablation -- [frames] [env]`

use steve::cli::ABLATION_STRATEGIES;
use steve::trainer::{run_training, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let frames: u64 = args.next().map_or(Ok(6_000), |a| a.parse())?;
    let env = args.next().unwrap_or_else(|| "pointmass".into());
    println!("{:<14} {:>10} {:>12}", "strategy", "score", "model usage");
    for strategy in ABLATION_STRATEGIES {
        let mut config = TrainConfig::preset(&format!("desk_{env}_{strategy}"))?;
        config.total_frames = frames;
        let run = run_training(&config, None)?;
        let score = run.rows.last().and_then(|r| r.score).unwrap_or(f64::NAN);
        let usage = if run.usage_per_update.is_empty() {
            0.0
        } else {
            run.usage_per_update.iter().sum::<f64>() / run.usage_per_update.len() as f64
        };
        println!("{strategy:<14} {score:>10.2} {usage:>12.3}");
    }
    Ok(())
}
