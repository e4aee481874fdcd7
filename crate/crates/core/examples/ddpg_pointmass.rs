//! DDPG on the point-mass task with a chosen target strategy.
//!
//! `cargo run --release --example ddpg_pointmass -- [strategy] [frames] [seed]`

use std::time::Instant;

use steve::trainer::{run_training, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let strategy = args.next().unwrap_or_else(|| "steve".into());
    let mut config = TrainConfig::preset(&format!("desk_pointmass_{strategy}"))?;
    if let Some(frames) = args.next() {
        config.total_frames = frames.parse()?;
    }
    if let Some(seed) = args.next() {
        config.seed = seed.parse()?;
    }
    let start = Instant::now();
    let run = run_training(&config, None)?;
    println!(
        "{:>8} {:>8} {:>10} {:>12} {:>10}",
        "update", "frames", "score", "critic_loss", "usage"
    );
    for r in &run.rows {
        println!(
            "{:>8} {:>8} {:>10.2} {:>12.4} {:>10.3}",
            r.step,
            r.frames,
            r.score.unwrap_or(f64::NAN),
            r.critic_loss.unwrap_or(f64::NAN),
            r.model_usage.unwrap_or(f64::NAN)
        );
    }
    println!(
        "{} policy updates, {} model updates in {:.1}s",
        run.policy_updates,
        run.model_updates,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
