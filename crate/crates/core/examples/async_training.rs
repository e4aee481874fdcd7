//! Asynchronous training: several actors feed one buffer while the model
//! and policy learners run on their own threads.
//!
//! `cargo run --release --example async_training -- [actors] [frames] [strategy]`

use steve::trainer::{run_async, AsyncOptions, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let actors: usize = args.next().map_or(Ok(4), |a| a.parse())?;
    let frames: u64 = args.next().map_or(Ok(10_000), |a| a.parse())?;
    let strategy = args.next().unwrap_or_else(|| "td".into());
    let mut config = TrainConfig::preset(&format!("desk_pointmass_{strategy}"))?;
    config.total_frames = frames;
    config.actors = actors;
    let run = run_async(&config, AsyncOptions::from_config(&config), None).map_err(|f| f.error)?;
    println!(
        "{:>8} {:>8} {:>10} {:>10}",
        "update", "frames", "score", "seconds"
    );
    for r in &run.rows {
        println!(
            "{:>8} {:>8} {:>10.2} {:>10.2}",
            r.step,
            r.frames,
            r.score.unwrap_or(f64::NAN),
            r.wall_clock_s.unwrap_or(f64::NAN)
        );
    }
    println!(
        "frames per actor {:?} (total {})",
        run.actor_frames, run.frames
    );
    println!(
        "{} policy updates, {} model updates, {} checksum failures",
        run.policy_updates, run.model_updates, run.checksum_failures
    );
    Ok(())
}
