//! Train briefly, save the run directory, reload the policy and re-evaluate it.
//!
//! `cargo run --release --example checkpoint_roundtrip -- [out_dir]`

use std::path::PathBuf;

use steve::agent::PolicyNet;
use steve::checkpoint;
use steve::env::make_env;
use steve::trainer::{env_seeds, evaluate_policy, run_training, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("steve-checkpoint-example"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&out)?;
    let mut config = TrainConfig::preset("desk_pointmass_td")?;
    config.total_frames = 6_000;
    let run = run_training(&config, Some(&out))?;
    let last = run.rows.last().and_then(|r| r.score).unwrap_or(f64::NAN);

    let path = out.join("checkpoints").join("final").join("policy.json");
    let policy: PolicyNet = checkpoint::load(&path)?;
    assert_eq!(policy, run.agent.policy);
    let (_, eval_seed) = env_seeds(config.seed);
    let mut env = make_env(&config.env, eval_seed)?;
    let score = evaluate_policy(&policy, env.as_mut(), config.eval_episodes)?;
    println!("run directory {}", out.display());
    println!("last logged score {last:.4}, reloaded policy scores {score:.4}");
    Ok(())
}
