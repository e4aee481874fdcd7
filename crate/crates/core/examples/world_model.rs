//! Fitting the dynamics/termination/reward ensemble to random point-mass data.
//!
//! `cargo run --release --example world_model -- [updates]`

use rand::Rng as _;
use steve::env::{Environment, PointMassConfig, PointMassEnv};
use steve::numerics::seeded;
use steve::world_model::{ModelEnsemble, WorldModelConfig};
use steve::ReplayBuffer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let updates: usize = std::env::args().nth(1).map_or(Ok(2_000), |a| a.parse())?;
    let mut env = PointMassEnv::new(PointMassConfig::default(), 0);
    let mut rng = seeded(1);
    let mut buffer = ReplayBuffer::new(20_000);
    env.reset();
    while buffer.len() < 20_000 {
        if env.episode_over() {
            env.reset();
        }
        let action = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        buffer.push(env.step(&action)?);
    }
    let config = WorldModelConfig {
        transition_hidden: vec![64, 64],
        termination_hidden: vec![64, 64],
        reward_hidden: vec![64, 64],
        learning_rate: 3e-4,
    };
    let mut models = ModelEnsemble::new(4, 2, 4, 4, &config, &mut seeded(2));
    println!(
        "{:>8} {:>12} {:>12} {:>12}",
        "updates", "transition", "termination", "reward"
    );
    let chunk = (updates / 10).max(1);
    let mut done = 0;
    while done < updates {
        let loss = models.train(&buffer, chunk, 128, &mut rng)?;
        done += chunk;
        println!(
            "{done:>8} {:>12.6} {:>12.6} {:>12.6}",
            loss.transition, loss.termination, loss.reward
        );
    }
    Ok(())
}
