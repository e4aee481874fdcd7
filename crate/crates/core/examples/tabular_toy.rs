//! Tabular chain experiment: TD, MVE and STEVE under oracle and noisy models.
//!
//! `cargo run --release --example tabular_toy -- [horizon] [seeds]`

use steve::env::ToyModelMode;
use steve::tabular::{run_toy, ToyConfig};
use steve::value_expansion::Weighting;

fn main() {
    let mut args = std::env::args().skip(1);
    let horizon: usize = args
        .next()
        .map(|a| a.parse().expect("horizon"))
        .unwrap_or(5);
    let seeds: u64 = args.next().map(|a| a.parse().expect("seeds")).unwrap_or(5);
    for (label, mode) in [
        ("oracle", ToyModelMode::Oracle),
        ("noisy", ToyModelMode::Noisy { noise: 0.1 }),
    ] {
        println!("{label} models, H={horizon}");
        for kind in [Weighting::Td, Weighting::Mve, Weighting::Steve] {
            let h = if kind == Weighting::Td { 0 } else { horizon };
            let runs: Vec<_> = (0..seeds)
                .map(|seed| {
                    let mut c = ToyConfig::new(kind, mode, h, seed);
                    c.max_updates = 60_000;
                    c.stop_below = Some(1.0);
                    run_toy(&c)
                })
                .collect();
            let hits: Vec<String> = runs
                .iter()
                .map(|r| {
                    r.updates_to_unit_error
                        .map_or("-".into(), |u| u.to_string())
                })
                .collect();
            let w0: f64 =
                runs.iter().map(|r| r.mean_horizon0_weight).sum::<f64>() / runs.len() as f64;
            println!(
                "  {:<6} updates to error < 1: [{}]  mean w0 {:.3}",
                kind.name(),
                hits.join(", "),
                w0
            );
        }
    }
}
