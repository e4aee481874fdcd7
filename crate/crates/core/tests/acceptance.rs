//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! `cargo test --test acceptance -- <filter>` runs only the criteria whose
//! name contains `<filter>`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng as _;
use steve::agent::{Agent, AgentConfig};
use steve::cli::MANIFEST_FILE;
use steve::env::{make_env, ToyModelMode, Transition};
use steve::numerics::{seeded, stream};
use steve::tabular::{run_toy, ToyConfig};
use steve::trainer::{env_seeds, evaluate_random, run_training, RunArtifacts, TrainConfig};
use steve::value_expansion::{
    combine, steve_target, td_targets, CandidateTargetMatrix, Weighting, WeightingStrategy,
};
use steve::world_model::{ModelEnsemble, WorldModelConfig};
use steve::Batch;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

const TOY_SEEDS: u64 = 5;
const TOY_HORIZON: usize = 5;
const TOY_SWEEP: [usize; 3] = [2, 5, 10];

fn updates_to_unit(
    kind: Weighting,
    mode: ToyModelMode,
    horizon: usize,
    seed: u64,
    budget: u64,
) -> Option<u64> {
    let mut config = ToyConfig::new(kind, mode, horizon, seed);
    config.max_updates = budget;
    config.stop_below = Some(1.0);
    config.log_every = budget;
    run_toy(&config).updates_to_unit_error
}

fn band(ratio: f64, lo: f64, hi: f64) -> &'static str {
    if ratio < lo {
        "below band"
    } else if ratio > hi {
        "above band"
    } else {
        "in band"
    }
}

fn td_median(mode: ToyModelMode) -> f64 {
    median(
        (0..TOY_SEEDS)
            .map(|s| {
                updates_to_unit(Weighting::Td, mode, 0, s, 1_000_000).expect("TD converges") as f64
            })
            .collect(),
    )
}

fn toy_oracle() -> Outcome {
    let start = Instant::now();
    let mode = ToyModelMode::Oracle;
    let td = td_median(mode);
    let mut pass = true;
    let mut parts = vec![format!("TD median {td:.0}")];
    for h in TOY_SWEEP {
        for kind in [Weighting::Steve, Weighting::Mve] {
            let budget = (3.0 * td) as u64;
            let runs: Vec<f64> = (0..TOY_SEEDS)
                .map(|s| {
                    updates_to_unit(kind, mode, h, s, budget).map_or(f64::INFINITY, |u| u as f64)
                })
                .collect();
            let m = median(runs);
            let ratio = td / m;
            let judged = h == TOY_HORIZON;
            if judged {
                pass &= m <= td / 3.0;
            }
            parts.push(format!(
                "{}(H={h}{}) {m:.0} = {ratio:.1}x [{}]",
                kind.name(),
                if judged { "" } else { ", reported" },
                band(ratio, 3.0, 8.0)
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    parts.push(format!("{secs:.1}s"));
    outcome(pass, parts.join(", "))
}

fn toy_noisy() -> Outcome {
    let start = Instant::now();
    let mode = ToyModelMode::Noisy { noise: 0.1 };
    let td = td_median(mode);
    let budget = (3.0 * td) as u64;
    let mut pass = true;
    let mut parts = vec![format!("TD median {td:.0}")];
    for h in TOY_SWEEP {
        let mve_failed = (0..TOY_SEEDS)
            .filter(|&s| updates_to_unit(Weighting::Mve, mode, h, s, budget).is_none())
            .count();
        let steve = median(
            (0..TOY_SEEDS)
                .map(|s| {
                    updates_to_unit(Weighting::Steve, mode, h, s, budget)
                        .map_or(f64::INFINITY, |u| u as f64)
                })
                .collect(),
        );
        let ratio = td / steve;
        let judged = h == TOY_HORIZON;
        if judged {
            pass &= mve_failed >= 4 && steve <= td / 1.5;
        }
        parts.push(format!(
            "H={h}{}: MVE failed {mve_failed}/{TOY_SEEDS}, STEVE {steve:.0} = {ratio:.2}x [{}]",
            if judged { "" } else { " (reported)" },
            band(ratio, 1.5, 3.0)
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    parts.push(format!("{secs:.1}s"));
    outcome(pass, parts.join(", "))
}

fn horizon_zero_reduction() -> Outcome {
    let mut rng = seeded(2024);
    let config = WorldModelConfig {
        transition_hidden: vec![16, 16],
        termination_hidden: vec![8],
        reward_hidden: vec![8],
        learning_rate: 1e-3,
    };
    let mut worst = 0.0f64;
    for case in 0..1_000u64 {
        let sd = rng.random_range(1..6);
        let ad = rng.random_range(1..4);
        let m = rng.random_range(1..5);
        let n = rng.random_range(1..5);
        let l = rng.random_range(1..5);
        let models = ModelEnsemble::new(sd, ad, m, n, &config, &mut stream(case, 0));
        let agent = Agent::new(
            sd,
            ad,
            AgentConfig {
                critic_hidden: vec![16, 16],
                policy_hidden: vec![16],
                num_critics: l,
                ..AgentConfig::default()
            },
            &mut stream(case, 1),
        );
        let t = Transition {
            state: (0..sd).map(|_| rng.random_range(-2.0..2.0)).collect(),
            action: (0..ad).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: rng.random_range(-5.0..5.0),
            next_state: (0..sd).map(|_| rng.random_range(-2.0..2.0)).collect(),
            done: rng.random_bool(0.3),
        };
        let gamma = rng.random_range(0.5..1.0);
        let got = steve_target(
            &t,
            &models.dynamics,
            &models.rewards,
            &agent.critics,
            &agent.policy,
            0,
            gamma,
        );
        let batch = Batch::from_transitions(std::iter::once(&t));
        let want = td_targets(&batch, &agent.critics, &agent.policy, gamma)[0];
        worst = worst.max((got - want).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("max |steve - td| = {worst:.2e} over 1000 transitions"),
    )
}

/// Candidates `mu +- sqrt(v)` have population variance `v` at every horizon.
fn matrix_with_variances(variances: &[f64]) -> CandidateTargetMatrix {
    let candidates = variances
        .iter()
        .map(|v| vec![-v.sqrt(), v.sqrt()])
        .collect();
    CandidateTargetMatrix::from_candidates(1, 1, 2, candidates)
}

fn steve_weights(variances: &[f64]) -> Vec<f64> {
    combine(
        &matrix_with_variances(variances),
        &WeightingStrategy::new(Weighting::Steve),
    )
    .weights
}

fn inverse_variance_optimality() -> Outcome {
    let mut rng = seeded(77);
    let mut violations = 0;
    let mut margin = f64::INFINITY;
    for _ in 0..100 {
        let k = rng.random_range(1..=11);
        let variances: Vec<f64> = (0..k)
            .map(|_| 10f64.powf(rng.random_range(-3.0..3.0)))
            .collect();
        let reported = matrix_with_variances(&variances).variances().to_vec();
        let w = steve_weights(&variances);
        let ours = common::weighted_variance(&w, &reported);
        let best = (0..100_000)
            .map(|_| common::weighted_variance(&common::simplex_sample(&mut rng, k), &reported))
            .fold(f64::INFINITY, f64::min);
        if ours > best + 1e-9 {
            violations += 1;
        }
        margin = margin.min(best - ours);
    }
    outcome(
        violations == 0,
        format!("{violations}/100 vectors beaten by a sample; smallest margin {margin:.3e}"),
    )
}

fn td_lambda_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for lambda in [0.25f64, 0.5, 0.75] {
        for h in 0..=10 {
            let variances: Vec<f64> = (0..=h).map(|i| 3.0 * lambda.powi(-i)).collect();
            let w = steve_weights(&variances);
            let total: f64 = (0..=h).map(|i| lambda.powi(i)).sum();
            for (i, wi) in w.iter().enumerate() {
                worst = worst.max((wi - lambda.powi(i as i32) / total).abs());
            }
        }
    }
    outcome(worst <= 1e-9, format!("max weight error {worst:.2e}"))
}

fn gradient_correctness() -> Outcome {
    let results = [
        ("critic", common::worst(100, common::critic_case)),
        ("actor", common::worst(100, common::actor_case)),
        ("model", common::worst(100, common::model_case)),
        ("td-k", common::worst(100, common::tdk_case)),
    ];
    let pass = results.iter().all(|(_, e)| *e < 1e-4);
    let detail = results
        .iter()
        .map(|(name, e)| format!("{name} {e:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("worst relative error: {detail}"))
}

fn small(strategy: &str, seed: u64) -> TrainConfig {
    TrainConfig {
        strategy: strategy.into(),
        seed,
        total_frames: 2_000,
        warmup_frames: 500,
        model_pretrain_updates: 50,
        policy_batch: 32,
        model_batch: 32,
        hidden: vec![32],
        transition_hidden: vec![32],
        checkpoint_interval: 50,
        eval_interval: 100,
        eval_episodes: 2,
        ..TrainConfig::desk()
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut identical = 0;
    let strategies = ["td", "mve", "steve", "cov_steve", "tdl75"];
    for (k, strategy) in strategies.iter().enumerate() {
        let config = dir.path().join(format!("{strategy}.toml"));
        std::fs::write(&config, small(strategy, 40 + k as u64).to_toml()).expect("write config");
        let first = dir.path().join(format!("{strategy}_a"));
        let second = dir.path().join(format!("{strategy}_b"));
        let ok_a = steve::cli::run([
            "steve",
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            first.to_str().unwrap(),
        ]) == 0;
        let manifest = first.join(MANIFEST_FILE);
        let ok_b = steve::cli::run([
            "steve",
            "train",
            "--config",
            manifest.to_str().unwrap(),
            "--out",
            second.to_str().unwrap(),
        ]) == 0;
        let same = ok_a
            && ok_b
            && std::fs::read(first.join("metrics.csv")).ok()
                == std::fs::read(second.join("metrics.csv")).ok();
        identical += usize::from(same);
    }
    outcome(
        identical == strategies.len(),
        format!(
            "{identical}/{} manifest reruns reproduce metrics.csv byte for byte",
            strategies.len()
        ),
    )
}

const SMOKE_SEEDS: u64 = 3;

struct Smoke {
    td: Vec<RunArtifacts>,
    steve: Vec<RunArtifacts>,
    mve: RunArtifacts,
}

fn smoke_runs() -> Smoke {
    let run = |strategy: &str, seed: u64| {
        let config = TrainConfig {
            strategy: strategy.into(),
            seed,
            ..TrainConfig::desk()
        };
        run_training(&config, None).expect("desk run completes")
    };
    let td = (0..SMOKE_SEEDS).map(|s| run("td", s)).collect();
    let steve = (0..SMOKE_SEEDS).map(|s| run("steve", s)).collect();
    let mve = run("mve", 0);
    Smoke { td, steve, mve }
}

fn final_score(run: &RunArtifacts) -> f64 {
    run.rows
        .iter()
        .rev()
        .find_map(|r| r.score)
        .expect("evaluation rows")
}

fn random_score(seed: u64, episodes: usize) -> f64 {
    let (_, eval_seed) = env_seeds(seed);
    let mut env = make_env("pointmass", eval_seed).expect("pointmass");
    evaluate_random(env.as_mut(), episodes, &mut stream(seed, 99)).expect("random evaluation")
}

fn learning_smoke(smoke: &Smoke) -> Outcome {
    let n = SMOKE_SEEDS as f64;
    let td: Vec<f64> = smoke.td.iter().map(final_score).collect();
    let st: Vec<f64> = smoke.steve.iter().map(final_score).collect();
    let episodes = TrainConfig::desk().eval_episodes;
    let random = (0..SMOKE_SEEDS)
        .map(|s| random_score(s, episodes))
        .sum::<f64>()
        / n;
    let td_mean = td.iter().sum::<f64>() / n;
    let st_mean = st.iter().sum::<f64>() / n;
    let threshold = random + 0.5 * random.abs();
    let pass = st_mean >= td_mean && td_mean >= threshold && st_mean >= threshold;
    outcome(
        pass,
        format!(
            "STEVE {st_mean:.1} {st:.1?}, TD {td_mean:.1} {td:.1?}, random {random:.1} (needs >= {threshold:.1})"
        ),
    )
}

fn model_usage(smoke: &Smoke) -> Outcome {
    let td_zero = smoke
        .td
        .iter()
        .all(|r| !r.usage_per_update.is_empty() && r.usage_per_update.iter().all(|&u| u == 0.0));
    let mve_one = !smoke.mve.usage_per_update.is_empty()
        && smoke.mve.usage_per_update.iter().all(|&u| u == 1.0);
    let (inside, total) = smoke.steve.iter().fold((0usize, 0usize), |(i, t), r| {
        let open = r
            .usage_per_update
            .iter()
            .filter(|&&u| u > 0.0 && u < 1.0)
            .count();
        (i + open, t + r.usage_per_update.len())
    });
    let fraction = inside as f64 / total.max(1) as f64;
    outcome(
        td_zero && mve_one && fraction >= 0.99,
        format!(
            "TD all 0: {td_zero}, MVE all 1: {mve_one}, STEVE in (0,1) on {:.2}% of {total} updates",
            100.0 * fraction
        ),
    )
}

type Check = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let wanted = |name: &str| filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str()));
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    };
    let quick: [Check; 7] = [
        ("toy_oracle_speedup", toy_oracle),
        ("toy_noisy_models", toy_noisy),
        ("horizon_zero_reduction", horizon_zero_reduction),
        ("inverse_variance_optimality", inverse_variance_optimality),
        ("td_lambda_equivalence", td_lambda_equivalence),
        ("gradient_correctness", gradient_correctness),
        ("determinism", determinism),
    ];
    for (name, check) in quick {
        if wanted(name) {
            report(name, check());
        }
    }
    if wanted("pointmass_learning") || wanted("model_usage") {
        let smoke = smoke_runs();
        if wanted("pointmass_learning") {
            report("pointmass_learning", learning_smoke(&smoke));
        }
        if wanted("model_usage") {
            report("model_usage", model_usage(&smoke));
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
