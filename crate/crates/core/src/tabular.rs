//! Tabular value estimation on the 101-state chain.
//!
//! Tables are updated by hard assignment (no learning rate). Expansion
//! updates roll every toy model forward from the sampled transition and form
//! candidate targets from every (model, table) pair with the true reward
//! scheme along the simulated path. Horizon weights come from the whole
//! candidate matrix; each table is then assigned its own weighted target,
//! averaging over models only, so the tables stay distinct until they agree.

use rand::Rng as _;

use crate::env::{
    chain_reward, true_chain_value, ToyModel, ToyModelMode, CHAIN_STATES, CHAIN_TERMINAL,
};
use crate::error::EnvError;
use crate::metrics::MetricsRow;
use crate::numerics::{stream, Rng};
use crate::value_expansion::{
    combine, CandidateTargetMatrix, Combined, Weighting, WeightingStrategy,
};

/// Value table over chain states; the terminal entry is pinned to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    values: Vec<f64>,
}

impl TabularQ {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        assert_eq!(values.len(), CHAIN_STATES, "table length");
        values[CHAIN_TERMINAL] = 0.0;
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Writes a nonterminal entry.
    pub fn set(&mut self, index: usize, value: f64) -> Result<(), EnvError> {
        if index >= CHAIN_TERMINAL {
            return Err(EnvError::StateOutOfRange {
                index,
                max: CHAIN_TERMINAL - 1,
            });
        }
        self.values[index] = value;
        Ok(())
    }
}

/// Random integer values in `[0, 99]`, terminal 0.
pub fn init_tabular(rng: &mut Rng) -> TabularQ {
    TabularQ::from_values(
        (0..CHAIN_STATES)
            .map(|_| rng.random_range(0..=99) as f64)
            .collect(),
    )
}

/// `Q(s_i) = r + Q(s_{i+1})`.
pub fn tabular_td_update(table: &mut TabularQ, index: usize) -> Result<(), EnvError> {
    if index >= CHAIN_TERMINAL {
        return Err(EnvError::StateOutOfRange {
            index,
            max: CHAIN_TERMINAL - 1,
        });
    }
    let target = chain_reward(index, index + 1) + table.get(index + 1);
    table.set(index, target)
}

/// Candidate targets for the transition out of `index`.
///
/// Every model rolls `horizon` steps from `s_{index+1}`; rewards stop once
/// a rollout reaches the terminal state, whose value is 0.
pub fn toy_candidates(
    tables: &[TabularQ],
    models: &[ToyModel],
    index: usize,
    horizon: usize,
    rng: &mut Rng,
) -> CandidateTargetMatrix {
    assert!(!tables.is_empty() && (horizon == 0 || !models.is_empty()));
    let r = chain_reward(index, index + 1);
    let start = index + 1;
    let mut per_horizon = vec![tables
        .iter()
        .map(|t| r + t.get(start))
        .collect::<Vec<f64>>()];
    if horizon > 0 {
        let paths: Vec<Vec<usize>> = models
            .iter()
            .map(|m| {
                let mut path = vec![start];
                for _ in 0..horizon {
                    let prev = *path.last().unwrap();
                    path.push(m.predict(prev, rng));
                }
                path
            })
            .collect();
        for i in 1..=horizon {
            let mut values = Vec::with_capacity(models.len() * tables.len());
            for path in &paths {
                let partial: f64 = r
                    + (1..=i)
                        .filter(|&k| path[k - 1] != CHAIN_TERMINAL)
                        .map(|k| chain_reward(path[k - 1], path[k]))
                        .sum::<f64>();
                for t in tables {
                    values.push(partial + t.get(path[i]));
                }
            }
            per_horizon.push(values);
        }
    }
    CandidateTargetMatrix::from_candidates(models.len().max(1), 1, tables.len(), per_horizon)
}

/// Weights the candidates for `index` and assigns each table its own target.
///
/// The returned target is the mean of the per-table targets.
pub fn tabular_expansion_update(
    tables: &mut [TabularQ],
    models: &[ToyModel],
    index: usize,
    horizon: usize,
    strategy: &WeightingStrategy,
    rng: &mut Rng,
) -> Result<Combined, EnvError> {
    if index >= CHAIN_TERMINAL {
        return Err(EnvError::StateOutOfRange {
            index,
            max: CHAIN_TERMINAL - 1,
        });
    }
    let matrix = toy_candidates(tables, models, index, horizon, rng);
    let mut combined = combine(&matrix, strategy);
    let l = tables.len();
    let mut targets = vec![0.0; l];
    for (i, &w) in combined.weights.iter().enumerate() {
        let cand = matrix.candidates(i);
        let per_table = cand.len() / l;
        for (t, target) in targets.iter_mut().enumerate() {
            let sum: f64 = (0..per_table).map(|m| cand[m * l + t]).sum();
            *target += w * sum / per_table as f64;
        }
    }
    for (t, &target) in tables.iter_mut().zip(&targets) {
        t.set(index, target)?;
    }
    combined.target = targets.iter().sum::<f64>() / l as f64;
    Ok(combined)
}

/// Mean squared error of the ensemble-mean table over the 100 nonterminal states.
pub fn value_error(tables: &[TabularQ]) -> f64 {
    let k = tables.len() as f64;
    (0..CHAIN_TERMINAL)
        .map(|i| {
            let mean = tables.iter().map(|t| t.get(i)).sum::<f64>() / k;
            let truth = true_chain_value(i).expect("nonterminal index");
            (mean - truth).powi(2)
        })
        .sum::<f64>()
        / CHAIN_TERMINAL as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub strategy: Weighting,
    pub model: ToyModelMode,
    pub horizon: usize,
    pub ensemble_size: usize,
    pub max_updates: u64,
    /// Record a metrics row every this many updates (and at the end).
    pub log_every: u64,
    /// Stop once the value error falls below this; `None` runs to `max_updates`.
    pub stop_below: Option<f64>,
    pub seed: u64,
}

impl ToyConfig {
    pub fn new(strategy: Weighting, model: ToyModelMode, horizon: usize, seed: u64) -> Self {
        Self {
            strategy,
            model,
            horizon,
            ensemble_size: 8,
            max_updates: 50_000,
            log_every: 100,
            stop_below: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRun {
    pub rows: Vec<MetricsRow>,
    /// First update after which the value error was below 1.0.
    pub updates_to_unit_error: Option<u64>,
    pub final_error: f64,
    /// Mean weight placed on horizon 0 across all updates.
    pub mean_horizon0_weight: f64,
    pub updates: u64,
}

/// Runs one tabular experiment.
///
/// Table initialization, state sampling and model noise draw from separate
/// streams of `seed`, so matched seeds visit the same states under every
/// strategy.
pub fn run_toy(config: &ToyConfig) -> ToyRun {
    let mut init_rng = stream(config.seed, 0);
    let mut state_rng = stream(config.seed, 1);
    let mut model_rng = stream(config.seed, 2);
    let mut tables: Vec<TabularQ> = (0..config.ensemble_size)
        .map(|_| init_tabular(&mut init_rng))
        .collect();
    let model = ToyModel {
        mode: config.model,
        num_states: CHAIN_STATES,
    };
    let models = vec![model; config.ensemble_size];
    let strategy = WeightingStrategy::new(config.strategy);

    let mut error = value_error(&tables);
    let mut rows = vec![MetricsRow {
        step: 0,
        frames: 0,
        value_error: Some(error),
        ..Default::default()
    }];
    let mut hit = (error < 1.0).then_some(0);
    let mut w0_total = 0.0;
    let mut updates = 0;
    while updates < config.max_updates {
        let index = state_rng.random_range(0..CHAIN_TERMINAL);
        let combined = tabular_expansion_update(
            &mut tables,
            &models,
            index,
            config.horizon,
            &strategy,
            &mut model_rng,
        )
        .expect("sampled index is nonterminal");
        w0_total += combined.weights[0];
        updates += 1;
        error = value_error(&tables);
        if hit.is_none() && error < 1.0 {
            hit = Some(updates);
        }
        let stop = config.stop_below.is_some_and(|t| error < t);
        if updates % config.log_every == 0 || updates == config.max_updates || stop {
            rows.push(MetricsRow {
                step: updates,
                frames: updates,
                value_error: Some(error),
                ..Default::default()
            });
        }
        if stop {
            break;
        }
    }
    ToyRun {
        rows,
        updates_to_unit_error: hit,
        final_error: error,
        mean_horizon0_weight: if updates > 0 {
            w0_total / updates as f64
        } else {
            1.0
        },
        updates,
    }
}
