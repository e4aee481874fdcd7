use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::CandidateTargetMatrix;

/// Variances below this are raised to it before inversion.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lambda")]
pub enum Weighting {
    /// All mass on horizon 0.
    Td,
    /// All mass on the longest horizon.
    Mve,
    /// Same weights as [`Weighting::Mve`]; the target averages every
    /// ensemble member's longest-horizon candidate.
    EnsembleMve,
    /// Uniform over horizons.
    Mean,
    /// `w_i = lambda^i / sum_j lambda^j` over the finite horizon.
    TdLambda(f64),
    /// Inverse-variance weights.
    Steve,
    /// Minimum-variance weights from the full covariance, `w ~ C^-1 1`.
    /// Entries may be negative.
    CovSteve,
}

impl Weighting {
    pub fn name(&self) -> String {
        match self {
            Weighting::Td => "td".into(),
            Weighting::Mve => "mve".into(),
            Weighting::EnsembleMve => "ensemble_mve".into(),
            Weighting::Mean => "mean".into(),
            Weighting::TdLambda(l) => format!("tdl{}", (l * 100.0).round() as i64),
            Weighting::Steve => "steve".into(),
            Weighting::CovSteve => "cov_steve".into(),
        }
    }

    /// Parses a strategy name; `lambda` is used by `tdlambda`.
    pub fn parse(name: &str, lambda: f64) -> Option<Self> {
        Some(match name {
            "td" => Weighting::Td,
            "mve" => Weighting::Mve,
            "ensemble_mve" => Weighting::EnsembleMve,
            "mean" => Weighting::Mean,
            "tdlambda" => Weighting::TdLambda(lambda),
            "tdl25" => Weighting::TdLambda(0.25),
            "tdl75" => Weighting::TdLambda(0.75),
            "steve" => Weighting::Steve,
            "cov_steve" => Weighting::CovSteve,
            _ => return None,
        })
    }

    /// Whether targets use model rollouts at all.
    pub fn uses_model(&self) -> bool {
        !matches!(self, Weighting::Td)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingStrategy {
    pub kind: Weighting,
    pub variance_floor: f64,
}

impl WeightingStrategy {
    pub fn new(kind: Weighting) -> Self {
        Self {
            kind,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Combined {
    pub target: f64,
    /// One weight per horizon, summing to 1.
    pub weights: Vec<f64>,
    /// Set when the covariance solve failed and diagonal weights were used.
    pub fallback: bool,
}

fn normalize(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn inverse_variance(variances: &[f64], floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = variances.iter().map(|&v| 1.0 / v.max(floor)).collect();
    if raw.iter().all(|&w| w == 0.0) {
        // Every horizon lost all its candidates; the target becomes NaN downstream.
        return vec![1.0 / variances.len() as f64; variances.len()];
    }
    normalize(raw)
}

fn covariance_weights(matrix: &CandidateTargetMatrix, floor: f64) -> Option<Vec<f64>> {
    let h = matrix.len();
    let cov = matrix.covariance();
    let mut c = DMatrix::from_fn(h, h, |i, j| cov[i][j]);
    for i in 0..h {
        c[(i, i)] = c[(i, i)].max(floor);
    }
    let ones = DVector::from_element(h, 1.0);
    let solve = |c: DMatrix<f64>| -> Option<Vec<f64>> {
        let w = c.cholesky()?.solve(&ones);
        let total = w.sum();
        if !total.is_finite() || total.abs() < f64::MIN_POSITIVE || w.iter().any(|v| !v.is_finite())
        {
            return None;
        }
        Some(w.iter().map(|v| v / total).collect())
    };
    solve(c.clone()).or_else(|| {
        let ridge = 1e-6 * c.trace() / h as f64;
        for i in 0..h {
            c[(i, i)] += ridge;
        }
        solve(c)
    })
}

/// Folds per-horizon candidate statistics into a single target.
pub fn combine(matrix: &CandidateTargetMatrix, strategy: &WeightingStrategy) -> Combined {
    let h = matrix.len();
    assert!(h >= 1, "need at least one horizon");
    let mut fallback = false;
    let weights = match strategy.kind {
        Weighting::Td => (0..h).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
        Weighting::Mve | Weighting::EnsembleMve => {
            (0..h).map(|i| if i + 1 == h { 1.0 } else { 0.0 }).collect()
        }
        Weighting::Mean => vec![1.0 / h as f64; h],
        Weighting::TdLambda(lambda) => normalize((0..h).map(|i| lambda.powi(i as i32)).collect()),
        Weighting::Steve => inverse_variance(matrix.variances(), strategy.variance_floor),
        Weighting::CovSteve => match covariance_weights(matrix, strategy.variance_floor) {
            Some(w) => w,
            None => {
                fallback = true;
                inverse_variance(matrix.variances(), strategy.variance_floor)
            }
        },
    };
    let target = weights
        .iter()
        .zip(matrix.means())
        .filter(|(w, _)| **w != 0.0)
        .map(|(w, m)| w * m)
        .sum();
    Combined {
        target,
        weights,
        fallback,
    }
}
