use ndarray::{Array1, ArrayView1};

use super::{QFunction, RewardModel, RolloutBundle};

/// Candidate targets of one transition, grouped by rollout horizon.
///
/// Horizon 0 holds one value per Q-function (`L`); horizon `i >= 1` holds
/// `M * N * L` values ordered `(m, n, l)` with `l` fastest. Non-finite
/// candidates are dropped from the statistics and counted in
/// [`excluded`](Self::excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTargetMatrix {
    dims: (usize, usize, usize),
    candidates: Vec<Vec<f64>>,
    means: Vec<f64>,
    variances: Vec<f64>,
    excluded: usize,
}

impl CandidateTargetMatrix {
    /// Builds the matrix from raw candidates. Panics when a horizon has the
    /// wrong number of entries for ensemble sizes `(m, n, l)`.
    pub fn from_candidates(m: usize, n: usize, l: usize, candidates: Vec<Vec<f64>>) -> Self {
        assert!(!candidates.is_empty(), "need at least horizon 0");
        assert!(m > 0 && n > 0 && l > 0, "ensemble sizes must be positive");
        for (i, c) in candidates.iter().enumerate() {
            let expected = if i == 0 { l } else { m * n * l };
            assert_eq!(c.len(), expected, "candidate count at horizon {i}");
        }
        let mut excluded = 0;
        let mut means = Vec::with_capacity(candidates.len());
        let mut variances = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let finite: Vec<f64> = c.iter().copied().filter(|v| v.is_finite()).collect();
            excluded += c.len() - finite.len();
            if finite.is_empty() {
                means.push(f64::NAN);
                variances.push(f64::INFINITY);
                continue;
            }
            let k = finite.len() as f64;
            let mean = finite.iter().sum::<f64>() / k;
            let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
            means.push(mean);
            variances.push(var);
        }
        Self {
            dims: (m, n, l),
            candidates,
            means,
            variances,
            excluded,
        }
    }

    /// `(M, N, L)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Number of horizons, `H + 1`.
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.candidates.len() - 1
    }

    pub fn candidates(&self, horizon: usize) -> &[f64] {
        &self.candidates[horizon]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Population variances (divide by the candidate count).
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn excluded(&self) -> usize {
        self.excluded
    }

    /// Population covariance across horizons.
    ///
    /// Samples are aligned by ensemble index `(m, n, l)`; horizon 0 reuses
    /// the value of Q-function `l`. Because every horizon-0 value repeats
    /// exactly `M * N` times, the diagonal equals [`variances`](Self::variances).
    /// Sample rows holding a non-finite value are skipped.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let h = self.len();
        let (m, n, l) = self.dims;
        let rows: Vec<Vec<f64>> = (0..m * n * l)
            .map(|k| {
                (0..h)
                    .map(|i| {
                        if i == 0 {
                            self.candidates[0][k % l]
                        } else {
                            self.candidates[i][k]
                        }
                    })
                    .collect::<Vec<f64>>()
            })
            .filter(|r| r.iter().all(|v| v.is_finite()))
            .collect();
        let mut cov = vec![vec![0.0; h]; h];
        if rows.is_empty() {
            return cov;
        }
        let count = rows.len() as f64;
        let mean: Vec<f64> = (0..h)
            .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / count)
            .collect();
        for r in &rows {
            for i in 0..h {
                let di = r[i] - mean[i];
                for j in i..h {
                    cov[i][j] += di * (r[j] - mean[j]);
                }
            }
        }
        for i in 0..h {
            for j in i..h {
                cov[i][j] /= count;
                cov[j][i] = cov[i][j];
            }
        }
        cov
    }
}

/// Evaluates every rollout prefix under every reward and Q-function.
///
/// For model `m`, reward `n`, Q-function `l` and horizon `i` the candidate is
///
/// `r + sum_{k=1..i} gamma^k D^{k-1} r_n(s'_{k-1}, a'_{k-1}, s'_k) + gamma^{i+1} D^i Q_l(s'_i, a'_i)`
///
/// where `D^i` is the survival product through `s'_i`. Horizon 0 reduces to
/// the one-step TD target of each Q-function.
pub fn candidate_targets<R: RewardModel, Q: QFunction>(
    bundle: &RolloutBundle,
    rewards: &[R],
    qs: &[Q],
    real_rewards: ArrayView1<f64>,
) -> Vec<CandidateTargetMatrix> {
    assert!(!qs.is_empty(), "need at least one Q-function");
    let h = bundle.horizon;
    assert!(
        h == 0 || !rewards.is_empty(),
        "a positive horizon needs at least one reward model"
    );
    let batch = bundle.batch_len();
    assert_eq!(real_rewards.len(), batch, "reward count");
    let m_count = bundle.num_models();
    let n_count = if h == 0 { 1 } else { rewards.len() };
    let l_count = qs.len();
    let gamma = bundle.gamma;

    // q_vals[m][l][i], model_rewards[m][n][k-1] for step k, survival[m][i]
    let mut q_vals: Vec<Vec<Vec<Array1<f64>>>> = Vec::with_capacity(m_count);
    let mut model_rewards: Vec<Vec<Vec<Array1<f64>>>> = Vec::with_capacity(m_count);
    let mut survival = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let states = &bundle.states[m];
        let actions = &bundle.actions[m];
        q_vals.push(
            qs.iter()
                .map(|q| {
                    (0..=h)
                        .map(|i| q.value(states[i].view(), actions[i].view()))
                        .collect()
                })
                .collect(),
        );
        model_rewards.push(
            rewards
                .iter()
                .take(if h == 0 { 0 } else { n_count })
                .map(|r| {
                    (1..=h)
                        .map(|k| {
                            r.reward(
                                states[k - 1].view(),
                                actions[k - 1].view(),
                                states[k].view(),
                            )
                        })
                        .collect()
                })
                .collect(),
        );
        survival.push(bundle.survival(m));
    }

    let powers: Vec<f64> = (0..=h + 1).map(|k| gamma.powi(k as i32)).collect();
    (0..batch)
        .map(|b| {
            let r = real_rewards[b];
            let mut per_horizon = Vec::with_capacity(h + 1);
            per_horizon.push(
                (0..l_count)
                    .map(|l| r + powers[1] * survival[0][0][b] * q_vals[0][l][0][b])
                    .collect::<Vec<f64>>(),
            );
            for i in 1..=h {
                let mut values = Vec::with_capacity(m_count * n_count * l_count);
                for m in 0..m_count {
                    for n in 0..n_count {
                        let mut partial = r;
                        for k in 1..=i {
                            partial +=
                                powers[k] * survival[m][k - 1][b] * model_rewards[m][n][k - 1][b];
                        }
                        for l in 0..l_count {
                            values.push(
                                partial + powers[i + 1] * survival[m][i][b] * q_vals[m][l][i][b],
                            );
                        }
                    }
                }
                per_horizon.push(values);
            }
            CandidateTargetMatrix::from_candidates(m_count, n_count, l_count, per_horizon)
        })
        .collect()
}
