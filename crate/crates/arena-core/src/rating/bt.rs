//! Bradley-Terry maximum-likelihood fitting via minorize-maximize iteration.
//!
//! The model probability reuses the base-10 logistic link with the ELO scale
//! `alpha`, so fitted values live directly on the ELO scale:
//! `P(i beats j) = 1 / (1 + 10^((R_j - R_i) / alpha))`. In strength space
//! `pi_i = 10^(R_i / alpha)` this is `pi_i / (pi_i + pi_j)`, and the MM
//! update is the classic `pi_i <- W_i / sum_j N_ij / (pi_i + pi_j)`.
//!
//! Ratings are identifiable only up to an additive constant; after the fit
//! they are shifted so their mean equals `params.initial_rating`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BTFitResult, EloParams, ModelId, PairCounts, RatingError};

/// Solver settings for [`bt_fit`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BtOptions {
    /// Stop when the L2 norm of the log-likelihood gradient drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge prior: each model plays this many phantom battles against the
    /// field, split half-and-half, spread evenly over its opponents. Keeps
    /// undefeated/winless models finite. Off (`None`) by default.
    pub ridge_epsilon: Option<f64>,
}

impl Default for BtOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            ridge_epsilon: None,
        }
    }
}

/// Dense view of the fractional win counts over a fixed model ordering.
struct DenseCounts {
    models: Vec<ModelId>,
    wins: Vec<f64>, // row-major n*n, wins[i*n + j] = fractional wins of i over j
}

impl DenseCounts {
    fn build(counts: &PairCounts, ridge_epsilon: Option<f64>) -> Self {
        let models: Vec<ModelId> = counts.models().into_iter().collect();
        let n = models.len();
        let index: BTreeMap<&str, usize> = models
            .iter()
            .enumerate()
            .map(|(i, m)| (m.as_str(), i))
            .collect();
        let mut wins = vec![0.0; n * n];
        for ((i, j), w) in counts.iter() {
            wins[index[i.as_str()] * n + index[j.as_str()]] = *w;
        }
        if let Some(eps) = ridge_epsilon {
            if eps > 0.0 && n > 1 {
                // eps phantom battles per model against the field, spread over
                // its n-1 opponents and split evenly between the directions.
                let per_pair = eps / (n - 1) as f64;
                for i in 0..n {
                    for j in (i + 1)..n {
                        wins[i * n + j] += per_pair / 2.0;
                        wins[j * n + i] += per_pair / 2.0;
                    }
                }
            }
        }
        Self { models, wins }
    }

    fn n(&self) -> usize {
        self.models.len()
    }

    fn w(&self, i: usize, j: usize) -> f64 {
        self.wins[i * self.n() + j]
    }

    fn battles(&self, i: usize, j: usize) -> f64 {
        self.w(i, j) + self.w(j, i)
    }
}

/// Number of connected components of the comparison graph (edge = at least
/// one real battle between the pair).
fn component_count(counts: &PairCounts) -> usize {
    let models: Vec<ModelId> = counts.models().into_iter().collect();
    let n = models.len();
    let index: BTreeMap<&str, usize> = models
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_str(), i))
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for ((i, j), _) in counts.iter() {
        if counts.battles(i, j) > 0.0 {
            let (a, b) = (index[i.as_str()], index[j.as_str()]);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect::<std::collections::BTreeSet<_>>().len()
}

/// Fits Bradley-Terry strengths to the aggregated counts and reports them on
/// the ELO scale, mean-anchored at `params.initial_rating`.
///
/// If `max_iter` is reached with the gradient norm still above `tol`, the
/// best iterate is still returned with `converged = false`.
pub fn bt_fit(counts: &PairCounts, params: &EloParams, opts: &BtOptions) -> Result<BTFitResult, RatingError> {
    let models = counts.models();
    if models.len() < 2 {
        return Err(RatingError::InsufficientModels(models.len()));
    }
    let components = component_count(counts);
    if components > 1 {
        return Err(RatingError::NotConnected { components });
    }

    let dense = DenseCounts::build(counts, opts.ridge_epsilon);
    let n = dense.n();

    if opts.ridge_epsilon.is_none() {
        for i in 0..n {
            let total_wins: f64 = (0..n).map(|j| dense.w(i, j)).sum();
            let total_losses: f64 = (0..n).map(|j| dense.w(j, i)).sum();
            if total_wins == 0.0 || total_losses == 0.0 {
                return Err(RatingError::Degenerate(dense.models[i].clone()));
            }
        }
    }

    let total_wins: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| dense.w(i, j)).sum())
        .collect();

    let mut pi = vec![1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        // MM sweep.
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut denom = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let n_ij = dense.battles(i, j);
                if n_ij > 0.0 {
                    denom += n_ij / (pi[i] + pi[j]);
                }
            }
            next[i] = if denom > 0.0 { total_wins[i] / denom } else { pi[i] };
        }
        // Renormalize so the geometric mean stays 1: keeps strengths bounded.
        let log_mean = next.iter().map(|p| p.ln()).sum::<f64>() / n as f64;
        let scale = log_mean.exp();
        for p in &mut next {
            *p /= scale;
        }
        pi = next;

        if gradient_norm(&dense, &pi) < opts.tol {
            converged = true;
            break;
        }
    }

    // Map strengths to the ELO scale and anchor the mean.
    let alpha = params.alpha;
    let raw: Vec<f64> = pi.iter().map(|p| alpha * p.log10()).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let shift = params.initial_rating - mean;
    let ratings: BTreeMap<ModelId, f64> = dense
        .models
        .iter()
        .cloned()
        .zip(raw.iter().map(|r| r + shift))
        .collect();

    Ok(BTFitResult {
        ratings,
        log_likelihood: log_likelihood(&dense, &pi),
        iterations,
        converged,
        ci95: None,
    })
}

/// L2 norm of the log-likelihood gradient in log-strength coordinates:
/// `g_i = sum_j (w_ij - N_ij * pi_i / (pi_i + pi_j))`.
fn gradient_norm(dense: &DenseCounts, pi: &[f64]) -> f64 {
    let n = dense.n();
    let mut sq = 0.0;
    for i in 0..n {
        let mut g = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let n_ij = dense.battles(i, j);
            if n_ij > 0.0 {
                g += dense.w(i, j) - n_ij * pi[i] / (pi[i] + pi[j]);
            }
        }
        sq += g * g;
    }
    sq.sqrt()
}

fn log_likelihood(dense: &DenseCounts, pi: &[f64]) -> f64 {
    let n = dense.n();
    let mut ll = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = dense.w(i, j);
            if w > 0.0 {
                ll += w * (pi[i] / (pi[i] + pi[j])).ln();
            }
        }
    }
    ll
}
