//! CMA-ES over gradient-coefficient space.
//!
//! The search distribution lives in dimension k+1: one coefficient for the
//! objective gradient, one per measure gradient. Instead of a fitness
//! ranking, the update consumes the two-tier archive-improvement ranking:
//! solutions that filled a new cell rank above solutions that improved an
//! existing cell, which rank above rejected solutions; ties within a tier
//! order by improvement descending, then batch index.
//!
//! The update itself is the standard (mu/mu_w, lambda) scheme with
//! cumulative step-size adaptation and rank-one plus rank-mu covariance
//! updates, positive recombination weights on the parent half.

use crate::archive::{InsertOutcome, InsertStatus};
use crate::error::{QdError, Result};
use crate::linalg::{self, Matrix};
use crate::rng::RngStream;

/// Batch ranking by archive improvement.
#[derive(Debug, Clone)]
pub struct RankedBatch {
    /// Batch indices, best first.
    pub order: Vec<usize>,
    pub outcomes: Vec<InsertOutcome>,
}

fn tier(status: InsertStatus) -> u8 {
    match status {
        InsertStatus::NewCell => 0,
        InsertStatus::ImprovedCell => 1,
        InsertStatus::NotAdded => 2,
    }
}

/// Two-tier improvement ranking: new cells first, then improvements, then
/// rejections; improvement descending within a tier, batch index breaking
/// exact ties.
pub fn improvement_rank(outcomes: &[InsertOutcome]) -> RankedBatch {
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| {
        tier(outcomes[a].status)
            .cmp(&tier(outcomes[b].status))
            .then(outcomes[b].improvement.total_cmp(&outcomes[a].improvement))
            .then(a.cmp(&b))
    });
    RankedBatch {
        order,
        outcomes: outcomes.to_vec(),
    }
}

/// True when no branched solution changed the archive.
pub fn restart_check(outcomes: &[InsertOutcome]) -> bool {
    outcomes
        .iter()
        .all(|o| o.status == InsertStatus::NotAdded)
}

#[derive(Debug, Clone)]
pub struct CmaState {
    dim: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
    sigma_init: f64,

    mean: Vec<f64>,
    sigma: f64,
    cov: Matrix,
    path_sigma: Vec<f64>,
    path_c: Vec<f64>,
    generation: u64,

    eig_values: Vec<f64>,
    eig_basis: Matrix,
}

impl CmaState {
    /// Fresh state: zero mean, identity covariance, step size `sigma_g`.
    pub fn new(dim: usize, lambda_prime: usize, sigma_g: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if dim == 0 {
            problems.push("coefficient dimension must be positive".to_string());
        }
        if lambda_prime < 2 {
            problems.push(format!("lambda_prime must be at least 2, got {lambda_prime}"));
        }
        if !(sigma_g > 0.0) || !sigma_g.is_finite() {
            problems.push(format!("sigma_g must be a positive real, got {sigma_g}"));
        }
        if !problems.is_empty() {
            return Err(QdError::Config(problems));
        }

        let n = dim as f64;
        let mu = lambda_prime / 2;
        let mut weights: Vec<f64> = (1..=mu)
            .map(|i| ((lambda_prime as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
        let c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) * (n + 2.0) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

        Ok(CmaState {
            dim,
            lambda: lambda_prime,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            sigma_init: sigma_g,
            mean: vec![0.0; dim],
            sigma: sigma_g,
            cov: linalg::identity(dim),
            path_sigma: vec![0.0; dim],
            path_c: vec![0.0; dim],
            generation: 0,
            eig_values: vec![1.0; dim],
            eig_basis: linalg::identity(dim),
        })
    }

    /// Returns to the freshly initialized state exactly.
    pub fn reset(&mut self) {
        *self = CmaState::new(self.dim, self.lambda, self.sigma_init)
            .expect("parameters were valid at construction");
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    /// Positive recombination weights for the parent half (descending, sum 1).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &Matrix {
        &self.cov
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Draws `count` coefficient vectors from N(mean, sigma^2 C).
    pub fn sample(&self, count: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
        let sqrt_vals: Vec<f64> = self.eig_values.iter().map(|v| v.max(0.0).sqrt()).collect();
        (0..count)
            .map(|_| {
                let z = rng.normal_vector(self.dim);
                let mut x = self.mean.clone();
                for i in 0..self.dim {
                    let mut yi = 0.0;
                    for (j, z_j) in z.iter().enumerate() {
                        yi += self.eig_basis[i][j] * sqrt_vals[j] * z_j;
                    }
                    x[i] += self.sigma * yi;
                }
                x
            })
            .collect()
    }

    /// One distribution update from the most recent sample batch and its
    /// improvement ranking. `samples` must be exactly the batch that was
    /// ranked.
    pub fn update(&mut self, ranked: &RankedBatch, samples: &[Vec<f64>]) -> Result<()> {
        if samples.len() != self.lambda || ranked.order.len() != self.lambda {
            return Err(QdError::invalid(format!(
                "cma update: expected {} ranked samples, got {} samples / {} ranks",
                self.lambda,
                samples.len(),
                ranked.order.len()
            )));
        }
        if samples.iter().any(|s| s.len() != self.dim) {
            return Err(QdError::invalid("cma update: sample dimension mismatch"));
        }

        let old_mean = self.mean.clone();
        let inv_sigma = 1.0 / self.sigma;

        // steps of the selected parents in unscaled coordinates
        let parents: Vec<&Vec<f64>> = ranked.order[..self.mu]
            .iter()
            .map(|&i| &samples[i])
            .collect();
        let mut y_w = vec![0.0; self.dim];
        for (w, parent) in self.weights.iter().zip(parents.iter()) {
            for i in 0..self.dim {
                y_w[i] += w * (parent[i] - old_mean[i]) * inv_sigma;
            }
        }

        for i in 0..self.dim {
            self.mean[i] = old_mean[i] + self.sigma * y_w[i];
        }

        // C^(-1/2) y_w through the cached eigendecomposition
        let mut c_inv_sqrt_yw = vec![0.0; self.dim];
        {
            let mut projected = vec![0.0; self.dim];
            for (j, proj) in projected.iter_mut().enumerate() {
                let mut s = 0.0;
                for i in 0..self.dim {
                    s += self.eig_basis[i][j] * y_w[i];
                }
                *proj = s / self.eig_values[j].max(1e-30).sqrt();
            }
            for i in 0..self.dim {
                let mut s = 0.0;
                for (j, proj) in projected.iter().enumerate() {
                    s += self.eig_basis[i][j] * proj;
                }
                c_inv_sqrt_yw[i] = s;
            }
        }

        let cs = self.c_sigma;
        let path_scale = (cs * (2.0 - cs) * self.mu_eff).sqrt();
        for i in 0..self.dim {
            self.path_sigma[i] = (1.0 - cs) * self.path_sigma[i] + path_scale * c_inv_sqrt_yw[i];
        }

        let ps_norm = crate::vecmath::norm(&self.path_sigma);
        let gen1 = self.generation + 1;
        let denom = (1.0 - (1.0 - cs).powi(2 * gen1 as i32)).sqrt();
        let h_sigma = ps_norm / denom.max(1e-30)
            < (1.4 + 2.0 / (self.dim as f64 + 1.0)) * self.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };

        let cc = self.c_c;
        let pc_scale = (cc * (2.0 - cc) * self.mu_eff).sqrt();
        for i in 0..self.dim {
            self.path_c[i] = (1.0 - cc) * self.path_c[i] + h * pc_scale * y_w[i];
        }

        // covariance: decay + rank-one + rank-mu
        let decay = 1.0 - self.c_1 - self.c_mu;
        let stall = (1.0 - h) * cc * (2.0 - cc);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut rank_mu = 0.0;
                for (w, parent) in self.weights.iter().zip(parents.iter()) {
                    let yi = (parent[i] - old_mean[i]) * inv_sigma;
                    let yj = (parent[j] - old_mean[j]) * inv_sigma;
                    rank_mu += w * yi * yj;
                }
                self.cov[i][j] = decay * self.cov[i][j]
                    + self.c_1 * (self.path_c[i] * self.path_c[j] + stall * self.cov[i][j])
                    + self.c_mu * rank_mu;
            }
        }
        for i in 0..self.dim {
            for j in 0..i {
                let avg = 0.5 * (self.cov[i][j] + self.cov[j][i]);
                self.cov[i][j] = avg;
                self.cov[j][i] = avg;
            }
        }

        self.sigma *= ((cs / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        self.sigma = self.sigma.max(1e-12);
        if !self.sigma.is_finite() {
            log::warn!("cma step size diverged; resetting to initial value");
            self.sigma = self.sigma_init;
        }

        self.recondition();
        self.generation += 1;
        Ok(())
    }

    /// Refreshes the eigendecomposition, flooring eigenvalues at 1e-12 of
    /// the largest so the sampling stays well-defined.
    fn recondition(&mut self) {
        let (mut values, basis) = linalg::symmetric_eigen(&self.cov);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) || !max.is_finite() {
            log::warn!("cma covariance degenerated; resetting to identity");
            self.cov = linalg::identity(self.dim);
            self.eig_values = vec![1.0; self.dim];
            self.eig_basis = linalg::identity(self.dim);
            return;
        }
        let floor = 1e-12 * max;
        let mut floored = false;
        for v in values.iter_mut() {
            if *v < floor {
                *v = floor;
                floored = true;
            }
        }
        if floored {
            log::debug!("cma covariance eigenvalue floored at {floor:e}");
            self.cov = linalg::reconstruct(&values, &basis);
        }
        self.eig_values = values;
        self.eig_basis = basis;
    }
}
