//! Black-box gradient estimation with mirrored sampling and centered rank
//! normalization, plus the Adam optimizer the estimators feed.
//!
//! One call evaluates `lambda_es` perturbed solutions and produces gradient
//! estimates for the objective and for every measure from those same
//! evaluations, so the environment cost does not grow with the number of
//! measures. All evaluations are returned to the caller for reuse (archive
//! bookkeeping, replay buffers).

use crate::error::{QdError, Result};
use crate::rng::RngStream;
use crate::types::{Evaluation, GradientBundle, SolutionVector};
use crate::vecmath::{axpy, scale};

#[derive(Debug, Clone, PartialEq)]
pub struct EsConfig {
    /// Total perturbed evaluations per call; even, so mirrors pair up.
    pub lambda_es: usize,
    /// Perturbation standard deviation.
    pub sigma_e: f64,
}

impl EsConfig {
    pub fn new(lambda_es: usize, sigma_e: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if lambda_es == 0 || lambda_es % 2 != 0 {
            problems.push(format!("lambda_es must be even and positive, got {lambda_es}"));
        }
        if !(sigma_e > 0.0) || !sigma_e.is_finite() {
            problems.push(format!("sigma_e must be a positive real, got {sigma_e}"));
        }
        if !problems.is_empty() {
            return Err(QdError::Config(problems));
        }
        Ok(EsConfig { lambda_es, sigma_e })
    }
}

/// Centered rank normalization over a primary and a mirror value list,
/// combined. Rank `r` out of `2p` maps to `r/(2p-1) - 0.5`, computed as
/// `(2r - q) / (2q)` with `q = 2p - 1` so the outputs are exactly
/// antisymmetric in floating point. Ties rank primaries before mirrors,
/// then lower index first.
pub fn rank_normalize(primary: &[f64], mirror: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = primary.len();
    debug_assert_eq!(p, mirror.len());
    debug_assert!(p >= 1);
    let total = 2 * p;
    let q = (total - 1) as i64;
    let mut order: Vec<usize> = (0..total).collect();
    let value = |pos: usize| if pos < p { primary[pos] } else { mirror[pos - p] };
    order.sort_by(|&a, &b| value(a).partial_cmp(&value(b)).expect("finite values"));
    let mut rp = vec![0.0; p];
    let mut rm = vec![0.0; p];
    for (rank, &pos) in order.iter().enumerate() {
        let normalized = (2 * rank as i64 - q) as f64 / (2 * q) as f64;
        if pos < p {
            rp[pos] = normalized;
        } else {
            rm[pos - p] = normalized;
        }
    }
    (rp, rm)
}

/// Assembles one gradient estimate from mirrored perturbations and the
/// rank-normalized score difference of each pair:
/// `grad = 1/(half * sigma_e) * sum_i eps_i (R_i - R'_i)`.
pub fn assemble_es_gradient(
    perturbations: &[Vec<f64>],
    primary_values: &[f64],
    mirror_values: &[f64],
    sigma_e: f64,
) -> Vec<f64> {
    let half = perturbations.len();
    debug_assert_eq!(half, primary_values.len());
    debug_assert_eq!(half, mirror_values.len());
    let dim = perturbations[0].len();
    let (rp, rm) = rank_normalize(primary_values, mirror_values);
    let mut grad = vec![0.0; dim];
    for i in 0..half {
        axpy(&mut grad, rp[i] - rm[i], &perturbations[i]);
    }
    scale(&mut grad, 1.0 / (half as f64 * sigma_e));
    grad
}

/// Estimates the objective gradient and all measure gradients at `phi` from
/// `lambda_es` mirrored evaluations. The batch callback receives the
/// candidates in pair-interleaved order `[x_1, x'_1, x_2, x'_2, ...]` and
/// must return their evaluations in the same order; all evaluations are
/// handed back to the caller for reuse.
pub fn es_gradients(
    phi: &SolutionVector,
    measure_count: usize,
    cfg: &EsConfig,
    rng: &mut RngStream,
    eval_batch: &mut dyn FnMut(&[SolutionVector]) -> Result<Vec<Evaluation>>,
) -> Result<(GradientBundle, Vec<Evaluation>)> {
    let half = cfg.lambda_es / 2;
    let dim = phi.dim();
    let mut perturbations = Vec::with_capacity(half);
    let mut candidates = Vec::with_capacity(cfg.lambda_es);
    for _ in 0..half {
        let eps = rng.normal_vector(dim);
        let mut up = phi.as_slice().to_vec();
        let mut down = phi.as_slice().to_vec();
        axpy(&mut up, cfg.sigma_e, &eps);
        axpy(&mut down, -cfg.sigma_e, &eps);
        candidates.push(SolutionVector::new(up)?);
        candidates.push(SolutionVector::new(down)?);
        perturbations.push(eps);
    }
    let evaluations = eval_batch(&candidates)?;
    if evaluations.len() != cfg.lambda_es {
        return Err(QdError::invalid(format!(
            "es_gradients expected {} evaluations, got {}",
            cfg.lambda_es,
            evaluations.len()
        )));
    }
    for (i, ev) in evaluations.iter().enumerate() {
        if ev.measures.len() != measure_count {
            return Err(QdError::Evaluation {
                index: i,
                message: format!(
                    "evaluation has {} measures, expected {measure_count}",
                    ev.measures.len()
                ),
            });
        }
    }
    let primary: Vec<&Evaluation> = evaluations.iter().step_by(2).collect();
    let mirror: Vec<&Evaluation> = evaluations.iter().skip(1).step_by(2).collect();

    let f_grad = assemble_es_gradient(
        &perturbations,
        &primary.iter().map(|e| e.objective).collect::<Vec<_>>(),
        &mirror.iter().map(|e| e.objective).collect::<Vec<_>>(),
        cfg.sigma_e,
    );
    let mut measure_grads = Vec::with_capacity(measure_count);
    for j in 0..measure_count {
        measure_grads.push(assemble_es_gradient(
            &perturbations,
            &primary.iter().map(|e| e.measures[j]).collect::<Vec<_>>(),
            &mirror.iter().map(|e| e.measures[j]).collect::<Vec<_>>(),
            cfg.sigma_e,
        ));
    }
    Ok((GradientBundle::new(f_grad, measure_grads)?, evaluations))
}

/// Adam state for one parameter vector. Steps point along the passed
/// gradient (ascent); callers minimizing a loss pass the negated loss
/// gradient. A positive `l2_coeff` applies weight decay by subtracting
/// `l2_coeff * params` from the gradient before the moment updates.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2_coeff: f64,
}

impl AdamState {
    pub fn new(dim: usize, alpha: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            step_count: 0,
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2_coeff: 0.0,
        }
    }

    pub fn with_l2(dim: usize, alpha: f64, l2_coeff: f64) -> Self {
        AdamState {
            l2_coeff,
            ..Self::new(dim, alpha)
        }
    }

    pub fn dim(&self) -> usize {
        self.first_moment.len()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Bias-corrected Adam update. Returns the displacement to add to the
    /// parameters.
    pub fn ascent_step(&mut self, gradient: &[f64], params: &[f64]) -> Vec<f64> {
        debug_assert_eq!(gradient.len(), self.dim());
        debug_assert_eq!(params.len(), self.dim());
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let mut step = vec![0.0; self.dim()];
        for i in 0..self.dim() {
            let g = gradient[i] - self.l2_coeff * params[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] =
                self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bias1;
            let v_hat = self.second_moment[i] / bias2;
            step[i] = self.alpha * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        step
    }
}
