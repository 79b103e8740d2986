//! Budget accounting. Per-iteration evaluation costs are fixed and declared
//! up front; the runner later asserts the actual evaluator-call count equals
//! the planned total, so budgets can never drift silently.
//!
//! Strict accounting charges every evaluation. The schedulers that evaluate
//! one extra solution per iteration on top of their nominal batch (the
//! search mean, the greedy actor) then run `floor` iterations within the
//! budget. Nominal accounting runs budget / lambda iterations instead,
//! leaving the extra evaluation uncharged.

use serde::Serialize;

use crate::error::{QdError, Result};

use super::config::{Accounting, AlgorithmConfig, ExperimentConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Plan {
    /// Scheduler iterations, including any seeding iteration.
    pub iterations: u64,
    /// Evaluations per steady-state iteration.
    pub steady_cost: u64,
    /// Evaluations of the seeding iteration (0 when there is none).
    pub seed_cost: u64,
    /// Exact number of evaluations the run will perform.
    pub total_evaluations: u64,
}

pub fn plan(cfg: &ExperimentConfig) -> Result<Plan> {
    let budget = cfg.run.budget;
    let accounting = cfg.run.accounting;
    match &cfg.algorithm {
        AlgorithmConfig::CmaMegaEs {
            lambda,
            lambda_es,
            exact_gradients,
            ..
        } => {
            let cost = if *exact_gradients {
                *lambda as u64
            } else {
                (*lambda + *lambda_es) as u64
            };
            fixed_cost_plan(budget, cost)
        }
        AlgorithmConfig::CmaMegaTd3Es {
            lambda, lambda_es, ..
        } => fixed_cost_plan(budget, (*lambda + *lambda_es) as u64),
        AlgorithmConfig::MapElites { lambda, .. } => fixed_cost_plan(budget, *lambda as u64),
        AlgorithmConfig::PgaMapElites {
            lambda, g_init, ..
        } => {
            let seed = *g_init as u64;
            let cost = *lambda as u64 + 1;
            let iters = match accounting {
                Accounting::Strict => {
                    if budget <= seed + cost {
                        return Err(QdError::config(format!(
                            "budget {budget} cannot cover {seed} seeding evaluations plus one batch of {cost}"
                        )));
                    }
                    (budget - seed) / cost
                }
                Accounting::Nominal => {
                    let nominal = *lambda as u64;
                    if budget % nominal != 0 || budget == 0 {
                        return Err(QdError::config(format!(
                            "nominal accounting: budget {budget} must be a positive multiple of the batch size {nominal}"
                        )));
                    }
                    budget / nominal
                }
            };
            Ok(Plan {
                iterations: 1 + iters,
                steady_cost: cost,
                seed_cost: seed,
                total_evaluations: seed + iters * cost,
            })
        }
        AlgorithmConfig::MeEs { lambda, .. } => {
            let cost = *lambda as u64 + 1;
            let iters = match accounting {
                Accounting::Strict => {
                    if budget < cost {
                        return Err(QdError::config(format!(
                            "budget {budget} is below one iteration's cost {cost}"
                        )));
                    }
                    budget / cost
                }
                Accounting::Nominal => {
                    let nominal = *lambda as u64;
                    if budget % nominal != 0 || budget == 0 {
                        return Err(QdError::config(format!(
                            "nominal accounting: budget {budget} must be a positive multiple of the sample count {nominal}"
                        )));
                    }
                    budget / nominal
                }
            };
            Ok(Plan {
                iterations: iters,
                steady_cost: cost,
                seed_cost: 0,
                total_evaluations: iters * cost,
            })
        }
    }
}

fn fixed_cost_plan(budget: u64, cost: u64) -> Result<Plan> {
    if cost == 0 {
        return Err(QdError::config("per-iteration cost must be positive"));
    }
    if budget == 0 || budget % cost != 0 {
        return Err(QdError::config(format!(
            "budget {budget} must be a positive multiple of the per-iteration cost {cost}"
        )));
    }
    Ok(Plan {
        iterations: budget / cost,
        steady_cost: cost,
        seed_cost: 0,
        total_evaluations: budget,
    })
}
