//! Experiment runner: builds the environment and scheduler from a
//! configuration, drives the planned number of iterations, records one
//! metrics row per iteration, audits the evaluation count against the plan,
//! and persists archive CSV, metrics CSV, and summary JSON atomically.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::algorithms::{
    CmaMega, GradientMode, MapElites, MeEs, PgaMapElites, Scheduler, TdMachinery,
};
use crate::archive::{Archive, GridSpec};
use crate::envs::{build_env, EvalPool, Evaluator};
use crate::error::{QdError, Result};
use crate::es_grad::EsConfig;
use crate::rng::{streams, RngStream};

use super::config::{AlgorithmConfig, EnvConfig, ExperimentConfig};
use super::metrics::{qd_score_auc, write_metrics_csv, MetricsRow};
use super::plan::{plan, Plan};
use super::write_atomic;

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub qd_score: f64,
    pub coverage: f64,
    pub best_performance: f64,
    pub qd_score_auc: f64,
    pub evaluations: u64,
    pub seed: u64,
    pub config_hash: String,
}

pub struct RunResult {
    pub archive: Archive,
    pub history: Vec<MetricsRow>,
    pub summary: Summary,
    pub plan: Plan,
}

pub fn build_evaluator(env: &EnvConfig) -> Result<Box<dyn Evaluator>> {
    match env {
        EnvConfig::LpSphere { solution_dim } => build_env("lp_sphere", *solution_dim, &[], 0.0),
        EnvConfig::GaitPoint {
            policy_hidden,
            noise_std,
        } => build_env("gait_point", 0, policy_hidden, *noise_std),
    }
}

pub fn build_scheduler(
    cfg: &ExperimentConfig,
    evaluator: &dyn Evaluator,
    seed: u64,
) -> Result<Box<dyn Scheduler>> {
    let measure_count = evaluator.measure_count();
    let mut init_rng = RngStream::new(seed, streams::INIT);
    match &cfg.algorithm {
        AlgorithmConfig::CmaMegaEs {
            lambda,
            sigma_g,
            eta,
            lambda_es,
            sigma_e,
            exact_gradients,
        } => {
            let mode = if *exact_gradients {
                GradientMode::Exact
            } else {
                GradientMode::Estimated
            };
            let scheduler = CmaMega::new(
                mode,
                *lambda,
                *sigma_g,
                *eta,
                EsConfig::new(*lambda_es, *sigma_e)?,
                None,
                evaluator.initial_solution(&mut init_rng),
                measure_count,
                seed,
            )?;
            Ok(Box::new(scheduler))
        }
        AlgorithmConfig::CmaMegaTd3Es {
            lambda,
            sigma_g,
            eta,
            lambda_es,
            sigma_e,
            td3,
        } => {
            let machinery = TdMachinery::build(
                evaluator,
                &td3.critic_hidden,
                td3.cfg.clone(),
                &mut RngStream::new(seed, streams::TD3_INIT),
            )?;
            let scheduler = CmaMega::new(
                GradientMode::EstimatedWithCritic,
                *lambda,
                *sigma_g,
                *eta,
                EsConfig::new(*lambda_es, *sigma_e)?,
                Some(machinery),
                evaluator.initial_solution(&mut init_rng),
                measure_count,
                seed,
            )?;
            Ok(Box::new(scheduler))
        }
        AlgorithmConfig::MapElites { lambda, sigma } => {
            let scheduler = MapElites::new(
                *lambda,
                *sigma,
                evaluator.initial_solution(&mut init_rng),
                seed,
            )?;
            Ok(Box::new(scheduler))
        }
        AlgorithmConfig::PgaMapElites {
            lambda,
            n_grad,
            alpha_grad,
            sigma1,
            sigma2,
            g_init,
            td3,
        } => {
            let machinery = TdMachinery::build(
                evaluator,
                &td3.critic_hidden,
                td3.cfg.clone(),
                &mut RngStream::new(seed, streams::TD3_INIT),
            )?;
            let scheduler = PgaMapElites::new(
                *lambda,
                *n_grad,
                *alpha_grad,
                td3.cfg.gradient_batch,
                *sigma1,
                *sigma2,
                *g_init,
                machinery,
                seed,
            )?;
            Ok(Box::new(scheduler))
        }
        AlgorithmConfig::MeEs {
            lambda,
            sigma,
            n_optim_gens,
            alpha,
            l2_coeff,
            k_novelty,
        } => {
            let scheduler = MeEs::new(
                *lambda,
                *sigma,
                *n_optim_gens,
                *alpha,
                *l2_coeff,
                *k_novelty,
                evaluator.initial_solution(&mut init_rng),
                seed,
            )?;
            Ok(Box::new(scheduler))
        }
    }
}

/// Runs one trial to its planned budget. With an output directory, writes
/// `archive.csv`, `metrics.csv`, and `summary.json` (atomic writes).
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunResult> {
    let run_plan = plan(cfg)?;
    let evaluator = build_evaluator(&cfg.env)?;
    let grid = GridSpec::new(
        cfg.archive.dims.clone(),
        cfg.archive.lower.clone(),
        cfg.archive.upper.clone(),
    )?;
    if grid.measure_count() != evaluator.measure_count() {
        return Err(QdError::config(format!(
            "archive has {} measure dimensions but environment {} declares {}",
            grid.measure_count(),
            evaluator.id(),
            evaluator.measure_count()
        )));
    }
    let seed = cfg.run.seed;
    let threads = if cfg.run.deterministic {
        1
    } else {
        cfg.run.threads
    };
    let pool = EvalPool::new(evaluator.as_ref(), seed, threads)?;
    let mut scheduler = build_scheduler(cfg, evaluator.as_ref(), seed)?;
    let mut archive = Archive::new(grid);
    let mut history = Vec::with_capacity(run_plan.iterations as usize);

    for iteration in 1..=run_plan.iterations {
        let started = Instant::now();
        let report = scheduler.run_iteration(&mut archive, &pool)?;
        let expected = if iteration == 1 && run_plan.seed_cost > 0 {
            run_plan.seed_cost
        } else {
            run_plan.steady_cost
        };
        if report.evaluations != expected {
            return Err(QdError::invalid(format!(
                "iteration {iteration} used {} evaluations, planner declared {expected}",
                report.evaluations
            )));
        }
        let wall_time_s = if cfg.run.deterministic {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        };
        history.push(MetricsRow {
            iteration,
            evaluations: pool.count(),
            qd_score: archive.qd_score(cfg.run.min_objective)?,
            coverage: archive.coverage(),
            best_performance: archive.best_performance()?,
            wall_time_s,
        });
    }

    if pool.count() != run_plan.total_evaluations {
        return Err(QdError::invalid(format!(
            "run performed {} evaluations, planner declared {}",
            pool.count(),
            run_plan.total_evaluations
        )));
    }

    let summary = Summary {
        qd_score: archive.qd_score(cfg.run.min_objective)?,
        coverage: archive.coverage(),
        best_performance: archive.best_performance()?,
        qd_score_auc: qd_score_auc(&history),
        evaluations: pool.count(),
        seed,
        config_hash: cfg.config_hash(),
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("archive.csv"), |w| archive.save_csv(w))?;
        write_atomic(&dir.join("metrics.csv"), |w| {
            write_metrics_csv(&history, w)
        })?;
        write_atomic(&dir.join("summary.json"), |w| {
            let text = serde_json::to_string_pretty(&summary)
                .map_err(|e| QdError::parse("summary json", e.to_string()))?;
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")?;
            Ok(())
        })?;
    }

    Ok(RunResult {
        archive,
        history,
        summary,
        plan: run_plan,
    })
}
