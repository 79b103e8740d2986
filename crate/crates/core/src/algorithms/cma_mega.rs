//! Coefficient-space gradient branching.
//!
//! Each iteration evaluates the solution point, obtains its objective and
//! measure gradients, normalizes them to unit vectors, and branches
//! `lambda'` candidates along coefficient-weighted gradient combinations
//! sampled from the adapted distribution. Archive improvement ranks the
//! batch, the distribution adapts, and the solution point steps along the
//! recombination-weighted branch directions. When no branched candidate
//! changes the archive, the distribution resets and the solution point
//! restarts from a random elite.

use crate::archive::Archive;
use crate::cma::{improvement_rank, restart_check, CmaState};
use crate::envs::EvalPool;
use crate::error::{QdError, Result};
use crate::es_grad::{es_gradients, EsConfig};
use crate::rng::{streams, RngStream};
use crate::types::{Evaluation, GradientBundle, SolutionVector};
use crate::vecmath::{axpy, normalize_to_unit};

use super::{insert_evaluation, IterationReport, Scheduler, TdMachinery};

/// Where the gradient bundle comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// All gradients estimated from mirrored evaluations.
    Estimated,
    /// Objective gradient from the critic when experience exists, measures
    /// always estimated.
    EstimatedWithCritic,
    /// Exact gradients from the environment; no estimation evaluations.
    Exact,
}

pub struct CmaMega {
    mode: GradientMode,
    lambda: usize,
    lambda_prime: usize,
    eta: f64,
    es_cfg: EsConfig,
    measure_count: usize,
    solution: SolutionVector,
    cma: CmaState,
    td3: Option<TdMachinery>,
    rng_es: RngStream,
    rng_cma: RngStream,
    rng_select: RngStream,
    rng_td3: RngStream,
    critic_fallback_logged: bool,
}

impl CmaMega {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mode: GradientMode,
        lambda: usize,
        sigma_g: f64,
        eta: f64,
        es_cfg: EsConfig,
        td3: Option<TdMachinery>,
        initial: SolutionVector,
        measure_count: usize,
        seed: u64,
    ) -> Result<Self> {
        // one evaluation is reserved for the solution point; the critic
        // variant reserves one more for the greedy actor
        let reserved = match mode {
            GradientMode::EstimatedWithCritic => 2,
            _ => 1,
        };
        if lambda < reserved + 2 {
            return Err(QdError::config(format!(
                "batch size {lambda} leaves fewer than 2 branch slots"
            )));
        }
        if mode == GradientMode::EstimatedWithCritic && td3.is_none() {
            return Err(QdError::config(
                "critic-assisted mode needs TD3 machinery",
            ));
        }
        if mode != GradientMode::EstimatedWithCritic && td3.is_some() {
            return Err(QdError::config(
                "TD3 machinery is only used in critic-assisted mode",
            ));
        }
        let lambda_prime = lambda - reserved;
        let cma = CmaState::new(measure_count + 1, lambda_prime, sigma_g)?;
        Ok(CmaMega {
            mode,
            lambda,
            lambda_prime,
            eta,
            es_cfg,
            measure_count,
            solution: initial,
            cma,
            td3,
            rng_es: RngStream::new(seed, streams::ES),
            rng_cma: RngStream::new(seed, streams::CMA),
            rng_select: RngStream::new(seed, streams::ELITE_SELECT),
            rng_td3: RngStream::new(seed, streams::TD3),
            critic_fallback_logged: false,
        })
    }

    pub fn lambda_prime(&self) -> usize {
        self.lambda_prime
    }

    pub fn solution_point(&self) -> &SolutionVector {
        &self.solution
    }

    pub fn cma_state(&self) -> &CmaState {
        &self.cma
    }

    fn gradient_bundle(
        &mut self,
        pool: &EvalPool<'_>,
    ) -> Result<(GradientBundle, Vec<Evaluation>)> {
        if self.mode == GradientMode::Exact {
            let bundle = pool.evaluator().analytic_gradients(&self.solution)?;
            return Ok((bundle, Vec::new()));
        }
        let (mut bundle, es_evals) = es_gradients(
            &self.solution,
            self.measure_count,
            &self.es_cfg,
            &mut self.rng_es,
            &mut |batch| pool.evaluate_batch(batch),
        )?;
        if self.mode == GradientMode::EstimatedWithCritic {
            let td3 = self.td3.as_mut().expect("validated at construction");
            match td3.objective_gradient(self.solution.as_slice(), &mut self.rng_td3) {
                Ok(gradient) => bundle.objective = gradient,
                Err(QdError::GradientUnavailable(reason)) => {
                    if !self.critic_fallback_logged {
                        log::warn!("critic gradient unavailable ({reason}); using the ES estimate");
                        self.critic_fallback_logged = true;
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Ok((bundle, es_evals))
    }
}

impl Scheduler for CmaMega {
    fn name(&self) -> &'static str {
        match self.mode {
            GradientMode::Estimated => "cma_mega_es",
            GradientMode::EstimatedWithCritic => "cma_mega_td3_es",
            GradientMode::Exact => "cma_mega_exact",
        }
    }

    fn iteration_cost(&self) -> u64 {
        match self.mode {
            GradientMode::Exact => self.lambda as u64,
            _ => (self.lambda + self.es_cfg.lambda_es) as u64,
        }
    }

    fn run_iteration(
        &mut self,
        archive: &mut Archive,
        pool: &EvalPool<'_>,
    ) -> Result<IterationReport> {
        let mut report = IterationReport::default();

        let eval_star = pool.evaluate_one(&self.solution)?;
        report.evaluations += 1;
        insert_evaluation(archive, self.solution.clone(), &eval_star, &mut report)?;

        let (bundle, es_evals) = self.gradient_bundle(pool)?;
        report.evaluations += es_evals.len() as u64;

        let (unit_f, _) = normalize_to_unit(&bundle.objective)?;
        let unit_m: Vec<Vec<f64>> = bundle
            .measures
            .iter()
            .map(|g| normalize_to_unit(g).map(|(u, _)| u))
            .collect::<Result<_>>()?;

        let coefficients = self.cma.sample(self.lambda_prime, &mut self.rng_cma);
        let mut directions = Vec::with_capacity(self.lambda_prime);
        let mut candidates = Vec::with_capacity(self.lambda_prime);
        for c in &coefficients {
            let mut direction = vec![0.0; self.solution.dim()];
            axpy(&mut direction, c[0], &unit_f);
            for (j, m) in unit_m.iter().enumerate() {
                axpy(&mut direction, c[j + 1], m);
            }
            let mut candidate = self.solution.as_slice().to_vec();
            axpy(&mut candidate, 1.0, &direction);
            candidates.push(SolutionVector::new(candidate)?);
            directions.push(direction);
        }

        let branch_evals = pool.evaluate_batch(&candidates)?;
        report.evaluations += branch_evals.len() as u64;
        let mut outcomes = Vec::with_capacity(self.lambda_prime);
        for (candidate, evaluation) in candidates.iter().zip(branch_evals.iter()) {
            outcomes.push(insert_evaluation(
                archive,
                candidate.clone(),
                evaluation,
                &mut report,
            )?);
        }

        let ranked = improvement_rank(&outcomes);
        self.cma.update(&ranked, &coefficients)?;

        let mut step = vec![0.0; self.solution.dim()];
        for (w, &idx) in self.cma.weights().iter().zip(ranked.order.iter()) {
            axpy(&mut step, self.eta * w, &directions[idx]);
        }
        let mut stepped = self.solution.as_slice().to_vec();
        axpy(&mut stepped, 1.0, &step);
        self.solution = SolutionVector::new(stepped)?;

        if restart_check(&outcomes) {
            self.cma.reset();
            self.solution = archive.random_elite(&mut self.rng_select)?.solution.clone();
            report.restarted = true;
        }

        if self.mode == GradientMode::EstimatedWithCritic {
            let td3 = self.td3.as_mut().expect("validated at construction");
            let greedy = td3.greedy_actor()?;
            let greedy_eval = pool.evaluate_one(&greedy)?;
            report.evaluations += 1;
            insert_evaluation(archive, greedy, &greedy_eval, &mut report)?;

            td3.add_experience(
                std::iter::once(&eval_star)
                    .chain(es_evals.iter())
                    .chain(branch_evals.iter())
                    .chain(std::iter::once(&greedy_eval)),
            )?;
            td3.train(&mut self.rng_td3)?;
        }

        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::GridSpec;
    use crate::envs::{Evaluator, LinearProjectionSphere};

    fn setup(mode: GradientMode, lambda: usize) -> (CmaMega, LinearProjectionSphere) {
        let env = LinearProjectionSphere::new(8).unwrap();
        let es_cfg = EsConfig::new(10, 0.02).unwrap();
        let initial = env.initial_solution(&mut RngStream::new(0, streams::INIT));
        let td3 = if mode == GradientMode::EstimatedWithCritic {
            Some(TdMachinery::build(&env, &[8], Default::default(), &mut RngStream::new(0, 9)).unwrap())
        } else {
            None
        };
        let scheduler = CmaMega::new(mode, lambda, 1.0, 1.0, es_cfg, td3, initial, 2, 7).unwrap();
        (scheduler, env)
    }

    fn archive() -> Archive {
        Archive::new(GridSpec::new(vec![16, 16], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap())
    }

    #[test]
    fn branch_slots_per_variant() {
        let (es, _) = setup(GradientMode::Estimated, 100);
        assert_eq!(es.lambda_prime(), 99);
        let (td, _) = setup(GradientMode::EstimatedWithCritic, 100);
        assert_eq!(td.lambda_prime(), 98);
        let (exact, _) = setup(GradientMode::Exact, 100);
        assert_eq!(exact.lambda_prime(), 99);
    }

    #[test]
    fn iteration_cost_covers_every_evaluation() {
        for (mode, expected) in [
            (GradientMode::Estimated, 30u64),
            (GradientMode::EstimatedWithCritic, 30u64),
            (GradientMode::Exact, 20u64),
        ] {
            let (mut scheduler, env) = setup(mode, 20);
            let pool = EvalPool::new(&env, 7, 1).unwrap();
            let mut archive = archive();
            let report = scheduler.run_iteration(&mut archive, &pool).unwrap();
            assert_eq!(report.evaluations, expected, "{mode:?}");
            assert_eq!(pool.count(), expected, "{mode:?}");
            assert_eq!(scheduler.iteration_cost(), expected, "{mode:?}");
        }
    }

    #[test]
    fn restart_resets_distribution_and_reseeds_solution() {
        let (mut scheduler, env) = setup(GradientMode::Exact, 6);
        let pool = EvalPool::new(&env, 7, 1).unwrap();
        let mut archive = archive();
        // first iteration fills cells; keep iterating until a restart fires
        let mut restarted = false;
        for _ in 0..200 {
            let report = scheduler.run_iteration(&mut archive, &pool).unwrap();
            if report.restarted {
                restarted = true;
                let fresh = CmaState::new(3, scheduler.lambda_prime(), 1.0).unwrap();
                assert_eq!(scheduler.cma_state().mean(), fresh.mean());
                assert_eq!(scheduler.cma_state().sigma(), fresh.sigma());
                assert_eq!(scheduler.cma_state().covariance(), fresh.covariance());
                // the solution point is now an existing elite
                let found = archive
                    .cells()
                    .any(|(_, c)| c.solution == *scheduler.solution_point());
                assert!(found);
                break;
            }
        }
        assert!(restarted, "expected a restart within 200 iterations");
    }

    #[test]
    fn mode_machinery_consistency_is_validated() {
        let env = LinearProjectionSphere::new(8).unwrap();
        let es_cfg = EsConfig::new(10, 0.02).unwrap();
        let initial = env.initial_solution(&mut RngStream::new(0, streams::INIT));
        assert!(CmaMega::new(
            GradientMode::EstimatedWithCritic,
            20,
            1.0,
            1.0,
            es_cfg.clone(),
            None,
            initial.clone(),
            2,
            7
        )
        .is_err());
        let td3 =
            TdMachinery::build(&env, &[8], Default::default(), &mut RngStream::new(0, 9)).unwrap();
        assert!(CmaMega::new(
            GradientMode::Estimated,
            20,
            1.0,
            1.0,
            es_cfg,
            Some(td3),
            initial,
            2,
            7
        )
        .is_err());
    }
}
