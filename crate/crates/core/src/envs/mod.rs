//! Built-in evaluation environments behind a single evaluator interface.
//!
//! Two environments ship with the crate: an analytic benchmark with exact
//! gradients ([`LinearProjectionSphere`]) and a deterministic toy episodic
//! MDP with contact-style measures ([`GaitPoint`]). Third-party evaluators
//! plug in by implementing [`Evaluator`]: supply an objective, measures,
//! optionally episode transitions, and optionally analytic gradients.

mod gait_point;
mod lp_sphere;

pub use gait_point::GaitPoint;
pub use lp_sphere::LinearProjectionSphere;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{QdError, Result};
use crate::nn::MlpSpec;
use crate::rng::{streams, RngStream};
use crate::types::{Evaluation, GradientBundle, SolutionVector};

pub trait Evaluator: Send + Sync {
    fn id(&self) -> &'static str;

    fn solution_dim(&self) -> usize;

    fn measure_count(&self) -> usize;

    fn measure_lower(&self) -> Vec<f64>;

    fn measure_upper(&self) -> Vec<f64>;

    /// Runs one evaluation episode. Deterministic environments ignore `rng`.
    fn evaluate(&self, solution: &SolutionVector, rng: &mut RngStream) -> Result<Evaluation>;

    /// Closed-form gradients, for environments that have them.
    fn analytic_gradients(&self, _solution: &SolutionVector) -> Result<GradientBundle> {
        Err(QdError::Unsupported(format!(
            "{}: analytic gradients are not available",
            self.id()
        )))
    }

    /// Canonical starting solution.
    fn initial_solution(&self, rng: &mut RngStream) -> SolutionVector;

    /// Fresh randomly initialized solution, for random archive seeding.
    fn random_initial(&self, rng: &mut RngStream) -> SolutionVector;

    /// `(state_dim, action_dim)` when evaluations carry transitions.
    fn transition_dims(&self) -> Option<(usize, usize)> {
        None
    }

    /// The policy network decoded from solution vectors, for MDP
    /// environments.
    fn policy_spec(&self) -> Option<&MlpSpec> {
        None
    }
}

/// Builds one of the built-in environments by id string.
pub fn build_env(
    id: &str,
    lp_sphere_dim: usize,
    gait_hidden: &[usize],
    gait_noise_std: f64,
) -> Result<Box<dyn Evaluator>> {
    match id {
        "lp_sphere" => Ok(Box::new(LinearProjectionSphere::new(lp_sphere_dim)?)),
        "gait_point" => Ok(Box::new(GaitPoint::new(gait_hidden, gait_noise_std)?)),
        other => Err(QdError::config(format!(
            "unknown environment id {other:?} (expected lp_sphere or gait_point)"
        ))),
    }
}

/// Evaluation front-end owned by the runner: counts every evaluation, hands
/// each one a private rng stream derived from its global index, and fans
/// batches out over a worker pool. Results come back in batch order no
/// matter how the pool schedules them, so parallel runs reproduce
/// single-threaded runs.
pub struct EvalPool<'a> {
    evaluator: &'a dyn Evaluator,
    seed: u64,
    counter: AtomicU64,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> EvalPool<'a> {
    pub fn new(evaluator: &'a dyn Evaluator, seed: u64, threads: usize) -> Result<Self> {
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| QdError::config(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(EvalPool {
            evaluator,
            seed,
            counter: AtomicU64::new(0),
            pool,
        })
    }

    pub fn evaluator(&self) -> &dyn Evaluator {
        self.evaluator
    }

    /// Total evaluations performed so far.
    pub fn count(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }

    fn run_indexed(&self, index: u64, solution: &SolutionVector) -> Result<Evaluation> {
        let mut rng = RngStream::new(self.seed, streams::EVAL_BASE + index);
        let evaluation = self.evaluator.evaluate(solution, &mut rng)?;
        if evaluation.measures.len() != self.evaluator.measure_count() {
            return Err(QdError::invalid(format!(
                "evaluator {} returned {} measures, declared {}",
                self.evaluator.id(),
                evaluation.measures.len(),
                self.evaluator.measure_count()
            )));
        }
        Ok(evaluation)
    }

    pub fn evaluate_one(&self, solution: &SolutionVector) -> Result<Evaluation> {
        let index = self.counter.fetch_add(1, Ordering::SeqCst);
        self.run_indexed(index, solution)
    }

    /// Evaluates a batch, in parallel when a pool is configured. The i-th
    /// result always belongs to the i-th solution.
    pub fn evaluate_batch(&self, solutions: &[SolutionVector]) -> Result<Vec<Evaluation>> {
        let start = self
            .counter
            .fetch_add(solutions.len() as u64, Ordering::SeqCst);
        let job = |(i, s): (usize, &SolutionVector)| -> Result<Evaluation> {
            self.run_indexed(start + i as u64, s).map_err(|e| match e {
                QdError::Evaluation { .. } => e,
                other => QdError::Evaluation {
                    index: i,
                    message: other.to_string(),
                },
            })
        };
        match &self.pool {
            None => solutions.iter().enumerate().map(job).collect(),
            Some(pool) => pool.install(|| {
                use rayon::prelude::*;
                solutions.par_iter().enumerate().map(job).collect()
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_counts_and_preserves_order() {
        let env = LinearProjectionSphere::new(4).unwrap();
        let pool = EvalPool::new(&env, 3, 1).unwrap();
        let sols: Vec<SolutionVector> = (0..5)
            .map(|i| SolutionVector::new(vec![i as f64; 4]).unwrap())
            .collect();
        let evals = pool.evaluate_batch(&sols).unwrap();
        assert_eq!(pool.count(), 5);
        for (i, (s, e)) in sols.iter().zip(evals.iter()).enumerate() {
            let expected = env
                .evaluate(s, &mut RngStream::new(0, 0))
                .unwrap()
                .objective;
            assert_eq!(e.objective, expected, "order broken at {i}");
        }
    }

    #[test]
    fn parallel_pool_matches_sequential() {
        let env = GaitPoint::new(&[8], 0.1).unwrap();
        let mut rng = RngStream::new(1, streams::INIT);
        let sols: Vec<SolutionVector> = (0..6).map(|_| env.random_initial(&mut rng)).collect();
        let seq_pool = EvalPool::new(&env, 42, 1).unwrap();
        let par_pool = EvalPool::new(&env, 42, 4).unwrap();
        let seq = seq_pool.evaluate_batch(&sols).unwrap();
        let par = par_pool.evaluate_batch(&sols).unwrap();
        for (a, b) in seq.iter().zip(par.iter()) {
            assert_eq!(a.objective.to_bits(), b.objective.to_bits());
            assert_eq!(a.measures, b.measures);
        }
    }

    #[test]
    fn unknown_env_id_is_a_config_error() {
        assert!(build_env("nope", 20, &[32], 0.0).is_err());
    }
}
