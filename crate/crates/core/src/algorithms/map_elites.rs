//! Plain grid MAP-Elites: the first batch draws around the initial
//! solution, later batches perturb uniformly selected elites with isotropic
//! Gaussian noise.

use crate::archive::Archive;
use crate::envs::EvalPool;
use crate::error::{QdError, Result};
use crate::rng::{streams, RngStream};
use crate::types::SolutionVector;

use super::{insert_evaluation, IterationReport, Scheduler};

pub struct MapElites {
    lambda: usize,
    sigma: f64,
    initial: SolutionVector,
    first_batch_done: bool,
    rng_select: RngStream,
    rng_noise: RngStream,
}

impl MapElites {
    pub fn new(lambda: usize, sigma: f64, initial: SolutionVector, seed: u64) -> Result<Self> {
        let mut problems = Vec::new();
        if lambda == 0 {
            problems.push("batch size must be positive".to_string());
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            problems.push(format!("noise std must be a positive real, got {sigma}"));
        }
        if !problems.is_empty() {
            return Err(QdError::Config(problems));
        }
        Ok(MapElites {
            lambda,
            sigma,
            initial,
            first_batch_done: false,
            rng_select: RngStream::new(seed, streams::ELITE_SELECT),
            rng_noise: RngStream::new(seed, streams::VARIATION),
        })
    }

    fn perturb(&mut self, base: &[f64]) -> Result<SolutionVector> {
        let mut v = base.to_vec();
        for x in v.iter_mut() {
            *x += self.sigma * self.rng_noise.standard_normal();
        }
        SolutionVector::new(v)
    }
}

impl Scheduler for MapElites {
    fn name(&self) -> &'static str {
        "map_elites"
    }

    fn iteration_cost(&self) -> u64 {
        self.lambda as u64
    }

    fn run_iteration(
        &mut self,
        archive: &mut Archive,
        pool: &EvalPool<'_>,
    ) -> Result<IterationReport> {
        let mut report = IterationReport::default();
        let parents: Vec<SolutionVector> = if !self.first_batch_done {
            vec![self.initial.clone(); self.lambda]
        } else {
            (0..self.lambda)
                .map(|_| {
                    archive
                        .random_elite(&mut self.rng_select)
                        .map(|c| c.solution.clone())
                })
                .collect::<Result<_>>()?
        };
        let candidates: Vec<SolutionVector> = parents
            .iter()
            .map(|p| self.perturb(p))
            .collect::<Result<_>>()?;
        let evaluations = pool.evaluate_batch(&candidates)?;
        report.evaluations += evaluations.len() as u64;
        for (candidate, evaluation) in candidates.iter().zip(evaluations.iter()) {
            insert_evaluation(archive, candidate.clone(), evaluation, &mut report)?;
        }
        self.first_batch_done = true;
        Ok(report)
    }
}
