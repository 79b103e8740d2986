//! Explore-exploit ES scheduler.
//!
//! Maintains one search mean and an Adam optimizer. Each iteration estimates
//! a gradient from mirrored samples -- of the objective in exploit phases,
//! of novelty in explore phases -- steps the mean, evaluates it, inserts it
//! into the archive, and records its measures in the novelty store. After a
//! fixed number of generations the phase toggles, the optimizer resets, and
//! the mean restarts from a selected elite.

use crate::archive::Archive;
use crate::envs::EvalPool;
use crate::error::{QdError, Result};
use crate::es_grad::{assemble_es_gradient, AdamState};
use crate::rng::{streams, RngStream};
use crate::types::SolutionVector;
use crate::vecmath::axpy;

use super::{insert_evaluation, novelty::NoveltyStore, IterationReport, Scheduler};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Exploit,
    Explore,
}

pub struct MeEs {
    lambda: usize,
    sigma: f64,
    n_optim_gens: usize,
    alpha: f64,
    l2_coeff: f64,
    mean: SolutionVector,
    adam: AdamState,
    phase: Phase,
    gens_in_phase: usize,
    novelty: NoveltyStore,
    rng_es: RngStream,
    rng_select: RngStream,
}

impl MeEs {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda: usize,
        sigma: f64,
        n_optim_gens: usize,
        alpha: f64,
        l2_coeff: f64,
        k_novelty: usize,
        initial: SolutionVector,
        seed: u64,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if lambda == 0 || lambda % 2 != 0 {
            problems.push(format!("sample count must be even and positive, got {lambda}"));
        }
        if !(sigma > 0.0) {
            problems.push("noise std must be positive".into());
        }
        if n_optim_gens == 0 {
            problems.push("generations per phase must be positive".into());
        }
        if !(alpha > 0.0) {
            problems.push("learning rate must be positive".into());
        }
        if !(l2_coeff >= 0.0) {
            problems.push("l2 coefficient must be non-negative".into());
        }
        if !problems.is_empty() {
            return Err(QdError::Config(problems));
        }
        let dim = initial.dim();
        Ok(MeEs {
            lambda,
            sigma,
            n_optim_gens,
            alpha,
            l2_coeff,
            mean: initial,
            adam: AdamState::with_l2(dim, alpha, l2_coeff),
            phase: Phase::Exploit,
            gens_in_phase: 0,
            novelty: NoveltyStore::new(k_novelty)?,
            rng_es: RngStream::new(seed, streams::ME_ES),
            rng_select: RngStream::new(seed, streams::ELITE_SELECT),
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn novelty_store(&self) -> &NoveltyStore {
        &self.novelty
    }

    /// Entering exploit: a random elite among the two highest-objective
    /// cells. Entering explore: a uniformly random elite.
    fn restart_mean(&mut self, archive: &Archive) -> Result<()> {
        if archive.is_empty() {
            return Ok(());
        }
        self.mean = match self.phase {
            Phase::Exploit => {
                let mut cells: Vec<_> = archive.cells().collect();
                cells.sort_by(|(ia, a), (ib, b)| {
                    b.objective.total_cmp(&a.objective).then(ia.cmp(ib))
                });
                let top = cells.len().min(2);
                cells[self.rng_select.index(top)].1.solution.clone()
            }
            Phase::Explore => archive.random_elite(&mut self.rng_select)?.solution.clone(),
        };
        Ok(())
    }
}

impl Scheduler for MeEs {
    fn name(&self) -> &'static str {
        "me_es"
    }

    fn iteration_cost(&self) -> u64 {
        self.lambda as u64 + 1
    }

    fn run_iteration(
        &mut self,
        archive: &mut Archive,
        pool: &EvalPool<'_>,
    ) -> Result<IterationReport> {
        let mut report = IterationReport::default();

        if self.gens_in_phase == self.n_optim_gens {
            self.phase = match self.phase {
                Phase::Exploit => Phase::Explore,
                Phase::Explore => Phase::Exploit,
            };
            self.gens_in_phase = 0;
            self.adam = AdamState::with_l2(self.mean.dim(), self.alpha, self.l2_coeff);
            self.restart_mean(archive)?;
        }

        let half = self.lambda / 2;
        let dim = self.mean.dim();
        let mut perturbations = Vec::with_capacity(half);
        let mut candidates = Vec::with_capacity(self.lambda);
        for _ in 0..half {
            let eps = self.rng_es.normal_vector(dim);
            let mut up = self.mean.as_slice().to_vec();
            let mut down = self.mean.as_slice().to_vec();
            axpy(&mut up, self.sigma, &eps);
            axpy(&mut down, -self.sigma, &eps);
            candidates.push(SolutionVector::new(up)?);
            candidates.push(SolutionVector::new(down)?);
            perturbations.push(eps);
        }
        let evaluations = pool.evaluate_batch(&candidates)?;
        report.evaluations += evaluations.len() as u64;

        let score = |e: &crate::types::Evaluation| match self.phase {
            Phase::Exploit => e.objective,
            Phase::Explore => self.novelty.novelty(&e.measures),
        };
        let primary: Vec<f64> = evaluations.iter().step_by(2).map(&score).collect();
        let mirror: Vec<f64> = evaluations.iter().skip(1).step_by(2).map(&score).collect();
        let gradient = assemble_es_gradient(&perturbations, &primary, &mirror, self.sigma);

        let step = self.adam.ascent_step(&gradient, self.mean.as_slice());
        let mut next = self.mean.as_slice().to_vec();
        axpy(&mut next, 1.0, &step);
        self.mean = SolutionVector::new(next)?;

        let mean_eval = pool.evaluate_one(&self.mean)?;
        report.evaluations += 1;
        insert_evaluation(archive, self.mean.clone(), &mean_eval, &mut report)?;
        self.novelty.add(mean_eval.measures.clone());

        self.gens_in_phase += 1;
        Ok(report)
    }
}
