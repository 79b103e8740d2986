//! The QD schedulers: coefficient-space gradient branching (with estimated,
//! critic-assisted, or exact gradients), plain grid MAP-Elites, the
//! policy-gradient-assisted variant, and the explore-exploit ES variant.
//! Each exposes one uniform entry point, [`Scheduler::run_iteration`], with
//! exact per-iteration evaluation accounting.

mod cma_mega;
mod map_elites;
mod me_es;
mod novelty;
mod pga_me;

pub use cma_mega::{CmaMega, GradientMode};
pub use map_elites::MapElites;
pub use me_es::{MeEs, Phase};
pub use novelty::{NoveltyStore, EMPTY_STORE_NOVELTY};
pub use pga_me::{iso_line_variation, PgaMapElites};

use crate::archive::{Archive, InsertOutcome, InsertStatus};
use crate::envs::{EvalPool, Evaluator};
use crate::error::{QdError, Result};
use crate::nn::MlpSpec;
use crate::rng::RngStream;
use crate::td3::{Td3Config, Td3State};
use crate::types::{Evaluation, SolutionVector};

/// Per-iteration bookkeeping returned by every scheduler.
#[derive(Debug, Clone, Default)]
pub struct IterationReport {
    pub evaluations: u64,
    pub new_cells: usize,
    pub improved_cells: usize,
    pub restarted: bool,
}

impl IterationReport {
    fn tally(&mut self, outcome: &InsertOutcome) {
        match outcome.status {
            InsertStatus::NewCell => self.new_cells += 1,
            InsertStatus::ImprovedCell => self.improved_cells += 1,
            InsertStatus::NotAdded => {}
        }
    }
}

pub trait Scheduler: Send {
    fn name(&self) -> &'static str;

    /// Evaluations consumed by one steady-state iteration.
    fn iteration_cost(&self) -> u64;

    fn run_iteration(&mut self, archive: &mut Archive, pool: &EvalPool<'_>)
        -> Result<IterationReport>;
}

fn insert_evaluation(
    archive: &mut Archive,
    solution: SolutionVector,
    evaluation: &Evaluation,
    report: &mut IterationReport,
) -> Result<InsertOutcome> {
    let outcome = archive.insert(
        solution,
        evaluation.objective,
        evaluation.measures.clone(),
    )?;
    report.tally(&outcome);
    Ok(outcome)
}

/// Critic machinery shared by the schedulers that train TD3. On
/// environments without transitions the machinery is inert: the greedy-actor
/// slot holds a fixed random solution, gradient requests report
/// unavailability, and training is a no-op.
pub enum TdMachinery {
    Active {
        state: Box<Td3State>,
        cfg: Td3Config,
    },
    Inert {
        actor: SolutionVector,
    },
}

impl TdMachinery {
    pub fn build(
        evaluator: &dyn Evaluator,
        critic_hidden: &[usize],
        cfg: Td3Config,
        rng: &mut RngStream,
    ) -> Result<Self> {
        match (evaluator.transition_dims(), evaluator.policy_spec()) {
            (Some((state_dim, action_dim)), Some(policy_spec)) => {
                let state = Td3State::new(
                    state_dim,
                    action_dim,
                    policy_spec.clone(),
                    critic_hidden,
                    &cfg,
                    rng,
                )?;
                Ok(TdMachinery::Active {
                    state: Box::new(state),
                    cfg,
                })
            }
            _ => {
                log::warn!(
                    "environment {} provides no transitions; critic machinery is inert",
                    evaluator.id()
                );
                Ok(TdMachinery::Inert {
                    actor: evaluator.random_initial(rng),
                })
            }
        }
    }

    pub fn greedy_actor(&self) -> Result<SolutionVector> {
        match self {
            TdMachinery::Active { state, .. } => {
                SolutionVector::new(state.actor_params().to_vec())
            }
            TdMachinery::Inert { actor } => Ok(actor.clone()),
        }
    }

    pub fn policy_spec(&self) -> Option<&MlpSpec> {
        match self {
            TdMachinery::Active { state, .. } => Some(state.policy_spec()),
            TdMachinery::Inert { .. } => None,
        }
    }

    pub fn objective_gradient(&mut self, phi: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        match self {
            TdMachinery::Active { state, cfg } => state.objective_gradient(phi, cfg, rng),
            TdMachinery::Inert { .. } => Err(QdError::GradientUnavailable(
                "no critic on this environment".into(),
            )),
        }
    }

    pub fn objective_gradient_with_batch(
        &mut self,
        phi: &[f64],
        batch: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        match self {
            TdMachinery::Active { state, .. } => {
                state.objective_gradient_with_batch(phi, batch, rng)
            }
            TdMachinery::Inert { .. } => Err(QdError::GradientUnavailable(
                "no critic on this environment".into(),
            )),
        }
    }

    pub fn has_experience(&self) -> bool {
        match self {
            TdMachinery::Active { state, .. } => !state.buffer.is_empty(),
            TdMachinery::Inert { .. } => false,
        }
    }

    pub fn add_experience<'a>(
        &mut self,
        evaluations: impl Iterator<Item = &'a Evaluation>,
    ) -> Result<()> {
        if let TdMachinery::Active { state, .. } = self {
            for ev in evaluations {
                state.buffer.add_all(&ev.transitions)?;
            }
        }
        Ok(())
    }

    pub fn train(&mut self, rng: &mut RngStream) -> Result<()> {
        if let TdMachinery::Active { state, cfg } = self {
            state.train(cfg, rng)?;
        }
        Ok(())
    }
}
