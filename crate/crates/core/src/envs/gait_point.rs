//! Deterministic toy episodic MDP with contact-style measures.
//!
//! A point agent builds forward velocity by engaging one of two "feet"
//! (action channels). Each foot is only effective during its half of a
//! 20-step gait cycle, and actions incur a torque-like quadratic penalty,
//! so reward does not align with the measures: the measures record the
//! fraction of steps each foot was engaged, regardless of whether the
//! engagement was well timed.
//!
//! The policy observes (velocity, gait phase, previous action) and outputs
//! two actions in (-1, 1). Episodes end by timeout only.

use crate::error::{QdError, Result};
use crate::nn::{MlpSpec, MlpWorkspace};
use crate::rng::RngStream;
use crate::types::{Evaluation, SolutionVector, Transition};

use super::Evaluator;

pub const STATE_DIM: usize = 4;
pub const ACTION_DIM: usize = 2;
pub const EPISODE_LEN: usize = 200;
pub const GAIT_PERIOD: usize = 20;

const VELOCITY_DECAY: f64 = 0.9;
const DRIVE_GAIN: f64 = 0.1;
const ACTION_COST: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct GaitPoint {
    policy: MlpSpec,
    noise_std: f64,
}

impl GaitPoint {
    pub fn new(hidden: &[usize], noise_std: f64) -> Result<Self> {
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(QdError::config(format!(
                "gait_point noise std must be a non-negative real, got {noise_std}"
            )));
        }
        Ok(GaitPoint {
            policy: MlpSpec::policy(STATE_DIM, hidden, ACTION_DIM)?,
            noise_std,
        })
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    fn phase(t: usize) -> f64 {
        (t % GAIT_PERIOD) as f64 / GAIT_PERIOD as f64
    }

    /// Front foot drives during the first half of the gait cycle.
    fn front_window(t: usize) -> bool {
        t % GAIT_PERIOD < GAIT_PERIOD / 2
    }
}

impl Evaluator for GaitPoint {
    fn id(&self) -> &'static str {
        "gait_point"
    }

    fn solution_dim(&self) -> usize {
        self.policy.param_count()
    }

    fn measure_count(&self) -> usize {
        2
    }

    fn measure_lower(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn measure_upper(&self) -> Vec<f64> {
        vec![1.0, 1.0]
    }

    fn evaluate(&self, solution: &SolutionVector, rng: &mut RngStream) -> Result<Evaluation> {
        if solution.dim() != self.policy.param_count() {
            return Err(QdError::invalid(format!(
                "gait_point expects {} policy parameters, got {}",
                self.policy.param_count(),
                solution.dim()
            )));
        }
        let mut ws = MlpWorkspace::new(&self.policy);
        let mut velocity = 0.0;
        let mut prev_action = [0.0f64; ACTION_DIM];
        let mut engaged = [0usize; ACTION_DIM];
        let mut objective = 0.0;
        let mut transitions = Vec::with_capacity(EPISODE_LEN);

        let observe = |v: f64, t: usize, prev: &[f64; ACTION_DIM], rng: &mut RngStream| {
            let mut obs = [v, Self::phase(t), prev[0], prev[1]];
            if self.noise_std > 0.0 {
                for o in obs.iter_mut() {
                    *o += self.noise_std * rng.standard_normal();
                }
            }
            obs
        };

        let mut obs = observe(velocity, 0, &prev_action, rng);
        for t in 0..EPISODE_LEN {
            self.policy.forward_ws(solution.as_slice(), &obs, &mut ws);
            let action = [ws.output()[0], ws.output()[1]];

            let (w_front, w_back) = if Self::front_window(t) {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            };
            let drive = action[0].max(0.0) * w_front + action[1].max(0.0) * w_back;
            let next_velocity = VELOCITY_DECAY * velocity + DRIVE_GAIN * drive;
            let reward =
                next_velocity - ACTION_COST * (action[0] * action[0] + action[1] * action[1]);
            objective += reward;
            for (count, &a) in engaged.iter_mut().zip(action.iter()) {
                if a > 0.0 {
                    *count += 1;
                }
            }

            velocity = next_velocity;
            prev_action = action;
            let next_obs = observe(velocity, t + 1, &prev_action, rng);
            transitions.push(Transition {
                state: obs.to_vec(),
                action: action.to_vec(),
                reward,
                next_state: next_obs.to_vec(),
                done: false,
            });
            obs = next_obs;
        }

        let measures = engaged
            .iter()
            .map(|&c| c as f64 / EPISODE_LEN as f64)
            .collect();
        Evaluation::new(objective, measures, transitions)
    }

    fn initial_solution(&self, rng: &mut RngStream) -> SolutionVector {
        self.random_initial(rng)
    }

    fn random_initial(&self, rng: &mut RngStream) -> SolutionVector {
        SolutionVector::new(self.policy.xavier_init(rng)).expect("xavier init is finite")
    }

    fn transition_dims(&self) -> Option<(usize, usize)> {
        Some((STATE_DIM, ACTION_DIM))
    }

    fn policy_spec(&self) -> Option<&MlpSpec> {
        Some(&self.policy)
    }
}
