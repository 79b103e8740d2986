//! Twin-critic deterministic policy gradient machinery: replay buffer,
//! critic regression against smoothed targets, delayed actor updates, Polyak
//! target tracking, and the large-batch objective-gradient estimate that the
//! coefficient-space scheduler consumes.
//!
//! The objective gradient deliberately has no evaluator access: once the
//! critic is trained, it prices any policy without new environment
//! interaction.

use crate::error::{QdError, Result};
use crate::es_grad::AdamState;
use crate::nn::{MlpSpec, MlpWorkspace};
use crate::rng::RngStream;
use crate::types::Transition;
use crate::vecmath::axpy;

/// Fixed-capacity FIFO transition store, struct-of-arrays so a million
/// transitions stay cache- and allocation-friendly.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    len: usize,
    write_pos: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(QdError::config("replay buffer capacity must be positive"));
        }
        Ok(ReplayBuffer {
            state_dim,
            action_dim,
            capacity,
            len: 0,
            write_pos: 0,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.state.len() != self.state_dim
            || t.next_state.len() != self.state_dim
            || t.action.len() != self.action_dim
        {
            return Err(QdError::invalid(
                "transition dimensions do not match the replay buffer",
            ));
        }
        if self.len < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_states.extend_from_slice(&t.next_state);
            self.dones.push(t.done);
            self.len += 1;
        } else {
            let s = self.write_pos * self.state_dim;
            self.states[s..s + self.state_dim].copy_from_slice(&t.state);
            self.next_states[s..s + self.state_dim].copy_from_slice(&t.next_state);
            let a = self.write_pos * self.action_dim;
            self.actions[a..a + self.action_dim].copy_from_slice(&t.action);
            self.rewards[self.write_pos] = t.reward;
            self.dones[self.write_pos] = t.done;
        }
        self.write_pos = (self.write_pos + 1) % self.capacity;
        Ok(())
    }

    pub fn add_all(&mut self, transitions: &[Transition]) -> Result<()> {
        for t in transitions {
            self.push(t)?;
        }
        Ok(())
    }

    fn physical(&self, logical: usize) -> usize {
        if self.len < self.capacity {
            logical
        } else {
            (self.write_pos + logical) % self.capacity
        }
    }

    /// Transition slot in FIFO order (0 is the oldest retained).
    pub fn get(&self, logical: usize) -> Transition {
        let p = self.physical(logical);
        Transition {
            state: self.state(p).to_vec(),
            action: self.action(p).to_vec(),
            reward: self.rewards[p],
            next_state: self.next_state(p).to_vec(),
            done: self.dones[p],
        }
    }

    fn state(&self, p: usize) -> &[f64] {
        &self.states[p * self.state_dim..(p + 1) * self.state_dim]
    }

    fn action(&self, p: usize) -> &[f64] {
        &self.actions[p * self.action_dim..(p + 1) * self.action_dim]
    }

    fn next_state(&self, p: usize) -> &[f64] {
        &self.next_states[p * self.state_dim..(p + 1) * self.state_dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Config {
    /// Training discount; archive objectives stay undiscounted.
    pub gamma: f64,
    /// Polyak rate for target tracking.
    pub tau: f64,
    /// Critic steps per actor/target update.
    pub policy_delay: usize,
    /// Target-policy smoothing noise std.
    pub smoothing_sigma: f64,
    /// Per-dimension clip for smoothing noise.
    pub smoothing_clip: f64,
    /// Critic regression batch size.
    pub critic_batch: usize,
    /// Critic (and actor) Adam learning rate.
    pub critic_lr: f64,
    /// Critic steps per outer iteration.
    pub critic_steps: usize,
    /// Batch size for the objective-gradient estimate.
    pub gradient_batch: usize,
    pub buffer_capacity: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            smoothing_sigma: 0.2,
            smoothing_clip: 0.5,
            critic_batch: 256,
            critic_lr: 3e-4,
            critic_steps: 600,
            gradient_batch: 65_536,
            buffer_capacity: 1_000_000,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            problems.push(format!("gamma must lie in (0,1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            problems.push(format!("tau must lie in (0,1], got {}", self.tau));
        }
        if self.policy_delay == 0 {
            problems.push("policy delay must be positive".into());
        }
        if !(self.smoothing_sigma >= 0.0) {
            problems.push("smoothing sigma must be non-negative".into());
        }
        if !(self.smoothing_clip >= 0.0) {
            problems.push("smoothing clip must be non-negative".into());
        }
        if self.critic_batch == 0 || self.gradient_batch == 0 {
            problems.push("batch sizes must be positive".into());
        }
        if !(self.critic_lr > 0.0) {
            problems.push("critic learning rate must be positive".into());
        }
        if self.buffer_capacity == 0 {
            problems.push("buffer capacity must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(QdError::Config(problems))
        }
    }
}

/// Per-call training counters.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub critic_steps: usize,
    pub actor_updates: usize,
    /// Mean of the two critics' regression MSE, recorded before each step.
    pub critic_mse: Vec<f64>,
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct Td3State {
    policy_spec: MlpSpec,
    critic_spec: MlpSpec,
    critic1: Vec<f64>,
    critic2: Vec<f64>,
    actor: Vec<f64>,
    target_critic1: Vec<f64>,
    target_critic2: Vec<f64>,
    target_actor: Vec<f64>,
    adam_critic1: AdamState,
    adam_critic2: AdamState,
    adam_actor: AdamState,
    pub buffer: ReplayBuffer,
    state_dim: usize,
    action_dim: usize,
    // scratch space reused across training steps
    ws_policy: MlpWorkspace,
    ws_critic: MlpWorkspace,
}

impl Td3State {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        policy_spec: MlpSpec,
        critic_hidden: &[usize],
        cfg: &Td3Config,
        rng: &mut RngStream,
    ) -> Result<Self> {
        cfg.validate()?;
        if policy_spec.input_dim() != state_dim || policy_spec.output_dim() != action_dim {
            return Err(QdError::config(format!(
                "policy spec is {}->{} but the environment is {}->{}",
                policy_spec.input_dim(),
                policy_spec.output_dim(),
                state_dim,
                action_dim
            )));
        }
        let critic_spec = MlpSpec::critic(state_dim + action_dim, critic_hidden)?;
        let critic1 = critic_spec.xavier_init(rng);
        let critic2 = critic_spec.xavier_init(rng);
        let actor = policy_spec.xavier_init(rng);
        let ws_policy = MlpWorkspace::new(&policy_spec);
        let ws_critic = MlpWorkspace::new(&critic_spec);
        Ok(Td3State {
            target_critic1: critic1.clone(),
            target_critic2: critic2.clone(),
            target_actor: actor.clone(),
            adam_critic1: AdamState::new(critic_spec.param_count(), cfg.critic_lr),
            adam_critic2: AdamState::new(critic_spec.param_count(), cfg.critic_lr),
            adam_actor: AdamState::new(policy_spec.param_count(), cfg.critic_lr),
            buffer: ReplayBuffer::new(cfg.buffer_capacity, state_dim, action_dim)?,
            critic1,
            critic2,
            actor,
            policy_spec,
            critic_spec,
            state_dim,
            action_dim,
            ws_policy,
            ws_critic,
        })
    }

    pub fn policy_spec(&self) -> &MlpSpec {
        &self.policy_spec
    }

    pub fn actor_params(&self) -> &[f64] {
        &self.actor
    }

    pub fn target_actor_params(&self) -> &[f64] {
        &self.target_actor
    }

    pub fn critic1_params(&self) -> &[f64] {
        &self.critic1
    }

    pub fn target_critic1_params(&self) -> &[f64] {
        &self.target_critic1
    }

    /// Test hook: overwrite the first critic (targets untouched).
    pub fn set_critic1(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.critic_spec.param_count() {
            return Err(QdError::invalid("critic parameter length mismatch"));
        }
        self.critic1 = params;
        Ok(())
    }

    pub fn critic_spec(&self) -> &MlpSpec {
        &self.critic_spec
    }

    /// TD3 regression target for the transition in physical slot `p`:
    /// `y = r + gamma * min_i Q'_i(s', pi'(s') + eps)` with per-dimension
    /// clipped smoothing noise, or `y = r` alone on terminal transitions.
    fn regression_target(&mut self, p: usize, cfg: &Td3Config, rng: &mut RngStream) -> f64 {
        let reward = self.buffer.rewards[p];
        let done = self.buffer.dones[p];
        let next_state = &self.buffer.next_states[p * self.state_dim..(p + 1) * self.state_dim];
        self.policy_spec
            .forward_ws(&self.target_actor, next_state, &mut self.ws_policy);
        let mut next_action = self.ws_policy.output().to_vec();
        for a in next_action.iter_mut() {
            let noise = (cfg.smoothing_sigma * rng.standard_normal())
                .clamp(-cfg.smoothing_clip, cfg.smoothing_clip);
            *a += noise;
        }
        if done {
            return reward;
        }
        let mut input = vec![0.0; self.state_dim + self.action_dim];
        input[..self.state_dim].copy_from_slice(next_state);
        input[self.state_dim..].copy_from_slice(&next_action);
        self.critic_spec
            .forward_ws(&self.target_critic1, &input, &mut self.ws_critic);
        let q1 = self.ws_critic.output()[0];
        self.critic_spec
            .forward_ws(&self.target_critic2, &input, &mut self.ws_critic);
        let q2 = self.ws_critic.output()[0];
        reward + cfg.gamma * q1.min(q2)
    }

    #[cfg(test)]
    fn critic_value(&mut self, params_which: u8, state: &[f64], action: &[f64]) -> f64 {
        let mut input = Vec::with_capacity(self.state_dim + self.action_dim);
        input.extend_from_slice(state);
        input.extend_from_slice(action);
        let params = match params_which {
            1 => &self.critic1,
            2 => &self.critic2,
            3 => &self.target_critic1,
            _ => &self.target_critic2,
        };
        self.critic_spec.forward_ws(params, &input, &mut self.ws_critic);
        self.ws_critic.output()[0]
    }

    /// Runs `cfg.critic_steps` critic regressions with delayed actor and
    /// Polyak target updates. Skips (with a warning) when the buffer cannot
    /// fill one batch yet.
    pub fn train(&mut self, cfg: &Td3Config, rng: &mut RngStream) -> Result<TrainReport> {
        let mut report = TrainReport::default();
        if self.buffer.len() < cfg.critic_batch {
            log::warn!(
                "td3 training skipped: buffer holds {} transitions, batch needs {}",
                self.buffer.len(),
                cfg.critic_batch
            );
            report.skipped = true;
            return Ok(report);
        }
        let n = cfg.critic_batch;
        let inv_n = 1.0 / n as f64;
        let mut grad1 = vec![0.0; self.critic_spec.param_count()];
        let mut grad2 = vec![0.0; self.critic_spec.param_count()];
        let mut actor_grad = vec![0.0; self.policy_spec.param_count()];
        let mut input = vec![0.0; self.state_dim + self.action_dim];
        let mut input_grad = vec![0.0; self.state_dim + self.action_dim];
        let mut upstream_action = vec![0.0; self.action_dim];

        for t in 1..=cfg.critic_steps {
            let indices: Vec<usize> = (0..n).map(|_| rng.index(self.buffer.len())).collect();

            // smoothed targets through the minimum of the target critics
            let mut targets = Vec::with_capacity(n);
            for &i in &indices {
                let p = self.buffer.physical(i);
                targets.push(self.regression_target(p, cfg, rng));
            }

            // regress both critics toward the shared targets
            grad1.fill(0.0);
            grad2.fill(0.0);
            let mut mse = 0.0;
            for (&i, &y) in indices.iter().zip(targets.iter()) {
                let p = self.buffer.physical(i);
                input[..self.state_dim].copy_from_slice(self.buffer.state(p));
                input[self.state_dim..].copy_from_slice(self.buffer.action(p));

                self.critic_spec
                    .forward_ws(&self.critic1, &input, &mut self.ws_critic);
                let q1 = self.ws_critic.output()[0];
                mse += (y - q1) * (y - q1);
                // upstream of -dLoss/dQ so the Adam ascent step descends the loss
                let up1 = [2.0 * inv_n * (y - q1)];
                self.critic_spec
                    .backward_ws(&self.critic1, &up1, &mut self.ws_critic, Some(&mut grad1), None);

                self.critic_spec
                    .forward_ws(&self.critic2, &input, &mut self.ws_critic);
                let q2 = self.ws_critic.output()[0];
                mse += (y - q2) * (y - q2);
                let up2 = [2.0 * inv_n * (y - q2)];
                self.critic_spec
                    .backward_ws(&self.critic2, &up2, &mut self.ws_critic, Some(&mut grad2), None);
            }
            report.critic_mse.push(mse * inv_n * 0.5);
            let step1 = self.adam_critic1.ascent_step(&grad1, &self.critic1);
            axpy(&mut self.critic1, 1.0, &step1);
            let step2 = self.adam_critic2.ascent_step(&grad2, &self.critic2);
            axpy(&mut self.critic2, 1.0, &step2);
            report.critic_steps += 1;

            if t % cfg.policy_delay == 0 {
                // actor ascends the first critic's value of its own actions
                actor_grad.fill(0.0);
                for &i in &indices {
                    let p = self.buffer.physical(i);
                    let state = &self.buffer.states[p * self.state_dim..(p + 1) * self.state_dim];
                    self.policy_spec
                        .forward_ws(&self.actor, state, &mut self.ws_policy);
                    input[..self.state_dim].copy_from_slice(state);
                    input[self.state_dim..].copy_from_slice(self.ws_policy.output());
                    self.critic_spec
                        .forward_ws(&self.critic1, &input, &mut self.ws_critic);
                    self.critic_spec.backward_ws(
                        &self.critic1,
                        &[1.0],
                        &mut self.ws_critic,
                        None,
                        Some(&mut input_grad),
                    );
                    for (u, g) in upstream_action.iter_mut().zip(&input_grad[self.state_dim..]) {
                        *u = inv_n * g;
                    }
                    self.policy_spec.backward_ws(
                        &self.actor,
                        &upstream_action,
                        &mut self.ws_policy,
                        Some(&mut actor_grad),
                        None,
                    );
                }
                let step = self.adam_actor.ascent_step(&actor_grad, &self.actor);
                axpy(&mut self.actor, 1.0, &step);
                report.actor_updates += 1;

                polyak(&mut self.target_critic1, &self.critic1, cfg.tau);
                polyak(&mut self.target_critic2, &self.critic2, cfg.tau);
                polyak(&mut self.target_actor, &self.actor, cfg.tau);
            }
        }
        Ok(report)
    }

    /// Deterministic-policy-gradient estimate of the objective gradient for
    /// an arbitrary policy `phi`, averaged over a large replay batch. Needs
    /// no environment interaction; with fewer stored transitions than the
    /// configured batch, the whole buffer is used once.
    pub fn objective_gradient(
        &mut self,
        phi: &[f64],
        cfg: &Td3Config,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        self.objective_gradient_with_batch(phi, cfg.gradient_batch, rng)
    }

    pub fn objective_gradient_with_batch(
        &mut self,
        phi: &[f64],
        batch: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        if self.buffer.is_empty() {
            return Err(QdError::GradientUnavailable(
                "replay buffer is empty; no critic-based gradient yet".into(),
            ));
        }
        if phi.len() != self.policy_spec.param_count() {
            return Err(QdError::invalid(
                "policy parameter length does not match the policy spec",
            ));
        }
        let use_all = batch >= self.buffer.len();
        let count = batch.min(self.buffer.len());
        let inv = 1.0 / count as f64;
        let mut grad = vec![0.0; self.policy_spec.param_count()];
        let mut input = vec![0.0; self.state_dim + self.action_dim];
        let mut input_grad = vec![0.0; self.state_dim + self.action_dim];
        let mut upstream_action = vec![0.0; self.action_dim];
        for j in 0..count {
            let logical = if use_all { j } else { rng.index(self.buffer.len()) };
            let p = self.buffer.physical(logical);
            let state = &self.buffer.states[p * self.state_dim..(p + 1) * self.state_dim];
            self.policy_spec.forward_ws(phi, state, &mut self.ws_policy);
            input[..self.state_dim].copy_from_slice(state);
            input[self.state_dim..].copy_from_slice(self.ws_policy.output());
            self.critic_spec
                .forward_ws(&self.critic1, &input, &mut self.ws_critic);
            self.critic_spec.backward_ws(
                &self.critic1,
                &[1.0],
                &mut self.ws_critic,
                None,
                Some(&mut input_grad),
            );
            for (u, g) in upstream_action.iter_mut().zip(&input_grad[self.state_dim..]) {
                *u = inv * g;
            }
            self.policy_spec.backward_ws(
                phi,
                &upstream_action,
                &mut self.ws_policy,
                Some(&mut grad),
                None,
            );
        }
        Ok(grad)
    }
}

/// `target <- tau * live + (1 - tau) * target`, elementwise.
pub fn polyak(target: &mut [f64], live: &[f64], tau: f64) {
    debug_assert_eq!(target.len(), live.len());
    for (t, l) in target.iter_mut().zip(live) {
        *t = tau * l + (1.0 - tau) * *t;
    }
}
