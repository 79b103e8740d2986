//! Policy-gradient-assisted MAP-Elites.
//!
//! Iteration zero seeds the archive with randomly initialized solutions.
//! Every later iteration produces half its batch with the directional
//! (iso-line) variation operator over elite pairs and half by taking critic
//! gradient-ascent steps from random elites, then evaluates and inserts the
//! batch plus the greedy actor, feeds all experience to the replay buffer,
//! and trains the critics.

use crate::archive::Archive;
use crate::envs::EvalPool;
use crate::error::{QdError, Result};
use crate::es_grad::AdamState;
use crate::rng::{streams, RngStream};
use crate::types::SolutionVector;
use crate::vecmath::axpy;

use super::{insert_evaluation, IterationReport, Scheduler, TdMachinery};

/// Directional variation: `phi1 + sigma1 N(0, I) + sigma2 (phi2 - phi1) N(0, 1)`,
/// one isotropic draw plus one scalar draw.
pub fn iso_line_variation(
    phi1: &[f64],
    phi2: &[f64],
    sigma1: f64,
    sigma2: f64,
    rng: &mut RngStream,
) -> Result<SolutionVector> {
    if phi1.len() != phi2.len() {
        return Err(QdError::invalid("iso-line parents differ in dimension"));
    }
    let mut child = phi1.to_vec();
    for c in child.iter_mut() {
        *c += sigma1 * rng.standard_normal();
    }
    let line = rng.standard_normal();
    for (c, (a, b)) in child.iter_mut().zip(phi1.iter().zip(phi2.iter())) {
        *c += sigma2 * (b - a) * line;
    }
    SolutionVector::new(child)
}

pub struct PgaMapElites {
    lambda: usize,
    n_grad: usize,
    alpha_grad: f64,
    pg_batch: usize,
    sigma1: f64,
    sigma2: f64,
    g_init: usize,
    td3: TdMachinery,
    seeded: bool,
    rng_select: RngStream,
    rng_variation: RngStream,
    rng_td3: RngStream,
    rng_init: RngStream,
    fallback_logged: bool,
}

impl PgaMapElites {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda: usize,
        n_grad: usize,
        alpha_grad: f64,
        pg_batch: usize,
        sigma1: f64,
        sigma2: f64,
        g_init: usize,
        td3: TdMachinery,
        seed: u64,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if lambda < 2 || lambda % 2 != 0 {
            problems.push(format!("batch size must be even and at least 2, got {lambda}"));
        }
        if n_grad == 0 || pg_batch == 0 {
            problems.push("gradient step count and batch size must be positive".into());
        }
        if !(alpha_grad > 0.0) {
            problems.push("gradient learning rate must be positive".into());
        }
        if !(sigma1 > 0.0) || !(sigma2 >= 0.0) {
            problems.push("variation scales must be positive".into());
        }
        if g_init == 0 {
            problems.push("random initial solution count must be positive".into());
        }
        if !problems.is_empty() {
            return Err(QdError::Config(problems));
        }
        Ok(PgaMapElites {
            lambda,
            n_grad,
            alpha_grad,
            pg_batch,
            sigma1,
            sigma2,
            g_init,
            td3,
            seeded: false,
            rng_select: RngStream::new(seed, streams::ELITE_SELECT),
            rng_variation: RngStream::new(seed, streams::VARIATION),
            rng_td3: RngStream::new(seed, streams::TD3),
            rng_init: RngStream::new(seed, streams::INIT),
            fallback_logged: false,
        })
    }

    pub fn seed_cost(&self) -> u64 {
        self.g_init as u64
    }

    fn variation_child(&mut self, archive: &Archive) -> Result<SolutionVector> {
        if archive.len() < 2 {
            if !self.fallback_logged {
                log::warn!("fewer than 2 elites; iso-line variation degenerates to Gaussian noise");
                self.fallback_logged = true;
            }
            let parent = archive.random_elite(&mut self.rng_select)?.solution.clone();
            let mut child = parent.into_vec();
            for c in child.iter_mut() {
                *c += self.sigma1 * self.rng_variation.standard_normal();
            }
            return SolutionVector::new(child);
        }
        let phi1 = archive.random_elite(&mut self.rng_select)?.solution.clone();
        let phi2 = archive.random_elite(&mut self.rng_select)?.solution.clone();
        iso_line_variation(&phi1, &phi2, self.sigma1, self.sigma2, &mut self.rng_variation)
    }

    fn gradient_child(&mut self, archive: &Archive) -> Result<SolutionVector> {
        let elite = archive.random_elite(&mut self.rng_select)?.solution.clone();
        if !self.td3.has_experience() {
            if !self.fallback_logged {
                log::warn!("no critic experience; gradient variation degenerates to iso-line");
                self.fallback_logged = true;
            }
            return self.variation_child(archive);
        }
        let mut params = elite.into_vec();
        // fresh optimizer per offspring
        let mut adam = AdamState::new(params.len(), self.alpha_grad);
        for _ in 0..self.n_grad {
            let gradient =
                self.td3
                    .objective_gradient_with_batch(&params, self.pg_batch, &mut self.rng_td3)?;
            let step = adam.ascent_step(&gradient, &params);
            axpy(&mut params, 1.0, &step);
        }
        SolutionVector::new(params)
    }
}

impl Scheduler for PgaMapElites {
    fn name(&self) -> &'static str {
        "pga_map_elites"
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

        if !self.seeded {
            let candidates: Vec<SolutionVector> = (0..self.g_init)
                .map(|_| pool.evaluator().random_initial(&mut self.rng_init))
                .collect();
            let evaluations = pool.evaluate_batch(&candidates)?;
            report.evaluations += evaluations.len() as u64;
            for (candidate, evaluation) in candidates.iter().zip(evaluations.iter()) {
                insert_evaluation(archive, candidate.clone(), evaluation, &mut report)?;
            }
            self.td3.add_experience(evaluations.iter())?;
            self.seeded = true;
            return Ok(report);
        }

        let half = self.lambda / 2;
        let mut candidates = Vec::with_capacity(self.lambda);
        for _ in 0..half {
            candidates.push(self.variation_child(archive)?);
        }
        for _ in 0..half {
            candidates.push(self.gradient_child(archive)?);
        }

        let evaluations = pool.evaluate_batch(&candidates)?;
        report.evaluations += evaluations.len() as u64;
        for (candidate, evaluation) in candidates.iter().zip(evaluations.iter()) {
            insert_evaluation(archive, candidate.clone(), evaluation, &mut report)?;
        }

        let greedy = self.td3.greedy_actor()?;
        let greedy_eval = pool.evaluate_one(&greedy)?;
        report.evaluations += 1;
        insert_evaluation(archive, greedy, &greedy_eval, &mut report)?;

        self.td3
            .add_experience(evaluations.iter().chain(std::iter::once(&greedy_eval)))?;
        self.td3.train(&mut self.rng_td3)?;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::GridSpec;
    use crate::envs::{GaitPoint, LinearProjectionSphere};
    use crate::td3::Td3Config;

    fn sphere_scheduler(lambda: usize, g_init: usize) -> (PgaMapElites, LinearProjectionSphere) {
        let env = LinearProjectionSphere::new(6).unwrap();
        let td3 = TdMachinery::build(
            &env,
            &[8],
            Td3Config::default(),
            &mut RngStream::new(1, streams::TD3),
        )
        .unwrap();
        let s = PgaMapElites::new(lambda, 10, 0.001, 256, 0.005, 0.05, g_init, td3, 7).unwrap();
        (s, env)
    }

    fn archive() -> Archive {
        Archive::new(GridSpec::new(vec![8, 8], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap())
    }

    #[test]
    fn iso_line_with_zero_scales_copies_first_parent() {
        let mut rng = RngStream::new(1, 1);
        let phi1 = [1.0, 2.0, 3.0];
        let phi2 = [4.0, 5.0, 6.0];
        let child = iso_line_variation(&phi1, &phi2, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(child.as_slice(), &phi1);
    }

    #[test]
    fn iso_line_is_centered_on_first_parent() {
        let mut rng = RngStream::new(2, 1);
        let phi1 = [0.5, -0.5];
        let phi2 = [1.5, 0.5];
        let draws = 100_000;
        let mut mean = [0.0f64; 2];
        for _ in 0..draws {
            let child = iso_line_variation(&phi1, &phi2, 0.005, 0.05, &mut rng).unwrap();
            mean[0] += child[0] / draws as f64;
            mean[1] += child[1] / draws as f64;
        }
        // both noise terms are zero-mean; combined std per coordinate is
        // sqrt(sigma1^2 + (sigma2 * delta)^2) with delta = 1
        let std = (0.005f64 * 0.005 + 0.05f64 * 0.05).sqrt();
        let tol = 4.0 * std / (draws as f64).sqrt();
        assert!((mean[0] - 0.5).abs() < tol, "{mean:?}");
        assert!((mean[1] + 0.5).abs() < tol, "{mean:?}");
    }

    #[test]
    fn iso_line_rejects_dimension_mismatch() {
        let mut rng = RngStream::new(3, 1);
        assert!(iso_line_variation(&[0.0], &[0.0, 1.0], 0.01, 0.01, &mut rng).is_err());
    }

    #[test]
    fn seeding_iteration_costs_g_then_batches_cost_lambda_plus_one() {
        let (mut scheduler, env) = sphere_scheduler(10, 25);
        let pool = EvalPool::new(&env, 7, 1).unwrap();
        let mut archive = archive();
        let seed_report = scheduler.run_iteration(&mut archive, &pool).unwrap();
        assert_eq!(seed_report.evaluations, 25);
        assert!(archive.len() > 0);
        let report = scheduler.run_iteration(&mut archive, &pool).unwrap();
        assert_eq!(report.evaluations, 11);
        assert_eq!(pool.count(), 36);
    }

    #[test]
    fn splits_batch_between_variation_kinds_on_mdp() {
        let env = GaitPoint::new(&[8], 0.0).unwrap();
        let td3 = TdMachinery::build(
            &env,
            &[8],
            Td3Config {
                critic_steps: 2,
                critic_batch: 8,
                buffer_capacity: 10_000,
                ..Td3Config::default()
            },
            &mut RngStream::new(1, streams::TD3),
        )
        .unwrap();
        let mut scheduler =
            PgaMapElites::new(6, 2, 0.001, 8, 0.005, 0.05, 4, td3, 7).unwrap();
        let pool = EvalPool::new(&env, 7, 1).unwrap();
        let mut archive = archive();
        scheduler.run_iteration(&mut archive, &pool).unwrap();
        assert!(scheduler.td3.has_experience(), "seeding must feed the buffer");
        let report = scheduler.run_iteration(&mut archive, &pool).unwrap();
        assert_eq!(report.evaluations, 7);
    }

    #[test]
    fn config_validation_is_exhaustive() {
        let env = LinearProjectionSphere::new(6).unwrap();
        let td3 = TdMachinery::build(
            &env,
            &[8],
            Td3Config::default(),
            &mut RngStream::new(1, streams::TD3),
        )
        .unwrap();
        match PgaMapElites::new(3, 0, 0.0, 0, 0.0, -1.0, 0, td3, 7) {
            Err(QdError::Config(problems)) => assert!(problems.len() >= 4, "{problems:?}"),
            Err(other) => panic!("expected config error, got {other}"),
            Ok(_) => panic!("expected config error"),
        }
    }
}
