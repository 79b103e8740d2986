//! Analytic benchmark with exact gradients.
//!
//! Objective: negated sphere shifted to an optimum at 0.4 in every
//! coordinate. Measures: the clipped coordinate sums of the two halves of
//! the solution vector, normalized to [0, 1]. The clip saturates each
//! coordinate's measure contribution outside +-5.12, which distorts the
//! measure space away from the objective's geometry.

use crate::error::{QdError, Result};
use crate::rng::RngStream;
use crate::types::{Evaluation, GradientBundle, SolutionVector};

use super::Evaluator;

pub const SHIFT: f64 = 0.4;
pub const CLIP: f64 = 5.12;

#[derive(Debug, Clone)]
pub struct LinearProjectionSphere {
    dim: usize,
}

impl LinearProjectionSphere {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 || dim % 2 != 0 {
            return Err(QdError::config(format!(
                "lp_sphere dimension must be even and at least 2, got {dim}"
            )));
        }
        Ok(LinearProjectionSphere { dim })
    }

    fn half(&self) -> usize {
        self.dim / 2
    }

    /// Normalizes a clipped half-sum into [0, 1].
    fn normalize_half_sum(&self, sum: f64) -> f64 {
        let half = self.half() as f64;
        (sum + CLIP * half) / (2.0 * CLIP * half)
    }
}

impl Evaluator for LinearProjectionSphere {
    fn id(&self) -> &'static str {
        "lp_sphere"
    }

    fn solution_dim(&self) -> usize {
        self.dim
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

    fn evaluate(&self, solution: &SolutionVector, _rng: &mut RngStream) -> Result<Evaluation> {
        if solution.dim() != self.dim {
            return Err(QdError::invalid(format!(
                "lp_sphere expects dimension {}, got {}",
                self.dim,
                solution.dim()
            )));
        }
        let objective = -solution
            .iter()
            .map(|x| (x - SHIFT) * (x - SHIFT))
            .sum::<f64>();
        let half = self.half();
        let first: f64 = solution[..half].iter().map(|x| x.clamp(-CLIP, CLIP)).sum();
        let second: f64 = solution[half..].iter().map(|x| x.clamp(-CLIP, CLIP)).sum();
        Evaluation::new(
            objective,
            vec![
                self.normalize_half_sum(first),
                self.normalize_half_sum(second),
            ],
            vec![],
        )
    }

    fn analytic_gradients(&self, solution: &SolutionVector) -> Result<GradientBundle> {
        if solution.dim() != self.dim {
            return Err(QdError::invalid(format!(
                "lp_sphere expects dimension {}, got {}",
                self.dim,
                solution.dim()
            )));
        }
        let grad_f: Vec<f64> = solution.iter().map(|x| -2.0 * (x - SHIFT)).collect();
        let half = self.half();
        let slope = 1.0 / (2.0 * CLIP * half as f64);
        let mut grad_m = vec![vec![0.0; self.dim]; 2];
        for (i, &x) in solution.iter().enumerate() {
            if x.abs() < CLIP {
                let which = usize::from(i >= half);
                grad_m[which][i] = slope;
            }
        }
        GradientBundle::new(grad_f, grad_m)
    }

    fn initial_solution(&self, _rng: &mut RngStream) -> SolutionVector {
        SolutionVector::zeros(self.dim)
    }

    fn random_initial(&self, rng: &mut RngStream) -> SolutionVector {
        SolutionVector::new(rng.normal_vector(self.dim)).expect("normal draws are finite")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere() -> LinearProjectionSphere {
        LinearProjectionSphere::new(20).unwrap()
    }

    fn eval(env: &LinearProjectionSphere, v: Vec<f64>) -> Evaluation {
        let mut rng = RngStream::new(0, 0);
        env.evaluate(&SolutionVector::new(v).unwrap(), &mut rng)
            .unwrap()
    }

    #[test]
    fn optimum_scores_zero() {
        let env = sphere();
        let e = eval(&env, vec![SHIFT; 20]);
        assert_eq!(e.objective, 0.0);
    }

    #[test]
    fn origin_maps_to_measure_center() {
        let env = sphere();
        let e = eval(&env, vec![0.0; 20]);
        assert_eq!(e.measures, vec![0.5, 0.5]);
        assert!(e.transitions.is_empty());
    }

    #[test]
    fn stationary_point_has_zero_objective_gradient() {
        let env = sphere();
        let g = env
            .analytic_gradients(&SolutionVector::new(vec![SHIFT; 20]).unwrap())
            .unwrap();
        assert!(g.objective.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn clip_saturation_zeroes_measure_gradient() {
        let env = sphere();
        let mut v = vec![0.0; 20];
        v[3] = CLIP + 1.0;
        v[15] = -(CLIP + 2.0);
        let g = env
            .analytic_gradients(&SolutionVector::new(v).unwrap())
            .unwrap();
        assert_eq!(g.measures[0][3], 0.0);
        assert_eq!(g.measures[1][15], 0.0);
        assert!(g.measures[0][2] > 0.0);
        // measure 0 never depends on the second half and vice versa
        assert!(g.measures[0][10..].iter().all(|&x| x == 0.0));
        assert!(g.measures[1][..10].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let env = sphere();
        let mut rng = RngStream::new(33, 1);
        let h = 1e-6;
        for _ in 0..50 {
            // keep coordinates clear of the clip kink where the derivative jumps
            let v: Vec<f64> = (0..20).map(|_| rng.uniform(-4.9, 4.9)).collect();
            let sol = SolutionVector::new(v.clone()).unwrap();
            let g = env.analytic_gradients(&sol).unwrap();
            for i in 0..20 {
                let mut up = v.clone();
                up[i] += h;
                let mut down = v.clone();
                down[i] -= h;
                let e_up = eval(&env, up);
                let e_down = eval(&env, down);
                let fd_f = (e_up.objective - e_down.objective) / (2.0 * h);
                assert!(
                    (g.objective[i] - fd_f).abs() < 1e-6,
                    "df[{i}]: {} vs {}",
                    g.objective[i],
                    fd_f
                );
                for j in 0..2 {
                    let fd_m = (e_up.measures[j] - e_down.measures[j]) / (2.0 * h);
                    assert!(
                        (g.measures[j][i] - fd_m).abs() < 1e-6,
                        "dm{j}[{i}]: {} vs {}",
                        g.measures[j][i],
                        fd_m
                    );
                }
            }
        }
    }

    #[test]
    fn measures_stay_in_unit_range() {
        let env = sphere();
        let mut rng = RngStream::new(5, 1);
        for _ in 0..100 {
            let v: Vec<f64> = (0..20).map(|_| rng.uniform(-20.0, 20.0)).collect();
            let e = eval(&env, v);
            assert!(e.measures.iter().all(|m| (0.0..=1.0).contains(m)));
        }
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(LinearProjectionSphere::new(7).is_err());
        assert!(LinearProjectionSphere::new(0).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let env = sphere();
        let mut rng = RngStream::new(0, 0);
        let bad = SolutionVector::new(vec![0.0; 7]).unwrap();
        assert!(env.evaluate(&bad, &mut rng).is_err());
        assert!(env.analytic_gradients(&bad).is_err());
    }
}
