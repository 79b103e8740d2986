//! Domain value types shared across the crate.

use crate::error::{QdError, Result};
use crate::vecmath::all_finite;

/// Flat real parameter vector of a policy or benchmark point. Entries are
/// checked finite at construction, which is the single choke point every
/// candidate passes through before evaluation or archive insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionVector(Vec<f64>);

impl SolutionVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(QdError::invalid("solution vector must be non-empty"));
        }
        if !all_finite(&values) {
            return Err(QdError::invalid("solution vector has non-finite entries"));
        }
        Ok(SolutionVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        SolutionVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for SolutionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// One environment step, as stored in the replay buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True only for genuine terminal states. Timeout truncation keeps this
    /// false so the bootstrap term survives.
    pub done: bool,
}

/// Result of evaluating one solution: objective, measure coordinates, and the
/// episode transitions when the environment is an MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub measures: Vec<f64>,
    pub transitions: Vec<Transition>,
}

impl Evaluation {
    pub fn new(objective: f64, measures: Vec<f64>, transitions: Vec<Transition>) -> Result<Self> {
        if !objective.is_finite() {
            return Err(QdError::invalid("evaluation objective is non-finite"));
        }
        if !all_finite(&measures) {
            return Err(QdError::invalid("evaluation measures are non-finite"));
        }
        Ok(Evaluation {
            objective,
            measures,
            transitions,
        })
    }
}

/// Objective gradient plus the k measure gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub objective: Vec<f64>,
    pub measures: Vec<Vec<f64>>,
}

impl GradientBundle {
    pub fn new(objective: Vec<f64>, measures: Vec<Vec<f64>>) -> Result<Self> {
        let n = objective.len();
        if !all_finite(&objective) {
            return Err(QdError::invalid("objective gradient has non-finite entries"));
        }
        for (j, g) in measures.iter().enumerate() {
            if g.len() != n {
                return Err(QdError::invalid(format!(
                    "measure gradient {j} has length {} but solution dimension is {n}",
                    g.len()
                )));
            }
            if !all_finite(g) {
                return Err(QdError::invalid(format!(
                    "measure gradient {j} has non-finite entries"
                )));
            }
        }
        Ok(GradientBundle {
            objective,
            measures,
        })
    }

    pub fn measure_count(&self) -> usize {
        self.measures.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solution_vector_rejects_non_finite() {
        assert!(SolutionVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(SolutionVector::new(vec![]).is_err());
        assert!(SolutionVector::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn gradient_bundle_checks_row_lengths() {
        let ok = GradientBundle::new(vec![1.0, 2.0], vec![vec![0.0, 1.0]]);
        assert!(ok.is_ok());
        let bad = GradientBundle::new(vec![1.0, 2.0], vec![vec![0.0]]);
        assert!(bad.is_err());
    }

    #[test]
    fn evaluation_rejects_non_finite_objective() {
        assert!(Evaluation::new(f64::INFINITY, vec![0.5], vec![]).is_err());
    }
}
