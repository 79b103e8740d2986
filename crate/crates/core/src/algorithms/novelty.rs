use crate::error::{QdError, Result};

/// Novelty of a point against an empty store.
pub const EMPTY_STORE_NOVELTY: f64 = 1e9;

/// Growable list of previously encountered measure points. Novelty of a
/// query is its mean Euclidean distance to the k nearest stored points (all
/// of them when fewer than k are stored).
#[derive(Debug, Clone)]
pub struct NoveltyStore {
    points: Vec<Vec<f64>>,
    k: usize,
}

impl NoveltyStore {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(QdError::config("novelty neighbor count must be positive"));
        }
        Ok(NoveltyStore {
            points: Vec::new(),
            k,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn add(&mut self, point: Vec<f64>) {
        self.points.push(point);
    }

    pub fn novelty(&self, query: &[f64]) -> f64 {
        if self.points.is_empty() {
            return EMPTY_STORE_NOVELTY;
        }
        let mut distances: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                p.iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        distances.sort_by(f64::total_cmp);
        let take = self.k.min(distances.len());
        distances[..take].iter().sum::<f64>() / take as f64
    }
}
