//! Grid-tessellated MAP-Elites archive.
//!
//! The measure space is split into a grid of evenly-sized cells; each cell
//! holds at most one elite, the best solution seen for that cell. Insertion
//! returns an improvement value used by the coefficient-space ranking.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{QdError, Result};
use crate::rng::RngStream;
use crate::types::SolutionVector;

/// Even tessellation of a k-dimensional measure space.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dims: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let mut problems = Vec::new();
        if dims.is_empty() {
            problems.push("grid needs at least one measure dimension".to_string());
        }
        if dims.len() != lower.len() || dims.len() != upper.len() {
            problems.push(format!(
                "grid dims/bounds lengths disagree: {} dims, {} lower, {} upper",
                dims.len(),
                lower.len(),
                upper.len()
            ));
        } else {
            for j in 0..dims.len() {
                if dims[j] == 0 {
                    problems.push(format!("measure {j}: cell count must be positive"));
                }
                if !(lower[j] < upper[j]) {
                    problems.push(format!(
                        "measure {j}: lower bound {} must be below upper bound {}",
                        lower[j], upper[j]
                    ));
                }
            }
        }
        if !problems.is_empty() {
            return Err(QdError::Config(problems));
        }
        Ok(GridSpec { dims, lower, upper })
    }

    pub fn measure_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Total number of cells M.
    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Per-dimension cell indices for a measure point. Out-of-range measures
    /// clamp to the boundary cell, so the mapping is total.
    pub fn cell_index(&self, measures: &[f64]) -> Vec<usize> {
        debug_assert_eq!(measures.len(), self.dims.len());
        measures
            .iter()
            .zip(self.dims.iter())
            .zip(self.lower.iter().zip(self.upper.iter()))
            .map(|((&m, &d), (&lo, &hi))| {
                let raw = ((m - lo) / (hi - lo) * d as f64).floor();
                if raw < 0.0 {
                    0
                } else {
                    (raw as usize).min(d - 1)
                }
            })
            .collect()
    }

    /// Row-major flat index over measure dimensions in declaration order.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut flat = 0usize;
        for (i, &d) in idx.iter().zip(self.dims.iter()) {
            debug_assert!(*i < d);
            flat = flat * d + i;
        }
        flat
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.dims.len()];
        for j in (0..self.dims.len()).rev() {
            idx[j] = flat % self.dims[j];
            flat /= self.dims[j];
        }
        idx
    }
}

/// Occupant of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveCell {
    pub solution: SolutionVector,
    pub objective: f64,
    pub measures: Vec<f64>,
}

/// What happened when a solution was offered to the archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertStatus {
    NewCell,
    ImprovedCell,
    NotAdded,
}

/// Insertion status plus the improvement value delta: the objective itself
/// for a new cell, the objective delta against the previous occupant
/// otherwise (negative when the candidate lost).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsertOutcome {
    pub status: InsertStatus,
    pub improvement: f64,
}

#[derive(Debug, Clone)]
pub struct Archive {
    spec: GridSpec,
    cells: BTreeMap<usize, ArchiveCell>,
}

impl Archive {
    pub fn new(spec: GridSpec) -> Self {
        Archive {
            spec,
            cells: BTreeMap::new(),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Occupied cells in ascending flat-index order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, &ArchiveCell)> {
        self.cells.iter().map(|(k, v)| (*k, v))
    }

    pub fn get(&self, flat: usize) -> Option<&ArchiveCell> {
        self.cells.get(&flat)
    }

    /// Offers a solution to the cell its measures map to. An empty cell takes
    /// the solution; an occupied cell is replaced only on strict objective
    /// improvement, with the delta computed against the previous occupant.
    pub fn insert(
        &mut self,
        solution: SolutionVector,
        objective: f64,
        measures: Vec<f64>,
    ) -> Result<InsertOutcome> {
        if !objective.is_finite() {
            return Err(QdError::invalid("archive insert: non-finite objective"));
        }
        if measures.len() != self.spec.measure_count() {
            return Err(QdError::invalid(format!(
                "archive insert: got {} measures, grid has {}",
                measures.len(),
                self.spec.measure_count()
            )));
        }
        let flat = self.spec.flat_index(&self.spec.cell_index(&measures));
        match self.cells.get_mut(&flat) {
            None => {
                self.cells.insert(
                    flat,
                    ArchiveCell {
                        solution,
                        objective,
                        measures,
                    },
                );
                Ok(InsertOutcome {
                    status: InsertStatus::NewCell,
                    improvement: objective,
                })
            }
            Some(cell) => {
                let delta = objective - cell.objective;
                if objective > cell.objective {
                    *cell = ArchiveCell {
                        solution,
                        objective,
                        measures,
                    };
                    Ok(InsertOutcome {
                        status: InsertStatus::ImprovedCell,
                        improvement: delta,
                    })
                } else {
                    Ok(InsertOutcome {
                        status: InsertStatus::NotAdded,
                        improvement: delta,
                    })
                }
            }
        }
    }

    /// Sum over elites of `objective - min_objective`. `min_objective` must
    /// sit at or below every stored objective; a violation means the metric
    /// was configured against the wrong environment.
    pub fn qd_score(&self, min_objective: f64) -> Result<f64> {
        let mut total = 0.0;
        for cell in self.cells.values() {
            if cell.objective < min_objective {
                return Err(QdError::MetricConfig(format!(
                    "stored objective {} lies below min_objective {}",
                    cell.objective, min_objective
                )));
            }
            total += cell.objective - min_objective;
        }
        Ok(total)
    }

    /// Fraction of cells occupied.
    pub fn coverage(&self) -> f64 {
        self.cells.len() as f64 / self.spec.cell_count() as f64
    }

    /// Highest stored objective.
    pub fn best_performance(&self) -> Result<f64> {
        self.cells
            .values()
            .map(|c| c.objective)
            .fold(None, |best: Option<f64>, x| {
                Some(best.map_or(x, |b| b.max(x)))
            })
            .ok_or(QdError::EmptyArchive)
    }

    /// Uniformly random occupied cell.
    pub fn random_elite(&self, rng: &mut RngStream) -> Result<&ArchiveCell> {
        if self.cells.is_empty() {
            return Err(QdError::EmptyArchive);
        }
        let pick = rng.index(self.cells.len());
        Ok(self.cells.values().nth(pick).expect("index in range"))
    }

    /// Writes the archive CSV: one row per occupied cell, ascending flat
    /// index. Floats are printed in shortest round-trip form so a load
    /// reproduces the archive bit-exactly.
    pub fn save_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let k = self.spec.measure_count();
        let n = self
            .cells
            .values()
            .next()
            .map(|c| c.solution.dim())
            .unwrap_or(0);
        let mut header = Vec::new();
        for j in 0..k {
            header.push(format!("cell_index_{j}"));
        }
        for j in 0..k {
            header.push(format!("measure_{j}"));
        }
        header.push("objective".to_string());
        for i in 0..n {
            header.push(format!("param_{i}"));
        }
        writeln!(out, "{}", header.join(","))?;
        for (flat, cell) in self.cells.iter() {
            let mut row = Vec::with_capacity(2 * k + 1 + n);
            for i in self.spec.unflatten(*flat) {
                row.push(i.to_string());
            }
            for m in &cell.measures {
                row.push(format!("{m}"));
            }
            row.push(format!("{}", cell.objective));
            for p in cell.solution.iter() {
                row.push(format!("{p}"));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv_path(&self, path: &Path) -> Result<()> {
        crate::harness::write_atomic(path, |w| self.save_csv(w))
    }

    /// Loads an archive CSV written by [`save_csv`](Self::save_csv). Each
    /// row's cell indices are checked against the indices recomputed from its
    /// measures under `spec`.
    pub fn load_csv<R: std::io::Read>(spec: GridSpec, reader: R) -> Result<Self> {
        let k = spec.measure_count();
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or_else(|| QdError::parse("archive csv", "missing header row"))?
            .map_err(QdError::Io)?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 * k + 1 {
            return Err(QdError::parse(
                "archive csv",
                format!("header has {} columns, need at least {}", cols.len(), 2 * k + 1),
            ));
        }
        for j in 0..k {
            if cols[j] != format!("cell_index_{j}") || cols[k + j] != format!("measure_{j}") {
                return Err(QdError::parse(
                    "archive csv",
                    format!("unexpected header column {:?} at position {j}", cols[j]),
                ));
            }
        }
        if cols[2 * k] != "objective" {
            return Err(QdError::parse("archive csv", "missing objective column"));
        }
        let n = cols.len() - (2 * k + 1);
        let mut archive = Archive::new(spec);
        for (line_no, line) in lines.enumerate() {
            let line = line.map_err(QdError::Io)?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(QdError::parse(
                    "archive csv",
                    format!("row {}: {} fields, expected {}", line_no + 2, fields.len(), cols.len()),
                ));
            }
            let parse_f = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| QdError::parse("archive csv", format!("row {}: {e}", line_no + 2)))
            };
            let mut idx = Vec::with_capacity(k);
            for f in &fields[..k] {
                idx.push(f.parse::<usize>().map_err(|e| {
                    QdError::parse("archive csv", format!("row {}: {e}", line_no + 2))
                })?);
            }
            let measures: Vec<f64> = fields[k..2 * k]
                .iter()
                .map(|f| parse_f(f))
                .collect::<Result<_>>()?;
            let objective = parse_f(fields[2 * k])?;
            let params: Vec<f64> = fields[2 * k + 1..]
                .iter()
                .map(|f| parse_f(f))
                .collect::<Result<_>>()?;
            if params.len() != n {
                return Err(QdError::parse(
                    "archive csv",
                    format!("row {}: parameter count mismatch", line_no + 2),
                ));
            }
            let recomputed = archive.spec.cell_index(&measures);
            if recomputed != idx {
                return Err(QdError::parse(
                    "archive csv",
                    format!(
                        "row {}: stored cell index {:?} disagrees with measures ({:?})",
                        line_no + 2,
                        idx,
                        recomputed
                    ),
                ));
            }
            let flat = archive.spec.flat_index(&idx);
            let cell = ArchiveCell {
                solution: SolutionVector::new(params)?,
                objective,
                measures,
            };
            if archive.cells.insert(flat, cell).is_some() {
                return Err(QdError::parse(
                    "archive csv",
                    format!("row {}: duplicate cell", line_no + 2),
                ));
            }
        }
        Ok(archive)
    }

    pub fn load_csv_path(spec: GridSpec, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::load_csv(spec, file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_32x32() -> GridSpec {
        GridSpec::new(vec![32, 32], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    fn sol(v: &[f64]) -> SolutionVector {
        SolutionVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cell_index_corners_and_interior() {
        let g = grid_32x32();
        assert_eq!(g.cell_index(&[0.0, 0.0]), vec![0, 0]);
        assert_eq!(g.cell_index(&[1.0, 1.0]), vec![31, 31]);
        assert_eq!(g.cell_index(&[0.5, 0.25]), vec![16, 8]);
        // out-of-range clamps to boundary cells
        assert_eq!(g.cell_index(&[-3.0, 7.0]), vec![0, 31]);
    }

    #[test]
    fn insert_outcomes_follow_improvement_definition() {
        let mut a = Archive::new(grid_32x32());
        let out = a.insert(sol(&[1.0]), 3.0, vec![0.5, 0.5]).unwrap();
        assert_eq!(out.status, InsertStatus::NewCell);
        assert_eq!(out.improvement, 3.0);

        // improvement is measured against the occupant that is replaced
        let prev = a.clone();
        let out = a.insert(sol(&[2.0]), 7.0, vec![0.5, 0.5]).unwrap();
        assert_eq!(out.status, InsertStatus::ImprovedCell);
        assert_eq!(out.improvement, 4.0);
        drop(prev);

        let before = a.clone();
        let out = a.insert(sol(&[9.0]), 4.0, vec![0.5, 0.5]).unwrap();
        assert_eq!(out.status, InsertStatus::NotAdded);
        assert_eq!(out.improvement, -3.0);
        assert_eq!(a.cells, before.cells);
    }

    #[test]
    fn exact_ties_are_rejected() {
        let mut a = Archive::new(grid_32x32());
        a.insert(sol(&[1.0]), 5.0, vec![0.1, 0.1]).unwrap();
        let out = a.insert(sol(&[2.0]), 5.0, vec![0.1, 0.1]).unwrap();
        assert_eq!(out.status, InsertStatus::NotAdded);
        assert_eq!(out.improvement, 0.0);
        assert_eq!(a.get(a.spec().flat_index(&[3, 3])).unwrap().solution, sol(&[1.0]));
    }

    #[test]
    fn qd_score_coverage_best() {
        let mut a = Archive::new(GridSpec::new(vec![2, 2], vec![0.0; 2], vec![1.0; 2]).unwrap());
        assert_eq!(a.qd_score(0.0).unwrap(), 0.0);
        assert_eq!(a.coverage(), 0.0);
        assert!(a.best_performance().is_err());

        a.insert(sol(&[0.0]), 10.0, vec![0.1, 0.1]).unwrap();
        assert_eq!(a.qd_score(-2.0).unwrap(), 12.0);
        assert_eq!(a.coverage(), 0.25);
        assert_eq!(a.best_performance().unwrap(), 10.0);

        a.insert(sol(&[0.0]), -4.0, vec![0.9, 0.9]).unwrap();
        assert_eq!(a.best_performance().unwrap(), 10.0);
        assert!(a.qd_score(0.0).is_err(), "min above a stored objective must error");
    }

    #[test]
    fn coverage_exact_ratio() {
        let mut a = Archive::new(grid_32x32());
        for i in 0..16 {
            let m = (i as f64 + 0.5) / 32.0;
            a.insert(sol(&[0.0]), 1.0, vec![m, m]).unwrap();
        }
        assert_eq!(a.coverage(), 0.015625);
    }

    #[test]
    fn random_elite_is_uniform_and_deterministic() {
        let mut a = Archive::new(grid_32x32());
        a.insert(sol(&[1.0]), 1.0, vec![0.1, 0.1]).unwrap();
        a.insert(sol(&[2.0]), 2.0, vec![0.9, 0.9]).unwrap();

        let mut rng = RngStream::new(5, 1);
        let mut first = 0usize;
        for _ in 0..10_000 {
            let cell = a.random_elite(&mut rng).unwrap();
            if cell.objective == 1.0 {
                first += 1;
            }
        }
        // binomial(10^4, 0.5) 99% interval
        assert!((4700..=5300).contains(&first), "count {first} outside interval");

        let picks_a: Vec<f64> = {
            let mut r = RngStream::new(9, 2);
            (0..50).map(|_| a.random_elite(&mut r).unwrap().objective).collect()
        };
        let picks_b: Vec<f64> = {
            let mut r = RngStream::new(9, 2);
            (0..50).map(|_| a.random_elite(&mut r).unwrap().objective).collect()
        };
        assert_eq!(picks_a, picks_b);
    }

    #[test]
    fn single_elite_always_selected() {
        let mut a = Archive::new(grid_32x32());
        a.insert(sol(&[3.0]), 3.0, vec![0.4, 0.4]).unwrap();
        let mut rng = RngStream::new(1, 1);
        for _ in 0..20 {
            assert_eq!(a.random_elite(&mut rng).unwrap().objective, 3.0);
        }
    }

    #[test]
    fn empty_archive_errors() {
        let a = Archive::new(grid_32x32());
        let mut rng = RngStream::new(1, 1);
        assert!(matches!(a.random_elite(&mut rng), Err(QdError::EmptyArchive)));
        assert!(matches!(a.best_performance(), Err(QdError::EmptyArchive)));
    }

    #[test]
    fn qd_score_matches_brute_force_on_random_elites() {
        let mut rng = RngStream::new(77, 3);
        let mut a = Archive::new(grid_32x32());
        let mut inserted = Vec::new();
        for _ in 0..200 {
            let m = vec![rng.uniform_01(), rng.uniform_01()];
            let f = rng.uniform(-5.0, 5.0);
            a.insert(sol(&[f]), f, m).unwrap();
        }
        for (_, c) in a.cells() {
            inserted.push(c.objective);
        }
        let brute: f64 = inserted.iter().map(|f| f - (-10.0)).sum();
        assert!((a.qd_score(-10.0).unwrap() - brute).abs() < 1e-9);
        let brute_max = inserted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best_performance().unwrap(), brute_max);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut rng = RngStream::new(123, 4);
        let mut a = Archive::new(grid_32x32());
        for _ in 0..100 {
            let m = vec![rng.uniform_01(), rng.uniform_01()];
            let f = rng.standard_normal() * 100.0;
            let s = sol(&rng.normal_vector(5));
            a.insert(s, f, m).unwrap();
        }
        let mut buf = Vec::new();
        a.save_csv(&mut buf).unwrap();
        let loaded = Archive::load_csv(a.spec().clone(), buf.as_slice()).unwrap();
        assert_eq!(a.len(), loaded.len());
        for ((ka, ca), (kb, cb)) in a.cells().zip(loaded.cells()) {
            assert_eq!(ka, kb);
            assert_eq!(ca.objective.to_bits(), cb.objective.to_bits());
            for (x, y) in ca.measures.iter().zip(cb.measures.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in ca.solution.iter().zip(cb.solution.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let mut buf2 = Vec::new();
        loaded.save_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
