//! Per-iteration metric rows and the derived scalar metrics.

use std::io::{BufRead, BufReader, Write};

use crate::archive::Archive;
use crate::envs::Evaluator;
use crate::error::{QdError, Result};
use crate::rng::RngStream;

pub const METRICS_HEADER: &str =
    "iteration,evaluations,qd_score,coverage,best_performance,wall_time_s";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    pub evaluations: u64,
    pub qd_score: f64,
    pub coverage: f64,
    pub best_performance: f64,
    pub wall_time_s: f64,
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration, r.evaluations, r.qd_score, r.coverage, r.best_performance, r.wall_time_s
        )?;
    }
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| QdError::parse("metrics csv", "missing header"))?
        .map_err(QdError::Io)?;
    if header != METRICS_HEADER {
        return Err(QdError::parse(
            "metrics csv",
            format!("unexpected header {header:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (no, line) in lines.enumerate() {
        let line = line.map_err(QdError::Io)?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(QdError::parse(
                "metrics csv",
                format!("row {}: expected 6 fields", no + 2),
            ));
        }
        let err = |e: String| QdError::parse("metrics csv", format!("row {}: {e}", no + 2));
        rows.push(MetricsRow {
            iteration: f[0].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
            evaluations: f[1].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
            qd_score: f[2].parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
            coverage: f[3].parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
            best_performance: f[4]
                .parse()
                .map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
            wall_time_s: f[5]
                .parse()
                .map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
        });
    }
    Ok(rows)
}

/// Riemann-sum area under the QD-score curve: each iteration's score is
/// weighted by the evaluations that iteration consumed. With a fixed
/// per-iteration cost this is exactly `sum_i cost * score_i`.
pub fn qd_score_auc(history: &[MetricsRow]) -> f64 {
    let mut previous = 0u64;
    let mut total = 0.0;
    for row in history {
        total += (row.evaluations - previous) as f64 * row.qd_score;
        previous = row.evaluations;
    }
    total
}

/// Mean over elites of (mean re-evaluated objective - archived objective).
/// Zero on deterministic environments; negative when single-episode
/// insertions exploited evaluation noise.
pub fn mean_elite_robustness(
    archive: &Archive,
    evaluator: &dyn Evaluator,
    episodes: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if archive.is_empty() {
        return Err(QdError::EmptyArchive);
    }
    if episodes == 0 {
        return Err(QdError::invalid("robustness needs at least one episode"));
    }
    // mean(re-evals) - archived, computed as mean of per-episode
    // differences so a deterministic environment reports exactly zero
    let mut total = 0.0;
    for (_, cell) in archive.cells() {
        let mut diff_sum = 0.0;
        for _ in 0..episodes {
            diff_sum += evaluator.evaluate(&cell.solution, rng)?.objective - cell.objective;
        }
        total += diff_sum / episodes as f64;
    }
    Ok(total / archive.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iteration: u64, evaluations: u64, qd_score: f64) -> MetricsRow {
        MetricsRow {
            iteration,
            evaluations,
            qd_score,
            coverage: 0.5,
            best_performance: 1.0,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn auc_of_constant_score_is_n_lambda_s() {
        let rows: Vec<MetricsRow> = (1..=10).map(|i| row(i, i * 200, 7.0)).collect();
        assert_eq!(qd_score_auc(&rows), 10.0 * 200.0 * 7.0);
    }

    #[test]
    fn auc_single_row() {
        assert_eq!(qd_score_auc(&[row(1, 200, 7.0)]), 1400.0);
    }

    #[test]
    fn auc_matches_brute_force_on_random_history() {
        let mut rng = crate::rng::RngStream::new(9, 1);
        let mut rows = Vec::new();
        let mut evals = 0;
        for i in 1..=100 {
            evals += 100;
            rows.push(row(i, evals, rng.uniform(0.0, 1000.0)));
        }
        let brute: f64 = rows.iter().map(|r| 100.0 * r.qd_score).sum();
        assert!((qd_score_auc(&rows) - brute).abs() < 1e-9);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let rows: Vec<MetricsRow> = (1..=5)
            .map(|i| MetricsRow {
                iteration: i,
                evaluations: i * 37,
                qd_score: i as f64 * 0.1,
                coverage: 1.0 / i as f64,
                best_performance: -(i as f64),
                wall_time_s: 0.0,
            })
            .collect();
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        let back = read_metrics_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, back);
    }
}
