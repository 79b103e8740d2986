//! Experiment harness: configuration, budget planning, the runner, metric
//! definitions, and archive visualization files.

pub mod config;
pub mod emit;
pub mod metrics;
pub mod plan;
pub mod runner;

pub use config::{
    parse_config, Accounting, AlgorithmConfig, ArchiveConfig, EnvConfig, ExperimentConfig,
    RunConfig, Td3Settings,
};
pub use emit::{emit_heatmap_csv, emit_heatmap_svg, emit_histogram};
pub use metrics::{
    mean_elite_robustness, qd_score_auc, read_metrics_csv, write_metrics_csv, MetricsRow,
};
pub use plan::{plan, Plan};
pub use runner::{build_evaluator, build_scheduler, run_experiment, RunResult, Summary};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Writes through a temp file in the same directory and renames into place,
/// so readers never observe a partial file.
pub fn write_atomic(
    path: &Path,
    write_fn: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut writer = BufWriter::new(File::create(&tmp)?);
        write_fn(&mut writer)?;
        writer.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
