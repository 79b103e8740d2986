//! Archive visualization files: dense heatmap CSV, heatmap SVG, and an
//! objective-value histogram CSV.

use std::io::Write;

use crate::archive::Archive;
use crate::error::{QdError, Result};

fn require_2d(archive: &Archive) -> Result<(usize, usize)> {
    let dims = archive.spec().dims();
    if dims.len() != 2 {
        return Err(QdError::Unsupported(format!(
            "heatmaps need a 2-dimensional measure space, this archive has {} dimensions",
            dims.len()
        )));
    }
    Ok((dims[0], dims[1]))
}

/// Dense matrix of objectives, one row per first-measure index, blank cells
/// where no elite exists.
pub fn emit_heatmap_csv<W: Write>(archive: &Archive, mut out: W) -> Result<()> {
    let (rows, cols) = require_2d(archive)?;
    for i in 0..rows {
        let mut fields = Vec::with_capacity(cols);
        for j in 0..cols {
            let flat = archive.spec().flat_index(&[i, j]);
            match archive.get(flat) {
                Some(cell) => fields.push(format!("{}", cell.objective)),
                None => fields.push(String::new()),
            }
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Three-stop color scale over [0, 1].
fn color(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 3] = [
        (0.267, 0.005, 0.329),
        (0.128, 0.567, 0.551),
        (0.993, 0.906, 0.144),
    ];
    let t = t.clamp(0.0, 1.0);
    let (lo, hi, u) = if t < 0.5 {
        (STOPS[0], STOPS[1], t * 2.0)
    } else {
        (STOPS[1], STOPS[2], (t - 0.5) * 2.0)
    };
    let channel = |a: f64, b: f64| ((a + (b - a) * u) * 255.0).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        channel(lo.0, hi.0),
        channel(lo.1, hi.1),
        channel(lo.2, hi.2)
    )
}

/// One rectangle per archive cell, colored by objective over
/// [min_objective, max_objective]; empty cells are light gray.
pub fn emit_heatmap_svg<W: Write>(
    archive: &Archive,
    min_objective: f64,
    max_objective: f64,
    mut out: W,
) -> Result<()> {
    let (rows, cols) = require_2d(archive)?;
    let cell_px = 16usize;
    let (width, height) = (cols * cell_px, rows * cell_px);
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    )?;
    let span = (max_objective - min_objective).max(f64::MIN_POSITIVE);
    for i in 0..rows {
        for j in 0..cols {
            let flat = archive.spec().flat_index(&[i, j]);
            let fill = match archive.get(flat) {
                Some(cell) => color((cell.objective - min_objective) / span),
                None => "#e0e0e0".to_string(),
            };
            writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{cell_px}\" height=\"{cell_px}\" fill=\"{fill}\"/>",
                j * cell_px,
                i * cell_px,
            )?;
        }
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

/// Histogram of elite objectives over [min_objective, max_objective + margin]
/// as (bin lower edge, count) rows. Out-of-range values clamp into the end
/// bins.
pub fn emit_histogram<W: Write>(
    archive: &Archive,
    bins: usize,
    min_objective: f64,
    max_objective: f64,
    margin: f64,
    mut out: W,
) -> Result<()> {
    if bins == 0 {
        return Err(QdError::invalid("histogram needs at least one bin"));
    }
    let hi = max_objective + margin;
    if !(hi > min_objective) {
        return Err(QdError::invalid(
            "histogram range is empty; check min/max objectives and margin",
        ));
    }
    let width = (hi - min_objective) / bins as f64;
    let mut counts = vec![0u64; bins];
    for (_, cell) in archive.cells() {
        let idx = ((cell.objective - min_objective) / width).floor();
        let idx = (idx.max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    for (i, count) in counts.iter().enumerate() {
        writeln!(out, "{},{count}", min_objective + i as f64 * width)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::GridSpec;
    use crate::types::SolutionVector;

    fn two_by_two() -> Archive {
        let spec = GridSpec::new(vec![2, 2], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let mut a = Archive::new(spec);
        for (f, m) in [
            (1.0, [0.25, 0.25]),
            (2.0, [0.25, 0.75]),
            (3.0, [0.75, 0.25]),
            (4.0, [0.75, 0.75]),
        ] {
            a.insert(SolutionVector::new(vec![f]).unwrap(), f, m.to_vec())
                .unwrap();
        }
        a
    }

    #[test]
    fn heatmap_csv_rows_follow_first_measure() {
        let mut buf = Vec::new();
        emit_heatmap_csv(&two_by_two(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1,2\n3,4\n");
    }

    #[test]
    fn empty_archive_emits_blank_matrix() {
        let spec = GridSpec::new(vec![2, 3], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        emit_heatmap_csv(&Archive::new(spec), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ",,\n,,\n");
    }

    #[test]
    fn svg_has_one_rect_per_cell() {
        let spec = GridSpec::new(vec![32, 32], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let mut archive = Archive::new(spec);
        archive
            .insert(SolutionVector::new(vec![1.0]).unwrap(), 5.0, vec![0.5, 0.5])
            .unwrap();
        let mut buf = Vec::new();
        emit_heatmap_svg(&archive, 0.0, 10.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches("<rect").count(), 1024);
    }

    #[test]
    fn non_2d_archives_are_rejected_with_context() {
        let spec = GridSpec::new(vec![4, 4, 4], vec![0.0; 3], vec![1.0; 3]).unwrap();
        let err = emit_heatmap_csv(&Archive::new(spec), Vec::new()).unwrap_err();
        assert!(err.to_string().contains("2-dimensional"));
    }

    #[test]
    fn histogram_single_elite_single_nonzero_bin() {
        let spec = GridSpec::new(vec![2, 2], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let mut archive = Archive::new(spec);
        archive
            .insert(SolutionVector::new(vec![1.0]).unwrap(), 3.0, vec![0.5, 0.5])
            .unwrap();
        let mut buf = Vec::new();
        emit_histogram(&archive, 10, 0.0, 10.0, 0.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let nonzero = text
            .lines()
            .filter(|l| !l.ends_with(",0"))
            .collect::<Vec<_>>();
        assert_eq!(nonzero, vec!["3,1"]);
    }

    #[test]
    fn histogram_counts_match_brute_force() {
        let a = two_by_two();
        let mut buf = Vec::new();
        emit_histogram(&a, 4, 0.0, 4.0, 0.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // bins [0,1), [1,2), [2,3), [3,4+]; 4.0 clamps into the last bin
        assert_eq!(text, "0,0\n1,1\n2,1\n3,2\n");
    }
}
