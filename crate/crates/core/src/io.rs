//! Artifact emission: labeled CSV matrices, 8-bit PGM heatmaps with
//! min/max sidecars, and the path-measure debug format.
//!
//! Floats are written with Rust's shortest round-trip formatting, which is
//! locale independent and bitwise reproducible across runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::diagnostics::PlanSlice;
use crate::error::Result;
use crate::flows::PathMeasure;

/// CSV matrix with axis labels: the first row is
/// `<row_axis>\<col_axis>, <col labels...>`, each further row starts with
/// its row label.
pub fn write_matrix_csv(
    path: &Path,
    data: &Array2<f64>,
    row_axis: &str,
    col_axis: &str,
    row_labels: &[f64],
    col_labels: &[f64],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "{row_axis}\\{col_axis}")?;
    for c in col_labels {
        write!(out, ",{c}")?;
    }
    writeln!(out)?;
    for (i, row) in data.rows().into_iter().enumerate() {
        write!(out, "{}", row_labels[i])?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Write a plan slice with its axis labels.
pub fn write_plan_slice_csv(path: &Path, slice: &PlanSlice) -> Result<()> {
    write_matrix_csv(
        path,
        slice.data(),
        slice.row_axis(),
        slice.col_axis(),
        slice.row_labels(),
        slice.col_labels(),
    )
}

/// Binary 8-bit PGM heatmap, linearly normalized to 0..=255, plus a
/// `<file>.txt` sidecar recording the data min/max used for the
/// normalization. Returns `(min, max)`.
pub fn write_pgm_heatmap(path: &Path, data: &Array2<f64>) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(crate::error::Error::NonFinite("heatmap data"));
    }
    let span = hi - lo;
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", data.ncols(), data.nrows())?;
    let mut bytes = Vec::with_capacity(data.len());
    for row in data.rows() {
        for &v in row {
            let byte = if span == 0.0 {
                0u8
            } else {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            };
            bytes.push(byte);
        }
    }
    out.write_all(&bytes)?;
    drop(out);

    let sidecar = path_with_suffix(path, ".txt");
    let mut side = BufWriter::new(File::create(sidecar)?);
    writeln!(side, "min = {lo}")?;
    writeln!(side, "max = {hi}")?;
    Ok((lo, hi))
}

fn path_with_suffix(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(suffix);
    std::path::PathBuf::from(name)
}

/// Debug dump of a path measure: one row per path sample,
/// `path,weight,t,x,r`.
pub fn write_paths_csv(path: &Path, measure: &PathMeasure) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "path,weight,t,x,r")?;
    for i in 0..measure.len() {
        for (k, point) in measure.path(i).iter().enumerate() {
            writeln!(
                out,
                "{i},{},{},{},{}",
                measure.weight(i),
                measure.times()[k],
                point.x(),
                point.r()
            )?;
        }
    }
    Ok(())
}
