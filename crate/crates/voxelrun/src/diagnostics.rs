//! Outlier diagnostics for 4D runs: per-volume standard deviation, RMS
//! successive difference, IQR fences, and the residual-variance
//! comparison that shows what dropping outlier scans buys.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::design::DesignMatrix;
use crate::glm::{self, GlmError};
use crate::linalg::Mat;
use crate::nifti::Image;
use crate::plot::{write_svg_lines, LinePlot, Series};
use crate::spatial::Mask;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("need at least 2 volumes for successive differences, got {0}")]
    TooFewVolumes(usize),
    #[error("need at least 4 values for IQR fences, got {0}")]
    TooFewValues(usize),
    #[error("outlier index {index} out of range for {total} volumes")]
    InvalidVolumeIndex { index: usize, total: usize },
    #[error("design is degenerate after dropping {0} volumes")]
    DegenerateAfterDrop(usize),
    #[error(transparent)]
    Glm(GlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which diagnostic the values in an [`OutlierReport`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticMetric {
    VolStd,
    RmsDiff,
}

/// A diagnostic vector with its IQR fences and the indices strictly
/// outside them.
#[derive(Debug, Clone)]
pub struct OutlierReport {
    pub metric: DiagnosticMetric,
    pub values: Vec<f64>,
    pub lo_thresh: f64,
    pub hi_thresh: f64,
    pub outlier_indices: Vec<usize>,
}

/// Population standard deviation (divide by N) over all voxels of each
/// volume.
pub fn vol_std(img: &Image) -> Vec<f64> {
    let n = img.n_voxels() as f64;
    (0..img.n_volumes())
        .map(|t| {
            let vol = img.volume(t);
            let mean = vol.iter().sum::<f64>() / n;
            let var = vol.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect()
}

/// Root-mean-square difference between each pair of successive volumes;
/// length T - 1.
pub fn rms_diff(img: &Image) -> Result<Vec<f64>, DiagnosticsError> {
    let nt = img.n_volumes();
    if nt < 2 {
        return Err(DiagnosticsError::TooFewVolumes(nt));
    }
    let n = img.n_voxels() as f64;
    Ok((0..nt - 1)
        .map(|t| {
            let (a, b) = (img.volume(t), img.volume(t + 1));
            let ss: f64 = a.iter().zip(b).map(|(x, y)| (y - x).powi(2)).sum();
            (ss / n).sqrt()
        })
        .collect())
}

/// Percentile with linear interpolation between order statistics at
/// position (q / 100) * (n - 1); input must be sorted.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// IQR outlier detection: fences at Q1 - scale*IQR and Q3 + scale*IQR,
/// flagging indices whose values fall strictly outside. Values on a fence
/// are not outliers.
pub fn iqr_outliers(
    values: &[f64],
    metric: DiagnosticMetric,
    scale: f64,
) -> Result<OutlierReport, DiagnosticsError> {
    if values.len() < 4 {
        return Err(DiagnosticsError::TooFewValues(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("diagnostic values must not be NaN"));
    let q1 = percentile(&sorted, 25.0);
    let q3 = percentile(&sorted, 75.0);
    let iqr = q3 - q1;
    let lo = q1 - scale * iqr;
    let hi = q3 + scale * iqr;
    let outlier_indices = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < lo || v > hi)
        .map(|(i, _)| i)
        .collect();
    Ok(OutlierReport {
        metric,
        values: values.to_vec(),
        lo_thresh: lo,
        hi_thresh: hi,
        outlier_indices,
    })
}

/// Fit the model on all volumes and again with the outlier volumes
/// removed from both the data and the design; returns the in-mask mean
/// MRSS of each fit as `(mrss_all, mrss_dropped)`.
pub fn mrss_compare(
    img: &Image,
    x: &DesignMatrix,
    outliers: &[usize],
    mask: Option<&Mask>,
) -> Result<(f64, f64), DiagnosticsError> {
    let total = img.n_volumes();
    for &idx in outliers {
        if idx >= total {
            return Err(DiagnosticsError::InvalidVolumeIndex { index: idx, total });
        }
    }

    let y = glm::voxel_matrix(img, mask);
    let full = glm::fit(&y, x).map_err(DiagnosticsError::Glm)?;

    let keep: Vec<usize> = (0..total).filter(|t| !outliers.contains(t)).collect();
    let mut y_sub = Mat::zeros(keep.len(), y.cols());
    for (row, &t) in keep.iter().enumerate() {
        for c in 0..y.cols() {
            y_sub.set(row, c, y.get(t, c));
        }
    }
    let x_sub = x.dropping_rows(outliers);
    let dropped = glm::fit(&y_sub, &x_sub).map_err(|e| match e {
        GlmError::DegenerateDesign(_) => DiagnosticsError::DegenerateAfterDrop(outliers.len()),
        other => DiagnosticsError::Glm(other),
    })?;

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok((mean(&full.mrss), mean(&dropped.mrss)))
}

fn decimals_text(values: &[f64]) -> String {
    let mut out = String::new();
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    out
}

fn indices_text(indices: &[usize]) -> String {
    let mut out = String::new();
    for i in indices {
        let _ = writeln!(out, "{i}");
    }
    out
}

fn outlier_plot(report: &OutlierReport, title: &str, series_name: &str) -> LinePlot {
    LinePlot {
        title: title.to_string(),
        series: vec![Series {
            name: series_name.to_string(),
            values: report.values.clone(),
        }],
        markers: report
            .outlier_indices
            .iter()
            .map(|&i| (i, report.values[i]))
            .collect(),
        hlines: vec![report.lo_thresh, report.hi_thresh],
    }
}

/// Write the homework artifact set: `vol_std_values.txt` (one decimal per
/// line), `vol_std_outliers.txt` (one index per line), and the figures
/// `vol_std.svg` and `vol_rms_outliers.svg` with the values, outlier
/// markers, and dashed fence lines. Returns the written paths.
pub fn write_diagnostic_outputs(
    std_report: &OutlierReport,
    rms_report: &OutlierReport,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, DiagnosticsError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let values_path = out_dir.join("vol_std_values.txt");
    crate::plot::write_atomic(&values_path, decimals_text(&std_report.values).as_bytes())?;
    written.push(values_path);

    let outliers_path = out_dir.join("vol_std_outliers.txt");
    crate::plot::write_atomic(
        &outliers_path,
        indices_text(&std_report.outlier_indices).as_bytes(),
    )?;
    written.push(outliers_path);

    let std_fig = out_dir.join("vol_std.svg");
    write_svg_lines(
        &outlier_plot(std_report, "volume standard deviation", "vol_std"),
        &std_fig,
    )?;
    written.push(std_fig);

    let rms_fig = out_dir.join("vol_rms_outliers.svg");
    write_svg_lines(
        &outlier_plot(rms_report, "RMS successive difference", "rms_diff"),
        &rms_fig,
    )?;
    written.push(rms_fig);

    Ok(written)
}
