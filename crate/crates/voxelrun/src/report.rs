//! Deterministic Markdown report assembly.
//!
//! The report is built purely from artifact files found under the output
//! directory (`results.txt` from model fits, `diagnostics.txt` from the
//! outlier checks, plus any figures), so rebuilding without input changes
//! reproduces it byte for byte. No timestamps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// `key: value` lines from a summary artifact, order preserved.
fn read_summary(path: &Path) -> std::io::Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|line| {
            line.split_once(':')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        })
        .collect())
}

fn find_files(root: &Path, name: &str) -> Vec<PathBuf> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&dir) else {
            continue;
        };
        let mut children: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).collect();
        children.sort();
        for child in children {
            if child.is_dir() {
                stack.push(child);
            } else if child.file_name().is_some_and(|f| f == name) {
                found.push(child);
            }
        }
    }
    found.sort();
    found
}

fn find_figures(root: &Path) -> Vec<PathBuf> {
    let mut figures = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&dir) else {
            continue;
        };
        for entry in entries.filter_map(|e| e.ok()) {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if matches!(
                path.extension().and_then(|e| e.to_str()),
                Some("svg") | Some("pgm")
            ) {
                figures.push(path);
            }
        }
    }
    figures.sort();
    figures
}

fn relative<'a>(path: &'a Path, root: &Path) -> std::borrow::Cow<'a, str> {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
}

fn summary_section(out: &mut String, entries: &[(String, String)], keys: &[&str]) {
    for (k, v) in entries {
        if keys.is_empty() || keys.contains(&k.as_str()) {
            let _ = writeln!(out, "- {k}: {v}");
        }
    }
}

/// Assemble `report.md` from the artifacts under `out_dir` and return
/// its path. Sections appear only when their artifacts exist; every
/// figure under the directory is linked exactly once.
pub fn write_report(out_dir: &Path) -> std::io::Result<PathBuf> {
    let mut md = String::from("# Analysis report\n");

    let fit_summaries = find_files(out_dir, "results.txt");
    let diag_summaries = find_files(out_dir, "diagnostics.txt");

    // dataset identity comes from whichever summary knows it
    let mut dataset: Vec<(String, String)> = Vec::new();
    for path in fit_summaries.iter().chain(&diag_summaries) {
        let entries = read_summary(path)?;
        for key in ["image", "shape", "tr_s"] {
            if !dataset.iter().any(|(k, _)| k == key) {
                if let Some((k, v)) = entries.iter().find(|(k, _)| k == key) {
                    dataset.push((k.clone(), v.clone()));
                }
            }
        }
    }
    if !dataset.is_empty() {
        md.push_str("\n## Dataset\n\n");
        summary_section(&mut md, &dataset, &[]);
    }

    for path in &diag_summaries {
        let entries = read_summary(path)?;
        let _ = writeln!(md, "\n## Diagnostics ({})", relative(path, out_dir));
        md.push('\n');
        summary_section(
            &mut md,
            &entries,
            &[
                "n_volumes_total",
                "dropped_initial",
                "n_volumes_analyzed",
                "iqr_scale",
                "vol_std_lo_thresh",
                "vol_std_hi_thresh",
                "vol_std_outliers",
                "rms_diff_lo_thresh",
                "rms_diff_hi_thresh",
                "rms_diff_outliers",
                "mrss_all",
                "mrss_dropped",
            ],
        );
    }

    for path in &fit_summaries {
        let entries = read_summary(path)?;
        let _ = writeln!(md, "\n## Model fit ({})", relative(path, out_dir));
        md.push('\n');
        let skip = ["image", "shape", "tr_s"];
        let kept: Vec<(String, String)> = entries
            .iter()
            .filter(|(k, _)| !skip.contains(&k.as_str()))
            .cloned()
            .collect();
        summary_section(&mut md, &kept, &[]);
    }

    let figures = find_figures(out_dir);
    if !figures.is_empty() {
        md.push_str("\n## Figures\n\n");
        for fig in &figures {
            let rel = relative(fig, out_dir);
            let _ = writeln!(md, "![{rel}]({rel})");
        }
    }

    let path = out_dir.join("report.md");
    crate::plot::write_atomic(&path, md.as_bytes())?;
    Ok(path)
}
