//! The `voxelrun` command line: subcommands covering the
//! `data -> validate -> eda -> analysis -> report` reproduction flow.
//!
//! Exit codes: 0 on success, 1 on any domain error, 2 on usage errors.
//! Diagnostics go to stderr; results go to files or stdout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::design::{
    assemble_design, drift_columns, hemodynamic_regressor, load_events, DesignMatrix, HrfParams,
};
use crate::diagnostics::{
    iqr_outliers, mrss_compare, rms_diff, vol_std, write_diagnostic_outputs, DiagnosticMetric,
};
use crate::glm::{bonferroni_threshold, contrast_t, t_to_p, Contrast, StatKind, StatMap};
use crate::nifti::{drop_initial, load_image, read_header, save_image, Image};
use crate::pipeline::{
    collect_involved_files, execute, fetch, load_manifest, parse_pipeline, plan, sha256_file,
    validate_files, FileStatus, Staleness,
};
use crate::plot::{slice_mosaic, write_pgm};
use crate::spatial::{brain_mask, gaussian_smooth, mean_volume, SmoothSpec};

#[derive(Parser)]
#[command(
    name = "voxelrun",
    version,
    about = "Single-run FMRI analysis with a reproducible pipeline runner"
)]
pub struct Cli {
    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print header fields, shape, and affine of a NIfTI file.
    Info {
        image: PathBuf,
    },
    /// Download every manifest entry from a base URL, verifying digests.
    Fetch {
        manifest: PathBuf,
        /// URL prefix the manifest paths are appended to.
        #[arg(long)]
        base_url: String,
        /// Directory the files are written into.
        #[arg(long)]
        dest: PathBuf,
    },
    /// Check files against a hashes.json manifest.
    Validate {
        manifest: PathBuf,
        /// Directory the manifest paths are relative to.
        #[arg(long, default_value = ".")]
        root: PathBuf,
    },
    /// Build a design matrix from events files and write it as text.
    Design {
        /// Events files, one hemodynamic regressor per file.
        #[arg(required = true)]
        events: Vec<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// Repetition time in seconds.
        #[arg(long)]
        tr: f64,
        /// Number of scans (rows).
        #[arg(long)]
        n_scans: usize,
        /// Output file (default <out>/design.txt).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Outlier diagnostics: volume std and RMS difference with IQR fences.
    Diagnose {
        image: PathBuf,
        /// Drop this many initial volumes first.
        #[arg(long, default_value_t = 0)]
        drop: usize,
        /// IQR fence scale.
        #[arg(long, default_value_t = 1.5)]
        scale: f64,
        /// Events files; when given, also compare model MRSS with and
        /// without the detected outlier volumes.
        #[arg(long)]
        events: Vec<PathBuf>,
        /// Repetition time override (default: image header).
        #[arg(long)]
        tr: Option<f64>,
        /// Polynomial drift order for the MRSS comparison model.
        #[arg(long, default_value_t = 0)]
        drift: usize,
    },
    /// Gaussian-smooth an image and save it.
    Smooth {
        image: PathBuf,
        /// Kernel full width at half maximum, in mm.
        #[arg(long)]
        fwhm: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Voxelwise GLM: t and p maps per contrast plus a results summary.
    Glm {
        image: PathBuf,
        /// Events files, one task regressor per file.
        #[arg(required = true)]
        events: Vec<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// Repetition time override (default: image header).
        #[arg(long)]
        tr: Option<f64>,
        /// Contrast weights as space-separated decimals; repeatable.
        #[arg(long = "contrast", required = true)]
        contrasts: Vec<String>,
        /// Family-wise error rate for the Bonferroni threshold.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Optional smoothing FWHM in mm, applied before fitting.
        #[arg(long)]
        fwhm: Option<f64>,
        /// Brain-mask threshold as a fraction of the peak mean intensity.
        #[arg(long, default_value_t = 0.2)]
        mask_fraction: f64,
        /// Drop this many initial volumes first.
        #[arg(long, default_value_t = 0)]
        drop: usize,
    },
    /// Plan and run pipeline targets from a Pipeline file.
    Run {
        /// Target to bring up to date (default: first rule).
        target: Option<String>,
        /// Pipeline file.
        #[arg(short = 'f', long = "file", default_value = "Pipeline")]
        file: PathBuf,
        /// Use content hashes instead of mtimes for staleness.
        #[arg(long)]
        hash: bool,
    },
    /// Assemble report.md from the artifacts in the output directory.
    Report,
}

/// Flags shared by the design-building commands.
#[derive(Args)]
struct ModelArgs {
    /// Polynomial drift order (0, 1, or 2).
    #[arg(long, default_value_t = 0)]
    drift: usize,
    /// High-resolution grid divisor: regressors are built at dt = TR/DT_FRAC.
    #[arg(long, default_value_t = 100)]
    dt_frac: usize,
}

/// Parse and dispatch; returns the process exit status.
pub fn run_from<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = err.exit_code();
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Info { ref image } => cmd_info(image),
        Command::Fetch {
            ref manifest,
            ref base_url,
            ref dest,
        } => cmd_fetch(manifest, base_url, dest, cli.quiet),
        Command::Validate {
            ref manifest,
            ref root,
        } => cmd_validate(manifest, root),
        Command::Design {
            ref events,
            ref model,
            tr,
            n_scans,
            ref output,
        } => cmd_design(&cli, events, model, tr, n_scans, output.as_deref()),
        Command::Diagnose {
            ref image,
            drop,
            scale,
            ref events,
            tr,
            drift,
        } => cmd_diagnose(&cli, image, drop, scale, events, tr, drift),
        Command::Smooth {
            ref image,
            fwhm,
            ref output,
        } => cmd_smooth(image, fwhm, output),
        Command::Glm {
            ref image,
            ref events,
            ref model,
            tr,
            ref contrasts,
            alpha,
            fwhm,
            mask_fraction,
            drop,
        } => cmd_glm(
            &cli,
            image,
            events,
            model,
            tr,
            contrasts,
            alpha,
            fwhm,
            mask_fraction,
            drop,
        ),
        Command::Run {
            ref target,
            ref file,
            hash,
        } => cmd_run(target.as_deref(), file, hash, cli.quiet),
        Command::Report => {
            let path = crate::report::write_report(&cli.out)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn cmd_info(image: &Path) -> Result<()> {
    let hdr = read_header(image).with_context(|| format!("reading {}", image.display()))?;
    println!("file: {}", image.display());
    println!("byte_order: {:?}", hdr.byte_order);
    println!("datatype: {}", hdr.datatype);
    println!("bitpix: {}", hdr.bitpix);
    let shape = hdr.shape4();
    println!("ndim: {}", hdr.ndim());
    println!("shape: {} {} {} {}", shape[0], shape[1], shape[2], shape[3]);
    println!(
        "voxel_size_mm: {} {} {}",
        hdr.pixdim[1], hdr.pixdim[2], hdr.pixdim[3]
    );
    println!("tr_s: {}", hdr.pixdim[4]);
    println!("vox_offset: {}", hdr.vox_offset);
    println!("scl_slope: {}", hdr.scl_slope);
    println!("scl_inter: {}", hdr.scl_inter);
    println!("sform_code: {}", hdr.sform_code);
    for (name, row) in [("x", hdr.srow_x), ("y", hdr.srow_y), ("z", hdr.srow_z)] {
        println!("srow_{name}: {} {} {} {}", row[0], row[1], row[2], row[3]);
    }
    Ok(())
}

fn cmd_fetch(manifest_path: &Path, base_url: &str, dest: &Path, quiet: bool) -> Result<()> {
    let manifest = load_manifest(manifest_path)
        .with_context(|| format!("loading {}", manifest_path.display()))?;
    let base = base_url.trim_end_matches('/');
    for (rel, digest) in manifest.entries() {
        let url = format!("{base}/{rel}");
        let target = dest.join(rel);
        let outcome = fetch(&url, &target, Some(digest))
            .with_context(|| format!("fetching {url}"))?;
        if !quiet {
            eprintln!("{outcome:?}: {rel}");
        }
    }
    println!("fetched {} files into {}", manifest.len(), dest.display());
    Ok(())
}

fn cmd_validate(manifest_path: &Path, root: &Path) -> Result<()> {
    let manifest = load_manifest(manifest_path)
        .with_context(|| format!("loading {}", manifest_path.display()))?;
    let checks = validate_files(&manifest, root)?;
    let mut bad = 0usize;
    for check in &checks {
        match &check.status {
            FileStatus::Ok => println!("ok       {}", check.path),
            FileStatus::Missing => {
                bad += 1;
                println!("missing  {}", check.path);
            }
            FileStatus::Mismatch { actual } => {
                bad += 1;
                println!("mismatch {} (got {actual})", check.path);
            }
        }
    }
    if bad > 0 {
        bail!("{bad} of {} files failed validation", checks.len());
    }
    println!("all {} files ok", checks.len());
    Ok(())
}

/// Task regressor columns from events files, one per file, named by stem.
fn task_columns(
    events_paths: &[PathBuf],
    tr: f64,
    n_scans: usize,
    dt_frac: usize,
) -> Result<Vec<(String, Vec<f64>)>> {
    let hrf = HrfParams::default();
    events_paths
        .iter()
        .map(|path| {
            let events =
                load_events(path).with_context(|| format!("loading {}", path.display()))?;
            let column = hemodynamic_regressor(&events, &hrf, tr, n_scans, dt_frac)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "task".into());
            Ok((name, column))
        })
        .collect()
}

fn confound_columns(n_scans: usize, drift: usize) -> Result<Vec<(String, Vec<f64>)>> {
    if drift == 0 {
        return Ok(Vec::new());
    }
    if drift > 2 {
        bail!("drift order must be 0, 1, or 2; got {drift}");
    }
    Ok(drift_columns(n_scans, drift)?
        .into_iter()
        .enumerate()
        .map(|(i, col)| (format!("drift_{}", i + 1), col))
        .collect())
}

fn build_design(
    events_paths: &[PathBuf],
    tr: f64,
    n_scans: usize,
    model: &ModelArgs,
) -> Result<DesignMatrix> {
    if tr <= 0.0 {
        bail!("repetition time must be positive; pass --tr or fix the header (got {tr})");
    }
    let tasks = task_columns(events_paths, tr, n_scans, model.dt_frac)?;
    let confounds = confound_columns(n_scans, model.drift)?;
    Ok(assemble_design(&tasks, &confounds, n_scans, tr)?)
}

fn cmd_design(
    cli: &Cli,
    events: &[PathBuf],
    model: &ModelArgs,
    tr: f64,
    n_scans: usize,
    output: Option<&Path>,
) -> Result<()> {
    let design = build_design(events, tr, n_scans, model)?;
    let path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cli.out.join("design.txt"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    design.write_text(&path)?;
    println!(
        "design: {} scans x {} columns ({}) -> {}",
        design.n_scans(),
        design.n_columns(),
        design.column_names.join(" "),
        path.display()
    );
    Ok(())
}

fn load_and_trim(image: &Path, drop: usize) -> Result<Image> {
    let img = load_image(image).with_context(|| format!("loading {}", image.display()))?;
    if drop == 0 {
        return Ok(img);
    }
    Ok(drop_initial(&img, drop)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_diagnose(
    cli: &Cli,
    image: &Path,
    drop: usize,
    scale: f64,
    events: &[PathBuf],
    tr: Option<f64>,
    drift: usize,
) -> Result<()> {
    let full = load_image(image).with_context(|| format!("loading {}", image.display()))?;
    let total = full.n_volumes();
    let img = if drop > 0 {
        drop_initial(&full, drop)?
    } else {
        full
    };

    let std_values = vol_std(&img);
    let std_report = iqr_outliers(&std_values, DiagnosticMetric::VolStd, scale)?;
    let rms_values = rms_diff(&img)?;
    let rms_report = iqr_outliers(&rms_values, DiagnosticMetric::RmsDiff, scale)?;

    std::fs::create_dir_all(&cli.out)?;
    let written = write_diagnostic_outputs(&std_report, &rms_report, &cli.out)?;
    if !cli.quiet {
        for path in &written {
            eprintln!("wrote {}", path.display());
        }
    }

    let fmt_indices = |ix: &[usize]| {
        ix.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut summary = String::new();
    let _ = writeln!(summary, "image: {}", image.display());
    let shape = img.shape();
    let _ = writeln!(summary, "shape: {} {} {} {total}", shape[0], shape[1], shape[2]);
    let _ = writeln!(summary, "tr_s: {}", img.tr_s);
    let _ = writeln!(summary, "n_volumes_total: {total}");
    let _ = writeln!(summary, "dropped_initial: {drop}");
    let _ = writeln!(summary, "n_volumes_analyzed: {}", img.n_volumes());
    let _ = writeln!(summary, "iqr_scale: {scale}");
    let _ = writeln!(summary, "vol_std_lo_thresh: {}", std_report.lo_thresh);
    let _ = writeln!(summary, "vol_std_hi_thresh: {}", std_report.hi_thresh);
    let _ = writeln!(
        summary,
        "vol_std_outliers: {}",
        fmt_indices(&std_report.outlier_indices)
    );
    let _ = writeln!(summary, "rms_diff_lo_thresh: {}", rms_report.lo_thresh);
    let _ = writeln!(summary, "rms_diff_hi_thresh: {}", rms_report.hi_thresh);
    let _ = writeln!(
        summary,
        "rms_diff_outliers: {}",
        fmt_indices(&rms_report.outlier_indices)
    );

    // volumes implicated by either metric: an RMS outlier at index t
    // points at the jump into volume t + 1
    let mut implicated: Vec<usize> = std_report.outlier_indices.clone();
    for &t in &rms_report.outlier_indices {
        if !implicated.contains(&(t + 1)) {
            implicated.push(t + 1);
        }
    }
    implicated.sort_unstable();
    let _ = writeln!(summary, "outlier_volumes: {}", fmt_indices(&implicated));

    if !events.is_empty() {
        let tr = tr.unwrap_or(img.tr_s);
        let model = ModelArgs { drift, dt_frac: 100 };
        let design = build_design(events, tr, img.n_volumes(), &model)?;
        let (all, dropped) = mrss_compare(&img, &design, &implicated, None)?;
        let _ = writeln!(summary, "mrss_all: {all}");
        let _ = writeln!(summary, "mrss_dropped: {dropped}");
    }

    let summary_path = cli.out.join("diagnostics.txt");
    crate::plot::write_atomic(&summary_path, summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn cmd_smooth(image: &Path, fwhm: f64, output: &Path) -> Result<()> {
    let img = load_image(image).with_context(|| format!("loading {}", image.display()))?;
    let spec = SmoothSpec::from_fwhm(fwhm)?;
    let smoothed = gaussian_smooth(&img, &spec)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_image(&smoothed, output)?;
    println!("smoothed {} (fwhm {fwhm} mm) -> {}", image.display(), output.display());
    Ok(())
}

fn parse_contrast(text: &str, p: usize) -> Result<Contrast> {
    let weights: Vec<f64> = text
        .split_whitespace()
        .map(|f| {
            f.parse::<f64>()
                .with_context(|| format!("bad contrast weight {f:?}"))
        })
        .collect::<Result<_>>()?;
    if weights.len() != p {
        bail!(
            "contrast {text:?} has {} weights but the design has {p} columns",
            weights.len()
        );
    }
    Ok(Contrast::new(weights)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_glm(
    cli: &Cli,
    image: &Path,
    events: &[PathBuf],
    model: &ModelArgs,
    tr: Option<f64>,
    contrasts: &[String],
    alpha: f64,
    fwhm: Option<f64>,
    mask_fraction: f64,
    drop: usize,
) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        bail!("alpha must be in (0, 1); got {alpha}");
    }
    if !(0.0..1.0).contains(&mask_fraction) || mask_fraction == 0.0 {
        bail!("mask fraction must be in (0, 1); got {mask_fraction}");
    }

    let mut img = load_and_trim(image, drop)?;
    if let Some(fwhm) = fwhm {
        img = gaussian_smooth(&img, &SmoothSpec::from_fwhm(fwhm)?)?;
    }
    let tr = tr.unwrap_or(img.tr_s);
    let n_scans = img.n_volumes();
    let design = build_design(events, tr, n_scans, model)?;
    let p = design.n_columns();

    let parsed: Vec<Contrast> = contrasts
        .iter()
        .map(|c| parse_contrast(c, p))
        .collect::<Result<_>>()?;

    let mask = brain_mask(&mean_volume(&img), mask_fraction);
    let n_tests = mask.n_inside();
    if n_tests == 0 {
        bail!("the brain mask is empty; lower --mask-fraction");
    }
    let y = crate::glm::voxel_matrix(&img, Some(&mask));
    let fit = crate::glm::fit(&y, &design)?;
    if !cli.quiet && fit.rank < p {
        eprintln!(
            "warning: design is rank deficient (rank {} of {p} columns)",
            fit.rank
        );
    }

    std::fs::create_dir_all(&cli.out)?;
    let design_path = cli.out.join("design.txt");
    design.write_text(&design_path)?;

    let bonferroni = bonferroni_threshold(alpha, n_tests);
    let mut summary = String::new();
    let _ = writeln!(summary, "image: {}", image.display());
    let shape = img.shape();
    let _ = writeln!(
        summary,
        "shape: {} {} {} {}",
        shape[0], shape[1], shape[2], shape[3]
    );
    let _ = writeln!(summary, "tr_s: {tr}");
    let _ = writeln!(summary, "dropped_initial: {drop}");
    match fwhm {
        Some(f) => {
            let _ = writeln!(summary, "smoothing_fwhm_mm: {f}");
        }
        None => {
            let _ = writeln!(summary, "smoothing_fwhm_mm: none");
        }
    }
    let _ = writeln!(summary, "n_scans: {n_scans}");
    let _ = writeln!(summary, "design_columns: {}", design.column_names.join(" "));
    let _ = writeln!(summary, "rank: {}", fit.rank);
    let _ = writeln!(summary, "df: {}", fit.df);
    let _ = writeln!(summary, "mask_fraction: {mask_fraction}");
    let _ = writeln!(summary, "mask_voxels: {n_tests}");
    let _ = writeln!(summary, "alpha: {alpha}");
    let _ = writeln!(summary, "bonferroni_alpha: {bonferroni}");

    for (idx, contrast) in parsed.iter().enumerate() {
        let label = format!("contrast_{}", idx + 1);
        let (ts, df) = contrast_t(&fit, contrast)?;
        let ps: Vec<f64> = ts.iter().map(|&t| t_to_p(t, df, true)).collect();
        let significant = ps.iter().filter(|&&pv| pv < bonferroni).count();
        let max_abs_t = ts.iter().fold(0.0f64, |acc, t| acc.max(t.abs()));

        let t_map = StatMap::from_masked(StatKind::T, &ts, &mask, img.affine, Some(df))?;
        let p_map = StatMap::from_masked(StatKind::P, &ps, &mask, img.affine, Some(df))?;
        let t_path = cli.out.join(format!("{label}_t.nii"));
        let p_path = cli.out.join(format!("{label}_p.nii"));
        save_image(&t_map.to_image(), &t_path)?;
        save_image(&p_map.to_image(), &p_path)?;

        let mosaic_cols = (shape[2] as f64).sqrt().ceil() as usize;
        let mosaic = slice_mosaic(&t_map.to_image(), mosaic_cols.max(1));
        write_pgm(&mosaic, cli.out.join(format!("{label}_t.pgm")))?;

        let weights = contrast
            .weights()
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(summary, "{label}_weights: {weights}");
        let _ = writeln!(summary, "{label}_max_abs_t: {max_abs_t}");
        let _ = writeln!(summary, "{label}_significant_voxels: {significant}");
        if !cli.quiet {
            eprintln!("wrote {} and {}", t_path.display(), p_path.display());
        }
    }

    let results_path = cli.out.join("results.txt");
    crate::plot::write_atomic(&results_path, summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn cmd_run(target: Option<&str>, file: &Path, hash: bool, quiet: bool) -> Result<()> {
    let text = std::fs::read_to_string(file)
        .with_context(|| format!("reading pipeline file {}", file.display()))?;
    let graph = parse_pipeline(&text)?;
    let target = match target {
        Some(t) => t.to_string(),
        None => graph
            .default_target()
            .context("pipeline file has no rules")?
            .to_string(),
    };

    let root = std::env::current_dir()?;
    let cache_path = file
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."))
        .join(".voxelrun-hashes");
    let mode = if hash {
        let cache: BTreeMap<String, String> = if cache_path.is_file() {
            serde_json::from_str(&std::fs::read_to_string(&cache_path)?)
                .unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        Staleness::ContentHash(cache)
    } else {
        Staleness::Mtime
    };

    let planned = plan(&graph, &target, &root, &mode)?;
    if !quiet {
        eprintln!(
            "{}: {} rule(s) to run",
            target,
            planned.len()
        );
    }
    let report = execute(&planned, &root, quiet)?;

    if hash {
        let mut cache = BTreeMap::new();
        for name in collect_involved_files(&graph, &target)? {
            let path = root.join(&name);
            if path.is_file() {
                cache.insert(name, sha256_file(&path)?);
            }
        }
        crate::plot::write_atomic(
            &cache_path,
            serde_json::to_string_pretty(&cache)?.as_bytes(),
        )?;
    }

    println!(
        "{target}: ran {} command(s) across {} rule(s)",
        report.commands_run(),
        planned.len()
    );
    Ok(())
}
