//! Hemodynamic regressors and design-matrix assembly.
//!
//! The model pipeline: task events become a high-resolution box-car
//! (`neural_signal`), the box-car is convolved with a canonical
//! double-gamma HRF under the linear-time-invariant assumption
//! (`hrf_samples` + `convolve`), and the result is sampled at scan onsets
//! with linear interpolation (`sample_at`). Drift columns and the
//! intercept complete the design.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::linalg::Mat;
use crate::special::ln_gamma;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("line {line}: expected 3 numeric fields, got {found:?}")]
    MalformedLine { line: usize, found: String },
    #[error("line {line}: negative onset {onset}")]
    NegativeOnset { line: usize, onset: f64 },
    #[error("line {line}: negative duration {duration}")]
    NegativeDuration { line: usize, duration: f64 },
    #[error("signal dt {0} differs from kernel dt {1}")]
    DtMismatch(f64, f64),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("drift order {0} unsupported, must be 1 or 2")]
    UnsupportedOrder(usize),
    #[error("need at least 3 scans for drift columns, got {0}")]
    TooFewScans(usize),
    #[error("column {0:?} is all zero")]
    AllZeroColumn(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One task event: onset and duration in seconds plus a dimensionless
/// amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub onset_s: f64,
    pub duration_s: f64,
    pub amplitude: f64,
}

/// A regularly sampled signal: values at `start_s + m * dt_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub start_s: f64,
    pub dt_s: f64,
    pub values: Vec<f64>,
}

/// Double-gamma HRF parameters: a peak gamma density minus a scaled
/// undershoot gamma density, supported on `[0, duration_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrfParams {
    pub peak_shape: f64,
    pub peak_scale_s: f64,
    pub undershoot_shape: f64,
    pub undershoot_scale_s: f64,
    pub undershoot_ratio: f64,
    pub duration_s: f64,
}

impl Default for HrfParams {
    /// The community-standard canonical parameters: shapes 6 and 16, unit
    /// scales, undershoot ratio 1/6, 30 s support.
    fn default() -> Self {
        HrfParams {
            peak_shape: 6.0,
            peak_scale_s: 1.0,
            undershoot_shape: 16.0,
            undershoot_scale_s: 1.0,
            undershoot_ratio: 1.0 / 6.0,
            duration_s: 30.0,
        }
    }
}

impl HrfParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.peak_shape <= 1.0 || self.undershoot_shape <= 1.0 {
            return Err("gamma shapes must be > 1".into());
        }
        if self.peak_scale_s <= 0.0 || self.undershoot_scale_s <= 0.0 {
            return Err("gamma scales must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.undershoot_ratio) {
            return Err("undershoot ratio must be in [0, 1)".into());
        }
        if self.duration_s <= 0.0 {
            return Err("duration must be > 0".into());
        }
        Ok(())
    }
}

/// Parse an events file: one `onset duration amplitude` triple per line,
/// `#` comments and blank lines ignored.
pub fn load_events<P: AsRef<Path>>(path: P) -> Result<Vec<Event>, DesignError> {
    parse_events(&fs::read_to_string(path)?)
}

pub fn parse_events(text: &str) -> Result<Vec<Event>, DesignError> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = trimmed
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| DesignError::MalformedLine {
                line,
                found: trimmed.to_string(),
            })?;
        if fields.len() != 3 {
            return Err(DesignError::MalformedLine {
                line,
                found: trimmed.to_string(),
            });
        }
        let (onset, duration, amplitude) = (fields[0], fields[1], fields[2]);
        if onset < 0.0 {
            return Err(DesignError::NegativeOnset { line, onset });
        }
        if duration < 0.0 {
            return Err(DesignError::NegativeDuration { line, duration });
        }
        events.push(Event {
            onset_s: onset,
            duration_s: duration,
            amplitude,
        });
    }
    Ok(events)
}

/// Box-car neural model on a regular grid: sample m carries the summed
/// amplitude of every event whose `[onset, onset + duration)` interval
/// contains `m * dt`. Zero-duration events contribute their amplitude at
/// exactly the sample containing the onset.
pub fn neural_signal(events: &[Event], dt_s: f64, total_s: f64) -> SampledSignal {
    assert!(dt_s > 0.0, "dt must be positive");
    assert!(total_s > 0.0, "total duration must be positive");
    let n = (total_s / dt_s).ceil() as usize;
    let mut values = vec![0.0; n];
    for ev in events {
        if ev.duration_s == 0.0 {
            let m = (ev.onset_s / dt_s).floor() as usize;
            if m < n {
                values[m] += ev.amplitude;
            }
            continue;
        }
        for (m, v) in values.iter_mut().enumerate() {
            let t = m as f64 * dt_s;
            if t >= ev.onset_s && t < ev.onset_s + ev.duration_s {
                *v += ev.amplitude;
            }
        }
    }
    SampledSignal {
        start_s: 0.0,
        dt_s,
        values,
    }
}

/// Sample the double-gamma HRF on a `dt` grid over `[0, duration_s)` and
/// rescale so the maximum value is exactly 1.
pub fn hrf_samples(params: &HrfParams, dt_s: f64) -> SampledSignal {
    assert!(dt_s > 0.0, "dt must be positive");
    params.validate().expect("invalid HRF parameters");
    let n = (params.duration_s / dt_s).ceil() as usize;
    // gamma density g(t; a, b) = t^(a-1) e^(-t/b) / (b^a Γ(a)), in log space
    let density = |t: f64, a: f64, b: f64| -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        ((a - 1.0) * t.ln() - t / b - a * b.ln() - ln_gamma(a)).exp()
    };
    let mut values: Vec<f64> = (0..n)
        .map(|m| {
            let t = m as f64 * dt_s;
            density(t, params.peak_shape, params.peak_scale_s)
                - params.undershoot_ratio
                    * density(t, params.undershoot_shape, params.undershoot_scale_s)
        })
        .collect();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    SampledSignal {
        start_s: 0.0,
        dt_s,
        values,
    }
}

/// Discrete convolution scaled by dt, truncated to the length of `signal`:
/// `out[m] = dt * sum_k signal[m-k] * kernel[k]`. The kernel tail beyond
/// the signal length is discarded; start and dt are taken from `signal`.
pub fn convolve(signal: &SampledSignal, kernel: &SampledSignal) -> Result<SampledSignal, DesignError> {
    let rel = (signal.dt_s - kernel.dt_s).abs() / signal.dt_s.max(kernel.dt_s);
    if rel > 1e-12 {
        return Err(DesignError::DtMismatch(signal.dt_s, kernel.dt_s));
    }
    let n = signal.values.len();
    let mut out = vec![0.0; n];
    for (m, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        let kmax = m.min(kernel.values.len().saturating_sub(1));
        for k in 0..=kmax {
            acc += signal.values[m - k] * kernel.values[k];
        }
        *o = signal.dt_s * acc;
    }
    Ok(SampledSignal {
        start_s: signal.start_s,
        dt_s: signal.dt_s,
        values: out,
    })
}

/// Linear interpolation of the signal at arbitrary times; zero outside the
/// sampled range.
pub fn sample_at(signal: &SampledSignal, times_s: &[f64]) -> Vec<f64> {
    let n = signal.values.len();
    times_s
        .iter()
        .map(|&t| {
            assert!(t.is_finite(), "sample times must be finite");
            let pos = (t - signal.start_s) / signal.dt_s;
            if pos < 0.0 || pos > (n - 1) as f64 {
                return 0.0;
            }
            let i0 = pos.floor() as usize;
            if i0 + 1 >= n {
                return signal.values[n - 1];
            }
            let frac = pos - i0 as f64;
            signal.values[i0] * (1.0 - frac) + signal.values[i0 + 1] * frac
        })
        .collect()
}

/// Replace event amplitudes with mean-centered modulator values. Meant to
/// ride alongside the unmodulated regressor, which models the average
/// response of the event type.
pub fn parametric_regressor(events: &[Event], modulators: &[f64]) -> Result<Vec<Event>, DesignError> {
    if events.len() != modulators.len() {
        return Err(DesignError::LengthMismatch {
            expected: events.len(),
            got: modulators.len(),
        });
    }
    let mean = modulators.iter().sum::<f64>() / modulators.len().max(1) as f64;
    Ok(events
        .iter()
        .zip(modulators)
        .map(|(ev, &m)| Event {
            amplitude: m - mean,
            ..*ev
        })
        .collect())
}

/// Polynomial drift columns: t^j for j = 1..=order with t linearly spaced
/// over [-1, 1] across scans, each column mean-centered. Columns are not
/// orthogonalized against each other.
pub fn drift_columns(n_scans: usize, order: usize) -> Result<Vec<Vec<f64>>, DesignError> {
    if !(1..=2).contains(&order) {
        return Err(DesignError::UnsupportedOrder(order));
    }
    if n_scans < 3 {
        return Err(DesignError::TooFewScans(n_scans));
    }
    let ts: Vec<f64> = (0..n_scans)
        .map(|i| -1.0 + 2.0 * i as f64 / (n_scans - 1) as f64)
        .collect();
    let mut cols = Vec::with_capacity(order);
    for j in 1..=order {
        let mut col: Vec<f64> = ts.iter().map(|t| t.powi(j as i32)).collect();
        let mean = col.iter().sum::<f64>() / n_scans as f64;
        for v in &mut col {
            *v -= mean;
        }
        cols.push(col);
    }
    Ok(cols)
}

/// Design matrix: intercept first, then task and confound columns.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: Mat,
    pub column_names: Vec<String>,
    pub tr_s: f64,
}

/// Assemble `[intercept | task columns | confound columns]` with names.
/// Dummy 0/1 indicator columns are fine as task columns; a duplicate of
/// the intercept is not rejected here but shows up as rank deficiency in
/// the fit.
pub fn assemble_design(
    task_columns: &[(String, Vec<f64>)],
    confound_columns: &[(String, Vec<f64>)],
    n_scans: usize,
    tr_s: f64,
) -> Result<DesignMatrix, DesignError> {
    let mut names = vec!["intercept".to_string()];
    let mut cols = vec![vec![1.0; n_scans]];
    for (name, col) in task_columns.iter().chain(confound_columns) {
        if col.len() != n_scans {
            return Err(DesignError::LengthMismatch {
                expected: n_scans,
                got: col.len(),
            });
        }
        if col.iter().all(|&v| v == 0.0) {
            return Err(DesignError::AllZeroColumn(name.clone()));
        }
        names.push(name.clone());
        cols.push(col.clone());
    }
    Ok(DesignMatrix {
        x: Mat::from_columns(&cols),
        column_names: names,
        tr_s,
    })
}

impl DesignMatrix {
    /// Build directly from named columns without an implicit intercept.
    /// Used for custom designs such as pure dummy-coded group models;
    /// `assemble_design` is the standard analysis path.
    pub fn from_named_columns(columns: &[(String, Vec<f64>)], tr_s: f64) -> DesignMatrix {
        assert!(!columns.is_empty(), "a design needs at least one column");
        let names: Vec<String> = columns.iter().map(|(n, _)| n.clone()).collect();
        let cols: Vec<Vec<f64>> = columns.iter().map(|(_, c)| c.clone()).collect();
        DesignMatrix {
            x: Mat::from_columns(&cols),
            column_names: names,
            tr_s,
        }
    }

    pub fn n_scans(&self) -> usize {
        self.x.rows()
    }

    pub fn n_columns(&self) -> usize {
        self.x.cols()
    }

    pub fn mat(&self) -> &Mat {
        &self.x
    }

    /// Copy with the given scan rows removed (for outlier refits). Indices
    /// must be strictly increasing and in range.
    pub fn dropping_rows(&self, rows: &[usize]) -> DesignMatrix {
        let keep: Vec<usize> = (0..self.n_scans()).filter(|i| !rows.contains(i)).collect();
        let cols: Vec<Vec<f64>> = (0..self.x.cols())
            .map(|c| keep.iter().map(|&r| self.x.get(r, c)).collect())
            .collect();
        DesignMatrix {
            x: Mat::from_columns(&cols),
            column_names: self.column_names.clone(),
            tr_s: self.tr_s,
        }
    }

    /// Text form: `# name1 name2 ...`, then one row per scan with
    /// 17-significant-digit decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push('#');
        for name in &self.column_names {
            out.push(' ');
            out.push_str(name);
        }
        out.push('\n');
        for r in 0..self.n_scans() {
            for c in 0..self.n_columns() {
                if c > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{:.16e}", self.x.get(r, c));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_text<P: AsRef<Path>>(&self, path: P) -> Result<(), DesignError> {
        crate::plot::write_atomic(path.as_ref(), self.to_text().as_bytes())?;
        Ok(())
    }
}

/// The full regressor pipeline for one event list: box-car at
/// `dt = tr / dt_frac`, convolved with the HRF, sampled at scan onsets
/// `t_n = n * tr`.
pub fn hemodynamic_regressor(
    events: &[Event],
    hrf: &HrfParams,
    tr_s: f64,
    n_scans: usize,
    dt_frac: usize,
) -> Result<Vec<f64>, DesignError> {
    assert!(tr_s > 0.0 && dt_frac > 0 && n_scans > 0);
    let dt = tr_s / dt_frac as f64;
    let total = tr_s * n_scans as f64;
    let neural = neural_signal(events, dt, total);
    let kernel = hrf_samples(hrf, dt);
    let response = convolve(&neural, &kernel)?;
    let scan_times: Vec<f64> = (0..n_scans).map(|n| n as f64 * tr_s).collect();
    Ok(sample_at(&response, &scan_times))
}
