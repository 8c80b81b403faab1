//! Deterministic figure emitters: SVG line plots and binary PGM images.
//!
//! Both formats are plain bytes with no timestamps or compression, so
//! identical inputs always produce byte-identical files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::nifti::Image;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 45.0;

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One named line: values plotted against their index.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

/// A line plot with optional outlier markers and dashed horizontal
/// threshold lines.
#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub series: Vec<Series>,
    /// (index, value) points drawn as open circles.
    pub markers: Vec<(usize, f64)>,
    /// y positions of dashed horizontal lines.
    pub hlines: Vec<f64>,
}

impl LinePlot {
    fn y_extent(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in self
            .series
            .iter()
            .flat_map(|s| s.values.iter())
            .chain(self.hlines.iter())
        {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 1.0, hi + 1.0)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    }

    fn x_max(&self) -> f64 {
        self.series
            .iter()
            .map(|s| s.values.len())
            .max()
            .unwrap_or(1)
            .saturating_sub(1)
            .max(1) as f64
    }
}

/// Render the plot into a fixed 800x600 SVG document.
pub fn render_svg_lines(plot: &LinePlot) -> String {
    let (ylo, yhi) = plot.y_extent();
    let xmax = plot.x_max();
    let px = |x: f64| MARGIN_LEFT + (x / xmax) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
    let py = |y: f64| {
        HEIGHT - MARGIN_BOTTOM - ((y - ylo) / (yhi - ylo)) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if !plot.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            xml_escape(&plot.title)
        );
    }
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN_LEFT,
        HEIGHT - MARGIN_BOTTOM,
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN_LEFT,
        MARGIN_TOP,
        MARGIN_LEFT,
        HEIGHT - MARGIN_BOTTOM
    );
    // y-axis extent labels
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
        MARGIN_LEFT - 6.0,
        py(ylo) + 4.0,
        ylo
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
        MARGIN_LEFT - 6.0,
        py(yhi) + 4.0,
        yhi
    );

    for y in &plot.hlines {
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555555" stroke-dasharray="8 4"/>"##,
            MARGIN_LEFT,
            py(*y),
            WIDTH - MARGIN_RIGHT,
            py(*y)
        );
    }

    for (idx, series) in plot.series.iter().enumerate() {
        if series.values.is_empty() {
            continue;
        }
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = series
            .values
            .iter()
            .enumerate()
            .map(|(x, y)| format!("{:.2},{:.2}", px(x as f64), py(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            MARGIN_LEFT + 8.0,
            MARGIN_TOP + 14.0 * (idx as f64 + 1.0),
            xml_escape(&series.name)
        );
    }

    for (x, y) in &plot.markers {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="#d62728" stroke-width="1.5"/>"##,
            px(*x as f64),
            py(*y)
        );
    }

    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write the plot as SVG via a temporary file and rename.
pub fn write_svg_lines<P: AsRef<Path>>(plot: &LinePlot, path: P) -> std::io::Result<()> {
    write_atomic(path.as_ref(), render_svg_lines(plot).as_bytes())
}

/// Row-major 2D matrix used as a grayscale pixel buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix2 {
    pub fn zeros(rows: usize, cols: usize) -> Matrix2 {
        Matrix2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Tile the axial (k) slices of a 3D volume row-major into a grid with
/// `cols` columns; trailing cells stay zero. Cell (gr, gc) holds slice
/// `gr * cols + gc`, with mosaic height `ceil(K / cols) * dim_j` and
/// width `cols * dim_i`.
pub fn slice_mosaic(vol: &Image, cols: usize) -> Matrix2 {
    assert!(cols >= 1, "mosaic needs at least one column");
    let shape = vol.shape();
    let (ni, nj, nk) = (shape[0], shape[1], shape[2]);
    let grid_rows = nk.div_ceil(cols);
    let mut m = Matrix2::zeros(grid_rows * nj, cols * ni);
    for k in 0..nk {
        let (gr, gc) = (k / cols, k % cols);
        for j in 0..nj {
            for i in 0..ni {
                m.set(gr * nj + j, gc * ni + i, vol.get(i, j, k, 0));
            }
        }
    }
    m
}

/// Write a binary PGM ("P5", maxval 255), min-max scaling values to
/// 0..=255. A constant matrix maps to all zeros.
pub fn write_pgm<P: AsRef<Path>>(matrix: &Matrix2, path: P) -> std::io::Result<()> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &matrix.data {
        assert!(v.is_finite(), "PGM values must be finite");
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    let mut bytes = format!("P5\n{} {}\n255\n", matrix.cols, matrix.rows).into_bytes();
    bytes.reserve(matrix.data.len());
    for &v in &matrix.data {
        let px = if span == 0.0 {
            0
        } else {
            ((v - lo) / span * 255.0).round() as u8
        };
        bytes.push(px);
    }
    write_atomic(path.as_ref(), &bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    // temp files are created 0600; outputs should be world readable
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o644))?;
    }
    Ok(())
}
