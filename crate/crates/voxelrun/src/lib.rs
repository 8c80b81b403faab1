//! Single-run FMRI analysis from first principles, plus a make-style
//! pipeline runner that keeps the whole analysis reproducible.
//!
//! The library side covers the full path from bytes to thresholded
//! statistical maps:
//!
//! * [`nifti`] — NIfTI-1 reading, writing, and 4D slicing
//! * [`design`] — box-car neural models, the canonical HRF, convolution,
//!   high-resolution sampling, drift and design-matrix assembly
//! * [`glm`] — voxelwise least squares, contrast t and p values,
//!   correlation maps, Bonferroni thresholds
//! * [`diagnostics`] — volume std / RMS-difference outlier detection and
//!   the residual-variance payoff of dropping outliers
//! * [`spatial`] — Gaussian smoothing, voxel/mm affines, masks
//! * [`pipeline`] — the Make-subset runner with sha256 manifests
//! * [`plot`] / [`report`] — deterministic SVG/PGM figures and the
//!   Markdown report
//!
//! The `voxelrun` binary stitches these into the
//! `data -> validate -> eda -> analysis -> report` flow; see the book
//! under `book/` for a guided tour.

pub mod cli;
pub mod design;
pub mod diagnostics;
pub mod glm;
pub mod linalg;
pub mod nifti;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod spatial;
pub mod special;

// Keep the book's code listings compiling: every chapter is also a
// doctest target.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(images, "../../../book/src/images.md");
    chapter!(design, "../../../book/src/design.md");
    chapter!(glm, "../../../book/src/glm.md");
    chapter!(diagnostics, "../../../book/src/diagnostics.md");
    chapter!(spatial, "../../../book/src/spatial.md");
    chapter!(pipeline, "../../../book/src/pipeline.md");
    chapter!(cli, "../../../book/src/cli.md");
}
