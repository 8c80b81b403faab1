//! Voxelwise multiple regression, contrast t statistics, p-values,
//! correlation maps, and the Bonferroni threshold.
//!
//! Data layout: the voxel matrix Y is n_scans x n_voxels with time along
//! the rows, so each voxel's time-course is one column. Masks flatten
//! voxels in (i, j, k) column-major order, matching image storage.

use thiserror::Error;

use crate::design::DesignMatrix;
use crate::linalg::{LstSq, Mat};
use crate::nifti::Image;
use crate::spatial::Mask;
use crate::special::reg_inc_beta;

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("data has {data_rows} scans but the design has {design_rows}")]
    ShapeMismatch {
        data_rows: usize,
        design_rows: usize,
    },
    #[error("degenerate design: no residual degrees of freedom (n = rank = {0})")]
    DegenerateDesign(usize),
    #[error("contrast has {got} weights, design has {expected} columns")]
    LengthMismatch { expected: usize, got: usize },
    #[error("contrast vector is all zero")]
    ZeroContrast,
    #[error("contrast lies in the null space of the design (zero variance direction)")]
    ZeroVariance,
    #[error("regressor is constant; correlation is undefined")]
    ConstantRegressor,
    #[error("regressor length {got} does not match {expected} volumes")]
    RegressorLength { expected: usize, got: usize },
    #[error("{kind:?} map value {value} outside its valid range")]
    BadStatRange { kind: StatKind, value: f64 },
}

/// Contrast weights over design columns; must not be all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Contrast {
    weights: Vec<f64>,
}

impl Contrast {
    pub fn new(weights: Vec<f64>) -> Result<Contrast, GlmError> {
        if weights.is_empty() || weights.iter().all(|&w| w == 0.0) {
            return Err(GlmError::ZeroContrast);
        }
        Ok(Contrast { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Fitted model: per-voxel coefficients and residual variance plus the
/// design-derived quantities needed for inference.
#[derive(Debug, Clone)]
pub struct GlmFit {
    /// p x v coefficient matrix; voxel v is column v.
    pub beta: Mat,
    /// Mean residual sum of squares per voxel: e'e / df. Exactly 0 for
    /// numerically exact fits (residual norm below 1e-12 of the data
    /// norm), so the zero-variance conventions in [`contrast_t`] apply.
    pub mrss: Vec<f64>,
    /// Residual degrees of freedom, n - rank(X).
    pub df: usize,
    /// Numerical rank of the design.
    pub rank: usize,
    /// Pseudo-inverse of X'X.
    pub xtx_pinv: Mat,
    pub design_names: Vec<String>,
    /// Raw sum of squares of each voxel's data, the scale reference for
    /// the exact-fit conventions.
    pub y_ss: Vec<f64>,
}

// Residuals this far below the data norm count as an exact fit.
const EXACT_FIT_REL: f64 = 1e-12;

/// Fit Y = X b voxel by voxel through a rank-revealing orthogonal
/// decomposition of the design. Rank deficiency is allowed; coefficients
/// are then the minimum-norm solution and `rank` reports the deficiency.
pub fn fit(y: &Mat, x: &DesignMatrix) -> Result<GlmFit, GlmError> {
    let n = x.n_scans();
    if y.rows() != n {
        return Err(GlmError::ShapeMismatch {
            data_rows: y.rows(),
            design_rows: n,
        });
    }
    let factor = LstSq::new(x.mat(), None);
    let rank = factor.rank();
    if n <= rank {
        return Err(GlmError::DegenerateDesign(n));
    }
    let df = n - rank;

    let p = x.n_columns();
    let v = y.cols();
    let mut beta = Mat::zeros(p, v);
    let mut mrss = Vec::with_capacity(v);
    let mut y_ss = Vec::with_capacity(v);
    for voxel in 0..v {
        let yv = y.col(voxel);
        let b = factor.solve(yv);
        let fitted = x.mat().matvec(&b);
        let ss: f64 = yv
            .iter()
            .zip(&fitted)
            .map(|(obs, fit)| (obs - fit).powi(2))
            .sum();
        let total: f64 = yv.iter().map(|v| v * v).sum();
        // numerically exact fits get an exact zero so the t conventions
        // for zero-variance voxels can trigger
        let ss = if ss.sqrt() <= EXACT_FIT_REL * total.sqrt() {
            0.0
        } else {
            ss
        };
        mrss.push(ss / df as f64);
        y_ss.push(total);
        for (row, &value) in b.iter().enumerate() {
            beta.set(row, voxel, value);
        }
    }

    Ok(GlmFit {
        beta,
        mrss,
        df,
        rank,
        xtx_pinv: factor.normal_matrix_pinv(),
        design_names: x.column_names.clone(),
        y_ss,
    })
}

/// Per-voxel t statistics for a contrast: t = c'b / sqrt(mrss * c'(X'X)+c).
///
/// Zero-variance voxels follow the map convention: both effect and
/// residual variance zero gives t = 0; zero variance with a nonzero
/// effect gives an infinity carrying the effect sign.
pub fn contrast_t(fit: &GlmFit, contrast: &Contrast) -> Result<(Vec<f64>, usize), GlmError> {
    let c = contrast.weights();
    let p = fit.beta.rows();
    if c.len() != p {
        return Err(GlmError::LengthMismatch {
            expected: p,
            got: c.len(),
        });
    }
    // c' (X'X)+ c
    let pinv_c = fit.xtx_pinv.matvec(c);
    let direction_var: f64 = c.iter().zip(&pinv_c).map(|(a, b)| a * b).sum();
    if direction_var <= 0.0 {
        return Err(GlmError::ZeroVariance);
    }

    let c_norm: f64 = c.iter().map(|w| w * w).sum::<f64>().sqrt();
    let v = fit.beta.cols();
    let mut ts = Vec::with_capacity(v);
    for voxel in 0..v {
        let effect: f64 = c
            .iter()
            .zip(fit.beta.col(voxel))
            .map(|(w, b)| w * b)
            .sum();
        let variance = fit.mrss[voxel] * direction_var;
        let t = if fit.mrss[voxel] == 0.0 {
            // in an exact fit, an effect at rounding scale is zero
            let effect_floor = EXACT_FIT_REL * c_norm * fit.y_ss[voxel].sqrt();
            if effect.abs() <= effect_floor {
                0.0
            } else if effect > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        } else {
            effect / variance.sqrt()
        };
        ts.push(t);
    }
    Ok((ts, fit.df))
}

/// Student-t tail probability via the regularized incomplete beta
/// function: the one-sided upper tail for t >= 0 is I_x(df/2, 1/2) / 2
/// with x = df / (df + t^2); `two_sided` doubles the tail.
pub fn t_to_p(t: f64, df: usize, two_sided: bool) -> f64 {
    assert!(df >= 1, "t_to_p requires df >= 1");
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if two_sided {
            0.0
        } else if t > 0.0 {
            0.0
        } else {
            1.0
        };
    }
    let dff = df as f64;
    let x = dff / (dff + t * t);
    let tail2 = reg_inc_beta(dff / 2.0, 0.5, x);
    if two_sided {
        tail2
    } else if t >= 0.0 {
        tail2 / 2.0
    } else {
        1.0 - tail2 / 2.0
    }
}

/// Bonferroni-corrected per-test alpha.
pub fn bonferroni_threshold(alpha: f64, n_tests: usize) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
    assert!(n_tests >= 1, "need at least one test");
    alpha / n_tests as f64
}

/// A statistic arranged as a 3D volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    T,
    P,
    R,
    Beta,
}

#[derive(Debug, Clone)]
pub struct StatMap {
    pub kind: StatKind,
    pub values: Vec<f64>,
    pub shape: [usize; 3],
    pub affine: [[f64; 4]; 4],
    pub df: Option<usize>,
}

impl StatMap {
    /// Scatter per-voxel statistics back into a full volume, zero outside
    /// the mask, checking the range invariant for p and r maps.
    pub fn from_masked(
        kind: StatKind,
        in_mask_values: &[f64],
        mask: &Mask,
        affine: [[f64; 4]; 4],
        df: Option<usize>,
    ) -> Result<StatMap, GlmError> {
        let mut values = vec![0.0; mask.len()];
        let mut iter = in_mask_values.iter();
        for (slot, &inside) in values.iter_mut().zip(mask.inside()) {
            if inside {
                *slot = *iter
                    .next()
                    .expect("mask voxel count and value count must agree");
            }
        }
        assert!(iter.next().is_none(), "more values than mask voxels");
        let map = StatMap {
            kind,
            values,
            shape: mask.shape(),
            affine,
            df,
        };
        map.check_range()?;
        Ok(map)
    }

    fn check_range(&self) -> Result<(), GlmError> {
        let bounds = match self.kind {
            StatKind::P => Some((0.0, 1.0)),
            StatKind::R => Some((-1.0, 1.0)),
            _ => None,
        };
        if let Some((lo, hi)) = bounds {
            for &v in &self.values {
                if !(lo..=hi).contains(&v) {
                    return Err(GlmError::BadStatRange {
                        kind: self.kind,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    /// View as a single-volume image for saving.
    pub fn to_image(&self) -> Image {
        Image::new(
            self.values.clone(),
            [self.shape[0], self.shape[1], self.shape[2], 1],
            self.affine,
            0.0,
        )
        .expect("stat map dimensions are consistent by construction")
    }
}

/// Extract the n_scans x n_in_mask voxel matrix from a 4D image.
pub fn voxel_matrix(img: &Image, mask: Option<&Mask>) -> Mat {
    let n = img.n_volumes();
    let nvox = img.n_voxels();
    let keep: Vec<usize> = match mask {
        Some(m) => {
            assert_eq!(m.len(), nvox, "mask shape must match the image");
            (0..nvox).filter(|&v| m.inside()[v]).collect()
        }
        None => (0..nvox).collect(),
    };
    let mut y = Mat::zeros(n, keep.len());
    for t in 0..n {
        let vol = img.volume(t);
        for (col, &v) in keep.iter().enumerate() {
            y.set(t, col, vol[v]);
        }
    }
    y
}

/// Pearson correlation of every in-mask voxel time-course with a
/// regressor. Constant voxels correlate 0 by convention; voxels outside
/// the mask are 0 in the returned map.
pub fn correlation_map(
    img: &Image,
    regressor: &[f64],
    mask: Option<&Mask>,
) -> Result<StatMap, GlmError> {
    let n = img.n_volumes();
    if regressor.len() != n {
        return Err(GlmError::RegressorLength {
            expected: n,
            got: regressor.len(),
        });
    }
    let mean = regressor.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = regressor.iter().map(|v| v - mean).collect();
    let reg_ss: f64 = centered.iter().map(|v| v * v).sum();
    if reg_ss == 0.0 {
        return Err(GlmError::ConstantRegressor);
    }

    let owned_mask;
    let mask = match mask {
        Some(m) => m,
        None => {
            let shape = img.shape();
            owned_mask = Mask::all([shape[0], shape[1], shape[2]]);
            &owned_mask
        }
    };
    let y = voxel_matrix(img, Some(mask));
    let mut rs = Vec::with_capacity(y.cols());
    for voxel in 0..y.cols() {
        let col = y.col(voxel);
        let vmean = col.iter().sum::<f64>() / n as f64;
        let mut cross = 0.0;
        let mut voxel_ss = 0.0;
        for (value, c) in col.iter().zip(&centered) {
            let dv = value - vmean;
            cross += dv * c;
            voxel_ss += dv * dv;
        }
        let r = if voxel_ss == 0.0 {
            0.0
        } else {
            (cross / (voxel_ss * reg_ss).sqrt()).clamp(-1.0, 1.0)
        };
        rs.push(r);
    }
    StatMap::from_masked(StatKind::R, &rs, mask, img.affine, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{assemble_design, DesignMatrix};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn design_from_columns(cols: &[(&str, Vec<f64>)], tr: f64) -> DesignMatrix {
        DesignMatrix::from_named_columns(
            &cols
                .iter()
                .map(|(n, c)| (n.to_string(), c.clone()))
                .collect::<Vec<_>>(),
            tr,
        )
    }

    fn single_voxel(values: &[f64]) -> Mat {
        Mat::from_columns(&[values.to_vec()])
    }

    #[test]
    fn exact_fit_recovers_beta_with_zero_mrss() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 12;
        let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = assemble_design(&[("t".into(), t.clone())], &[], n, 2.0).unwrap();
        let truth = [3.0, -0.5];
        let y: Vec<f64> = t.iter().map(|v| truth[0] + truth[1] * v).collect();
        let _ = &mut rng;
        let fit = fit(&single_voxel(&y), &x).unwrap();
        assert!((fit.beta.get(0, 0) - truth[0]).abs() < 1e-12);
        assert!((fit.beta.get(1, 0) - truth[1]).abs() < 1e-12);
        assert!(fit.mrss[0].abs() < 1e-20);
    }

    #[test]
    fn hand_normal_equations_line_fit() {
        // y = (1,2,3) on X = [1, t], t = (0,1,2): slope 1, intercept 1
        let x = assemble_design(&[("t".into(), vec![0.0, 1.0, 2.0])], &[], 3, 1.0).unwrap();
        let fit = fit(&single_voxel(&[1.0, 2.0, 3.0]), &x).unwrap();
        assert!((fit.beta.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((fit.beta.get(1, 0) - 1.0).abs() < 1e-12);
        assert_eq!(fit.df, 1);
        assert!(fit.mrss[0] < 1e-24);
    }

    #[test]
    fn dummy_design_betas_are_group_means() {
        let x = design_from_columns(
            &[
                ("group_a", vec![1.0, 1.0, 0.0, 0.0]),
                ("group_b", vec![0.0, 0.0, 1.0, 1.0]),
            ],
            1.0,
        );
        let fit = fit(&single_voxel(&[1.0, 3.0, 2.0, 6.0]), &x).unwrap();
        assert!((fit.beta.get(0, 0) - 2.0).abs() < 1e-12);
        assert!((fit.beta.get(1, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_and_degenerate_design_errors() {
        let x = assemble_design(&[], &[], 3, 1.0).unwrap();
        assert!(matches!(
            fit(&single_voxel(&[1.0, 2.0]), &x),
            Err(GlmError::ShapeMismatch { .. })
        ));
        let x1 = assemble_design(&[], &[], 1, 1.0).unwrap();
        assert!(matches!(
            fit(&single_voxel(&[1.0]), &x1),
            Err(GlmError::DegenerateDesign(1))
        ));
    }

    #[test]
    fn residuals_are_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = 20;
            let cols: Vec<(String, Vec<f64>)> = (0..3)
                .map(|i| {
                    (
                        format!("c{i}"),
                        (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                    )
                })
                .collect();
            let x = assemble_design(&cols, &[], n, 1.0).unwrap();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let f = fit(&single_voxel(&y), &x).unwrap();
            let beta: Vec<f64> = (0..x.n_columns()).map(|r| f.beta.get(r, 0)).collect();
            let fitted = x.mat().matvec(&beta);
            let e: Vec<f64> = y.iter().zip(&fitted).map(|(o, p)| o - p).collect();
            for g in x.mat().tr_matvec(&e) {
                assert!(g.abs() < 1e-9, "X'e component {g}");
            }
        }
    }

    /// Pooled two-sample t computed from the textbook formula, as an
    /// independent cross-check for the contrast route.
    fn pooled_two_sample_t(a: &[f64], b: &[f64]) -> f64 {
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let ma = a.iter().sum::<f64>() / na;
        let mb = b.iter().sum::<f64>() / nb;
        let ssa: f64 = a.iter().map(|v| (v - ma).powi(2)).sum();
        let ssb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum();
        let pooled = (ssa + ssb) / (na + nb - 2.0);
        (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt()
    }

    #[test]
    fn contrast_t_equals_pooled_two_sample_t() {
        let a = [1.0, 2.0, 3.0];
        let b = [3.0, 4.0, 5.0];
        let x = design_from_columns(
            &[
                ("group_a", vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
                ("group_b", vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            ],
            1.0,
        );
        let y: Vec<f64> = a.iter().chain(&b).cloned().collect();
        let f = fit(&single_voxel(&y), &x).unwrap();
        let c = Contrast::new(vec![1.0, -1.0]).unwrap();
        let (ts, df) = contrast_t(&f, &c).unwrap();
        assert_eq!(df, 4);
        let expect = pooled_two_sample_t(&a, &b);
        assert!((expect + 2.449489742783178).abs() < 1e-12);
        assert!((ts[0] - expect).abs() < 1e-3, "{} vs {expect}", ts[0]);
        assert!((ts[0] - expect).abs() < 1e-10);
    }

    #[test]
    fn pooled_t_equivalence_on_random_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let na = rng.gen_range(3..8);
            let nb = rng.gen_range(3..8);
            let a: Vec<f64> = (0..na).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut ca = vec![0.0; na + nb];
            let mut cb = vec![0.0; na + nb];
            for i in 0..na {
                ca[i] = 1.0;
            }
            for i in na..na + nb {
                cb[i] = 1.0;
            }
            let x = design_from_columns(&[("a", ca), ("b", cb)], 1.0);
            let y: Vec<f64> = a.iter().chain(&b).cloned().collect();
            let f = fit(&single_voxel(&y), &x).unwrap();
            let (ts, _) = contrast_t(&f, &Contrast::new(vec![1.0, -1.0]).unwrap()).unwrap();
            let expect = pooled_two_sample_t(&a, &b);
            assert!((ts[0] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn t_is_invariant_to_data_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 15;
        let reg: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = assemble_design(&[("task".into(), reg)], &[], n, 1.0).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let c = Contrast::new(vec![0.0, 1.0]).unwrap();
        let (t1, _) = contrast_t(&fit(&single_voxel(&y), &x).unwrap(), &c).unwrap();
        let (t2, _) = contrast_t(&fit(&single_voxel(&y2), &x).unwrap(), &c).unwrap();
        assert!((t1[0] - t2[0]).abs() < 1e-10);
    }

    #[test]
    fn zero_effect_zero_variance_gives_zero_t() {
        // constant data fit exactly by the intercept: mrss = 0 and the
        // task effect is 0
        let x = assemble_design(&[("task".into(), vec![1.0, 0.0, 1.0, 0.0])], &[], 4, 1.0)
            .unwrap();
        let f = fit(&single_voxel(&[5.0, 5.0, 5.0, 5.0]), &x).unwrap();
        let (ts, _) = contrast_t(&f, &Contrast::new(vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(ts[0], 0.0);
    }

    #[test]
    fn zero_variance_nonzero_effect_gives_signed_infinity() {
        let x = assemble_design(&[("task".into(), vec![1.0, 0.0, 1.0, 0.0])], &[], 4, 1.0)
            .unwrap();
        let f = fit(&single_voxel(&[7.0, 5.0, 7.0, 5.0]), &x).unwrap();
        let (ts, _) = contrast_t(&f, &Contrast::new(vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(ts[0], f64::INFINITY);
        let (ts_neg, _) = contrast_t(&f, &Contrast::new(vec![0.0, -1.0]).unwrap()).unwrap();
        assert_eq!(ts_neg[0], f64::NEG_INFINITY);
    }

    #[test]
    fn contrast_errors() {
        assert!(matches!(
            Contrast::new(vec![0.0, 0.0]),
            Err(GlmError::ZeroContrast)
        ));
        let x = assemble_design(&[("t".into(), vec![0.0, 1.0, 2.0])], &[], 3, 1.0).unwrap();
        let f = fit(&single_voxel(&[1.0, 2.0, 4.0]), &x).unwrap();
        assert!(matches!(
            contrast_t(&f, &Contrast::new(vec![1.0]).unwrap()),
            Err(GlmError::LengthMismatch { .. })
        ));
        // contrast in the null space of a rank-deficient design
        let dup = design_from_columns(
            &[
                ("one", vec![1.0, 1.0, 1.0]),
                ("same", vec![1.0, 1.0, 1.0]),
            ],
            1.0,
        );
        let fd = fit(&single_voxel(&[1.0, 2.0, 3.0]), &dup).unwrap();
        assert!(matches!(
            contrast_t(&fd, &Contrast::new(vec![1.0, -1.0]).unwrap()),
            Err(GlmError::ZeroVariance)
        ));
    }

    #[test]
    fn t_to_p_reference_values() {
        assert_eq!(t_to_p(0.0, 5, true), 1.0);
        assert!((t_to_p(2.0, 10, true) - 0.0734).abs() < 1e-4);
        for t in [0.3, 1.7, 4.2] {
            assert!((t_to_p(-t, 8, true) - t_to_p(t, 8, true)).abs() < 1e-15);
        }
        assert_eq!(t_to_p(f64::INFINITY, 3, true), 0.0);
        assert_eq!(t_to_p(f64::INFINITY, 3, false), 0.0);
        assert_eq!(t_to_p(f64::NEG_INFINITY, 3, false), 1.0);
        // one-sided at 0 is one half
        assert!((t_to_p(0.0, 7, false) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn t_to_p_monotone_decreasing_in_magnitude() {
        for df in [1, 5, 10, 30] {
            let mut last = 1.0;
            for step in 0..40 {
                let t = step as f64 * 0.25;
                let p = t_to_p(t, df, true);
                assert!(p <= last + 1e-15);
                last = p;
            }
        }
    }

    #[test]
    fn bonferroni_values() {
        assert_eq!(bonferroni_threshold(0.05, 1), 0.05);
        assert_eq!(bonferroni_threshold(0.05, 100_000), 5e-7);
    }

    fn timecourse_image(courses: &[Vec<f64>]) -> Image {
        // one voxel per course along i, single j/k
        let t = courses[0].len();
        let nv = courses.len();
        let mut data = vec![0.0; nv * t];
        for (v, course) in courses.iter().enumerate() {
            for (time, &val) in course.iter().enumerate() {
                data[time * nv + v] = val;
            }
        }
        let mut affine = [[0.0; 4]; 4];
        for i in 0..4 {
            affine[i][i] = 1.0;
        }
        Image::new(data, [nv, 1, 1, t], affine, 2.0).unwrap()
    }

    #[test]
    fn correlation_map_reference_cases() {
        let reg = vec![1.0, 2.0, 3.0];
        let img = timecourse_image(&[
            reg.clone(),
            reg.iter().map(|v| -v).collect(),
            vec![1.0, 2.0, 4.0],
            vec![5.0, 5.0, 5.0],
        ]);
        let map = correlation_map(&img, &reg, None).unwrap();
        assert!((map.values[0] - 1.0).abs() < 1e-12);
        assert!((map.values[1] + 1.0).abs() < 1e-12);
        assert!((map.values[2] - 0.98198).abs() < 1e-5);
        assert_eq!(map.values[3], 0.0);
    }

    #[test]
    fn correlation_rejects_constant_regressor() {
        let img = timecourse_image(&[vec![1.0, 2.0, 3.0]]);
        assert!(matches!(
            correlation_map(&img, &[2.0, 2.0, 2.0], None),
            Err(GlmError::ConstantRegressor)
        ));
        assert!(matches!(
            correlation_map(&img, &[1.0, 2.0], None),
            Err(GlmError::RegressorLength { .. })
        ));
    }

    #[test]
    fn correlation_respects_mask() {
        let reg = vec![1.0, 2.0, 3.0];
        let img = timecourse_image(&[reg.clone(), reg.clone()]);
        let mask = Mask::from_fn([2, 1, 1], |i, _, _| i == 0);
        let map = correlation_map(&img, &reg, Some(&mask)).unwrap();
        assert!((map.values[0] - 1.0).abs() < 1e-12);
        assert_eq!(map.values[1], 0.0);
    }

    #[test]
    fn stat_map_range_validation() {
        let mask = Mask::all([1, 1, 1]);
        let affine = {
            let mut a = [[0.0; 4]; 4];
            for i in 0..4 {
                a[i][i] = 1.0;
            }
            a
        };
        assert!(StatMap::from_masked(StatKind::P, &[1.5], &mask, affine, None).is_err());
        assert!(StatMap::from_masked(StatKind::R, &[-1.5], &mask, affine, None).is_err());
        assert!(StatMap::from_masked(StatKind::T, &[123.0], &mask, affine, Some(5)).is_ok());
    }
}
