//! Spatial operations: Gaussian smoothing as separable convolution,
//! voxel/mm coordinate mapping through the affine, mean volumes, and a
//! simple intensity-threshold brain mask.

use thiserror::Error;

use crate::nifti::Image;

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("FWHM must be positive, got {0}")]
    NonPositive(f64),
    #[error("voxel size along axis {axis} is {size}; must be positive and finite")]
    NonPositiveVoxelSize { axis: usize, size: f64 },
    #[error("affine is singular; cannot map mm to voxel coordinates")]
    SingularAffine,
}

/// Full width at half maximum of a Gaussian, converted to its sigma:
/// sigma = fwhm / (2 sqrt(2 ln 2)).
pub fn fwhm_to_sigma(fwhm_mm: f64) -> Result<f64, SpatialError> {
    if !(fwhm_mm > 0.0) {
        return Err(SpatialError::NonPositive(fwhm_mm));
    }
    Ok(fwhm_mm / (2.0 * (2.0 * 2f64.ln()).sqrt()))
}

/// Smoothing kernel specification in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothSpec {
    pub fwhm_mm: f64,
    pub sigma_mm: f64,
    /// Kernel half-width in sigma units.
    pub truncate_sigmas: f64,
}

impl SmoothSpec {
    pub fn from_fwhm(fwhm_mm: f64) -> Result<SmoothSpec, SpatialError> {
        Ok(SmoothSpec {
            fwhm_mm,
            sigma_mm: fwhm_to_sigma(fwhm_mm)?,
            truncate_sigmas: 4.0,
        })
    }

    pub fn with_truncation(mut self, truncate_sigmas: f64) -> SmoothSpec {
        assert!(truncate_sigmas > 0.0);
        self.truncate_sigmas = truncate_sigmas;
        self
    }
}

fn gaussian_kernel(sigma_vox: f64, truncate: f64) -> Option<Vec<f64>> {
    let radius = (truncate * sigma_vox).floor() as isize;
    if radius < 1 {
        return None;
    }
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|o| (-(o as f64).powi(2) / (2.0 * sigma_vox * sigma_vox)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for w in &mut k {
        *w /= sum;
    }
    Some(k)
}

fn smooth_axis(vol: &mut [f64], dims: [usize; 3], axis: usize, kernel: &[f64]) {
    let strides = [1, dims[0], dims[0] * dims[1]];
    let len = dims[axis] as isize;
    let radius = (kernel.len() / 2) as isize;
    let others: [usize; 2] = match axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    };
    let mut line = vec![0.0; dims[axis]];
    for c2 in 0..dims[others[1]] {
        for c1 in 0..dims[others[0]] {
            let base = c1 * strides[others[0]] + c2 * strides[others[1]];
            for (x, slot) in line.iter_mut().enumerate() {
                *slot = vol[base + x * strides[axis]];
            }
            for x in 0..len {
                let mut acc = 0.0;
                for (ki, &w) in kernel.iter().enumerate() {
                    // replicate the nearest edge value outside the volume
                    let pos = (x + ki as isize - radius).clamp(0, len - 1) as usize;
                    acc += w * line[pos];
                }
                vol[base + x as usize * strides[axis]] = acc;
            }
        }
    }
}

fn separable_smooth(
    img: &Image,
    spec: &SmoothSpec,
    axis_order: [usize; 3],
) -> Result<Image, SpatialError> {
    let vsize = img.voxel_sizes();
    for (axis, &size) in vsize.iter().enumerate() {
        if !(size > 0.0 && size.is_finite()) {
            return Err(SpatialError::NonPositiveVoxelSize { axis, size });
        }
    }
    let kernels: Vec<Option<Vec<f64>>> = (0..3)
        .map(|axis| gaussian_kernel(spec.sigma_mm / vsize[axis], spec.truncate_sigmas))
        .collect();

    let shape = img.shape();
    let dims = [shape[0], shape[1], shape[2]];
    let mut data = img.data().to_vec();
    let nvox = img.n_voxels();
    for t in 0..img.n_volumes() {
        let vol = &mut data[t * nvox..(t + 1) * nvox];
        for &axis in &axis_order {
            if let Some(kernel) = &kernels[axis] {
                smooth_axis(vol, dims, axis, kernel);
            }
        }
    }
    Ok(Image::new(data, shape, img.affine, img.tr_s).expect("shape unchanged"))
}

/// Gaussian-smooth every volume with a separable kernel. The per-axis
/// sigma in voxels is `sigma_mm / voxel_size`, so anisotropic voxels
/// still smooth isotropically in mm. The kernel is sampled at integer
/// offsets within `truncate_sigmas * sigma`, renormalized to sum exactly
/// one, and edges replicate the nearest value, so constant images pass
/// through unchanged. Kernels narrower than one voxel degenerate to the
/// identity.
pub fn gaussian_smooth(img: &Image, spec: &SmoothSpec) -> Result<Image, SpatialError> {
    separable_smooth(img, spec, [0, 1, 2])
}

/// Map voxel indices to mm through the affine: (x, y, z) = A (i, j, k, 1).
pub fn voxel_to_mm(affine: &[[f64; 4]; 4], voxel: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (r, slot) in out.iter_mut().enumerate() {
        *slot = affine[r][0] * voxel[0]
            + affine[r][1] * voxel[1]
            + affine[r][2] * voxel[2]
            + affine[r][3];
    }
    out
}

/// Map mm coordinates to (possibly fractional) voxel indices through the
/// inverse affine.
pub fn mm_to_voxel(affine: &[[f64; 4]; 4], mm: [f64; 3]) -> Result<[f64; 3], SpatialError> {
    let inv = invert4(affine)?;
    Ok(voxel_to_mm(&inv, mm))
}

fn invert4(m: &[[f64; 4]; 4]) -> Result<[[f64; 4]; 4], SpatialError> {
    // Gauss-Jordan with partial pivoting on the augmented system
    let mut a = *m;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for k in 0..4 {
        let piv = (k..4)
            .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
            .unwrap();
        if a[piv][k].abs() < 1e-12 * scale {
            return Err(SpatialError::SingularAffine);
        }
        a.swap(k, piv);
        inv.swap(k, piv);
        let d = a[k][k];
        for c in 0..4 {
            a[k][c] /= d;
            inv[k][c] /= d;
        }
        for r in 0..4 {
            if r != k {
                let f = a[r][k];
                for c in 0..4 {
                    a[r][c] -= f * a[k][c];
                    inv[r][c] -= f * inv[k][c];
                }
            }
        }
    }
    Ok(inv)
}

/// Per-voxel mean over time, as a 3D image.
pub fn mean_volume(img: &Image) -> Image {
    let nvox = img.n_voxels();
    let nt = img.n_volumes();
    let mut mean = vec![0.0; nvox];
    for t in 0..nt {
        for (m, v) in mean.iter_mut().zip(img.volume(t)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= nt as f64;
    }
    let shape = img.shape();
    Image::new(mean, [shape[0], shape[1], shape[2], 1], img.affine, img.tr_s)
        .expect("mean volume preserves spatial shape")
}

/// Boolean voxel selection, flattened in (i, j, k) column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    shape: [usize; 3],
    inside: Vec<bool>,
}

impl Mask {
    pub fn all(shape: [usize; 3]) -> Mask {
        Mask {
            shape,
            inside: vec![true; shape[0] * shape[1] * shape[2]],
        }
    }

    pub fn from_fn(shape: [usize; 3], f: impl Fn(usize, usize, usize) -> bool) -> Mask {
        let mut inside = Vec::with_capacity(shape[0] * shape[1] * shape[2]);
        for k in 0..shape[2] {
            for j in 0..shape[1] {
                for i in 0..shape[0] {
                    inside.push(f(i, j, k));
                }
            }
        }
        Mask { shape, inside }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    /// Total voxel count (inside or not).
    pub fn len(&self) -> usize {
        self.inside.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inside.is_empty()
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn n_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }
}

/// Threshold mask: voxels whose mean intensity exceeds
/// `fraction * max(mean)`. A crude stand-in for a proper brain mask, but
/// good enough to keep air voxels out of the fit.
pub fn brain_mask(mean: &Image, fraction: f64) -> Mask {
    assert!(
        fraction > 0.0 && fraction < 1.0,
        "mask fraction must be in (0, 1)"
    );
    let max = mean
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = fraction * max;
    let shape = mean.shape();
    let data = mean.data();
    Mask {
        shape: [shape[0], shape[1], shape[2]],
        inside: data.iter().map(|&v| v > threshold).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn identity_affine() -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        for i in 0..4 {
            a[i][i] = 1.0;
        }
        a
    }

    fn image_from(data: Vec<f64>, shape: [usize; 4]) -> Image {
        Image::new(data, shape, identity_affine(), 2.0).unwrap()
    }

    #[test]
    fn fwhm_sigma_reference_values() {
        let one = 2.0 * (2.0 * 2f64.ln()).sqrt();
        assert!((fwhm_to_sigma(one).unwrap() - 1.0).abs() < 1e-15);
        assert!((fwhm_to_sigma(5.0).unwrap() - 2.1233).abs() < 1e-4);
        let s5 = fwhm_to_sigma(5.0).unwrap();
        let s10 = fwhm_to_sigma(10.0).unwrap();
        assert!((s10 - 2.0 * s5).abs() < 1e-15);
        assert!(matches!(
            fwhm_to_sigma(0.0),
            Err(SpatialError::NonPositive(_))
        ));
    }

    #[test]
    fn constant_image_is_unchanged() {
        let img = image_from(vec![3.25; 6 * 5 * 4], [6, 5, 4, 1]);
        let spec = SmoothSpec::from_fwhm(4.0).unwrap();
        let out = gaussian_smooth(&img, &spec).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_response_is_the_separable_kernel_product() {
        let dims = [21usize, 21, 21];
        let mut data = vec![0.0; dims[0] * dims[1] * dims[2]];
        let c = 10usize;
        data[c + dims[0] * (c + dims[1] * c)] = 1.0;
        let img = image_from(data, [21, 21, 21, 1]);
        let spec = SmoothSpec::from_fwhm(2.0).unwrap();
        let out = gaussian_smooth(&img, &spec).unwrap();

        let sigma = spec.sigma_mm; // voxel size 1, so sigma in voxels
        let kernel = gaussian_kernel(sigma, spec.truncate_sigmas).unwrap();
        let radius = (kernel.len() / 2) as isize;

        let mut total = 0.0;
        for k in 0..21 {
            for j in 0..21 {
                for i in 0..21 {
                    let v = out.get(i, j, k, 0);
                    total += v;
                    let off = |p: usize| p as isize - c as isize;
                    let expect = if off(i).abs() <= radius
                        && off(j).abs() <= radius
                        && off(k).abs() <= radius
                    {
                        kernel[(off(i) + radius) as usize]
                            * kernel[(off(j) + radius) as usize]
                            * kernel[(off(k) + radius) as usize]
                    } else {
                        0.0
                    };
                    assert!((v - expect).abs() < 1e-12);
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12, "kernel mass {total}");
    }

    #[test]
    fn tiny_fwhm_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..60).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let img = image_from(data, [5, 4, 3, 1]);
        // one tenth of a voxel
        let spec = SmoothSpec::from_fwhm(0.1).unwrap();
        let out = gaussian_smooth(&img, &spec).unwrap();
        assert_eq!(img.data(), out.data());
    }

    #[test]
    fn axis_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..7 * 6 * 5).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let img = image_from(data, [7, 6, 5, 1]);
        let spec = SmoothSpec::from_fwhm(3.0).unwrap();
        let fwd = separable_smooth(&img, &spec, [0, 1, 2]).unwrap();
        let rev = separable_smooth(&img, &spec, [2, 1, 0]).unwrap();
        for (a, b) in fwd.data().iter().zip(rev.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothed_impulse_is_symmetric() {
        let dims = [15usize, 15, 15];
        let mut data = vec![0.0; dims.iter().product()];
        let c = 7usize;
        data[c + 15 * (c + 15 * c)] = 1.0;
        let img = image_from(data, [15, 15, 15, 1]);
        let out = gaussian_smooth(&img, &SmoothSpec::from_fwhm(3.0).unwrap()).unwrap();
        for d in 1..7usize {
            assert_eq!(out.get(c + d, c, c, 0), out.get(c - d, c, c, 0));
            assert_eq!(out.get(c, c + d, c, 0), out.get(c, c - d, c, 0));
            assert_eq!(out.get(c, c, c + d, 0), out.get(c, c, c - d, 0));
        }
    }

    #[test]
    fn anisotropic_voxels_get_per_axis_kernels() {
        // 2 mm voxels along i need half the voxel radius of 1 mm voxels
        let mut affine = identity_affine();
        affine[0][0] = 2.0;
        let img = Image::new(vec![0.0; 9 * 9 * 9], [9, 9, 9, 1], affine, 1.0).unwrap();
        let spec = SmoothSpec::from_fwhm(5.0).unwrap();
        let vsize = img.voxel_sizes();
        assert_eq!(vsize, [2.0, 1.0, 1.0]);
        let ki = gaussian_kernel(spec.sigma_mm / vsize[0], 4.0).unwrap();
        let kj = gaussian_kernel(spec.sigma_mm / vsize[1], 4.0).unwrap();
        assert!(ki.len() < kj.len());
    }

    #[test]
    fn affine_mapping_reference_cases() {
        let ident = identity_affine();
        assert_eq!(voxel_to_mm(&ident, [3.0, 4.0, 5.0]), [3.0, 4.0, 5.0]);

        let mut a = identity_affine();
        for axis in 0..3 {
            a[axis][axis] = 2.0;
            a[axis][3] = 10.0;
        }
        assert_eq!(voxel_to_mm(&a, [1.0, 2.0, 3.0]), [12.0, 14.0, 16.0]);
    }

    #[test]
    fn voxel_mm_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mut a = identity_affine();
            for r in 0..3 {
                for c in 0..3 {
                    a[r][c] = rng.gen_range(-2.0..2.0);
                }
                a[r][r] += 3.0; // keep it comfortably invertible
                a[r][3] = rng.gen_range(-20.0..20.0);
            }
            let v = [
                rng.gen_range(0.0..32.0),
                rng.gen_range(0.0..32.0),
                rng.gen_range(0.0..32.0),
            ];
            let back = mm_to_voxel(&a, voxel_to_mm(&a, v)).unwrap();
            for axis in 0..3 {
                assert!((back[axis] - v[axis]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affine_map_is_affine() {
        let mut a = identity_affine();
        a[0][1] = 0.5;
        a[1][3] = -7.0;
        a[2][2] = 3.0;
        let u = [1.0, 2.0, 3.0];
        let v = [-2.0, 0.5, 4.0];
        for alpha in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let mix = [
                alpha * u[0] + (1.0 - alpha) * v[0],
                alpha * u[1] + (1.0 - alpha) * v[1],
                alpha * u[2] + (1.0 - alpha) * v[2],
            ];
            let fu = voxel_to_mm(&a, u);
            let fv = voxel_to_mm(&a, v);
            let fmix = voxel_to_mm(&a, mix);
            for axis in 0..3 {
                let expect = alpha * fu[axis] + (1.0 - alpha) * fv[axis];
                assert!((fmix[axis] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_affine_is_rejected() {
        let mut a = identity_affine();
        a[1][1] = 0.0;
        assert!(matches!(
            mm_to_voxel(&a, [1.0, 1.0, 1.0]),
            Err(SpatialError::SingularAffine)
        ));
    }

    #[test]
    fn mean_volume_of_constant_series() {
        let vol: Vec<f64> = (0..8).map(|v| v as f64).collect();
        let mut data = Vec::new();
        for _ in 0..5 {
            data.extend_from_slice(&vol);
        }
        let img = image_from(data, [2, 2, 2, 5]);
        let mean = mean_volume(&img);
        assert_eq!(mean.shape(), [2, 2, 2, 1]);
        assert_eq!(mean.data(), &vol[..]);
    }

    #[test]
    fn brain_mask_threshold_cases() {
        let mean = image_from(vec![0.0, 5.0, 10.0], [3, 1, 1, 1]);
        let mask = brain_mask(&mean, 0.2);
        assert_eq!(mask.inside(), &[false, true, true]);
        assert_eq!(mask.n_inside(), 2);

        let tight = brain_mask(&mean, 0.99);
        assert_eq!(tight.inside(), &[false, false, true]);
    }
}
