//! NIfTI-1 single-file (`.nii`) reader and writer.
//!
//! The format is a fixed 348-byte header followed by a 4-byte extension
//! flag and the voxel data at `vox_offset`. Only the fields this toolkit
//! needs are decoded; everything else is preserved as zeros on write.
//! Field offsets follow the public NIfTI-1 C struct.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

/// Size of the fixed NIfTI-1 header in bytes.
pub const HEADER_SIZE: usize = 348;

/// Magic for single-file NIfTI-1 (`.nii`).
pub const MAGIC: &[u8; 4] = b"n+1\0";

/// Datatype codes supported by this reader.
pub const SUPPORTED_DATATYPES: [i16; 5] = [2, 4, 8, 16, 64];

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("header too short: got {0} bytes, need {HEADER_SIZE}")]
    HeaderTooShort(usize),
    #[error("sizeof_hdr is not {HEADER_SIZE} under either byte order")]
    BadSizeofHdr,
    #[error("bad magic {0:?}, expected \"n+1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0} (supported: 2, 4, 8, 16, 64)")]
    UnsupportedDatatype(i16),
    #[error("dim[0] = {0} out of range 1..=7")]
    BadDimCount(i16),
    #[error("vox_offset {0} is before the end of the header")]
    BadVoxOffset(f32),
    #[error("data truncated: file has {actual} bytes, need {needed}")]
    TruncatedData { needed: u64, actual: u64 },
    #[error("voxel index ({0}, {1}, {2}) out of range for shape {3:?}")]
    IndexOutOfRange(usize, usize, usize, [usize; 4]),
    #[error("volume index {0} out of range for {1} volumes")]
    VolumeOutOfRange(usize, usize),
    #[error("cannot drop {n} volumes from a {total}-volume image")]
    DropTooMany { n: usize, total: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Byte order of the multi-byte header and data fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    fn i16(self, b: &[u8]) -> i16 {
        let v = [b[0], b[1]];
        match self {
            ByteOrder::Little => i16::from_le_bytes(v),
            ByteOrder::Big => i16::from_be_bytes(v),
        }
    }

    fn i32(self, b: &[u8]) -> i32 {
        let v = [b[0], b[1], b[2], b[3]];
        match self {
            ByteOrder::Little => i32::from_le_bytes(v),
            ByteOrder::Big => i32::from_be_bytes(v),
        }
    }

    fn f32(self, b: &[u8]) -> f32 {
        let v = [b[0], b[1], b[2], b[3]];
        match self {
            ByteOrder::Little => f32::from_le_bytes(v),
            ByteOrder::Big => f32::from_be_bytes(v),
        }
    }

    fn f64(self, b: &[u8]) -> f64 {
        let mut v = [0u8; 8];
        v.copy_from_slice(&b[..8]);
        match self {
            ByteOrder::Little => f64::from_le_bytes(v),
            ByteOrder::Big => f64::from_be_bytes(v),
        }
    }
}

/// Decoded NIfTI-1 header, already corrected for byte order.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    /// `dim[0]` is the dimension count, `dim[1..=7]` the extents.
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    /// `pixdim[1..=3]` voxel size in mm, `pixdim[4]` repetition time in s.
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub sform_code: i16,
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub magic: [u8; 4],
    pub byte_order: ByteOrder,
}

impl NiftiHeader {
    pub fn ndim(&self) -> usize {
        self.dim[0] as usize
    }

    /// Extents padded out to four axes with trailing ones.
    pub fn shape4(&self) -> [usize; 4] {
        let mut s = [1usize; 4];
        for (axis, slot) in s.iter_mut().enumerate().take(self.ndim().min(4)) {
            *slot = self.dim[axis + 1].max(1) as usize;
        }
        s
    }

    /// Total number of stored values across all declared dimensions.
    pub fn n_values(&self) -> usize {
        (1..=self.ndim())
            .map(|axis| self.dim[axis].max(1) as usize)
            .product()
    }

    /// Bytes per stored value, derived from the datatype code.
    pub fn bytes_per_value(&self) -> usize {
        match self.datatype {
            2 => 1,
            4 => 2,
            8 | 16 => 4,
            64 => 8,
            _ => unreachable!("datatype validated at parse time"),
        }
    }

    /// Voxel-to-mm affine: the sform rows when `sform_code > 0`, otherwise
    /// a diagonal built from `pixdim`.
    pub fn affine(&self) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        a[3][3] = 1.0;
        if self.sform_code > 0 {
            for c in 0..4 {
                a[0][c] = self.srow_x[c] as f64;
                a[1][c] = self.srow_y[c] as f64;
                a[2][c] = self.srow_z[c] as f64;
            }
        } else {
            for (axis, row) in a.iter_mut().enumerate().take(3) {
                row[axis] = self.pixdim[axis + 1] as f64;
            }
        }
        a
    }
}

/// Decode a 348-byte NIfTI-1 header, detecting byte order from `sizeof_hdr`.
pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader, NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::HeaderTooShort(bytes.len()));
    }
    let order = if ByteOrder::Little.i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        ByteOrder::Little
    } else if ByteOrder::Big.i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        ByteOrder::Big
    } else {
        return Err(NiftiError::BadSizeofHdr);
    };

    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[344..348]);
    if &magic[..3] != b"n+1" {
        return Err(NiftiError::BadMagic(magic));
    }

    let mut dim = [0i16; 8];
    for (axis, slot) in dim.iter_mut().enumerate() {
        *slot = order.i16(&bytes[40 + 2 * axis..]);
    }
    if !(1..=7).contains(&dim[0]) {
        return Err(NiftiError::BadDimCount(dim[0]));
    }

    let datatype = order.i16(&bytes[70..]);
    if !SUPPORTED_DATATYPES.contains(&datatype) {
        return Err(NiftiError::UnsupportedDatatype(datatype));
    }

    let mut pixdim = [0f32; 8];
    for (axis, slot) in pixdim.iter_mut().enumerate() {
        *slot = order.f32(&bytes[76 + 4 * axis..]);
    }

    let vox_offset = order.f32(&bytes[108..]);
    if vox_offset < HEADER_SIZE as f32 {
        return Err(NiftiError::BadVoxOffset(vox_offset));
    }

    let read_row = |off: usize| -> [f32; 4] {
        let mut r = [0f32; 4];
        for (c, slot) in r.iter_mut().enumerate() {
            *slot = order.f32(&bytes[off + 4 * c..]);
        }
        r
    };

    Ok(NiftiHeader {
        sizeof_hdr: HEADER_SIZE as i32,
        dim,
        datatype,
        bitpix: order.i16(&bytes[72..]),
        pixdim,
        vox_offset,
        scl_slope: order.f32(&bytes[112..]),
        scl_inter: order.f32(&bytes[116..]),
        sform_code: order.i16(&bytes[254..]),
        srow_x: read_row(280),
        srow_y: read_row(296),
        srow_z: read_row(312),
        magic,
        byte_order: order,
    })
}

/// Read and decode just the header of a `.nii` file.
pub fn read_header<P: AsRef<Path>>(path: P) -> Result<NiftiHeader, NiftiError> {
    let bytes = fs::read(path)?;
    parse_header(&bytes)
}

/// In-memory image: a 4D `f64` array in column-major order (`i` fastest,
/// `t` slowest) with a voxel-to-mm affine and the repetition time.
///
/// 3D images are stored with a time extent of 1. Each volume occupies a
/// contiguous slice of the backing vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Vec<f64>,
    shape: [usize; 4],
    pub affine: [[f64; 4]; 4],
    pub tr_s: f64,
}

fn det3(a: &[[f64; 4]; 4]) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

impl Image {
    pub fn new(
        data: Vec<f64>,
        shape: [usize; 4],
        affine: [[f64; 4]; 4],
        tr_s: f64,
    ) -> Result<Self, NiftiError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NiftiError::InvalidImage(format!(
                "shape {:?} implies {} values, data has {}",
                shape,
                n,
                data.len()
            )));
        }
        if shape.contains(&0) {
            return Err(NiftiError::InvalidImage("zero-extent axis".into()));
        }
        if affine[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(NiftiError::InvalidImage(
                "last affine row must be (0, 0, 0, 1)".into(),
            ));
        }
        if det3(&affine) == 0.0 {
            return Err(NiftiError::InvalidImage(
                "affine 3x3 block is singular".into(),
            ));
        }
        Ok(Image {
            data,
            shape,
            affine,
            tr_s,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Voxels per volume.
    pub fn n_voxels(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    pub fn n_volumes(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize, t: usize) -> usize {
        i + self.shape[0] * (j + self.shape[1] * (k + self.shape[2] * t))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, t: usize) -> f64 {
        self.data[self.index(i, j, k, t)]
    }

    /// Contiguous data of volume `t`.
    pub fn volume(&self, t: usize) -> &[f64] {
        let nv = self.n_voxels();
        &self.data[t * nv..(t + 1) * nv]
    }

    /// Voxel edge lengths in mm: norms of the affine's first three columns.
    pub fn voxel_sizes(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (c, out) in s.iter_mut().enumerate() {
            *out = (0..3).map(|r| self.affine[r][c].powi(2)).sum::<f64>().sqrt();
        }
        s
    }
}

/// Load a `.nii` file, promoting all voxel data to `f64` and applying the
/// `scl_slope`/`scl_inter` value scaling when the slope is nonzero.
pub fn load_image<P: AsRef<Path>>(path: P) -> Result<Image, NiftiError> {
    let bytes = fs::read(&path)?;
    let hdr = parse_header(&bytes)?;
    if hdr.ndim() > 4 {
        let extra: usize = (5..=hdr.ndim())
            .map(|axis| hdr.dim[axis].max(1) as usize)
            .product();
        if extra > 1 {
            return Err(NiftiError::InvalidImage(format!(
                "{}-dimensional image with non-unit extents beyond axis 4",
                hdr.ndim()
            )));
        }
    }
    let n = hdr.n_values();
    let elem = hdr.bytes_per_value();
    let offset = hdr.vox_offset as u64;
    let needed = offset + (n * elem) as u64;
    if (bytes.len() as u64) < needed {
        return Err(NiftiError::TruncatedData {
            needed,
            actual: bytes.len() as u64,
        });
    }

    let order = hdr.byte_order;
    let raw = &bytes[offset as usize..offset as usize + n * elem];
    let mut data = Vec::with_capacity(n);
    for v in 0..n {
        let b = &raw[v * elem..];
        let value = match hdr.datatype {
            2 => b[0] as f64,
            4 => order.i16(b) as f64,
            8 => order.i32(b) as f64,
            16 => order.f32(b) as f64,
            64 => order.f64(b),
            _ => unreachable!(),
        };
        data.push(value);
    }
    if hdr.scl_slope != 0.0 {
        let (slope, inter) = (hdr.scl_slope as f64, hdr.scl_inter as f64);
        for v in &mut data {
            *v = slope * *v + inter;
        }
    }

    if hdr.sform_code <= 0 {
        eprintln!(
            "warning: {}: sform_code = 0, falling back to diagonal pixdim affine",
            path.as_ref().display()
        );
    }
    Image::new(data, hdr.shape4(), hdr.affine(), hdr.pixdim[4] as f64)
}

fn put_i16(buf: &mut [u8], off: usize, v: i16) {
    buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn put_i32(buf: &mut [u8], off: usize, v: i32) {
    buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(buf: &mut [u8], off: usize, v: f32) {
    buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

/// Write an image as a little-endian float32 single-file `.nii`:
/// `sform_code = 1`, srows from the image affine, `scl_slope = 1`,
/// `scl_inter = 0`, data at `vox_offset = 352`.
///
/// The file is written to a temporary sibling and renamed into place, so a
/// failed write never leaves a partial target.
pub fn save_image<P: AsRef<Path>>(img: &Image, path: P) -> Result<(), NiftiError> {
    let path = path.as_ref();
    let shape = img.shape();
    let ndim: i16 = if shape[3] > 1 { 4 } else { 3 };
    let vox = img.voxel_sizes();

    let mut hdr = vec![0u8; 352];
    put_i32(&mut hdr, 0, HEADER_SIZE as i32);
    put_i16(&mut hdr, 40, ndim);
    for axis in 0..4 {
        put_i16(&mut hdr, 42 + 2 * axis, shape[axis] as i16);
    }
    for axis in 4..7 {
        put_i16(&mut hdr, 42 + 2 * axis, 1);
    }
    put_i16(&mut hdr, 70, 16); // float32
    put_i16(&mut hdr, 72, 32);
    put_f32(&mut hdr, 76, 1.0); // qfac
    for axis in 0..3 {
        put_f32(&mut hdr, 80 + 4 * axis, vox[axis] as f32);
    }
    put_f32(&mut hdr, 92, img.tr_s as f32);
    put_f32(&mut hdr, 108, 352.0);
    put_f32(&mut hdr, 112, 1.0); // scl_slope
    put_f32(&mut hdr, 116, 0.0); // scl_inter
    put_i16(&mut hdr, 254, 1); // sform_code
    for r in 0..3 {
        for c in 0..4 {
            put_f32(&mut hdr, 280 + 16 * r + 4 * c, img.affine[r][c] as f32);
        }
    }
    hdr[344..348].copy_from_slice(MAGIC);
    // bytes 348..352 are the all-zero extension flag

    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))?;
    tmp.write_all(&hdr)?;
    let mut buf = Vec::with_capacity(img.data().len() * 4);
    for &v in img.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    tmp.write_all(&buf)?;
    tmp.persist(path).map_err(|e| NiftiError::Io(e.error))?;
    // temp files are created 0600; outputs should be world readable
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o644))?;
    }
    Ok(())
}

/// Extract volume `t` as a 3D image (time extent 1) sharing the affine.
pub fn slice_volume(img: &Image, t: usize) -> Result<Image, NiftiError> {
    if t >= img.n_volumes() {
        return Err(NiftiError::VolumeOutOfRange(t, img.n_volumes()));
    }
    let shape = img.shape();
    Image::new(
        img.volume(t).to_vec(),
        [shape[0], shape[1], shape[2], 1],
        img.affine,
        img.tr_s,
    )
}

/// Remove the first `n` volumes.
pub fn drop_initial(img: &Image, n: usize) -> Result<Image, NiftiError> {
    let total = img.n_volumes();
    if n >= total {
        return Err(NiftiError::DropTooMany { n, total });
    }
    let shape = img.shape();
    Image::new(
        img.data()[n * img.n_voxels()..].to_vec(),
        [shape[0], shape[1], shape[2], total - n],
        img.affine,
        img.tr_s,
    )
}

/// Time-course of a single voxel as a length-T vector.
pub fn voxel_timecourse(img: &Image, i: usize, j: usize, k: usize) -> Result<Vec<f64>, NiftiError> {
    let shape = img.shape();
    if i >= shape[0] || j >= shape[1] || k >= shape[2] {
        return Err(NiftiError::IndexOutOfRange(i, j, k, shape));
    }
    Ok((0..shape[3]).map(|t| img.get(i, j, k, t)).collect())
}
