//! Volume file IO.
//!
//! Two formats are supported:
//!
//! * a portable raw format: a JSON header (`<stem>.json`) next to a binary
//!   payload (`<stem>.raw`) of little-endian `u8` or `f32` values in
//!   x-fastest order. Round trips are bit-exact.
//! * NIfTI-1 single-file volumes (`.nii`, `.nii.gz`), read-only, for 3D
//!   `uint8`, `int16` and `float32` data.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid, LogitVolume, Shape, Spacing};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    F32,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        }
    }
}

/// Sidecar header of the raw format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeader {
    pub shape: Shape,
    pub spacing: Spacing,
    pub dtype: Dtype,
    pub order: String,
}

pub const RAW_ORDER: &str = "x-fastest";

/// A volume as loaded from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum Volume {
    Mask(BinaryMask),
    Logits(LogitVolume),
}

impl Volume {
    pub fn shape(&self) -> Shape {
        match self {
            Volume::Mask(m) => m.shape(),
            Volume::Logits(l) => l.shape(),
        }
    }

    /// Any nonzero voxel is foreground.
    pub fn into_mask(self) -> BinaryMask {
        match self {
            Volume::Mask(m) => m,
            Volume::Logits(l) => l.map(|&v| v != 0.0),
        }
    }
}

/// Header and payload paths for a raw volume given either file or the stem.
pub fn raw_paths(path: &Path) -> (PathBuf, PathBuf) {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => (path.with_extension("json"), path.with_extension("raw")),
        _ => {
            let mut header = path.as_os_str().to_owned();
            header.push(".json");
            let mut payload = path.as_os_str().to_owned();
            payload.push(".raw");
            (header.into(), payload.into())
        }
    }
}

fn is_nifti(path: &Path) -> bool {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    name.ends_with(".nii") || name.ends_with(".nii.gz")
}

/// Load a volume, picking the format from the file name.
///
/// Raw `u8` and NIfTI `uint8`/`int16` load as masks; `f32` data loads as
/// logits.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    if is_nifti(path) {
        read_nifti(path)
    } else {
        read_raw(path)
    }
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    read_volume(path).map(Volume::into_mask)
}

pub fn write_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    match vol {
        Volume::Mask(m) => write_mask(m, path),
        Volume::Logits(l) => write_real(l.grid(), path),
    }
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let payload: Vec<u8> = mask.data().iter().map(|&b| b as u8).collect();
    write_raw(
        path.as_ref(),
        mask.shape(),
        mask.spacing(),
        Dtype::U8,
        &payload,
    )
}

/// Writes `f32` values; values not representable in `f32` are rounded.
pub fn write_real(grid: &Grid<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut payload = Vec::with_capacity(grid.len() * 4);
    for &v in grid.data() {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_raw(
        path.as_ref(),
        grid.shape(),
        grid.spacing(),
        Dtype::F32,
        &payload,
    )
}

fn write_raw(
    path: &Path,
    shape: Shape,
    spacing: Spacing,
    dtype: Dtype,
    payload: &[u8],
) -> Result<()> {
    let (header_path, payload_path) = raw_paths(path);
    let header = RawHeader {
        shape,
        spacing,
        dtype,
        order: RAW_ORDER.to_string(),
    };
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))?;
    fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))?;
    Ok(())
}

fn byte_offset(text: &str, line: usize, column: usize) -> u64 {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)) as u64
}

pub fn read_raw_header(path: impl AsRef<Path>) -> Result<RawHeader> {
    let (header_path, _) = raw_paths(path.as_ref());
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: RawHeader = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: header_path.clone(),
        offset: byte_offset(&text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if header.order != RAW_ORDER {
        return Err(Error::format(
            &header_path,
            format!(
                "unsupported order {:?}, expected {RAW_ORDER:?}",
                header.order
            ),
        ));
    }
    Ok(header)
}

fn read_raw(path: &Path) -> Result<Volume> {
    let header = read_raw_header(path)?;
    let (_, payload_path) = raw_paths(path);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let n = header.shape.len();
    let expected = n * header.dtype.size();
    if bytes.len() != expected {
        return Err(Error::format(
            &payload_path,
            format!(
                "shape {} with dtype {:?} needs {expected} bytes, found {}",
                header.shape,
                header.dtype,
                bytes.len()
            ),
        ));
    }
    match header.dtype {
        Dtype::U8 => {
            let data = bytes.iter().map(|&b| b != 0).collect();
            Ok(Volume::Mask(Grid::new(header.shape, header.spacing, data)?))
        }
        Dtype::F32 => {
            let data: Vec<f64> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            LogitVolume::from_vec(header.shape, header.spacing, data)
                .map(Volume::Logits)
                .map_err(|e| Error::format(&payload_path, e.to_string()))
        }
    }
}

// NIfTI-1 header layout (byte offsets).
const NIFTI_HEADER_SIZE: usize = 348;
const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_MAGIC: usize = 344;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

struct Endian {
    little: bool,
}

impl Endian {
    fn i16(&self, b: &[u8], off: usize) -> i16 {
        let a = [b[off], b[off + 1]];
        if self.little {
            i16::from_le_bytes(a)
        } else {
            i16::from_be_bytes(a)
        }
    }

    fn i32(&self, b: &[u8], off: usize) -> i32 {
        let a = [b[off], b[off + 1], b[off + 2], b[off + 3]];
        if self.little {
            i32::from_le_bytes(a)
        } else {
            i32::from_be_bytes(a)
        }
    }

    fn f32(&self, b: &[u8], off: usize) -> f32 {
        f32::from_bits(self.i32(b, off) as u32)
    }
}

fn read_nifti(path: &Path) -> Result<Volume> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out
    } else {
        raw
    };
    parse_nifti(path, &bytes)
}

fn parse_nifti(path: &Path, b: &[u8]) -> Result<Volume> {
    let perr = |offset: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if b.len() < NIFTI_HEADER_SIZE {
        return Err(perr(
            b.len(),
            format!("file too short for a NIfTI-1 header ({} bytes)", b.len()),
        ));
    }
    let endian = if i32::from_le_bytes([b[0], b[1], b[2], b[3]]) == 348 {
        Endian { little: true }
    } else if i32::from_be_bytes([b[0], b[1], b[2], b[3]]) == 348 {
        Endian { little: false }
    } else {
        return Err(perr(0, "sizeof_hdr is not 348".into()));
    };
    let magic = &b[OFF_MAGIC..OFF_MAGIC + 4];
    if magic != b"n+1\0" {
        let message = if magic == b"ni1\0" {
            "header/image pair files are not supported".to_string()
        } else {
            format!("bad magic {magic:?}")
        };
        return Err(perr(OFF_MAGIC, message));
    }

    let dim: Vec<i16> = (0..8).map(|i| endian.i16(b, OFF_DIM + 2 * i)).collect();
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(perr(OFF_DIM, format!("dim[0] = {ndim} out of range")));
    }
    let mut extent = [1usize; 3];
    for (i, &d) in dim.iter().enumerate().skip(1).take(ndim as usize) {
        if d <= 0 {
            return Err(perr(
                OFF_DIM + 2 * i,
                format!("dim[{i}] = {d} must be positive"),
            ));
        }
        if i <= 3 {
            extent[i - 1] = d as usize;
        } else if d != 1 {
            return Err(perr(
                OFF_DIM + 2 * i,
                format!("only 3D volumes are supported, dim[{i}] = {d}"),
            ));
        }
    }
    let shape =
        Shape::new(extent[0], extent[1], extent[2]).map_err(|e| perr(OFF_DIM, e.to_string()))?;

    let datatype = endian.i16(b, OFF_DATATYPE);
    let (elem, expected_bitpix) = match datatype {
        DT_UINT8 => (1usize, 8),
        DT_INT16 => (2, 16),
        DT_FLOAT32 => (4, 32),
        other => {
            return Err(perr(
                OFF_DATATYPE,
                format!("unsupported datatype {other} (expected uint8, int16 or float32)"),
            ))
        }
    };
    let bitpix = endian.i16(b, OFF_BITPIX);
    if bitpix != expected_bitpix {
        return Err(perr(
            OFF_BITPIX,
            format!("bitpix {bitpix} does not match datatype {datatype}"),
        ));
    }

    let mut pix = [0.0f64; 3];
    for (i, p) in pix.iter_mut().enumerate() {
        let off = OFF_PIXDIM + 4 * (i + 1);
        let v = endian.f32(b, off) as f64;
        if !(v.is_finite() && v > 0.0) {
            return Err(perr(
                off,
                format!("pixdim[{}] = {v} is not a valid spacing", i + 1),
            ));
        }
        *p = v;
    }
    let spacing =
        Spacing::new(pix[0], pix[1], pix[2]).map_err(|e| perr(OFF_PIXDIM, e.to_string()))?;

    let vox_offset = endian.f32(b, OFF_VOX_OFFSET);
    if !(vox_offset.is_finite()
        && vox_offset.fract() == 0.0
        && vox_offset >= NIFTI_HEADER_SIZE as f32)
    {
        return Err(perr(
            OFF_VOX_OFFSET,
            format!("invalid vox_offset {vox_offset}"),
        ));
    }
    let start = vox_offset as usize;
    let n = shape.len();
    let end = start + n * elem;
    if b.len() < end {
        return Err(Error::format(
            path,
            format!(
                "image data truncated: need {end} bytes, file has {}",
                b.len()
            ),
        ));
    }
    let data = &b[start..end];

    match datatype {
        DT_UINT8 => {
            let voxels = data.iter().map(|&v| v != 0).collect();
            Ok(Volume::Mask(Grid::new(shape, spacing, voxels)?))
        }
        DT_INT16 => {
            let voxels = (0..n).map(|i| endian.i16(data, 2 * i) != 0).collect();
            Ok(Volume::Mask(Grid::new(shape, spacing, voxels)?))
        }
        _ => {
            let slope = endian.f32(b, OFF_SCL_SLOPE) as f64;
            let inter = endian.f32(b, OFF_SCL_INTER) as f64;
            let scale = slope != 0.0 && slope.is_finite() && inter.is_finite();
            let voxels = (0..n)
                .map(|i| {
                    let v = endian.f32(data, 4 * i) as f64;
                    if scale {
                        v * slope + inter
                    } else {
                        v
                    }
                })
                .collect();
            LogitVolume::from_vec(shape, spacing, voxels)
                .map(Volume::Logits)
                .map_err(|e| Error::format(path, e.to_string()))
        }
    }
}
