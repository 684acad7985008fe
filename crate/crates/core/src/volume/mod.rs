//! Volume data model, raw/NRRD ingestion and synthetic volumes.
//!
//! Voxels are stored densely with x varying fastest: voxel `(x, y, z)` lives
//! at flat offset `x + L * (y + M * z)` for dims `(L, M, N)`. Coordinates are
//! 0-based everywhere.

mod nrrd;
mod synth;

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nrrd::load_nrrd;
pub use synth::{synth, SynthKind};

/// Voxel counts along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Dims {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Dims { x, y, z }
    }

    pub fn cube(n: usize) -> Self {
        Dims { x: n, y: n, z: n }
    }

    /// Total voxel count, or `None` if it overflows `usize`.
    pub fn checked_len(&self) -> Option<usize> {
        self.x.checked_mul(self.y)?.checked_mul(self.z)
    }

    pub fn len(&self) -> usize {
        self.x * self.y * self.z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }

    pub fn max_extent(&self) -> usize {
        self.x.max(self.y).max(self.z)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

impl FromStr for Dims {
    type Err = Error;

    /// Parses `L,M,N` (also accepts `x` or whitespace as separators).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s
            .split(|c: char| c == ',' || c == 'x' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() != 3 {
            return Err(Error::MalformedHeader(format!(
                "dims `{s}`: expected three values"
            )));
        }
        let mut out = [0usize; 3];
        for (slot, p) in out.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::MalformedHeader(format!("dims `{s}`: bad value `{p}`")))?;
        }
        Ok(Dims::new(out[0], out[1], out[2]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BitDepth {
    U8,
    U16,
}

impl BitDepth {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::U8),
            16 => Ok(BitDepth::U16),
            other => Err(Error::UnsupportedBitDepth(other)),
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            BitDepth::U8 => 8,
            BitDepth::U16 => 16,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    pub fn max_value(self) -> u64 {
        (1u64 << self.bits()) - 1
    }

    /// Smallest depth able to hold `value`.
    pub fn fitting(value: u64) -> Result<Self> {
        if value <= BitDepth::U8.max_value() {
            Ok(BitDepth::U8)
        } else if value <= BitDepth::U16.max_value() {
            Ok(BitDepth::U16)
        } else {
            Err(Error::InvalidVolume(format!(
                "intensity {value} does not fit 16 bits"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    #[default]
    Little,
    Big,
}

impl FromStr for ByteOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "little" | "le" => Ok(ByteOrder::Little),
            "big" | "be" => Ok(ByteOrder::Big),
            other => Err(Error::MalformedHeader(format!("byte order `{other}`"))),
        }
    }
}

/// Physical size of one voxel along x, y, z (α, β, δ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Spacing {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(x) && ok(y) && ok(z) {
            Ok(Spacing { x, y, z })
        } else {
            Err(Error::InvalidSpacing(x, y, z))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing {
            x: 1.0,
            y: 1.0,
            z: 1.0,
        }
    }
}

impl FromStr for Spacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::MalformedHeader(format!("spacing value `{p}`")))
            })
            .collect::<Result<_>>()?;
        match vals[..] {
            [x, y, z] => Spacing::new(x, y, z),
            _ => Err(Error::MalformedHeader(format!(
                "spacing `{s}`: expected three values"
            ))),
        }
    }
}

/// Unsigned voxel intensity type.
pub trait Intensity: Copy + Into<u64> + Send + Sync + 'static {}

impl Intensity for u8 {}
impl Intensity for u16 {}

/// Voxel buffer; the variant fixes the bit depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Voxels {
    U8(Vec<u8>),
    U16(Vec<u16>),
}

impl Voxels {
    pub fn len(&self) -> usize {
        match self {
            Voxels::U8(v) => v.len(),
            Voxels::U16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bit_depth(&self) -> BitDepth {
        match self {
            Voxels::U8(_) => BitDepth::U8,
            Voxels::U16(_) => BitDepth::U16,
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> u64 {
        match self {
            Voxels::U8(v) => v[i] as u64,
            Voxels::U16(v) => v[i] as u64,
        }
    }
}

/// Dispatches `$body` with `$buf` bound to the typed voxel slice.
#[macro_export]
macro_rules! with_voxels {
    ($volume:expr, |$buf:ident| $body:expr) => {
        match $volume.voxels() {
            $crate::volume::Voxels::U8($buf) => $body,
            $crate::volume::Voxels::U16($buf) => $body,
        }
    };
}

/// An immutable dense 3D image.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    voxels: Voxels,
    spacing: Spacing,
}

impl Volume {
    pub fn new(dims: Dims, voxels: Voxels, spacing: Spacing) -> Result<Self> {
        if dims.x == 0 || dims.y == 0 || dims.z == 0 {
            return Err(Error::InvalidVolume(format!(
                "dims {dims} must be positive"
            )));
        }
        let len = dims
            .checked_len()
            .ok_or_else(|| Error::InvalidVolume(format!("dims {dims} overflow")))?;
        if len != voxels.len() {
            return Err(Error::InvalidVolume(format!(
                "dims {dims} need {len} voxels, buffer has {}",
                voxels.len()
            )));
        }
        // Re-validate in case the caller built the struct literal by hand.
        let spacing = Spacing::new(spacing.x, spacing.y, spacing.z)?;
        Ok(Volume {
            dims,
            voxels,
            spacing,
        })
    }

    pub fn from_u8(dims: Dims, data: Vec<u8>) -> Result<Self> {
        Volume::new(dims, Voxels::U8(data), Spacing::default())
    }

    pub fn from_u16(dims: Dims, data: Vec<u16>) -> Result<Self> {
        Volume::new(dims, Voxels::U16(data), Spacing::default())
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn voxels(&self) -> &Voxels {
        &self.voxels
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.voxels.bit_depth()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.x * (y + self.dims.y * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u64 {
        self.voxels.get(self.index(x, y, z))
    }

    /// Sum of all intensities.
    pub fn mass(&self) -> u128 {
        with_voxels!(self, |buf| buf
            .iter()
            .map(|&v| Into::<u64>::into(v) as u128)
            .sum())
    }

    pub fn max_intensity(&self) -> u64 {
        with_voxels!(self, |buf| buf
            .iter()
            .map(|&v| Into::<u64>::into(v))
            .max()
            .unwrap_or(0))
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(
        dims: Dims,
        depth: BitDepth,
        mut f: impl FnMut(usize, usize, usize) -> u64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.z {
            for y in 0..dims.y {
                for x in 0..dims.x {
                    let v = f(x, y, z);
                    if v > depth.max_value() {
                        return Err(Error::InvalidVolume(format!(
                            "intensity {v} at ({x}, {y}, {z}) exceeds {} bits",
                            depth.bits()
                        )));
                    }
                    data.push(v);
                }
            }
        }
        let voxels = match depth {
            BitDepth::U8 => Voxels::U8(data.into_iter().map(|v| v as u8).collect()),
            BitDepth::U16 => Voxels::U16(data.into_iter().map(|v| v as u16).collect()),
        };
        Volume::new(dims, voxels, Spacing::default())
    }

    /// Returns a volume with axes relabeled so that new `(x', y', z') = (y, z, x)`.
    ///
    /// Voxel `V'(y, z, x) = V(x, y, z)`; the new dims are `(M, N, L)`.
    pub fn rotate_axes(&self) -> Volume {
        let d = self.dims;
        let nd = Dims::new(d.y, d.z, d.x);
        let depth = self.bit_depth();
        let sp = self.spacing;
        Volume::from_fn(nd, depth, |a, b, c| self.get(c, a, b))
            .expect("relabeling preserves validity")
            .with_spacing(Spacing {
                x: sp.y,
                y: sp.z,
                z: sp.x,
            })
    }
}

/// Description of a volume stored in a raw file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub source: String,
    pub dims: Dims,
    pub bit_depth: BitDepth,
    pub spacing: Spacing,
    pub byte_order: ByteOrder,
}

impl VolumeMeta {
    pub fn new(dims: Dims, bit_depth: BitDepth) -> Self {
        VolumeMeta {
            source: String::new(),
            dims,
            bit_depth,
            spacing: Spacing::default(),
            byte_order: ByteOrder::Little,
        }
    }

    /// Parses a `key = value` sidecar header.
    ///
    /// Recognized keys: `dims`, `bit_depth`, `spacing`, `byte_order`, `source`.
    /// `#` starts a comment. `dims` and `bit_depth` are required.
    pub fn parse_header(text: &str) -> Result<Self> {
        let mut dims = None;
        let mut depth = None;
        let mut spacing = Spacing::default();
        let mut order = ByteOrder::Little;
        let mut source = String::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| Error::MalformedHeader(format!("line `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "dims" | "sizes" => dims = Some(value.parse::<Dims>()?),
                "bit_depth" | "depth" => {
                    let bits = value
                        .parse::<u32>()
                        .map_err(|_| Error::MalformedHeader(format!("bit_depth `{value}`")))?;
                    depth = Some(BitDepth::from_bits(bits)?);
                }
                "spacing" => spacing = value.parse()?,
                "byte_order" | "endian" => order = value.parse()?,
                "source" => source = value.to_string(),
                other => {
                    return Err(Error::MalformedHeader(format!("unknown key `{other}`")));
                }
            }
        }
        Ok(VolumeMeta {
            source,
            dims: dims.ok_or_else(|| Error::MalformedHeader("missing `dims`".into()))?,
            bit_depth: depth.ok_or_else(|| Error::MalformedHeader("missing `bit_depth`".into()))?,
            spacing,
            byte_order: order,
        })
    }

    pub fn to_header(&self) -> String {
        let d = self.dims;
        let s = self.spacing;
        let order = match self.byte_order {
            ByteOrder::Little => "little",
            ByteOrder::Big => "big",
        };
        let mut out = String::new();
        if !self.source.is_empty() {
            out.push_str(&format!("source = {}\n", self.source));
        }
        out.push_str(&format!("dims = {} {} {}\n", d.x, d.y, d.z));
        out.push_str(&format!("bit_depth = {}\n", self.bit_depth.bits()));
        out.push_str(&format!("spacing = {} {} {}\n", s.x, s.y, s.z));
        out.push_str(&format!("byte_order = {order}\n"));
        out
    }
}

pub(crate) fn decode_voxels(bytes: &[u8], depth: BitDepth, order: ByteOrder) -> Voxels {
    match depth {
        BitDepth::U8 => Voxels::U8(bytes.to_vec()),
        BitDepth::U16 => Voxels::U16(
            bytes
                .chunks_exact(2)
                .map(|c| match order {
                    ByteOrder::Little => u16::from_le_bytes([c[0], c[1]]),
                    ByteOrder::Big => u16::from_be_bytes([c[0], c[1]]),
                })
                .collect(),
        ),
    }
}

/// Reads a headerless voxel file described by `meta`.
pub fn load_raw(path: impl AsRef<Path>, meta: &VolumeMeta) -> Result<Volume> {
    let path = path.as_ref();
    let len = meta
        .dims
        .checked_len()
        .ok_or_else(|| Error::InvalidVolume(format!("dims {} overflow", meta.dims)))?;
    let expected = (len * meta.bit_depth.bytes()) as u64;
    let actual = fs::metadata(path)?.len();
    if actual != expected {
        return Err(Error::SizeMismatch { expected, actual });
    }
    let bytes = fs::read(path)?;
    let voxels = decode_voxels(&bytes, meta.bit_depth, meta.byte_order);
    Volume::new(meta.dims, voxels, meta.spacing)
}

/// Writes the voxel buffer in raw form.
pub fn write_raw(volume: &Volume, path: impl AsRef<Path>, order: ByteOrder) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    match volume.voxels() {
        Voxels::U8(v) => w.write_all(v)?,
        Voxels::U16(v) => {
            for &s in v {
                let b = match order {
                    ByteOrder::Little => s.to_le_bytes(),
                    ByteOrder::Big => s.to_be_bytes(),
                };
                w.write_all(&b)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_uniform_ones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ones.raw");
        fs::write(&path, [1u8; 8]).unwrap();
        let meta = VolumeMeta::new(Dims::cube(2), BitDepth::U8);
        let v = load_raw(&path, &meta).unwrap();
        assert_eq!(v.dims(), Dims::cube(2));
        assert_eq!(v.voxels(), &Voxels::U8(vec![1; 8]));
        assert_eq!(v.mass(), 8);
    }

    #[test]
    fn raw_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.raw");
        fs::write(&path, [1u8; 7]).unwrap();
        let meta = VolumeMeta::new(Dims::cube(2), BitDepth::U8);
        match load_raw(&path, &meta) {
            Err(Error::SizeMismatch { expected, actual }) => {
                assert_eq!((expected, actual), (8, 7));
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn raw_flat_offset_is_x_fastest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ramp.raw");
        let dims = Dims::new(3, 2, 2);
        let bytes: Vec<u8> = (0..12).collect();
        fs::write(&path, &bytes).unwrap();
        let v = load_raw(&path, &VolumeMeta::new(dims, BitDepth::U8)).unwrap();
        assert_eq!(v.get(2, 0, 0), 2);
        assert_eq!(v.get(0, 1, 0), 3);
        assert_eq!(v.get(1, 1, 1), 1 + 3 * (1 + 2));
    }

    #[test]
    fn raw_sixteen_bit_little_endian_with_spacing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v16.raw");
        fs::write(&path, [0x34, 0x12, 0xff, 0xff]).unwrap();
        let mut meta = VolumeMeta::new(Dims::new(2, 1, 1), BitDepth::U16);
        meta.spacing = Spacing::new(1.0, 1.0, 0.4).unwrap();
        let v = load_raw(&path, &meta).unwrap();
        assert_eq!(v.get(0, 0, 0), 0x1234);
        assert_eq!(v.get(1, 0, 0), 0xffff);
        assert_eq!(v.spacing(), meta.spacing);
    }

    #[test]
    fn mri_geometry_size_check() {
        // 512x512x230 at 16 bits: exactly 230*512*512*2 bytes expected.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mri.raw");
        let f = fs::File::create(&path).unwrap();
        f.set_len(230 * 512 * 512 * 2).unwrap();
        let mut meta = VolumeMeta::new(Dims::new(512, 512, 230), BitDepth::U16);
        meta.spacing = Spacing::new(1.0, 1.0, 0.4).unwrap();
        let v = load_raw(&path, &meta).unwrap();
        assert_eq!(v.dims(), Dims::new(512, 512, 230));
        assert_eq!(v.bit_depth(), BitDepth::U16);
        assert_eq!(v.spacing().z, 0.4);
        assert_eq!(v.mass(), 0);
    }

    #[test]
    fn unsupported_depth_rejected() {
        assert!(matches!(
            BitDepth::from_bits(12),
            Err(Error::UnsupportedBitDepth(12))
        ));
        assert!(VolumeMeta::parse_header("dims = 2 2 2\nbit_depth = 32\n").is_err());
    }

    #[test]
    fn header_round_trip() {
        let mut meta = VolumeMeta::new(Dims::new(512, 512, 230), BitDepth::U16);
        meta.spacing = Spacing::new(1.0, 1.0, 0.4).unwrap();
        meta.byte_order = ByteOrder::Big;
        let parsed = VolumeMeta::parse_header(&meta.to_header()).unwrap();
        assert_eq!(parsed, meta);
    }

    #[test]
    fn spacing_must_be_positive() {
        assert!(Spacing::new(1.0, 0.0, 1.0).is_err());
        assert!(Spacing::new(1.0, 1.0, -0.4).is_err());
        assert!(Spacing::new(f64::NAN, 1.0, 1.0).is_err());
        assert!("1,1,0.4".parse::<Spacing>().is_ok());
    }

    #[test]
    fn volume_rejects_bad_buffers() {
        assert!(Volume::from_u8(Dims::cube(2), vec![0; 7]).is_err());
        assert!(Volume::from_u8(Dims::new(0, 2, 2), vec![]).is_err());
    }

    #[test]
    fn rotate_axes_relabels() {
        let v = Volume::from_fn(Dims::new(2, 3, 4), BitDepth::U8, |x, y, z| {
            (x + 2 * y + 6 * z) as u64
        })
        .unwrap();
        let r = v.rotate_axes();
        assert_eq!(r.dims(), Dims::new(3, 4, 2));
        for z in 0..4 {
            for y in 0..3 {
                for x in 0..2 {
                    assert_eq!(r.get(y, z, x), v.get(x, y, z));
                }
            }
        }
    }
}
