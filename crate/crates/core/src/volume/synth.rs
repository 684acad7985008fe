//! Deterministic synthetic volumes for tests and benchmarks.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BitDepth, Dims, Spacing, Volume, Voxels};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SynthKind {
    /// Every voxel equals `value`.
    Uniform { value: u64 },
    /// One voxel of `value` at `(x, y, z)`, zeros elsewhere.
    Delta {
        x: usize,
        y: usize,
        z: usize,
        value: u64,
    },
    /// Uniformly random intensities over the full range of `depth`.
    Random { depth: BitDepth },
    /// Solid ellipsoid of `value`, optionally rotated about the z axis.
    ///
    /// A voxel is inside when its center (integer coordinates) satisfies the
    /// implicit inequality in the ellipsoid's own frame.
    Ellipsoid {
        center: [f64; 3],
        semi_axes: [f64; 3],
        rotation_z_deg: f64,
        value: u64,
    },
}

/// Generates a synthetic volume. Output depends only on `(kind, dims, seed)`.
pub fn synth(kind: &SynthKind, dims: Dims, seed: u64) -> Result<Volume> {
    if dims.x == 0 || dims.y == 0 || dims.z == 0 {
        return Err(Error::InvalidVolume(format!(
            "dims {dims} must be positive"
        )));
    }
    let len = dims
        .checked_len()
        .ok_or_else(|| Error::InvalidVolume(format!("dims {dims} overflow")))?;
    match *kind {
        SynthKind::Uniform { value } => {
            let depth = BitDepth::fitting(value)?;
            let voxels = match depth {
                BitDepth::U8 => Voxels::U8(vec![value as u8; len]),
                BitDepth::U16 => Voxels::U16(vec![value as u16; len]),
            };
            Volume::new(dims, voxels, Spacing::default())
        }
        SynthKind::Delta { x, y, z, value } => {
            if x >= dims.x || y >= dims.y || z >= dims.z {
                return Err(Error::OutOfBounds {
                    x,
                    y,
                    z,
                    dims: dims.as_array(),
                });
            }
            let depth = BitDepth::fitting(value)?;
            let at = x + dims.x * (y + dims.y * z);
            let voxels = match depth {
                BitDepth::U8 => {
                    let mut v = vec![0u8; len];
                    v[at] = value as u8;
                    Voxels::U8(v)
                }
                BitDepth::U16 => {
                    let mut v = vec![0u16; len];
                    v[at] = value as u16;
                    Voxels::U16(v)
                }
            };
            Volume::new(dims, voxels, Spacing::default())
        }
        SynthKind::Random { depth } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let voxels = match depth {
                BitDepth::U8 => {
                    let mut v = vec![0u8; len];
                    rng.fill_bytes(&mut v);
                    Voxels::U8(v)
                }
                BitDepth::U16 => Voxels::U16((0..len).map(|_| rng.gen::<u16>()).collect()),
            };
            Volume::new(dims, voxels, Spacing::default())
        }
        SynthKind::Ellipsoid {
            center,
            semi_axes,
            rotation_z_deg,
            value,
        } => {
            if semi_axes.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
                return Err(Error::InvalidVolume(format!(
                    "ellipsoid semi-axes {semi_axes:?} must be positive"
                )));
            }
            let depth = BitDepth::fitting(value)?;
            let (s, c) = rotation_z_deg.to_radians().sin_cos();
            let [a, b, cc] = semi_axes;
            Volume::from_fn(dims, depth, |x, y, z| {
                let px = x as f64 - center[0];
                let py = y as f64 - center[1];
                let pz = z as f64 - center[2];
                let u = c * px + s * py;
                let v = -s * px + c * py;
                let r = (u / a).powi(2) + (v / b).powi(2) + (pz / cc).powi(2);
                if r <= 1.0 {
                    value
                } else {
                    0
                }
            })
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthKind::Uniform { value } => write!(f, "uniform:{value}"),
            SynthKind::Delta { x, y, z, value } => write!(f, "delta:{x},{y},{z},{value}"),
            SynthKind::Random { depth } => write!(f, "random:{}", depth.bits()),
            SynthKind::Ellipsoid {
                center,
                semi_axes,
                rotation_z_deg,
                value,
            } => write!(
                f,
                "ellipsoid:{},{},{},{},{},{},{},{}",
                center[0],
                center[1],
                center[2],
                semi_axes[0],
                semi_axes[1],
                semi_axes[2],
                value,
                rotation_z_deg
            ),
        }
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    /// Grammar: `uniform:V`, `delta:X,Y,Z,V`, `random:BITS`,
    /// `ellipsoid:CX,CY,CZ,A,B,C,V[,ROT_Z_DEG]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::MalformedHeader(format!("synthetic volume descriptor `{s}`"));
        let (name, args) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<&str> = args.split(',').map(str::trim).collect();
        let int =
            |i: usize| -> Result<u64> { nums.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let float =
            |i: usize| -> Result<f64> { nums.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        match name.trim() {
            "uniform" if nums.len() == 1 => Ok(SynthKind::Uniform { value: int(0)? }),
            "delta" if nums.len() == 4 => Ok(SynthKind::Delta {
                x: int(0)? as usize,
                y: int(1)? as usize,
                z: int(2)? as usize,
                value: int(3)?,
            }),
            "random" if nums.len() == 1 => Ok(SynthKind::Random {
                depth: BitDepth::from_bits(int(0)? as u32)?,
            }),
            "ellipsoid" if nums.len() == 7 || nums.len() == 8 => Ok(SynthKind::Ellipsoid {
                center: [float(0)?, float(1)?, float(2)?],
                semi_axes: [float(3)?, float(4)?, float(5)?],
                value: int(6)?,
                rotation_z_deg: if nums.len() == 8 { float(7)? } else { 0.0 },
            }),
            _ => Err(bad()),
        }
    }
}
