//! The five voxel-aligned projections of a volume.
//!
//! Each projection collapses the volume onto a 2D accumulator image by pure
//! addition along voxel-aligned rays:
//!
//! | orientation | (θ:φ)   | pixel index `(i, j)` | size            |
//! |-------------|---------|----------------------|-----------------|
//! | `Xy`        | 0:0     | `(x, y)`             | `L × M`         |
//! | `Yz`        | 0:π/2   | `(y, z)`             | `M × N`         |
//! | `Zx`        | π/2:0   | `(z, x)`             | `N × L`         |
//! | `Diag`      | π/4:0   | `(x + z, y)`         | `(L+N−1) × M`   |
//! | `Anti`      | −π/4:0  | `(x − z, y)`         | `(L+N−1) × M`   |
//!
//! The anti-diagonal index `x − z` is negative for part of the volume, so it
//! is stored at `x − z + x̂` with `x̂ = N − 1`; the offset is kept on the image
//! and removed later as an origin shift on the moments.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{Counter, NoCount};
use crate::volume::{Intensity, Volume};
use crate::with_voxels;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Xy,
    Yz,
    Zx,
    Diag,
    Anti,
}

impl Orientation {
    pub const ALL: [Orientation; 5] = [
        Orientation::Xy,
        Orientation::Yz,
        Orientation::Zx,
        Orientation::Diag,
        Orientation::Anti,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Orientation::Xy => "xy",
            Orientation::Yz => "yz",
            Orientation::Zx => "zx",
            Orientation::Diag => "diag",
            Orientation::Anti => "anti",
        }
    }

    /// The `(θ:φ)` rotation label of the projection plane.
    pub fn angle_label(self) -> &'static str {
        match self {
            Orientation::Xy => "0:0",
            Orientation::Yz => "0:pi/2",
            Orientation::Zx => "pi/2:0",
            Orientation::Diag => "pi/4:0",
            Orientation::Anti => "-pi/4:0",
        }
    }

    /// `(width, height, origin_offset)` of the image for a volume of `dims`.
    pub fn image_shape(self, l: usize, m: usize, n: usize) -> (usize, usize, usize) {
        match self {
            Orientation::Xy => (l, m, 0),
            Orientation::Yz => (m, n, 0),
            Orientation::Zx => (n, l, 0),
            Orientation::Diag => (l + n - 1, m, 0),
            Orientation::Anti => (l + n - 1, m, n - 1),
        }
    }

    /// Stored pixel index of voxel `(x, y, z)` in a volume of depth `n`.
    pub fn map(self, x: usize, y: usize, z: usize, n: usize) -> (usize, usize) {
        match self {
            Orientation::Xy => (x, y),
            Orientation::Yz => (y, z),
            Orientation::Zx => (z, x),
            Orientation::Diag => (x + z, y),
            Orientation::Anti => (x + (n - 1) - z, y),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Orientation::ALL
            .into_iter()
            .find(|o| o.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::MalformedHeader(format!("orientation `{s}`")))
    }
}

/// A 2D accumulator image; pixel `(i, j)` is stored at `j * width + i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionImage {
    pub orientation: Orientation,
    pub width: usize,
    pub height: usize,
    /// Stored index of logical index 0 along the first image axis.
    pub origin_offset: usize,
    pub pixels: Vec<u64>,
}

impl ProjectionImage {
    pub fn zeros(
        orientation: Orientation,
        width: usize,
        height: usize,
        origin_offset: usize,
    ) -> Self {
        ProjectionImage {
            orientation,
            width,
            height,
            origin_offset,
            pixels: vec![0; width * height],
        }
    }

    fn for_volume(orientation: Orientation, volume: &Volume) -> Self {
        let d = volume.dims();
        let (w, h, off) = orientation.image_shape(d.x, d.y, d.z);
        ProjectionImage::zeros(orientation, w, h, off)
    }

    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> u64 {
        self.pixels[j * self.width + i]
    }

    pub fn row(&self, j: usize) -> &[u64] {
        &self.pixels[j * self.width..(j + 1) * self.width]
    }

    pub fn mass(&self) -> u128 {
        self.pixels.iter().map(|&p| p as u128).sum()
    }

    fn merge(&mut self, other: &ProjectionImage) {
        for (a, b) in self.pixels.iter_mut().zip(&other.pixels) {
            *a += *b;
        }
    }

    /// Writes a binary 16-bit PGM. Pixels above 65535 are rescaled by the
    /// returned factor, which is also recorded in a `# scale` comment line.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<f64> {
        let max = self.pixels.iter().copied().max().unwrap_or(0);
        let scale = if max > u16::MAX as u64 {
            max as f64 / u16::MAX as f64
        } else {
            1.0
        };
        let mut w = BufWriter::new(fs::File::create(path)?);
        write!(
            w,
            "P5\n# {} ({}) origin_offset {}\n# scale {}\n{} {}\n65535\n",
            self.orientation,
            self.orientation.angle_label(),
            self.origin_offset,
            scale,
            self.width,
            self.height
        )?;
        for &p in &self.pixels {
            let v = if scale == 1.0 {
                p as u16
            } else {
                (p as f64 / scale).round().min(u16::MAX as f64) as u16
            };
            w.write_all(&v.to_be_bytes())?;
        }
        w.flush()?;
        Ok(scale)
    }
}

/// Projects a volume along one orientation by direct per-voxel index mapping.
///
/// This is the straightforward definition; [`project_all`] produces the same
/// images in one fused pass.
pub fn project(volume: &Volume, orientation: Orientation) -> ProjectionImage {
    let d = volume.dims();
    let mut img = ProjectionImage::for_volume(orientation, volume);
    with_voxels!(volume, |buf| {
        let mut idx = 0;
        for z in 0..d.z {
            for y in 0..d.y {
                for x in 0..d.x {
                    let (i, j) = orientation.map(x, y, z, d.z);
                    img.pixels[j * img.width + i] += Into::<u64>::into(buf[idx]);
                    idx += 1;
                }
            }
        }
    });
    img
}

/// The projection images consumed by the projection-moment engine.
///
/// `anti` is only produced when 4th-order moments are requested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionSet {
    pub xy: ProjectionImage,
    pub yz: ProjectionImage,
    pub zx: ProjectionImage,
    pub diag: ProjectionImage,
    pub anti: Option<ProjectionImage>,
}

impl ProjectionSet {
    pub fn get(&self, o: Orientation) -> Option<&ProjectionImage> {
        match o {
            Orientation::Xy => Some(&self.xy),
            Orientation::Yz => Some(&self.yz),
            Orientation::Zx => Some(&self.zx),
            Orientation::Diag => Some(&self.diag),
            Orientation::Anti => self.anti.as_ref(),
        }
    }

    pub fn images(&self) -> impl Iterator<Item = &ProjectionImage> {
        [&self.xy, &self.yz, &self.zx, &self.diag]
            .into_iter()
            .chain(self.anti.as_ref())
    }

    fn merge(&mut self, other: &ProjectionSet) {
        self.xy.merge(&other.xy);
        self.yz.merge(&other.yz);
        self.zx.merge(&other.zx);
        self.diag.merge(&other.diag);
        if let (Some(a), Some(b)) = (self.anti.as_mut(), other.anti.as_ref()) {
            a.merge(b);
        }
    }
}

/// All five projections in a single pass over the voxels.
pub fn project_all(volume: &Volume) -> ProjectionSet {
    project_set(volume, true, 1, &mut NoCount)
}

/// Single-pass projection; `with_anti` selects the fifth image.
///
/// With `threads > 1` the z range is split into slabs accumulated into
/// per-worker partial images and merged by addition, so the output is
/// bit-identical for every worker count. Instrumented runs should use one
/// thread; counts from worker threads are not collected.
pub fn project_set<C: Counter>(
    volume: &Volume,
    with_anti: bool,
    threads: usize,
    counter: &mut C,
) -> ProjectionSet {
    let n = volume.dims().z;
    let threads = threads.clamp(1, n);
    if threads == 1 {
        return project_slab(volume, with_anti, 0, n, counter);
    }
    let chunk = n.div_ceil(threads);
    let partials: Vec<ProjectionSet> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let z0 = (t * chunk).min(n);
                let z1 = ((t + 1) * chunk).min(n);
                s.spawn(move || project_slab(volume, with_anti, z0, z1, &mut NoCount))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("projection worker panicked"))
            .collect()
    });
    let mut iter = partials.into_iter();
    let mut out = iter.next().expect("at least one worker");
    for p in iter {
        out.merge(&p);
    }
    out
}

/// Hot-loop pixel accumulator. Narrow accumulators halve memory traffic and
/// are used only when no pixel can exceed their range.
trait Acc: Copy + Default + std::ops::AddAssign + Send {
    fn lift<T: Intensity>(v: T) -> Self;
    fn widen(self) -> u64;
}

impl Acc for u32 {
    #[inline(always)]
    fn lift<T: Intensity>(v: T) -> Self {
        Into::<u64>::into(v) as u32
    }
    #[inline(always)]
    fn widen(self) -> u64 {
        self as u64
    }
}

impl Acc for u64 {
    #[inline(always)]
    fn lift<T: Intensity>(v: T) -> Self {
        v.into()
    }
    #[inline(always)]
    fn widen(self) -> u64 {
        self
    }
}

fn project_slab<C: Counter>(
    volume: &Volume,
    with_anti: bool,
    z0: usize,
    z1: usize,
    counter: &mut C,
) -> ProjectionSet {
    // A pixel collects at most one voxel per step along its ray, and no ray
    // is longer than the largest extent.
    let worst = volume.bit_depth().max_value() as u128 * volume.dims().max_extent() as u128;
    let narrow = worst <= u32::MAX as u128;
    with_voxels!(volume, |buf| match (narrow, with_anti) {
        (true, true) => slab_kernel::<_, u32, _, true>(volume, buf, z0, z1, counter),
        (true, false) => slab_kernel::<_, u32, _, false>(volume, buf, z0, z1, counter),
        (false, true) => slab_kernel::<_, u64, _, true>(volume, buf, z0, z1, counter),
        (false, false) => slab_kernel::<_, u64, _, false>(volume, buf, z0, z1, counter),
    })
}

/// Byte budget for the image rows kept hot while sweeping z.
const ROW_BLOCK_BYTES: usize = 256 * 1024;

/// Accumulates slices `z0..z1` into fresh images.
///
/// Rows are visited in blocks of y so that the XY, DIAG and ANTI rows being
/// updated stay cache resident across the whole z sweep. ZX is accumulated
/// z-major (contiguous along x) and transposed when widening.
fn slab_kernel<T: Intensity, A: Acc, C: Counter, const ANTI: bool>(
    volume: &Volume,
    buf: &[T],
    z0: usize,
    z1: usize,
    counter: &mut C,
) -> ProjectionSet {
    let d = volume.dims();
    let (l, m, n) = (d.x, d.y, d.z);
    let wide = l + n - 1;
    let mut xy = vec![A::default(); l * m];
    let mut yz = vec![A::default(); m * n];
    let mut zx_t = vec![A::default(); n * l];
    let mut diag = vec![A::default(); wide * m];
    let mut anti = vec![A::default(); if ANTI { wide * m } else { 0 }];

    let row_bytes = (l + wide * if ANTI { 2 } else { 1 }) * std::mem::size_of::<A>();
    let block = (ROW_BLOCK_BYTES / row_bytes).clamp(1, m);
    let adds_per_voxel = if ANTI { 5 } else { 4 };

    for y0 in (0..m).step_by(block) {
        let y1 = (y0 + block).min(m);
        for z in z0..z1 {
            let zr = &mut zx_t[z * l..(z + 1) * l];
            for y in y0..y1 {
                let base = (y + m * z) * l;
                let src = &buf[base..base + l];
                let xr = &mut xy[y * l..(y + 1) * l];
                let ds = y * wide + z;
                let dr = &mut diag[ds..ds + l];
                let mut sum = A::default();
                if ANTI {
                    let a_s = y * wide + (n - 1 - z);
                    let ar = &mut anti[a_s..a_s + l];
                    for x in 0..l {
                        let v = A::lift(src[x]);
                        xr[x] += v;
                        zr[x] += v;
                        dr[x] += v;
                        ar[x] += v;
                        sum += v;
                    }
                } else {
                    for x in 0..l {
                        let v = A::lift(src[x]);
                        xr[x] += v;
                        zr[x] += v;
                        dr[x] += v;
                        sum += v;
                    }
                }
                yz[z * m + y] = sum;
                counter.add(adds_per_voxel * l as u64);
            }
        }
    }

    let widen = |o: Orientation, data: &[A]| {
        let (w, h, off) = o.image_shape(l, m, n);
        ProjectionImage {
            orientation: o,
            width: w,
            height: h,
            origin_offset: off,
            pixels: data.iter().map(|a| a.widen()).collect(),
        }
    };
    let mut zx = ProjectionImage::for_volume(Orientation::Zx, volume);
    for z in 0..n {
        for x in 0..l {
            zx.pixels[x * n + z] = zx_t[z * l + x].widen();
        }
    }
    ProjectionSet {
        xy: widen(Orientation::Xy, &xy),
        yz: widen(Orientation::Yz, &yz),
        zx,
        diag: widen(Orientation::Diag, &diag),
        anti: ANTI.then(|| widen(Orientation::Anti, &anti)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{synth, BitDepth, Dims, SynthKind};

    fn random(dims: Dims, seed: u64) -> Volume {
        synth(
            &SynthKind::Random {
                depth: BitDepth::U8,
            },
            dims,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn uniform_xy() {
        let v = synth(&SynthKind::Uniform { value: 1 }, Dims::cube(2), 0).unwrap();
        let img = project(&v, Orientation::Xy);
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(img.pixels, vec![2; 4]);
    }

    #[test]
    fn delta_diag_single_pixel() {
        let kind = SynthKind::Delta {
            x: 1,
            y: 0,
            z: 1,
            value: 9,
        };
        let v = synth(&kind, Dims::cube(4), 0).unwrap();
        let img = project(&v, Orientation::Diag);
        assert_eq!((img.width, img.height), (7, 4));
        for j in 0..img.height {
            for i in 0..img.width {
                let expect = if (i, j) == (2, 0) { 9 } else { 0 };
                assert_eq!(img.pixel(i, j), expect, "pixel ({i},{j})");
            }
        }
    }

    #[test]
    fn shapes_match_size_formulas() {
        let v = random(Dims::new(5, 3, 2), 1);
        let set = project_all(&v);
        assert_eq!((set.xy.width, set.xy.height), (5, 3));
        assert_eq!((set.yz.width, set.yz.height), (3, 2));
        assert_eq!((set.zx.width, set.zx.height), (2, 5));
        assert_eq!((set.diag.width, set.diag.height), (6, 3));
        let anti = set.anti.as_ref().unwrap();
        assert_eq!((anti.width, anti.height, anti.origin_offset), (6, 3, 1));
    }

    #[test]
    fn mri_geometry_diagonal_sizes() {
        let (w, h, _) = Orientation::Diag.image_shape(512, 512, 230);
        assert_eq!((w, h), (741, 512));
        let (w, h, off) = Orientation::Anti.image_shape(512, 512, 230);
        assert_eq!((w, h, off), (741, 512, 229));
    }

    #[test]
    fn pixels_match_ray_sums() {
        // Oracle: for each pixel, scan every voxel and sum those that map onto it.
        let d = Dims::cube(16);
        let v = random(d, 7);
        for o in Orientation::ALL {
            let img = project(&v, o);
            let mut oracle = vec![0u64; img.width * img.height];
            for (j, i) in (0..img.height).flat_map(|j| (0..img.width).map(move |i| (j, i))) {
                let mut s = 0;
                for z in 0..d.z {
                    for y in 0..d.y {
                        for x in 0..d.x {
                            let (a, b) = match o {
                                Orientation::Xy => (x as i64, y),
                                Orientation::Yz => (y as i64, z),
                                Orientation::Zx => (z as i64, x),
                                Orientation::Diag => ((x + z) as i64, y),
                                Orientation::Anti => (x as i64 - z as i64, y),
                            };
                            if a + img.origin_offset as i64 == i as i64 && b == j {
                                s += v.get(x, y, z);
                            }
                        }
                    }
                }
                oracle[j * img.width + i] = s;
            }
            assert_eq!(img.pixels, oracle, "{o}");
        }
    }

    #[test]
    fn fused_pass_matches_independent_projections() {
        for (dims, seed) in [
            (Dims::new(7, 5, 3), 3),
            (Dims::new(1, 1, 1), 4),
            (Dims::new(9, 1, 4), 5),
        ] {
            let v = random(dims, seed);
            let set = project_all(&v);
            for o in Orientation::ALL {
                assert_eq!(set.get(o).unwrap(), &project(&v, o), "{o} {dims}");
            }
        }
    }

    #[test]
    fn accumulator_width_boundary() {
        // 65535 · 65537 == u32::MAX: the narrow path at its limit.
        // One voxel longer forces 64-bit accumulation.
        for len in [65537usize, 65538] {
            let v = Volume::from_u16(Dims::new(len, 1, 1), vec![u16::MAX; len]).unwrap();
            let set = project_set(&v, true, 1, &mut NoCount);
            assert_eq!(set.yz.pixels, vec![65535 * len as u64]);
            for o in Orientation::ALL {
                assert_eq!(set.get(o).unwrap(), &project(&v, o), "{o:?} at {len}");
            }
        }
    }

    #[test]
    fn threaded_is_bit_identical() {
        let v = random(Dims::new(20, 11, 13), 8);
        let single = project_all(&v);
        for t in [2, 3, 8, 64] {
            assert_eq!(
                project_set(&v, true, t, &mut NoCount),
                single,
                "threads {t}"
            );
        }
    }

    #[test]
    fn counted_additions_per_voxel() {
        let v = random(Dims::new(6, 5, 4), 2);
        let mut c = crate::ops::OpCounters::default();
        project_set(&v, true, 1, &mut c);
        assert_eq!(c.additions, 5 * 120);
        assert_eq!(c.multiplications, 0);
        let mut c = crate::ops::OpCounters::default();
        let set = project_set(&v, false, 1, &mut c);
        assert_eq!(c.additions, 4 * 120);
        assert!(set.anti.is_none());
    }

    #[test]
    fn pgm_dump_header() {
        let v = synth(&SynthKind::Uniform { value: 255 }, Dims::new(3, 2, 400), 0).unwrap();
        let img = project(&v, Orientation::Xy);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("xy.pgm");
        let scale = img.write_pgm(&path).unwrap();
        assert!((scale - 102000.0 / 65535.0).abs() < 1e-12);
        let bytes = fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes[..40]);
        assert!(text.starts_with("P5\n# xy"));
        assert_eq!(&bytes[bytes.len() - 2..], &65535u16.to_be_bytes());
    }
}
