//! Raw 3D moments `𝓜[p][q][r] = Σ V(x,y,z)·x^p·y^q·z^r` for `p + q + r <= K`.
//!
//! Three engines compute identical tensors:
//!
//! * [`naive_moments`]: per-voxel monomial evaluation, the ground truth.
//! * [`factored_moments`]: row → slice → volume factored accumulation.
//! * [`dpm_moments`]: projects the volume onto four or five images, takes
//!   their 2D moments through 1D integrals, and assembles the 3D tensor.
//!
//! The projection engine reads the axis-aligned images directly
//! (`𝓜pq0 = XY[p][q]`, `𝓜0pq = YZ[p][q]`, `𝓜q0p = ZX[p][q]`) and recovers
//! the moments involving all three axes from the diagonal (`x + z`) and
//! anti-diagonal (`x − z`) images:
//!
//! ```text
//! 𝓜111 = (D21 − 𝓜210 − 𝓜012) / 2
//! 𝓜121 = (D22 − 𝓜220 − 𝓜022) / 2
//! 𝓜112 = (D31 + A31 − 2·𝓜310) / 6
//! 𝓜211 = (D31 − A31 − 2·𝓜013) / 6
//! ```
//!
//! where `Dab`/`Aab` are 2D moments of the diagonal/anti-diagonal images with
//! the anti-diagonal origin already shifted to logical index 0.
//!
//! All arithmetic is exact integer arithmetic. [`check_envelope`] rejects
//! volumes whose worst-case sums could exceed the 64/128-bit accumulators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::drt2d::{assemble_2d_counted, integrals_for_order, shift_origin_counted, Moments2D};
use crate::error::{Error, Result};
use crate::exact::Exact;
use crate::ops::{Counter, NoCount, OpCounters};
use crate::order::{Order, MAX_ORDER};
use crate::projection::{project_set, ProjectionImage};
use crate::volume::{Intensity, Volume};
use crate::with_voxels;

const DIM: usize = MAX_ORDER + 1;

/// All raw moments with `p + q + r <= order`; entries above the order are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentTensor3 {
    order: Order,
    values: [[[i128; DIM]; DIM]; DIM],
}

impl MomentTensor3 {
    pub fn zeros(order: Order) -> Self {
        MomentTensor3 {
            order,
            values: [[[0; DIM]; DIM]; DIM],
        }
    }

    pub fn order(&self) -> Order {
        self.order
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize) -> i128 {
        self.values[p][q][r]
    }

    /// Sets one moment. Panics if `p + q + r` exceeds the order.
    pub fn set(&mut self, p: usize, q: usize, r: usize, v: i128) {
        assert!(
            p + q + r <= self.order.get(),
            "moment {p}{q}{r} above order"
        );
        self.values[p][q][r] = v;
    }

    pub fn mass(&self) -> i128 {
        self.values[0][0][0]
    }

    /// `(p, q, r)` with `p + q + r <= order` in lexicographic order.
    pub fn indices(order: Order) -> impl Iterator<Item = (usize, usize, usize)> {
        let k = order.get();
        (0..=k).flat_map(move |p| {
            (0..=k - p).flat_map(move |q| (0..=k - p - q).map(move |r| (p, q, r)))
        })
    }

    /// `((p, q, r), value)` in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), i128)> + '_ {
        Self::indices(self.order).map(move |(p, q, r)| ((p, q, r), self.values[p][q][r]))
    }

    /// First `(p, q, r)` (lexicographic) where the tensors differ.
    pub fn first_difference(&self, other: &MomentTensor3) -> Option<Divergence> {
        if self.order != other.order {
            return Some(Divergence {
                index: (0, 0, 0),
                left: self.order.get() as i128,
                right: other.order.get() as i128,
            });
        }
        self.iter()
            .zip(other.iter())
            .find(|((_, a), (_, b))| a != b)
            .map(|((index, left), (_, right))| Divergence { index, left, right })
    }
}

/// A disagreement between two tensors at one moment index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub index: (usize, usize, usize),
    pub left: i128,
    pub right: i128,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, q, r) = self.index;
        write!(f, "M[{p}][{q}][{r}]: {} != {}", self.left, self.right)
    }
}

/// Rejects volumes for which the engines' unchecked 64/128-bit accumulators
/// could overflow. The projection engine's assembly is checked regardless.
pub fn check_envelope(volume: &Volume, order: Order) -> Result<()> {
    let d = volume.dims();
    let max_v = volume.bit_depth().max_value() as u128;
    let count = d.len() as u128;
    let k = order.get() as u32;
    let overflow = |what: &str| Error::Overflow(format!("volume {} exceeds {what}", d));
    let mass = max_v
        .checked_mul(count)
        .filter(|&m| m <= u64::MAX as u128)
        .ok_or_else(|| overflow("64-bit pixel accumulators"))?;
    let coord = (d.max_extent() as u128).checked_pow(k);
    coord
        .and_then(|c| c.checked_mul(max_v))
        .filter(|&t| t <= u64::MAX as u128)
        .ok_or_else(|| overflow("64-bit per-voxel terms"))?;
    // Largest integral index is (L + N − 2) + 2(M − 1) on the diagonal image.
    let reach = (2 * (d.x + d.y + d.z)) as u128;
    reach
        .checked_pow(k)
        .and_then(|c| c.checked_mul(mass))
        .and_then(|t| t.checked_mul(64))
        .filter(|&t| t <= i128::MAX as u128)
        .ok_or_else(|| overflow("128-bit moment sums"))?;
    Ok(())
}

#[inline]
fn powers(v: u64, k: usize, out: &mut [u64; DIM]) {
    out[0] = 1;
    out[1] = v;
    for i in 2..=k {
        out[i] = out[i - 1] * v;
    }
}

/// Direct evaluation of the moment definition, one monomial per voxel per moment.
pub fn naive_moments(volume: &Volume, order: Order) -> Result<MomentTensor3> {
    naive_counted(volume, order, &mut NoCount)
}

fn naive_counted<C: Counter>(volume: &Volume, order: Order, c: &mut C) -> Result<MomentTensor3> {
    check_envelope(volume, order)?;
    let acc = with_voxels!(volume, |buf| naive_kernel(volume, buf, order, c));
    let mut out = MomentTensor3::zeros(order);
    for ((p, q, r), v) in MomentTensor3::indices(order).zip(acc) {
        out.values[p][q][r] = v as i128;
    }
    Ok(out)
}

fn naive_kernel<T: Intensity, C: Counter>(
    volume: &Volume,
    buf: &[T],
    order: Order,
    c: &mut C,
) -> Vec<u128> {
    let d = volume.dims();
    let k = order.get();
    let terms: Vec<(usize, usize, usize)> = MomentTensor3::indices(order).collect();
    let mut acc = vec![0u128; terms.len()];
    let (mut xp, mut yp, mut zp) = ([0u64; DIM], [0u64; DIM], [0u64; DIM]);
    let per_voxel_mul = (3 * (k - 1) + 3 * terms.len()) as u64;
    let mut i = 0;
    for z in 0..d.z {
        for y in 0..d.y {
            for x in 0..d.x {
                let v: u64 = buf[i].into();
                i += 1;
                powers(x as u64, k, &mut xp);
                powers(y as u64, k, &mut yp);
                powers(z as u64, k, &mut zp);
                for (a, &(p, q, r)) in acc.iter_mut().zip(&terms) {
                    *a += (v * xp[p] * yp[q] * zp[r]) as u128;
                }
            }
            c.mul(per_voxel_mul * d.x as u64);
            c.add(terms.len() as u64 * d.x as u64);
        }
    }
    acc
}

/// Factored accumulation: per-row sums of `v·x^p`, combined with `y^q` per
/// slice and with `z^r` per volume.
pub fn factored_moments(volume: &Volume, order: Order) -> Result<MomentTensor3> {
    factored_counted(volume, order, &mut NoCount)
}

fn factored_counted<C: Counter>(volume: &Volume, order: Order, c: &mut C) -> Result<MomentTensor3> {
    check_envelope(volume, order)?;
    let acc = with_voxels!(volume, |buf| match order {
        Order::Third => factored_kernel::<_, _, 3>(volume, buf, c),
        Order::Fourth => factored_kernel::<_, _, 4>(volume, buf, c),
    });
    let mut out = MomentTensor3::zeros(order);
    for (p, q, r) in MomentTensor3::indices(order) {
        out.values[p][q][r] = acc[p][q][r] as i128;
    }
    Ok(out)
}

fn factored_kernel<T: Intensity, C: Counter, const K: usize>(
    volume: &Volume,
    buf: &[T],
    c: &mut C,
) -> [[[u128; DIM]; DIM]; DIM] {
    let d = volume.dims();
    let l = d.x;
    let mut vol = [[[0u128; DIM]; DIM]; DIM];
    let mut yp = [0u64; DIM];
    let mut zp = [0u64; DIM];
    // Pair counts for the per-row and per-slice combination steps.
    let pq_terms = (K + 1) * (K + 2) / 2;
    let pq_mul = pq_terms - (K + 1);
    let pqr_terms = (K + 1) * (K + 2) * (K + 3) / 6;
    let pqr_mul = pqr_terms - pq_terms;
    for z in 0..d.z {
        let mut slice = [[0u128; DIM]; DIM];
        for y in 0..d.y {
            let row = &buf[(y + d.y * z) * l..(y + d.y * z + 1) * l];
            let mut s = [0u128; DIM];
            for (x, &v) in row.iter().enumerate() {
                let x = x as u64;
                let mut w: u64 = v.into();
                s[0] += w as u128;
                for sp in s.iter_mut().take(K + 1).skip(1) {
                    w *= x;
                    *sp += w as u128;
                }
            }
            c.mul((K * l) as u64);
            c.add(((K + 1) * l) as u64);

            powers(y as u64, K, &mut yp);
            for p in 0..=K {
                slice[p][0] += s[p];
                for q in 1..=K - p {
                    slice[p][q] += s[p] * yp[q] as u128;
                }
            }
            c.mul((K - 1 + pq_mul) as u64);
            c.add(pq_terms as u64);
        }
        powers(z as u64, K, &mut zp);
        for p in 0..=K {
            for q in 0..=K - p {
                vol[p][q][0] += slice[p][q];
                for r in 1..=K - p - q {
                    vol[p][q][r] += slice[p][q] * zp[r] as u128;
                }
            }
        }
        c.mul((K - 1 + pqr_mul) as u64);
        c.add(pqr_terms as u64);
    }
    vol
}

/// Options for [`dpm_moments_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DpmOptions {
    /// Worker threads for the projection pass (results are identical for any count).
    pub threads: usize,
    /// Check every moment available from more than one image for agreement.
    pub verify_duplicates: bool,
}

impl Default for DpmOptions {
    fn default() -> Self {
        DpmOptions {
            threads: 1,
            verify_duplicates: false,
        }
    }
}

/// Raw moments via discrete projections, single-threaded.
pub fn dpm_moments(volume: &Volume, order: Order) -> Result<MomentTensor3> {
    dpm_counted(volume, order, &DpmOptions::default(), &mut NoCount)
}

pub fn dpm_moments_with(volume: &Volume, order: Order, opts: &DpmOptions) -> Result<MomentTensor3> {
    dpm_counted(volume, order, opts, &mut NoCount)
}

fn image_moments<C: Counter>(img: &ProjectionImage, order: Order, c: &mut C) -> Result<Moments2D> {
    let iset = integrals_for_order(img, order, c);
    let m = assemble_2d_counted(&iset, order, c)?;
    if m.origin_offset != 0 {
        shift_origin_counted(&m, m.origin_offset, c)
    } else {
        Ok(m)
    }
}

/// The 2D moments of every projection image, origin-corrected.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionMoments {
    pub xy: Moments2D,
    pub yz: Moments2D,
    pub zx: Moments2D,
    pub diag: Moments2D,
    pub anti: Option<Moments2D>,
}

fn dpm_counted<C: Counter>(
    volume: &Volume,
    order: Order,
    opts: &DpmOptions,
    c: &mut C,
) -> Result<MomentTensor3> {
    check_envelope(volume, order)?;
    let set = project_set(volume, order == Order::Fourth, opts.threads, c);
    let pm = ProjectionMoments {
        xy: image_moments(&set.xy, order, c)?,
        yz: image_moments(&set.yz, order, c)?,
        zx: image_moments(&set.zx, order, c)?,
        diag: image_moments(&set.diag, order, c)?,
        anti: set
            .anti
            .as_ref()
            .map(|a| image_moments(a, order, c))
            .transpose()?,
    };
    if opts.verify_duplicates {
        verify_duplicates(&pm, order)?;
    }
    assemble_3d(&pm, order, c)
}

/// Builds the 3D tensor from the projection moments.
///
/// Moments reachable from more than one axis-aligned image are taken with
/// priority XY > YZ > ZX.
pub fn assemble_3d(
    pm: &ProjectionMoments,
    order: Order,
    c: &mut impl Counter,
) -> Result<MomentTensor3> {
    let k = order.get();
    let mut t = MomentTensor3::zeros(order);
    for (p, q) in Moments2D::indices(order) {
        t.values[q][0][p] = pm.zx.get(p, q);
    }
    for (p, q) in Moments2D::indices(order) {
        t.values[0][p][q] = pm.yz.get(p, q);
    }
    for (p, q) in Moments2D::indices(order) {
        t.values[p][q][0] = pm.xy.get(p, q);
    }

    let mut e = Exact::new(c, "3D moment assembly");
    let d = &pm.diag;
    let g = |t: &MomentTensor3, p: usize, q: usize, r: usize| t.values[p][q][r];

    let num = e.dot(&[(1, d.get(2, 1)), (-1, g(&t, 2, 1, 0)), (-1, g(&t, 0, 1, 2))])?;
    t.values[1][1][1] = e.div_exact(num, 2, "M111")?;

    if k >= 4 {
        let a = pm.anti.as_ref().ok_or_else(|| {
            Error::Inconsistent("4th-order assembly needs the anti-diagonal image".into())
        })?;
        let num = e.dot(&[(1, d.get(2, 2)), (-1, g(&t, 2, 2, 0)), (-1, g(&t, 0, 2, 2))])?;
        t.values[1][2][1] = e.div_exact(num, 2, "M121")?;
        let num = e.dot(&[(1, d.get(3, 1)), (1, a.get(3, 1)), (-2, g(&t, 3, 1, 0))])?;
        t.values[1][1][2] = e.div_exact(num, 6, "M112")?;
        let num = e.dot(&[(1, d.get(3, 1)), (-1, a.get(3, 1)), (-2, g(&t, 0, 1, 3))])?;
        t.values[2][1][1] = e.div_exact(num, 6, "M211")?;
    }
    Ok(t)
}

/// Cross-checks every moment available from more than one projection.
pub fn verify_duplicates(pm: &ProjectionMoments, order: Order) -> Result<()> {
    let k = order.get();
    let mismatch =
        |what: String, a: i128, b: i128| Err(Error::Inconsistent(format!("{what}: {a} != {b}")));
    for s in 0..=k {
        let (a, b) = (pm.xy.get(s, 0), pm.zx.get(0, s));
        if a != b {
            return mismatch(format!("M{s}00 from XY vs ZX"), a, b);
        }
        let (a, b) = (pm.xy.get(0, s), pm.yz.get(s, 0));
        if a != b {
            return mismatch(format!("M0{s}0 from XY vs YZ"), a, b);
        }
        let (a, b) = (pm.yz.get(0, s), pm.zx.get(s, 0));
        if a != b {
            return mismatch(format!("M00{s} from YZ vs ZX"), a, b);
        }
        let (a, b) = (pm.xy.get(0, s), pm.diag.get(0, s));
        if a != b {
            return mismatch(format!("M0{s}0 from XY vs DIAG"), a, b);
        }
        if let Some(anti) = &pm.anti {
            let (a, b) = (pm.xy.get(0, s), anti.get(0, s));
            if a != b {
                return mismatch(format!("M0{s}0 from XY vs ANTI"), a, b);
            }
        }
    }
    Ok(())
}

/// Moment engine selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Naive,
    Factored,
    Dpm,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Naive, Engine::Factored, Engine::Dpm];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Naive => "naive",
            Engine::Factored => "factored",
            Engine::Dpm => "dpm",
        }
    }

    pub fn run(self, volume: &Volume, order: Order) -> Result<MomentTensor3> {
        match self {
            Engine::Naive => naive_moments(volume, order),
            Engine::Factored => factored_moments(volume, order),
            Engine::Dpm => dpm_moments(volume, order),
        }
    }

    /// Same as [`Engine::run`] with threading options for the projection engine.
    pub fn run_with(
        self,
        volume: &Volume,
        order: Order,
        opts: &DpmOptions,
    ) -> Result<MomentTensor3> {
        match self {
            Engine::Dpm => dpm_moments_with(volume, order, opts),
            other => other.run(volume, order),
        }
    }

    /// Single-threaded instrumented run.
    pub fn run_counted(self, volume: &Volume, order: Order) -> Result<(MomentTensor3, OpCounters)> {
        let mut c = OpCounters::default();
        let t = match self {
            Engine::Naive => naive_counted(volume, order, &mut c)?,
            Engine::Factored => factored_counted(volume, order, &mut c)?,
            Engine::Dpm => dpm_counted(volume, order, &DpmOptions::default(), &mut c)?,
        };
        Ok((t, c))
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Engine::ALL
            .into_iter()
            .find(|e| e.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::MalformedHeader(format!("engine `{s}`")))
    }
}

/// Operation tallies of one instrumented engine run.
pub fn op_counters(engine: Engine, volume: &Volume, order: Order) -> Result<OpCounters> {
    engine.run_counted(volume, order).map(|(_, c)| c)
}
