//! 2D raw moments up to 4th order from five 1D integrals of an image.
//!
//! An image is collapsed, by addition only, onto five 1D integrals indexed by
//! `x`, `y`, `x + y`, `x − y` and `x + 2y`. The 1D moments of those integrals
//! are binomial expansions of the 2D moments:
//!
//! ```text
//! D_k = Σ I·(x + y)^k     A_k = Σ I·(x − y)^k     T_k = Σ I·(x + 2y)^k
//! ```
//!
//! which, solved for the mixed terms, give
//!
//! ```text
//! M11 = (D2 − M20 − M02) / 2
//! M21 = (D3 − A3 − 2·M03) / 6          M12 = (D3 + A3 − 2·M30) / 6
//! M22 = (D4 + A4 − 2·M40 − 2·M04) / 12
//! M31 + M13 = (D4 − A4) / 8
//! T4 = M40 + 8·M31 + 24·M22 + 32·M13 + 16·M04
//! ```
//!
//! All divisions are exact for integer images; a remainder is reported as an
//! internal inconsistency.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exact::{binomial, Exact};
use crate::ops::{Counter, NoCount};
use crate::order::{Order, MAX_ORDER};
use crate::projection::ProjectionImage;

/// The five 1D integrals of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralSet {
    pub width: usize,
    pub height: usize,
    /// Origin offset of the source image, carried through to its moments.
    pub origin_offset: usize,
    /// `V[x] = Σ_y I(x, y)`
    pub vert: Vec<u64>,
    /// `H[y] = Σ_x I(x, y)`
    pub horiz: Vec<u64>,
    /// `D[x + y]`
    pub diag: Vec<u64>,
    /// `A[x − y]`, stored at `x − y + (height − 1)`.
    pub anti: Vec<u64>,
    /// `T[x + 2y]`; only needed for 4th order.
    pub x2y: Option<Vec<u64>>,
}

impl IntegralSet {
    /// Stored index of logical `x − y = 0` in [`IntegralSet::anti`].
    pub fn anti_offset(&self) -> usize {
        self.height - 1
    }

    pub fn named(&self) -> Vec<(&'static str, &[u64])> {
        let mut out = vec![
            ("vert", self.vert.as_slice()),
            ("horiz", self.horiz.as_slice()),
            ("diag", self.diag.as_slice()),
            ("anti", self.anti.as_slice()),
        ];
        if let Some(t) = &self.x2y {
            out.push(("x2y", t.as_slice()));
        }
        out
    }

    /// Debug dump as `integral,index,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["integral", "index", "value"]).map_err(io)?;
        for (name, data) in self.named() {
            for (i, v) in data.iter().enumerate() {
                w.write_record([name, &i.to_string(), &v.to_string()])
                    .map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// All five integrals of `image`.
pub fn integrals(image: &ProjectionImage) -> IntegralSet {
    integrals_for_order(image, Order::Fourth, &mut NoCount)
}

/// Integrals needed for moments up to `order`; `x2y` is skipped below 4th order.
pub fn integrals_for_order<C: Counter>(
    image: &ProjectionImage,
    order: Order,
    counter: &mut C,
) -> IntegralSet {
    let (w, h) = (image.width, image.height);
    let with_x2y = order == Order::Fourth;
    let mut vert = vec![0u64; w];
    let mut horiz = vec![0u64; h];
    let mut diag = vec![0u64; w + h - 1];
    let mut anti = vec![0u64; w + h - 1];
    let mut x2y = vec![0u64; if with_x2y { w + 2 * h - 2 } else { 0 }];
    for y in 0..h {
        let row = image.row(y);
        let vert = &mut vert[..w];
        let diag_seg = &mut diag[y..y + w];
        let anti_seg = &mut anti[h - 1 - y..h - 1 - y + w];
        let mut sum = 0u64;
        if with_x2y {
            let x2y_seg = &mut x2y[2 * y..2 * y + w];
            for x in 0..w {
                let p = row[x];
                vert[x] += p;
                diag_seg[x] += p;
                anti_seg[x] += p;
                x2y_seg[x] += p;
                sum += p;
            }
            counter.add(5 * w as u64);
        } else {
            for x in 0..w {
                let p = row[x];
                vert[x] += p;
                diag_seg[x] += p;
                anti_seg[x] += p;
                sum += p;
            }
            counter.add(4 * w as u64);
        }
        horiz[y] = sum;
    }
    IntegralSet {
        width: w,
        height: h,
        origin_offset: image.origin_offset,
        vert,
        horiz,
        diag,
        anti,
        x2y: with_x2y.then_some(x2y),
    }
}

/// `m[k] = Σ_i integral[i] · i^k` for `k = 0..=max_order` (higher entries zero).
pub fn moments_1d(integral: &[u64], max_order: usize) -> Result<[i128; MAX_ORDER + 1]> {
    moments_1d_counted(integral, max_order, &mut NoCount)
}

pub(crate) fn moments_1d_counted<C: Counter>(
    integral: &[u64],
    max_order: usize,
    counter: &mut C,
) -> Result<[i128; MAX_ORDER + 1]> {
    assert!(
        max_order <= MAX_ORDER,
        "1D moment order {max_order} > {MAX_ORDER}"
    );
    let overflow = || Error::Overflow("1D integral moments".into());
    let mut m = [0i128; MAX_ORDER + 1];
    for (i, &v) in integral.iter().enumerate() {
        let i = i as i128;
        let mut w = v as i128;
        m[0] = m[0].checked_add(w).ok_or_else(overflow)?;
        for mk in &mut m[1..=max_order] {
            w = w.checked_mul(i).ok_or_else(overflow)?;
            *mk = mk.checked_add(w).ok_or_else(overflow)?;
        }
    }
    counter.mul((max_order * integral.len()) as u64);
    counter.add(((max_order + 1) * integral.len()) as u64);
    Ok(m)
}

/// Re-expresses 1D moments about an origin at stored index `offset`.
fn shift_1d<C: Counter>(
    m: &[i128; MAX_ORDER + 1],
    offset: i128,
    max_order: usize,
    e: &mut Exact<'_, C>,
) -> Result<[i128; MAX_ORDER + 1]> {
    let mut out = [0i128; MAX_ORDER + 1];
    let neg = -offset;
    for (k, slot) in out.iter_mut().enumerate().take(max_order + 1) {
        let mut acc = 0i128;
        let mut pow = 1i128; // (-offset)^(k - s), s descending
        for s in (0..=k).rev() {
            let c = e.mul(binomial(k, s), pow)?;
            let t = e.mul(c, m[s])?;
            acc = e.add(acc, t)?;
            pow = e.mul(pow, neg)?;
        }
        *slot = acc;
    }
    Ok(out)
}

/// Raw 2D moments `M[p][q]` for `p + q <= order`.
///
/// Freshly computed moments use stored pixel indices and record the source
/// image's `origin_offset` (the offset still to be removed to reach logical
/// indices); see [`shift_origin`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Moments2D {
    pub order: Order,
    pub values: [[i128; MAX_ORDER + 1]; MAX_ORDER + 1],
    /// Offset of the source image still to be removed to reach logical indices.
    pub origin_offset: i64,
}

impl Moments2D {
    pub fn zeros(order: Order, origin_offset: i64) -> Self {
        Moments2D {
            order,
            values: [[0; MAX_ORDER + 1]; MAX_ORDER + 1],
            origin_offset,
        }
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> i128 {
        self.values[p][q]
    }

    pub fn mass(&self) -> i128 {
        self.values[0][0]
    }

    /// `(p, q)` pairs with `p + q <= order`, lexicographic.
    pub fn indices(order: Order) -> impl Iterator<Item = (usize, usize)> {
        let k = order.get();
        (0..=k).flat_map(move |p| (0..=k - p).map(move |q| (p, q)))
    }
}

/// 2D moments from the five integrals.
pub fn assemble_2d(iset: &IntegralSet) -> Result<Moments2D> {
    let order = if iset.x2y.is_some() {
        Order::Fourth
    } else {
        Order::Third
    };
    assemble_2d_counted(iset, order, &mut NoCount)
}

pub(crate) fn assemble_2d_counted<C: Counter>(
    iset: &IntegralSet,
    order: Order,
    counter: &mut C,
) -> Result<Moments2D> {
    let k = order.get();
    let v = moments_1d_counted(&iset.vert, k, counter)?;
    let h = moments_1d_counted(&iset.horiz, k, counter)?;
    let d = moments_1d_counted(&iset.diag, k, counter)?;
    let a_stored = moments_1d_counted(&iset.anti, k, counter)?;
    let t4 = match (&iset.x2y, order) {
        (Some(t), Order::Fourth) => Some(moments_1d_counted(t, 4, counter)?[4]),
        (None, Order::Fourth) => {
            return Err(Error::Inconsistent(
                "4th-order 2D moments need the x+2y integral".into(),
            ))
        }
        _ => None,
    };

    let mut e = Exact::new(counter, "2D moment assembly");
    let a = shift_1d(&a_stored, iset.anti_offset() as i128, k, &mut e)?;

    let mass = v[0];
    if [h[0], d[0], a[0]].iter().any(|&x| x != mass) {
        return Err(Error::Inconsistent(format!(
            "integral masses disagree: vert {}, horiz {}, diag {}, anti {}",
            v[0], h[0], d[0], a[0]
        )));
    }

    let mut m = Moments2D::zeros(order, 0);
    for p in 0..=k {
        m.values[p][0] = v[p];
        m.values[0][p] = h[p];
    }
    let mv = |p: usize, q: usize, m: &Moments2D| m.values[p][q];

    let num = e.dot(&[(1, d[2]), (-1, mv(2, 0, &m)), (-1, mv(0, 2, &m))])?;
    m.values[1][1] = e.div_exact(num, 2, "M11")?;

    let num = e.dot(&[(1, d[3]), (-1, a[3]), (-2, mv(0, 3, &m))])?;
    m.values[2][1] = e.div_exact(num, 6, "M21")?;
    let num = e.dot(&[(1, d[3]), (1, a[3]), (-2, mv(3, 0, &m))])?;
    m.values[1][2] = e.div_exact(num, 6, "M12")?;

    if let Some(t4) = t4 {
        let num = e.dot(&[(1, d[4]), (1, a[4]), (-2, mv(4, 0, &m)), (-2, mv(0, 4, &m))])?;
        m.values[2][2] = e.div_exact(num, 12, "M22")?;
        let num = e.sub(d[4], a[4])?;
        let s = e.div_exact(num, 8, "M31 + M13")?;
        let num = e.dot(&[
            (1, t4),
            (-1, mv(4, 0, &m)),
            (-24, mv(2, 2, &m)),
            (-16, mv(0, 4, &m)),
            (-8, s),
        ])?;
        let m13 = e.div_exact(num, 24, "M13")?;
        m.values[1][3] = m13;
        m.values[3][1] = e.sub(s, m13)?;
    }
    m.origin_offset = iset.origin_offset as i64;
    Ok(m)
}

/// Direct double loop over pixels; the oracle for [`assemble_2d`].
pub fn brute_force_2d(image: &ProjectionImage, order: Order) -> Result<Moments2D> {
    let k = order.get();
    let overflow = || Error::Overflow("2D brute-force moments".into());
    let mut m = Moments2D::zeros(order, image.origin_offset as i64);
    for j in 0..image.height {
        for i in 0..image.width {
            let v = image.pixel(i, j) as i128;
            if v == 0 {
                continue;
            }
            for (p, q) in Moments2D::indices(order) {
                let mut t = v;
                for _ in 0..p {
                    t = t.checked_mul(i as i128).ok_or_else(overflow)?;
                }
                for _ in 0..q {
                    t = t.checked_mul(j as i128).ok_or_else(overflow)?;
                }
                m.values[p][q] = m.values[p][q].checked_add(t).ok_or_else(overflow)?;
            }
        }
    }
    debug_assert!(k <= MAX_ORDER);
    Ok(m)
}

/// Moves the first-axis origin to stored index `x_hat`:
/// `M'[p][q] = Σ_{s≤p} C(p,s)·(−x̂)^{p−s}·M[s][q]`.
///
/// The result's `origin_offset` is reduced by `x_hat`, so shifting by the
/// image's recorded offset yields logical-index moments.
pub fn shift_origin(m: &Moments2D, x_hat: i64) -> Result<Moments2D> {
    shift_origin_counted(m, x_hat, &mut NoCount)
}

pub(crate) fn shift_origin_counted<C: Counter>(
    m: &Moments2D,
    x_hat: i64,
    counter: &mut C,
) -> Result<Moments2D> {
    let mut e = Exact::new(counter, "2D origin shift");
    let mut out = Moments2D::zeros(m.order, m.origin_offset - x_hat);
    let neg = -(x_hat as i128);
    for (p, q) in Moments2D::indices(m.order) {
        let mut acc = 0i128;
        let mut pow = 1i128;
        for s in (0..=p).rev() {
            let c = e.mul(binomial(p, s), pow)?;
            let t = e.mul(c, m.values[s][q])?;
            acc = e.add(acc, t)?;
            pow = e.mul(pow, neg)?;
        }
        out.values[p][q] = acc;
    }
    Ok(out)
}
