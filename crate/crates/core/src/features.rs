//! Derived quantities: centroid, central and scale-normalized moments,
//! physical-spacing correction and second-order shape features.
//!
//! Everything here is computed from a [`MomentTensor3`] alone; the volume is
//! never rescanned. Central moments are obtained by shifting the raw tensor
//! first by the integer-rounded centroid (exact, in `i128`) and then by the
//! remaining fraction in `f64`. The fractional shift has magnitude at most
//! one half, so the floating-point step does not suffer the cancellation a
//! direct shift of large raw moments would.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments3d::MomentTensor3;
use crate::order::{Order, MAX_ORDER};
use crate::volume::Spacing;

const DIM: usize = MAX_ORDER + 1;

/// Relative tolerance for negative covariance eigenvalues.
const PSD_TOLERANCE: f64 = 1e-9;

/// Real-valued tensor indexed like [`MomentTensor3`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealTensor3 {
    order: Order,
    values: [[[f64; DIM]; DIM]; DIM],
}

impl RealTensor3 {
    fn zeros(order: Order) -> Self {
        RealTensor3 {
            order,
            values: [[[0.0; DIM]; DIM]; DIM],
        }
    }

    pub fn order(&self) -> Order {
        self.order
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize) -> f64 {
        self.values[p][q][r]
    }

    /// `((p, q, r), value)` in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        MomentTensor3::indices(self.order).map(move |(p, q, r)| ((p, q, r), self.values[p][q][r]))
    }

    fn map(&self, f: impl Fn(usize, usize, usize, f64) -> f64) -> Self {
        let mut out = RealTensor3::zeros(self.order);
        for ((p, q, r), v) in self.iter() {
            out.values[p][q][r] = f(p, q, r, v);
        }
        out
    }
}

/// Moments about the centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralMoments3 {
    /// Centroid in the same units as the moments (voxels unless spacing was applied).
    pub centroid: [f64; 3],
    pub moments: RealTensor3,
}

impl CentralMoments3 {
    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize) -> f64 {
        self.moments.get(p, q, r)
    }

    pub fn mass(&self) -> f64 {
        self.moments.get(0, 0, 0)
    }
}

/// Scale-normalized central moments `η = μ / μ000^((p+q+r)/3 + 1)`.
pub type NormalizedMoments3 = RealTensor3;

/// Second-order shape descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeFeatures {
    /// Mass-normalized second central moments.
    pub covariance: [[f64; 3]; 3],
    /// Descending.
    pub eigenvalues: [f64; 3],
    /// Unit principal axes, one per eigenvalue. The largest-magnitude
    /// component of each axis is positive (lowest index on ties).
    pub axes: [[f64; 3]; 3],
    /// `[λ1/λ2, λ1/λ3]`; `None` where the denominator is zero.
    pub elongation: [Option<f64>; 2],
    /// `√trace(covariance)`.
    pub radius_of_gyration: f64,
}

fn positive_mass(m: &MomentTensor3) -> Result<i128> {
    match m.mass() {
        mass if mass > 0 => Ok(mass),
        _ => Err(Error::ZeroMass),
    }
}

/// `(𝓜100, 𝓜010, 𝓜001) / 𝓜000`.
pub fn centroid(m: &MomentTensor3) -> Result<[f64; 3]> {
    let mass = positive_mass(m)? as f64;
    Ok([
        m.get(1, 0, 0) as f64 / mass,
        m.get(0, 1, 0) as f64 / mass,
        m.get(0, 0, 1) as f64 / mass,
    ])
}

const BINOMIAL: [[i128; DIM]; DIM] = [
    [1, 0, 0, 0, 0],
    [1, 1, 0, 0, 0],
    [1, 2, 1, 0, 0],
    [1, 3, 3, 1, 0],
    [1, 4, 6, 4, 1],
];

/// Nearest integer to `num / den` for `den > 0`.
fn round_div(num: i128, den: i128) -> i128 {
    (2 * num + den).div_euclid(2 * den)
}

/// Raw moments about the integer point `c`, exactly. `None` on overflow.
fn integer_shift(m: &MomentTensor3, c: [i128; 3]) -> Option<[[[i128; DIM]; DIM]; DIM]> {
    let mut powers = [[1i128; DIM]; 3];
    for axis in 0..3 {
        for e in 1..DIM {
            powers[axis][e] = powers[axis][e - 1].checked_mul(-c[axis])?;
        }
    }
    let mut out = [[[0i128; DIM]; DIM]; DIM];
    for (p, q, r) in MomentTensor3::indices(m.order()) {
        let mut acc = 0i128;
        for a in 0..=p {
            let xa = BINOMIAL[p][a].checked_mul(powers[0][p - a])?;
            for b in 0..=q {
                let yb = xa.checked_mul(BINOMIAL[q][b] * powers[1][q - b])?;
                for s in 0..=r {
                    let t = yb
                        .checked_mul(BINOMIAL[r][s] * powers[2][r - s])?
                        .checked_mul(m.get(a, b, s))?;
                    acc = acc.checked_add(t)?;
                }
            }
        }
        out[p][q][r] = acc;
    }
    Some(out)
}

/// Central moments from raw moments by the trinomial shift expansion.
pub fn central_moments(m: &MomentTensor3) -> Result<CentralMoments3> {
    let mass = positive_mass(m)?;
    let first = [m.get(1, 0, 0), m.get(0, 1, 0), m.get(0, 0, 1)];
    let centroid = centroid(m)?;

    let c = first.map(|f| round_div(f, mass));
    let (shifted, frac) = match integer_shift(m, c) {
        Some(s) => {
            // Remaining offset, computed from the exact residual first moments.
            let frac = [0, 1, 2].map(|i| (first[i] - c[i] * mass) as f64 / mass as f64);
            (s.map(|a| a.map(|b| b.map(|v| v as f64))), frac)
        }
        None => {
            let mut raw = [[[0.0; DIM]; DIM]; DIM];
            for ((p, q, r), v) in m.iter() {
                raw[p][q][r] = v as f64;
            }
            (raw, centroid)
        }
    };

    let mut powers = [[1.0f64; DIM]; 3];
    for axis in 0..3 {
        for e in 1..DIM {
            powers[axis][e] = powers[axis][e - 1] * -frac[axis];
        }
    }
    let mut out = RealTensor3::zeros(m.order());
    for (p, q, r) in MomentTensor3::indices(m.order()) {
        let mut acc = 0.0;
        for a in 0..=p {
            for b in 0..=q {
                for s in 0..=r {
                    let coef = (BINOMIAL[p][a] * BINOMIAL[q][b] * BINOMIAL[r][s]) as f64;
                    acc += coef
                        * powers[0][p - a]
                        * powers[1][q - b]
                        * powers[2][r - s]
                        * shifted[a][b][s];
                }
            }
        }
        out.values[p][q][r] = acc;
    }
    // First-order central moments vanish by definition.
    out.values[1][0][0] = 0.0;
    out.values[0][1][0] = 0.0;
    out.values[0][0][1] = 0.0;
    Ok(CentralMoments3 {
        centroid,
        moments: out,
    })
}

/// `η = μ / μ000^((p+q+r)/3 + 1)`.
pub fn normalize_scale(mu: &CentralMoments3) -> Result<NormalizedMoments3> {
    let mass = mu.mass();
    if !mass.is_finite() || mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(mu
        .moments
        .map(|p, q, r, v| v / mass.powf((p + q + r) as f64 / 3.0 + 1.0)))
}

/// Physical-unit moments `μ′ = α^(1+p)·β^(1+q)·δ^(1+r)·μ`; the centroid is
/// scaled per axis.
pub fn apply_spacing(mu: &CentralMoments3, spacing: Spacing) -> Result<CentralMoments3> {
    let s = Spacing::new(spacing.x, spacing.y, spacing.z)?;
    let f = [s.x, s.y, s.z];
    Ok(CentralMoments3 {
        centroid: [0, 1, 2].map(|i| mu.centroid[i] * f[i]),
        moments: mu.moments.map(|p, q, r, v| {
            f[0].powi(1 + p as i32) * f[1].powi(1 + q as i32) * f[2].powi(1 + r as i32) * v
        }),
    })
}

/// Covariance eigendecomposition and derived descriptors.
pub fn shape_features(mu: &CentralMoments3) -> Result<ShapeFeatures> {
    let mass = mu.mass();
    if !mass.is_finite() || mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let g = |p, q, r| mu.get(p, q, r) / mass;
    let cov = [
        [g(2, 0, 0), g(1, 1, 0), g(1, 0, 1)],
        [g(1, 1, 0), g(0, 2, 0), g(0, 1, 1)],
        [g(1, 0, 1), g(0, 1, 1), g(0, 0, 2)],
    ];
    let eig = SymmetricEigen::new(Matrix3::from_fn(|i, j| cov[i][j]));

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut eigenvalues = [0.0; 3];
    let mut axes = [[0.0; 3]; 3];
    for (k, &i) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[i];
        if lambda < -PSD_TOLERANCE * scale {
            return Err(Error::Inconsistent(format!(
                "covariance has negative eigenvalue {lambda:e}"
            )));
        }
        eigenvalues[k] = lambda.max(0.0);
        let col = eig.eigenvectors.column(i);
        let mut axis = [col[0], col[1], col[2]];
        let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
        axis.iter_mut().for_each(|v| *v /= norm);
        let lead = (0..3).fold(0, |best, j| {
            if axis[j].abs() > axis[best].abs() {
                j
            } else {
                best
            }
        });
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        axes[k] = axis;
    }

    let ratio = |den: f64| (den > 0.0).then(|| eigenvalues[0] / den);
    let trace = cov[0][0] + cov[1][1] + cov[2][2];
    Ok(ShapeFeatures {
        covariance: cov,
        eigenvalues,
        axes,
        elongation: [ratio(eigenvalues[1]), ratio(eigenvalues[2])],
        radius_of_gyration: trace.max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments3d::naive_moments;
    use crate::volume::{synth, Dims, SynthKind, Volume};

    fn moments(kind: SynthKind, dims: Dims) -> MomentTensor3 {
        naive_moments(&synth(&kind, dims, 0).unwrap(), Order::Fourth).unwrap()
    }

    fn ellipsoid(center: [f64; 3], semi: [f64; 3], rot: f64) -> SynthKind {
        SynthKind::Ellipsoid {
            center,
            semi_axes: semi,
            rotation_z_deg: rot,
            value: 1,
        }
    }

    #[test]
    fn centroid_of_delta_and_uniform() {
        let d = moments(
            SynthKind::Delta {
                x: 1,
                y: 2,
                z: 3,
                value: 9,
            },
            Dims::new(4, 4, 4),
        );
        assert_eq!(centroid(&d).unwrap(), [1.0, 2.0, 3.0]);
        let u = moments(SynthKind::Uniform { value: 1 }, Dims::cube(2));
        assert_eq!(centroid(&u).unwrap(), [0.5, 0.5, 0.5]);
    }

    #[test]
    fn zero_mass_rejected() {
        let z = moments(SynthKind::Uniform { value: 0 }, Dims::cube(3));
        assert!(matches!(centroid(&z), Err(Error::ZeroMass)));
        assert!(matches!(central_moments(&z), Err(Error::ZeroMass)));
    }

    #[test]
    fn delta_central_moments_vanish() {
        let d = moments(
            SynthKind::Delta {
                x: 3,
                y: 0,
                z: 2,
                value: 200,
            },
            Dims::new(5, 4, 3),
        );
        let mu = central_moments(&d).unwrap();
        assert_eq!(mu.mass(), 200.0);
        for ((p, q, r), v) in mu.moments.iter() {
            if p + q + r > 0 {
                assert_eq!(v, 0.0, "μ{p}{q}{r}");
            }
        }
    }

    #[test]
    fn central_matches_direct_definition() {
        let vol = synth(
            &SynthKind::Random {
                depth: crate::BitDepth::U8,
            },
            Dims::cube(12),
            9,
        )
        .unwrap();
        let m = naive_moments(&vol, Order::Fourth).unwrap();
        let mu = central_moments(&m).unwrap();
        let [cx, cy, cz] = mu.centroid;
        let d = vol.dims();
        for ((p, q, r), v) in mu.moments.iter() {
            let mut direct = 0.0;
            for z in 0..d.z {
                for y in 0..d.y {
                    for x in 0..d.x {
                        direct += vol.get(x, y, z) as f64
                            * (x as f64 - cx).powi(p as i32)
                            * (y as f64 - cy).powi(q as i32)
                            * (z as f64 - cz).powi(r as i32);
                    }
                }
            }
            let scale = direct
                .abs()
                .max(mu.mass() * 36.0f64.powi((p + q + r) as i32) * 1e-6);
            assert!(
                (v - direct).abs() <= 1e-9 * scale,
                "μ{p}{q}{r}: {v} vs {direct}"
            );
        }
    }

    #[test]
    fn eta_000_is_one() {
        let m = moments(
            ellipsoid([8.0, 8.0, 8.0], [5.0, 4.0, 3.0], 0.0),
            Dims::cube(17),
        );
        let eta = normalize_scale(&central_moments(&m).unwrap()).unwrap();
        assert!((eta.get(0, 0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(eta.get(1, 0, 0), 0.0);
    }

    #[test]
    fn spacing_scales_each_axis() {
        let m = moments(
            ellipsoid([8.0, 8.0, 8.0], [5.0, 4.0, 3.0], 0.0),
            Dims::cube(17),
        );
        let mu = central_moments(&m).unwrap();
        assert_eq!(apply_spacing(&mu, Spacing::default()).unwrap(), mu);
        let s = apply_spacing(&mu, Spacing::new(1.0, 1.0, 0.4).unwrap()).unwrap();
        assert!((s.get(0, 0, 2) - 0.4f64.powi(3) * mu.get(0, 0, 2)).abs() < 1e-9 * s.get(0, 0, 2));
        assert!((s.mass() - 0.4 * mu.mass()).abs() < 1e-9);
        assert!((s.centroid[2] - 0.4 * mu.centroid[2]).abs() < 1e-12);
        let bad = Spacing {
            x: 1.0,
            y: 0.0,
            z: 1.0,
        };
        assert!(matches!(
            apply_spacing(&mu, bad),
            Err(Error::InvalidSpacing(..))
        ));
    }

    #[test]
    fn axis_aligned_ellipsoid() {
        let m = moments(
            ellipsoid([24.0, 20.0, 16.0], [20.0, 15.0, 10.0], 0.0),
            Dims::new(49, 41, 33),
        );
        let f = shape_features(&central_moments(&m).unwrap()).unwrap();
        let expected = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        for k in 0..3 {
            for j in 0..3 {
                assert!(
                    (f.axes[k][j] - expected[3 * k + j]).abs() < 1e-6,
                    "{:?}",
                    f.axes
                );
            }
        }
        // Solid ellipsoid: variance along a semi-axis a is a²/5.
        let [l1, l2, l3] = f.eigenvalues;
        assert!(((l1 / l3) / 4.0 - 1.0).abs() < 0.02);
        assert!(((l2 / l3) / 2.25 - 1.0).abs() < 0.02);
        let trace = f.covariance[0][0] + f.covariance[1][1] + f.covariance[2][2];
        assert!((l1 + l2 + l3 - trace).abs() < 1e-9 * trace);
    }

    #[test]
    fn sphere_is_isotropic() {
        let m = moments(
            ellipsoid([15.0, 15.0, 15.0], [12.0; 3], 0.0),
            Dims::cube(31),
        );
        let f = shape_features(&central_moments(&m).unwrap()).unwrap();
        let [l1, _, l3] = f.eigenvalues;
        assert!(l1 / l3 - 1.0 < 0.01);
        assert!(f.elongation.iter().all(|e| (e.unwrap() - 1.0).abs() < 0.01));
        let expected = (3.0 * 144.0 / 5.0f64).sqrt();
        assert!((f.radius_of_gyration / expected - 1.0).abs() < 0.02);
    }

    #[test]
    fn rotated_ellipsoid_axis() {
        let m = moments(
            ellipsoid([24.0, 24.0, 12.0], [20.0, 8.0, 6.0], 45.0),
            Dims::new(49, 49, 25),
        );
        let f = shape_features(&central_moments(&m).unwrap()).unwrap();
        let a = f.axes[0];
        let angle = a[1].atan2(a[0]).to_degrees();
        assert!((angle - 45.0).abs() < 1.0, "{angle}");
        for i in 0..3 {
            for j in i + 1..3 {
                let dot: f64 = (0..3).map(|k| f.axes[i][k] * f.axes[j][k]).sum();
                assert!(dot.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn point_mass_has_no_elongation() {
        let v = Volume::from_fn(Dims::cube(3), crate::BitDepth::U8, |x, y, z| {
            (x == 1 && y == 1 && z == 1) as u64
        })
        .unwrap();
        let m = naive_moments(&v, Order::Third).unwrap();
        let f = shape_features(&central_moments(&m).unwrap()).unwrap();
        assert_eq!(f.elongation, [None, None]);
        assert_eq!(f.radius_of_gyration, 0.0);
    }
}
