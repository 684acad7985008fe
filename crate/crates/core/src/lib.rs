//! Exact raw 3D geometric moments of volumetric images.
//!
//! The fast path ([`dpm_moments`]) replaces per-voxel multiplications with
//! addition-only projections: the volume is collapsed onto five voxel-aligned
//! 2D images, each image onto five 1D integrals, and only the 1D integrals are
//! multiplied by index powers. Multiplicative cost drops from `O(n³)` to
//! `O(n)` for an `n³` volume. Two reference engines, [`naive_moments`] and
//! [`factored_moments`], produce bit-identical tensors.
//!
//! Derived quantities (centroid, central and scale-normalized moments,
//! physical-spacing correction, second-order shape features) live in
//! [`features`]; the CLI report, cross-engine verification and the benchmark
//! sweep live in [`harness`].

pub mod drt2d;
pub mod error;
mod exact;
pub mod features;
pub mod harness;
pub mod moments3d;
pub mod ops;
pub mod order;
pub mod projection;
pub mod volume;

pub use drt2d::{
    assemble_2d, brute_force_2d, integrals, moments_1d, shift_origin, IntegralSet, Moments2D,
};
pub use error::{Error, Result};
pub use features::{
    apply_spacing, central_moments, centroid, normalize_scale, shape_features, CentralMoments3,
    NormalizedMoments3, RealTensor3, ShapeFeatures,
};
pub use moments3d::{
    dpm_moments, dpm_moments_with, factored_moments, naive_moments, op_counters, DpmOptions,
    Engine, MomentTensor3,
};
pub use ops::OpCounters;
pub use order::Order;
pub use projection::{project, project_all, Orientation, ProjectionImage, ProjectionSet};
pub use volume::{
    load_nrrd, load_raw, synth, write_raw, BitDepth, ByteOrder, Dims, Spacing, SynthKind, Volume,
    VolumeMeta, Voxels,
};
