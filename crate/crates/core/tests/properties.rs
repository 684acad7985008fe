use proptest::prelude::*;
use volmoments::ops::NoCount;
use volmoments::projection::project_set;
use volmoments::{
    assemble_2d, brute_force_2d, central_moments, dpm_moments_with, factored_moments, integrals,
    load_raw, naive_moments, project, shape_features, shift_origin, write_raw, BitDepth, ByteOrder,
    Dims, DpmOptions, MomentTensor3, Order, Orientation, ProjectionImage, Volume, VolumeMeta,
};

fn order() -> impl Strategy<Value = Order> {
    prop_oneof![Just(Order::Third), Just(Order::Fourth)]
}

fn dims(max: usize) -> impl Strategy<Value = Dims> {
    (1..=max, 1..=max, 1..=max).prop_map(|(x, y, z)| Dims::new(x, y, z))
}

fn volume_with(max: usize, depth: BitDepth) -> impl Strategy<Value = Volume> {
    dims(max).prop_flat_map(move |d| {
        let n = d.len();
        match depth {
            BitDepth::U8 => proptest::collection::vec(any::<u8>(), n)
                .prop_map(move |v| Volume::from_u8(d, v).unwrap())
                .boxed(),
            BitDepth::U16 => proptest::collection::vec(any::<u16>(), n)
                .prop_map(move |v| Volume::from_u16(d, v).unwrap())
                .boxed(),
        }
    })
}

fn volume(max: usize) -> impl Strategy<Value = Volume> {
    prop_oneof![
        volume_with(max, BitDepth::U8),
        volume_with(max, BitDepth::U16)
    ]
}

fn image() -> impl Strategy<Value = ProjectionImage> {
    (1usize..=24, 1usize..=24).prop_flat_map(|(w, h)| {
        proptest::collection::vec(0u64..(1 << 40), w * h).prop_map(move |px| {
            let mut img = ProjectionImage::zeros(Orientation::Xy, w, h, 0);
            img.pixels = px;
            img
        })
    })
}

/// Copies `v` into a larger zero volume at offset `at`.
fn padded(v: &Volume, at: [usize; 3], extra: [usize; 3]) -> Volume {
    let d = v.dims();
    let nd = Dims::new(
        d.x + at[0] + extra[0],
        d.y + at[1] + extra[1],
        d.z + at[2] + extra[2],
    );
    Volume::from_fn(nd, v.bit_depth(), |x, y, z| {
        let inside = x >= at[0] && y >= at[1] && z >= at[2];
        let (sx, sy, sz) = (
            x.wrapping_sub(at[0]),
            y.wrapping_sub(at[1]),
            z.wrapping_sub(at[2]),
        );
        if inside && sx < d.x && sy < d.y && sz < d.z {
            v.get(sx, sy, sz)
        } else {
            0
        }
    })
    .unwrap()
}

const BINOMIAL: [[i128; 5]; 5] = [
    [1, 0, 0, 0, 0],
    [1, 1, 0, 0, 0],
    [1, 2, 1, 0, 0],
    [1, 3, 3, 1, 0],
    [1, 4, 6, 4, 1],
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projections_conserve_mass(v in volume(10)) {
        for o in Orientation::ALL {
            prop_assert_eq!(project(&v, o).mass(), v.mass(), "{:?}", o);
        }
    }

    #[test]
    fn fused_projection_matches_direct(v in volume(10), threads in 1usize..4) {
        let set = project_set(&v, true, threads, &mut NoCount);
        for o in Orientation::ALL {
            prop_assert_eq!(set.get(o).unwrap(), &project(&v, o));
        }
    }

    #[test]
    fn axis_relabel_permutes_projections(v in volume(9)) {
        let once = v.rotate_axes();
        let twice = once.rotate_axes();
        prop_assert_eq!(&project(&v, Orientation::Yz).pixels, &project(&once, Orientation::Xy).pixels);
        prop_assert_eq!(&project(&v, Orientation::Zx).pixels, &project(&twice, Orientation::Xy).pixels);
    }

    #[test]
    fn anti_is_diag_of_z_flip(v in volume(9)) {
        let d = v.dims();
        let flipped = Volume::from_fn(d, v.bit_depth(), |x, y, z| v.get(x, y, d.z - 1 - z)).unwrap();
        let anti = project(&v, Orientation::Anti);
        let diag = project(&flipped, Orientation::Diag);
        prop_assert_eq!(anti.origin_offset, d.z - 1);
        prop_assert_eq!(anti.pixels, diag.pixels);
    }

    #[test]
    fn integrals_conserve_mass(img in image()) {
        let set = integrals(&img);
        for (name, data) in set.named() {
            prop_assert_eq!(data.iter().map(|&v| v as u128).sum::<u128>(), img.mass(), "{}", name);
        }
    }

    #[test]
    fn assembly_matches_brute_force(img in image(), k in order()) {
        let m = assemble_2d(&integrals(&img)).unwrap();
        let b = brute_force_2d(&img, Order::Fourth).unwrap();
        for (p, q) in volmoments::Moments2D::indices(k) {
            prop_assert_eq!(m.get(p, q), b.get(p, q), "M{}{}", p, q);
        }
    }

    #[test]
    fn shift_round_trip(img in image(), x_hat in -40i64..40) {
        let m = brute_force_2d(&img, Order::Fourth).unwrap();
        let back = shift_origin(&shift_origin(&m, x_hat).unwrap(), -x_hat).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn engines_agree(v in volume(10), k in order(), threads in 1usize..4) {
        let naive = naive_moments(&v, k).unwrap();
        prop_assert_eq!(factored_moments(&v, k).unwrap(), naive);
        let opts = DpmOptions { threads, verify_duplicates: true };
        prop_assert_eq!(dpm_moments_with(&v, k, &opts).unwrap(), naive);
    }

    #[test]
    fn axis_relabel_permutes_tensor(v in volume(9), k in order()) {
        let m = dpm_moments_with(&v, k, &DpmOptions::default()).unwrap();
        let r = dpm_moments_with(&v.rotate_axes(), k, &DpmOptions::default()).unwrap();
        for (p, q, s) in MomentTensor3::indices(k) {
            prop_assert_eq!(r.get(p, q, s), m.get(s, p, q));
        }
    }

    #[test]
    fn moments_are_linear(
        (a, b) in dims(9).prop_flat_map(|d| {
            let n = d.len();
            (proptest::collection::vec(any::<u8>(), n), proptest::collection::vec(any::<u8>(), n))
                .prop_map(move |(a, b)| (Volume::from_u8(d, a).unwrap(), Volume::from_u8(d, b).unwrap()))
        }),
        k in order(),
    ) {
        let sum = Volume::from_fn(a.dims(), BitDepth::U16, |x, y, z| a.get(x, y, z) + b.get(x, y, z)).unwrap();
        let (ma, mb, ms) = (
            dpm_moments_with(&a, k, &DpmOptions::default()).unwrap(),
            dpm_moments_with(&b, k, &DpmOptions::default()).unwrap(),
            dpm_moments_with(&sum, k, &DpmOptions::default()).unwrap(),
        );
        for (p, q, r) in MomentTensor3::indices(k) {
            prop_assert_eq!(ms.get(p, q, r), ma.get(p, q, r) + mb.get(p, q, r));
        }
    }

    #[test]
    fn x_translation_is_binomial_shift(v in volume(8), k in order(), t in 1usize..4) {
        let m = dpm_moments_with(&v, k, &DpmOptions::default()).unwrap();
        let moved = dpm_moments_with(&padded(&v, [t, 0, 0], [0, 0, 0]), k, &DpmOptions::default()).unwrap();
        for (p, q, r) in MomentTensor3::indices(k) {
            let expected: i128 = (0..=p)
                .map(|s| BINOMIAL[p][s] * (t as i128).pow((p - s) as u32) * m.get(s, q, r))
                .sum();
            prop_assert_eq!(moved.get(p, q, r), expected);
        }
    }

    #[test]
    fn raw_round_trip(v in volume(8), big in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let order = if big { ByteOrder::Big } else { ByteOrder::Little };
        write_raw(&v, &path, order).unwrap();
        let mut meta = VolumeMeta::new(v.dims(), v.bit_depth());
        meta.byte_order = order;
        let loaded = load_raw(&path, &meta).unwrap();
        prop_assert_eq!(loaded.voxels(), v.voxels());
    }

    #[test]
    fn uniform_mass(d in dims(12), value in 0u64..=u16::MAX as u64) {
        let v = Volume::from_fn(d, BitDepth::U16, |_, _, _| value).unwrap();
        prop_assert_eq!(v.mass(), value as u128 * d.len() as u128);
    }

    #[test]
    fn central_moments_translation_invariant(
        v in volume_with(8, BitDepth::U8),
        at in (0usize..6, 0usize..6, 0usize..6),
    ) {
        prop_assume!(v.mass() > 0);
        let m = naive_moments(&v, Order::Fourth).unwrap();
        let moved = naive_moments(&padded(&v, [at.0, at.1, at.2], [1, 2, 3]), Order::Fourth).unwrap();
        let (a, b) = (central_moments(&m).unwrap(), central_moments(&moved).unwrap());
        let reach = v.dims().max_extent() as f64;
        for ((p, q, r), x) in a.moments.iter() {
            let y = b.get(p, q, r);
            let scale = a.mass() * reach.powi((p + q + r) as i32);
            prop_assert!((x - y).abs() <= 1e-9 * scale.max(x.abs()), "μ{}{}{}: {} vs {}", p, q, r, x, y);
        }
    }

    #[test]
    fn shape_axes_orthonormal(v in volume_with(8, BitDepth::U8)) {
        prop_assume!(v.mass() > 0);
        let mu = central_moments(&naive_moments(&v, Order::Third).unwrap()).unwrap();
        let f = shape_features(&mu).unwrap();
        for i in 0..3 {
            let norm: f64 = f.axes[i].iter().map(|c| c * c).sum();
            prop_assert!((norm - 1.0).abs() < 1e-9);
            let lead = (0..3).fold(0, |b, j| if f.axes[i][j].abs() > f.axes[i][b].abs() { j } else { b });
            prop_assert!(f.axes[i][lead] > 0.0);
            for j in i + 1..3 {
                let dot: f64 = (0..3).map(|c| f.axes[i][c] * f.axes[j][c]).sum();
                prop_assert!(dot.abs() < 1e-9);
            }
        }
        prop_assert!(f.eigenvalues[0] >= f.eigenvalues[1] && f.eigenvalues[1] >= f.eigenvalues[2]);
        let trace = f.covariance[0][0] + f.covariance[1][1] + f.covariance[2][2];
        let sum: f64 = f.eigenvalues.iter().sum();
        prop_assert!((sum - trace).abs() <= 1e-9 * trace.max(f64::MIN_POSITIVE));
    }
}
