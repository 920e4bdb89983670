//! Implementations checked against brute-force or independently computed
//! references, plus the structural invariants of each stage.

use forge_core::composite::{blend, blend_weights, paste, Kernel};
use forge_core::geometry::{
    bbox_of, dilate, edt, normalized_sdf, pad_bbox, squared_edt, squared_edt_with, Seeds,
};
use forge_core::metrics::{fid, kid, kid_with, moments, sqrtm_psd, FeatureSet, Matrix};
use forge_core::model::{
    denormalize, normalize, ImagePlane, MaskGrid, Modality, ModalityMeta, Tensor, TensorData,
};
use forge_core::preprocess::{assemble_input, build_crop_bundle_sized, FiveChannelInput};
use forge_core::retrieval::{
    aggregate, cosine, score_all, select_background, EmbeddingStore, ScoreVector, SelectMode,
};
use forge_core::translation::{finalize, stub_translate, Mode};
use forge_core::Execution;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_squared_edt(mask: &MaskGrid, seeds: Seeds) -> Vec<u64> {
    let (w, h) = mask.dims();
    let want = seeds == Seeds::Foreground;
    let seed_px: Vec<(i64, i64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y) == want)
        .map(|(x, y)| (x as i64, y as i64))
        .collect();
    (0..h)
        .flat_map(|y| (0..w).map(move |x| (x as i64, y as i64)))
        .map(|(x, y)| {
            seed_px
                .iter()
                .map(|&(sx, sy)| ((x - sx).pow(2) + (y - sy).pow(2)) as u64)
                .min()
                .unwrap()
        })
        .collect()
}

fn brute_dilate(mask: &MaskGrid, kw: usize, kh: usize) -> MaskGrid {
    let (w, h) = mask.dims();
    // set pixel (u, v) turns on (u + dx, v + dy), dx in [-floor(k/2), ceil(k/2) - 1]
    let range = |k: usize| -(k as i64 / 2)..=(k as i64 + 1) / 2 - 1;
    let mut out = MaskGrid::empty(w, h);
    for v in 0..h {
        for u in 0..w {
            if !mask.get(u, v) {
                continue;
            }
            for dy in range(kh) {
                for dx in range(kw) {
                    let (x, y) = (u as i64 + dx, v as i64 + dy);
                    if (0..w as i64).contains(&x) && (0..h as i64).contains(&y) {
                        out.set(x as usize, y as usize, true);
                    }
                }
            }
        }
    }
    out
}

fn mask_strategy(max: usize) -> impl Strategy<Value = MaskGrid> {
    (1..=max, 1..=max, 0.0f64..1.0, any::<u64>()).prop_map(|(w, h, density, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MaskGrid::from_fn(w, h, |_, _| rng.random_bool(density))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn edt_equals_brute_force(mask in mask_strategy(24)) {
        for seeds in [Seeds::Foreground, Seeds::Background] {
            let want_any = mask.bits().iter().any(|&b| b == (seeds == Seeds::Foreground));
            match squared_edt(&mask, seeds) {
                Ok(sq) => {
                    prop_assert!(want_any);
                    prop_assert_eq!(&sq, &brute_squared_edt(&mask, seeds));
                    prop_assert_eq!(sq, squared_edt_with(Execution::Sequential, &mask, seeds).unwrap());
                }
                Err(_) => prop_assert!(!want_any),
            }
        }
    }

    #[test]
    fn sdf_range_and_support(mask in mask_strategy(24)) {
        let s = normalized_sdf(&mask);
        prop_assert!(s.values().iter().all(|v| (0.0..=1.0).contains(v)));
        for (&v, &m) in s.values().iter().zip(mask.bits()) {
            if !m {
                prop_assert_eq!(v, 0.0);
            } else if !mask.is_full() {
                prop_assert!(v > 0.0);
            }
        }
        if !mask.is_empty() {
            prop_assert_eq!(s.values().iter().copied().fold(0.0f32, f32::max), 1.0);
        }
    }

    #[test]
    fn sdf_translation_invariant(
        inner in mask_strategy(10),
        (ox1, oy1, ox2, oy2) in (1usize..6, 1usize..6, 1usize..6, 1usize..6),
    ) {
        let (iw, ih) = inner.dims();
        let place = |ox: usize, oy: usize| {
            MaskGrid::from_fn(iw + 12, ih + 12, |x, y| {
                x >= ox && y >= oy && x - ox < iw && y - oy < ih && inner.get(x - ox, y - oy)
            })
        };
        let (a, b) = (place(ox1, oy1), place(ox2, oy2));
        let (sa, sb) = (normalized_sdf(&a), normalized_sdf(&b));
        for y in 0..ih {
            for x in 0..iw {
                prop_assert_eq!(sa.get(x + ox1, y + oy1), sb.get(x + ox2, y + oy2));
            }
        }
    }

    #[test]
    fn dilation_matches_definition(mask in mask_strategy(20), kw in 1usize..10, kh in 1usize..10) {
        let d = dilate(&mask, kw, kh);
        prop_assert_eq!(&d, &brute_dilate(&mask, kw, kh));
        for (&o, &i) in d.bits().iter().zip(mask.bits()) {
            prop_assert!(o || !i);
        }
    }

    #[test]
    fn dilation_monotone(mask in mask_strategy(16), extra_seed in any::<u64>(), k in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(extra_seed);
        let (w, h) = mask.dims();
        let bigger = MaskGrid::from_fn(w, h, |x, y| mask.get(x, y) || rng.random_bool(0.2));
        let (d1, d2) = (dilate(&mask, k, k), dilate(&bigger, k, k));
        for (&a, &b) in d1.bits().iter().zip(d2.bits()) {
            prop_assert!(!a || b);
        }
    }

    #[test]
    fn padded_box_contains_and_fits(mask in mask_strategy(30), frac in 0.0f64..=1.0) {
        prop_assume!(!mask.is_empty());
        let (w, h) = mask.dims();
        let b = bbox_of(&mask).unwrap();
        let p = pad_bbox(b, frac, w, h);
        prop_assert!(p.fits(w, h));
        prop_assert!(p.x0 <= b.x0 && p.y0 <= b.y0 && p.x1 >= b.x1 && p.y1 >= b.y1);
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) {
                    prop_assert!(b.contains(x, y));
                }
            }
        }
    }

    #[test]
    fn tensor_round_trip_bit_exact(
        dims in prop::collection::vec(1usize..5, 1..=4),
        dtype in 0u8..3,
        seed in any::<u64>(),
    ) {
        let n: usize = dims.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = match dtype {
            0 => TensorData::F32((0..n).map(|_| f32::from_bits(rng.random())).collect()),
            1 => TensorData::U8((0..n).map(|_| rng.random()).collect()),
            _ => TensorData::U16((0..n).map(|_| rng.random()).collect()),
        };
        let t = Tensor::new(dims, data).unwrap();
        let bytes = t.to_bytes();
        prop_assert_eq!(Tensor::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn normalize_round_trip(lo in 0u16..30000, span in 1u32..70000, v in any::<u16>()) {
        let hi = f64::from(lo) + f64::from(span);
        let meta = ModalityMeta::new(Modality::Thermal, "", f64::from(lo), hi).unwrap();
        prop_assume!(f64::from(v) <= hi && v >= lo);
        let img = ImagePlane::new(1, 1, 1, vec![v]).unwrap();
        let back = denormalize(&normalize(&img, &meta).unwrap(), &meta).unwrap();
        let err = (f64::from(back.data()[0]) - f64::from(v)).abs();
        if span >= 65535 {
            prop_assert_eq!(err, 0.0);
        } else {
            prop_assert!(err <= 0.5 * f64::from(span) / 65535.0);
        }
    }

    #[test]
    fn cosine_scale_invariant(
        a in prop::collection::vec(-10.0f32..10.0, 1..32),
        alpha in 0.01f32..100.0,
        beta in 0.01f32..100.0,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f32> = a.iter().map(|_| rng.random_range(-10.0..10.0)).collect();
        prop_assume!(a.iter().any(|&x| x != 0.0) && b.iter().any(|&x| x != 0.0));
        let sa: Vec<f32> = a.iter().map(|x| x * alpha).collect();
        let sb: Vec<f32> = b.iter().map(|x| x * beta).collect();
        let c = cosine(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert!((c - cosine(&sa, &sb).unwrap()).abs() <= 1e-6);
    }

    #[test]
    fn aggregate_permutation_invariant(seed in any::<u64>(), n in 1usize..8, m in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vs: Vec<ScoreVector> = (0..n)
            .map(|_| ScoreVector((0..m).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let mut rev = vs.clone();
        rev.reverse();
        rev.rotate_left(n / 2);
        let (a, b) = (aggregate(&vs).unwrap(), aggregate(&rev).unwrap());
        for (x, y) in a.0.iter().zip(&b.0) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn stub_is_convex_and_finalize_bounded(seed in any::<u64>(), mode_abs in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = 8;
        let x = FiveChannelInput::from_planar(size, (0..5 * size * size).map(|_| rng.random()).collect()).unwrap();
        let mode = if mode_abs { Mode::Absolute } else { Mode::Residual };
        let pred = stub_translate(&x, mode);
        let fin = finalize(&pred, &x, mode).unwrap();
        for i in 0..size * size {
            let l = 0.299 * x.channel(0)[i] + 0.587 * x.channel(1)[i] + 0.114 * x.channel(2)[i];
            let bg = x.background()[i];
            let v = fin.data()[i];
            prop_assert!(v >= bg.min(l) - 1e-6 && v <= bg.max(l) + 1e-6);
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let wild = ImagePlane::new(size, size, 1, (0..size * size).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        prop_assert!(finalize(&wild, &x, mode).unwrap().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn crop_bundle_masks_rgb_exactly(mask in mask_strategy(40), size in 4usize..40) {
        prop_assume!(!mask.is_empty());
        let (w, h) = mask.dims();
        let rgb = ImagePlane::from_fn(w, h, 3, |x, y, c| ((x * 5 + y * 3 + c) % 7) as f32 / 6.0 + 0.01);
        let bg = ImagePlane::from_fn(w, h, 1, |x, _, _| x as f32 / w as f32);
        let sdf = normalized_sdf(&mask);
        let b = build_crop_bundle_sized(&rgb, &mask, &bg, &sdf, 0.1, size).unwrap();
        for (px, &m) in b.rgb_masked.data().chunks_exact(3).zip(b.mask_crop.bits()) {
            if !m {
                prop_assert_eq!(px, &[0.0f32, 0.0, 0.0][..]);
            }
        }
        prop_assert!(b.sdf_crop.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let again = build_crop_bundle_sized(&rgb, &mask, &bg, &sdf, 0.1, size).unwrap();
        prop_assert_eq!(assemble_input(&b).to_tensor().to_bytes(), assemble_input(&again).to_tensor().to_bytes());
    }

    #[test]
    fn composite_invariants(mask in mask_strategy(32), k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(!mask.is_empty());
        let (w, h) = mask.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bg = ImagePlane::new(w, h, 1, (0..w * h).map(|_| rng.random()).collect()).unwrap();
        let t = ImagePlane::new(w, h, 1, (0..w * h).map(|_| rng.random()).collect()).unwrap();
        let weights = blend_weights(&mask, Kernel::new(k, k)).unwrap();
        let out = blend(&bg, &t, &weights).unwrap();
        let dil = weights.dilated();
        for i in 0..w * h {
            let (b, tv, o) = (bg.data()[i], t.data()[i], out.data()[i]);
            if mask.bits()[i] {
                prop_assert_eq!(o, tv);
            } else if !dil.bits()[i] {
                prop_assert_eq!(o, b);
            }
            prop_assert!(o >= b.min(tv) && o <= b.max(tv));
        }
        if weights.max_band() > 0.0 {
            let bound = std::f64::consts::SQRT_2 / weights.max_band() + 1e-6;
            let band = |x: usize, y: usize| dil.get(x, y) && !mask.get(x, y);
            for y in 0..h {
                for x in 0..w {
                    if !band(x, y) {
                        continue;
                    }
                    for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (1, -1)] {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || !band(nx as usize, ny as usize) {
                            continue;
                        }
                        let d = (weights.get(x, y) - weights.get(nx as usize, ny as usize)).abs();
                        prop_assert!(f64::from(d) <= bound);
                    }
                }
            }
        }
        let same = paste(&bg, &bg.clone(), forge_core::geometry::BBox::new(0, 0, w, h)).unwrap();
        prop_assert_eq!(blend(&bg, &same, &weights).unwrap(), bg);
    }
}

#[test]
fn edt_hand_examples() {
    let row = MaskGrid::new(5, 1, vec![false, false, true, false, false]).unwrap();
    assert_eq!(
        squared_edt(&row, Seeds::Background).unwrap(),
        brute_squared_edt(&row, Seeds::Background)
    );
    let corner = MaskGrid::from_fn(3, 3, |x, y| x == 0 && y == 0);
    assert_eq!(
        edt(&corner, Seeds::Foreground).unwrap().get(2, 2),
        2.0 * std::f32::consts::SQRT_2
    );
}

fn random_store(rng: &mut ChaCha8Rng, prefix: &str, n: usize, d: usize) -> EmbeddingStore {
    EmbeddingStore::from_rows(
        (0..n)
            .map(|i| {
                let mut v: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                v[0] += 1e-3;
                (format!("{prefix}{i}"), v)
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn selection_matches_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (n, m, d) = (
            rng.random_range(1..40),
            rng.random_range(1..40),
            rng.random_range(1..64),
        );
        let q = random_store(&mut rng, "q", n, d);
        let t = random_store(&mut rng, "t", m, d);
        let got = select_background(
            &aggregate(&score_all(&q, &t).unwrap()).unwrap(),
            &t,
            SelectMode::Max,
        )
        .unwrap();

        let mut best = (0usize, f64::NEG_INFINITY);
        for j in 0..m {
            let mut s = 0.0;
            for i in 0..n {
                let (a, b) = (q.row(i), t.row(j));
                let dot: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(&x, &y)| f64::from(x) * f64::from(y))
                    .sum();
                let na: f64 = a.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
                s += (dot / (na * nb)).clamp(-1.0, 1.0);
            }
            s /= n as f64;
            if s > best.1 {
                best = (j, s);
            }
        }
        assert_eq!(got.index, best.0);
        assert!((got.score - best.1).abs() < 1e-12);
    }
}

fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f32) -> FeatureSet {
    FeatureSet::new(
        n,
        d,
        (0..n * d)
            .map(|_| rng.random_range(-1.0f32..1.0) + shift)
            .collect(),
    )
    .unwrap()
}

fn naive_kid(a: &FeatureSet, b: &FeatureSet) -> f64 {
    let d = a.d() as f64;
    let k = |x: &[f32], y: &[f32]| {
        let mut dot = 0.0;
        for t in 0..x.len() {
            dot += f64::from(x[t]) * f64::from(y[t]);
        }
        (dot / d + 1.0).powi(3)
    };
    let (n, m) = (a.n(), b.n());
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                xx += k(a.row(i), a.row(j));
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            if i != j {
                yy += k(b.row(i), b.row(j));
            }
        }
    }
    for i in 0..n {
        for j in 0..m {
            xy += k(a.row(i), b.row(j));
        }
    }
    let (n, m) = (n as f64, m as f64);
    xx / (n * (n - 1.0)) + yy / (m * (m - 1.0)) - 2.0 * xy / (n * m)
}

#[test]
fn kid_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, m, d) in [(2, 2, 1), (5, 9, 3), (40, 33, 16), (100, 100, 64)] {
        let a = random_features(&mut rng, n, d, 0.0);
        let b = random_features(&mut rng, m, d, 0.1);
        let oracle = naive_kid(&a, &b);
        for exec in [Execution::Sequential, Execution::Parallel] {
            let got = kid_with(exec, &a, &b).unwrap();
            assert!(
                (got - oracle).abs() <= 1e-9 * oracle.abs().max(1e-12),
                "{got} vs {oracle}"
            );
        }
    }
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Matrix {
    let g: Vec<f64> = (0..n * rank).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = (0..rank).map(|k| g[i * rank + k] * g[j * rank + k]).sum();
        }
    }
    m
}

#[test]
fn sqrtm_reconstructs_psd_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [1usize, 2, 5, 16, 33, 64] {
        for rank in [n, n.div_ceil(2)] {
            let m = random_psd(&mut rng, n, rank);
            let s = sqrtm_psd(&m).unwrap();
            let rel = s.matmul(&s).sub(&m).frobenius() / m.frobenius();
            assert!(rel <= 1e-5, "n={n} rank={rank} rel={rel}");
        }
    }
}

/// Cross term through nalgebra's symmetric eigensolver instead of the
/// in-crate Jacobi solver.
fn nalgebra_fid(a: &FeatureSet, b: &FeatureSet) -> f64 {
    use nalgebra::{DMatrix, DVector};
    let stats = |f: &FeatureSet| {
        let x = DMatrix::from_fn(f.n(), f.d(), |i, j| f64::from(f.row(i)[j]));
        let mean = DVector::from_fn(f.d(), |j, _| x.column(j).mean());
        let mut c = x.clone();
        for j in 0..f.d() {
            c.column_mut(j).add_scalar_mut(-mean[j]);
        }
        (mean, c.transpose() * &c / (f.n() as f64 - 1.0))
    };
    let (m1, c1) = stats(a);
    let (m2, c2) = stats(b);
    let e1 = c1.clone().symmetric_eigen();
    let root = &e1.eigenvectors
        * DMatrix::from_diagonal(&e1.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * e1.eigenvectors.transpose();
    let inner = &root * &c2 * &root;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = inner
        .symmetric_eigenvalues()
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    ((m1 - m2).norm_squared() + c1.trace() + c2.trace() - 2.0 * cross).max(0.0)
}

#[test]
fn fid_agrees_with_independent_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (n, d, shift) in [(30, 4, 0.3f32), (80, 16, 0.0), (50, 8, 1.0)] {
        let a = random_features(&mut rng, n, d, 0.0);
        let b = random_features(&mut rng, n + 7, d, shift);
        let ours = fid(&a, &b).unwrap();
        let theirs = nalgebra_fid(&a, &b);
        assert!(
            (ours - theirs).abs() <= 1e-8 * theirs.max(1.0),
            "{ours} vs {theirs}"
        );
    }
}

#[test]
fn fid_symmetry_identity_and_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (n, d) in [(20, 3), (60, 12), (40, 32)] {
        let a = random_features(&mut rng, n, d, 0.0);
        let b = random_features(&mut rng, n + 5, d, 0.2);
        let ab = fid(&a, &b).unwrap();
        assert!((ab - fid(&b, &a).unwrap()).abs() <= 1e-4);
        assert!(fid(&a, &a).unwrap() <= 1e-6);
        assert!(ab >= 0.0);

        // random orthogonal Q from the eigenvectors of a random symmetric matrix
        let (_, q) = forge_core::metrics::symmetric_eigen(&random_psd(&mut rng, d, d)).unwrap();
        let rotate = |f: &FeatureSet| {
            let rows: Vec<f32> = (0..f.n())
                .flat_map(|i| {
                    let r = f.row(i);
                    (0..d)
                        .map(|j| (0..d).map(|k| f64::from(r[k]) * q[(k, j)]).sum::<f64>() as f32)
                        .collect::<Vec<_>>()
                })
                .collect();
            FeatureSet::new(f.n(), d, rows).unwrap()
        };
        let rotated = fid(&rotate(&a), &rotate(&b)).unwrap();
        assert!((ab - rotated).abs() <= 1e-4, "{ab} vs {rotated}");
    }
}

#[test]
fn row_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (n, d) = (30, 6);
    let a = random_features(&mut rng, n, d, 0.0);
    let b = random_features(&mut rng, n, d, 0.5);
    let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
    let pa = FeatureSet::new(n, d, perm.iter().flat_map(|&i| a.row(i).to_vec()).collect()).unwrap();
    let (m1, m2) = (moments(&a).unwrap(), moments(&pa).unwrap());
    for (x, y) in m1.mean.iter().zip(&m2.mean) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(m1.cov.sub(&m2.cov).frobenius() < 1e-12);
    assert!((kid(&a, &b).unwrap() - kid(&pa, &b).unwrap()).abs() < 1e-9);
    assert!((fid(&a, &b).unwrap() - fid(&pa, &b).unwrap()).abs() < 1e-9);
    assert!(m1.cov.max_asymmetry() <= 1e-6);
    assert!((0..d).all(|i| m1.cov[(i, i)] >= 0.0));
}
