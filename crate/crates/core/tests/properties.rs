use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

use reframe_core::camera::{apply_relative, project, relative_pose, so3_exp, unproject, Intrinsics, PoseSE3};
use reframe_core::geometry::{DepthMap, FlowField};
use reframe_core::grid::{FeatureMap, Frame, Grid};
use reframe_core::io::{decode_camt, decode_flo, decode_pfm, encode_camt, encode_flo, encode_pfm, Tensor};
use reframe_core::metrics::{psnr, ssim};
use reframe_core::warp::{backward_sample, forward_warp};

fn k() -> Intrinsics {
    Intrinsics::new(120.0, 110.0, 40.0, 30.0, 80, 60).unwrap()
}

fn pose() -> impl Strategy<Value = PoseSE3> {
    (prop::array::uniform3(-1.0..1.0f64), prop::array::uniform3(-2.0..2.0f64)).prop_map(|(w, t)| {
        PoseSE3::new(so3_exp(&Vector3::from(w)), Vector3::from(t)).unwrap()
    })
}

fn frame(w: usize, h: usize) -> impl Strategy<Value = Frame> {
    prop::collection::vec(prop::array::uniform3(any::<u8>()), w * h)
        .prop_map(move |px| Grid::from_vec(w, h, px).unwrap())
}

proptest! {
    #[test]
    fn unproject_then_project(u in 0.0..80.0f64, v in 0.0..60.0f64, d in 0.1..100.0f64) {
        let p = unproject(&Vector2::new(u, v), d, &k()).unwrap();
        let back = project(&p, &k()).unwrap();
        prop_assert!((back.pixel - Vector2::new(u, v)).norm() < 1e-9);
        prop_assert!((back.depth - d).abs() < 1e-9 * d);
    }

    #[test]
    fn relative_pose_reaches_target(src in pose(), tgt in pose(), x in prop::array::uniform3(-5.0..5.0f64)) {
        let rel = relative_pose(&src, &tgt);
        let reached = apply_relative(&src, &rel);
        let x = Vector3::from(x);
        prop_assert!((reached.transform_point(&x) - tgt.transform_point(&x)).norm() < 1e-9);
        let back = relative_pose(&tgt, &src);
        let round = rel.pose.compose(&back.pose);
        prop_assert!((round.transform_point(&x) - x).norm() < 1e-9);
    }

    #[test]
    fn metrics_are_symmetric(a in frame(16, 14), b in frame(16, 14)) {
        let p1 = psnr(&a, &b, None).unwrap();
        let p2 = psnr(&b, &a, None).unwrap();
        prop_assert_eq!(p1, p2);
        let s1 = ssim(&a, &b, None).unwrap();
        let s2 = ssim(&b, &a, None).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&s1));
    }

    #[test]
    fn resampling_is_linear(
        a in prop::collection::vec(-1.0..1.0f64, 6 * 5 * 2),
        b in prop::collection::vec(-1.0..1.0f64, 6 * 5 * 2),
        f in prop::collection::vec(prop::array::uniform2(-3.0..3.0f64), 6 * 5),
        alpha in -2.0..2.0f64,
    ) {
        let fa = FeatureMap::from_vec(6, 5, 2, a.clone()).unwrap();
        let fb = FeatureMap::from_vec(6, 5, 2, b.clone()).unwrap();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
        let fm = FeatureMap::from_vec(6, 5, 2, mix).unwrap();
        let flow = FlowField {
            vectors: Grid::from_vec(6, 5, f.into_iter().map(Vector2::from).collect()).unwrap(),
            valid: Grid::new(6, 5, true),
            target_depth: Grid::new(6, 5, f64::NAN),
        };
        let (ra, _) = backward_sample(&fa, &flow).unwrap();
        let (rb, _) = backward_sample(&fb, &flow).unwrap();
        let (rm, _) = backward_sample(&fm, &flow).unwrap();
        for i in 0..rm.as_slice().len() {
            let expected = alpha * ra.as_slice()[i] + rb.as_slice()[i];
            prop_assert!((rm.as_slice()[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn warp_partitions_pixels(
        img in frame(12, 9),
        f in prop::collection::vec(prop::array::uniform2(-4.0..4.0f64), 12 * 9),
        d in prop::collection::vec(0.5..5.0f64, 12 * 9),
    ) {
        let flow = FlowField {
            vectors: Grid::from_vec(12, 9, f.into_iter().map(Vector2::from).collect()).unwrap(),
            valid: Grid::new(12, 9, true),
            target_depth: Grid::from_vec(12, 9, d).unwrap(),
        };
        let w = forward_warp(&img, &flow).unwrap();
        for i in 0..w.hole_mask.len() {
            prop_assert_eq!(w.hole_mask.as_slice()[i], w.depth_buffer.as_slice()[i].is_infinite());
        }
        // every filled pixel shows some source colour
        for (i, px) in w.image.as_slice().iter().enumerate() {
            if !w.hole_mask.as_slice()[i] {
                prop_assert!(img.as_slice().contains(px));
            }
        }
    }

    #[test]
    fn pfm_round_trip(vals in prop::collection::vec(prop_oneof![-1.0..100.0f32, Just(f32::NAN), Just(0.0f32)], 7 * 4)) {
        let d = DepthMap::from_values(Grid::from_vec(7, 4, vals.iter().map(|&v| v as f64).collect()).unwrap());
        let bytes = encode_pfm(&d);
        let back = decode_pfm(&bytes).unwrap();
        prop_assert_eq!(encode_pfm(&back), bytes);
        prop_assert_eq!(back.valid, d.valid);
    }

    #[test]
    fn flo_round_trip(vs in prop::collection::vec((prop::array::uniform2(-500.0..500.0f32), any::<bool>()), 5 * 3)) {
        let flow = FlowField {
            vectors: Grid::from_vec(5, 3, vs.iter().map(|(v, _)| Vector2::new(v[0] as f64, v[1] as f64)).collect()).unwrap(),
            valid: Grid::from_vec(5, 3, vs.iter().map(|(_, ok)| *ok).collect()).unwrap(),
            target_depth: Grid::new(5, 3, f64::NAN),
        };
        let back = decode_flo(&encode_flo(&flow)).unwrap();
        prop_assert_eq!(&back.valid, &flow.valid);
        for i in 0..15 {
            if flow.valid.as_slice()[i] {
                prop_assert_eq!(back.vectors.as_slice()[i], flow.vectors.as_slice()[i]);
            }
        }
    }

    #[test]
    fn camt_round_trip(dims in prop::collection::vec(1usize..5, 0..4), seed in any::<u32>()) {
        let n: usize = dims.iter().product();
        let data = (0..n).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32))).collect();
        let t = Tensor::new(dims, data).unwrap();
        let bytes = encode_camt(&t);
        let back = decode_camt(&bytes).unwrap();
        prop_assert_eq!(encode_camt(&back), bytes);
    }
}
