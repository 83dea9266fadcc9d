//! Property tests for the crate-wide invariants: sector partitioning,
//! monotone refinement, the corner rule, crop/uncrop algebra, fusion, and
//! projection round trips.

use proptest::prelude::*;

use slicefuse_core::bev::BevMap;
use slicefuse_core::calib::{cast_pixel_ray, project_point, CameraRig, Extrinsics, Intrinsics};
use slicefuse_core::fusion::{crop, fuse, quadrants_of_slice, uncrop, ALL_QUADRANTS};
use slicefuse_core::rng::DetRng;
use slicefuse_core::slicing::{
    assign_boxes_to_slice, azimuth_deg, box_corners_bev, box_in_slice, slice_sweep, Box3D,
    RawPoint, SliceSpec,
};
use nalgebra::Vector3;

fn random_points(seed: u64, n: usize) -> Vec<RawPoint> {
    let mut rng = DetRng::from_seed(seed);
    (0..n)
        .map(|_| RawPoint {
            x: rng.uniform(-60.0, 60.0) as f32,
            y: rng.uniform(-60.0, 60.0) as f32,
            z: rng.uniform(-3.0, 5.0) as f32,
            r: rng.next_f64() as f32,
            m: rng.uniform(0.0, 0.05) as f32,
        })
        .collect()
}

fn random_boxes(seed: u64, n: usize) -> Vec<Box3D> {
    let mut rng = DetRng::from_seed(seed);
    (0..n)
        .map(|_| {
            Box3D::new(
                Vector3::new(rng.uniform(-40.0, 40.0), rng.uniform(-40.0, 40.0), 0.0),
                (rng.uniform(0.5, 6.0), rng.uniform(0.4, 2.5), rng.uniform(0.5, 2.0)),
                rng.uniform(-std::f64::consts::PI, std::f64::consts::PI),
                rng.next_index(3) as u32,
                1.0,
            )
            .unwrap()
        })
        .collect()
}

fn random_map(seed: u64, nx: usize, ny: usize, c: usize) -> BevMap {
    let mut rng = DetRng::from_seed(seed);
    let mut map = BevMap::zeros(nx, ny, c);
    for v in map.data_mut() {
        *v = rng.uniform(-4.0, 4.0) as f32;
    }
    for i in 0..nx {
        for j in 0..ny {
            let occupied = rng.next_f64() < 0.25;
            map.set_occupied(i, j, occupied);
        }
    }
    map
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn slices_partition_the_sweep(seed in any::<u64>(), n in prop::sample::select(vec![1u32, 4, 8, 16, 32])) {
        let points = random_points(seed, 2000);
        let slices = slice_sweep(&points, n).unwrap();
        prop_assert_eq!(slices.len(), n as usize);
        let total: usize = slices.iter().map(|s| s.points.len()).sum();
        prop_assert_eq!(total, points.len());
        for sl in &slices {
            for p in &sl.points {
                let az = azimuth_deg(p.x as f64, p.y as f64).unwrap();
                prop_assert!(sl.spec.contains_deg(az));
                prop_assert_eq!(p.s, sl.spec.index);
            }
        }
    }

    #[test]
    fn refinement_is_monotone(seed in any::<u64>(), n in prop::sample::select(vec![1u32, 4, 8, 16])) {
        // Every 2n-slice is a subset of exactly one n-slice.
        let points = random_points(seed, 1000);
        let coarse = slice_sweep(&points, n).unwrap();
        let fine = slice_sweep(&points, 2 * n).unwrap();
        for fs in &fine {
            let parent = (fs.spec.index / 2) as usize;
            let parent_set: Vec<(u32, u32, u32)> = coarse[parent]
                .points
                .iter()
                .map(|p| (p.x.to_bits(), p.y.to_bits(), p.m.to_bits()))
                .collect();
            for p in &fs.points {
                prop_assert!(parent_set.contains(&(p.x.to_bits(), p.y.to_bits(), p.m.to_bits())));
            }
        }
    }

    #[test]
    fn corner_rule_covers_every_box(seed in any::<u64>(), n in prop::sample::select(vec![4u32, 8, 16, 32])) {
        // The union of per-slice assignments is the full box set, and each
        // box appears in exactly the sectors holding at least one corner.
        let boxes = random_boxes(seed, 40);
        let mut seen = vec![false; boxes.len()];
        for idx in 0..n {
            let spec = SliceSpec::new(n, idx).unwrap();
            for (bi, bx) in boxes.iter().enumerate() {
                let assigned = box_in_slice(bx, &spec);
                let expected = box_corners_bev(bx)
                    .iter()
                    .any(|&(x, y)| azimuth_deg(x, y).map(|az| spec.contains_deg(az)).unwrap_or(false));
                prop_assert_eq!(assigned, expected);
                seen[bi] |= assigned;
            }
            prop_assert_eq!(
                assign_boxes_to_slice(&boxes, &spec).len(),
                boxes.iter().filter(|b| box_in_slice(b, &spec)).count()
            );
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn crop_uncrop_algebra_full_scale(seed in any::<u64>()) {
        // Acceptance-scale check on 512x512 maps.
        let map = random_map(seed, 512, 512, 2);
        for q in ALL_QUADRANTS {
            let small = crop(&map, q).unwrap();
            let back = uncrop(&small, q, 512, 512).unwrap();
            prop_assert_eq!(crop(&back, q).unwrap(), small.clone());
            let (i0, j0) = q.grid_offset(512, 512);
            for i in (0..512).step_by(31) {
                for j in (0..512).step_by(31) {
                    let inside = (i0..i0 + 256).contains(&i) && (j0..j0 + 256).contains(&j);
                    let expect = if inside { map.at(i, j, 0) } else { 0.0 };
                    prop_assert_eq!(back.at(i, j, 0), expect);
                }
            }
        }
    }

    #[test]
    fn fuse_commutes_with_crop_full_scale(seed in any::<u64>()) {
        let a = random_map(seed, 512, 512, 2);
        let b = random_map(seed.wrapping_add(1), 512, 512, 3);
        let fused = fuse(&a, &b).unwrap();
        for q in ALL_QUADRANTS {
            let lhs = crop(&fused, q).unwrap();
            let rhs = fuse(&crop(&a, q).unwrap(), &crop(&b, q).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn quadrant_count_matches_sector_width(n in prop::sample::select(vec![4u32, 8, 16, 32]), idx in 0u32..32) {
        let idx = idx % n;
        let spec = SliceSpec::new(n, idx).unwrap();
        let quadrants = quadrants_of_slice(&spec);
        prop_assert!(!quadrants.is_empty());
        if spec.width_deg() <= 90.0 {
            prop_assert!(quadrants.len() <= 2);
        }
    }

    #[test]
    fn projection_round_trip(seed in any::<u64>(), az in 0.0..360.0f64) {
        let intr = Intrinsics::from_hfov(70.0, 1600, 900).unwrap();
        let extr = Extrinsics::facing_azimuth(az);
        let mut rng = DetRng::from_seed(seed);
        for _ in 0..50 {
            let p = Vector3::new(
                rng.uniform(-50.0, 50.0),
                rng.uniform(-50.0, 50.0),
                rng.uniform(-3.0, 5.0),
            );
            if let Some(hit) = project_point(&p, &intr, &extr) {
                let ray = cast_pixel_ray(hit.u, hit.v, &intr, &extr).unwrap();
                prop_assert!(ray.distance_to(&p) < 1e-6);
            }
        }
    }
}

#[test]
fn corner_rule_is_rotation_consistent() {
    // Rotating every box by the sector width shifts its slice set by one.
    let boxes = random_boxes(99, 30);
    let n = 8u32;
    let width = (360.0 / n as f64).to_radians();
    let rotated: Vec<Box3D> = boxes
        .iter()
        .map(|b| {
            let (s, c) = width.sin_cos();
            Box3D::new(
                Vector3::new(
                    c * b.center.x - s * b.center.y,
                    s * b.center.x + c * b.center.y,
                    b.center.z,
                ),
                b.dims,
                b.yaw + width,
                b.class_id,
                b.score,
            )
            .unwrap()
        })
        .collect();
    for idx in 0..n {
        let spec = SliceSpec::new(n, idx).unwrap();
        let next = SliceSpec::new(n, (idx + 1) % n).unwrap();
        for (bx, rx) in boxes.iter().zip(&rotated) {
            assert_eq!(
                box_in_slice(bx, &spec),
                box_in_slice(rx, &next),
                "rotation consistency at sector {idx}"
            );
        }
    }
}

#[test]
fn surround_rig_covers_all_sectors_at_all_granularities() {
    let rig = CameraRig::surround(1600, 900).unwrap();
    for n in [1u32, 2, 4, 8, 16, 32, 64] {
        for idx in 0..n {
            let spec = SliceSpec::new(n, idx).unwrap();
            assert!(
                !slicefuse_core::slicing::cameras_for_slice(&spec, &rig).is_empty(),
                "sector {idx}/{n} has no camera"
            );
        }
    }
}
