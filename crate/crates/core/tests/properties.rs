use proptest::prelude::*;

use diffatlas::data::{load_obj, load_ply, save_obj, save_ply, PointCloud};
use diffatlas::losses::chamfer;
use diffatlas::metrics::{angular_error_indexed, collapse_count, overlap_counts};
use diffatlas::neighbors::{brute_force_nearest, KdIndex};
use diffatlas::vec3::Vec3;

fn point() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-10.0f64..10.0)
}

/// Points on a coarse lattice, so equal distances are common.
fn lattice_point() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3((0i32..4).prop_map(|i| f64::from(i) * 0.5))
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(prop_oneof![point(), lattice_point()], 1..max)
}

fn unit() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-4)
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.map(|x| x / n)
        })
}

fn rotate(r: &[[f64; 3]; 3], p: Vec3) -> Vec3 {
    [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2])
}

/// Rotation from Euler angles.
fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    [
        [ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
        [sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
        [-sb, cb * sc, cb * cc],
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kd_nearest_matches_brute_force(pts in cloud(300), queries in cloud(30)) {
        let index = KdIndex::build(&pts).unwrap();
        for q in queries {
            prop_assert_eq!(index.nearest(q), brute_force_nearest(&pts, q));
        }
    }

    #[test]
    fn chamfer_is_symmetric_and_zero_on_itself(a in cloud(100), b in cloud(100)) {
        let ab = chamfer(std::slice::from_ref(&a), &b).unwrap();
        let ba = chamfer(std::slice::from_ref(&b), &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(chamfer(std::slice::from_ref(&a), &a).unwrap(), 0.0);
    }

    #[test]
    fn collapse_count_is_scale_invariant(
        areas in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1e-3, 0.0f64..10.0], 1..20),
        scale in 1e-3f64..1e3,
    ) {
        let base = collapse_count(&areas, 1e-3);
        prop_assert!(base.collapsed <= areas.len());
        let scaled: Vec<f64> = areas.iter().map(|a| a * scale).collect();
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        // scaling by a power of two keeps every comparison exact
        let pow2: Vec<f64> = areas.iter().map(|a| a * 8.0).collect();
        prop_assert_eq!(collapse_count(&pow2, 1e-3), base);
        if mean > 0.0 {
            let zeros = areas.iter().filter(|&&a| a == 0.0).count();
            prop_assert!(base.collapsed >= zeros);
            prop_assert!(base.collapsed < areas.len());
            prop_assert!(!collapse_count(&scaled, 1e-3).degenerate);
        } else {
            prop_assert!(base.degenerate);
            prop_assert_eq!(base.collapsed, areas.len());
        }
    }

    #[test]
    fn overlap_is_monotone_and_bounded(
        patches in prop::collection::vec(cloud(40), 1..5),
        gt in cloud(60),
        mut ts in prop::collection::vec(1e-3f64..5.0, 1..6),
    ) {
        ts.sort_by(f64::total_cmp);
        let vals = overlap_counts(&patches, &gt, &ts).unwrap();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(vals.iter().all(|&v| (0.0..=patches.len() as f64).contains(&v)));
    }

    #[test]
    fn angular_error_ignores_orientation_and_rigid_rotation(
        pts in prop::collection::vec(point(), 1..40),
        normals in prop::collection::vec(unit(), 40),
        gt in prop::collection::vec(point(), 1..40),
        gt_normals in prop::collection::vec(unit(), 40),
        angles in prop::array::uniform3(0.0f64..std::f64::consts::TAU),
    ) {
        let normals = &normals[..pts.len()];
        let gt_normals = &gt_normals[..gt.len()];
        let index = KdIndex::build(&gt).unwrap();
        let base = angular_error_indexed(&pts, normals, gt_normals, &index);
        prop_assert!((0.0..=90.0).contains(&base));
        let flipped: Vec<Vec3> = normals.iter().map(|n| n.map(|x| -x)).collect();
        prop_assert_eq!(angular_error_indexed(&pts, &flipped, gt_normals, &index).to_bits(), base.to_bits());

        let r = rotation(angles[0], angles[1], angles[2]);
        let rot = |v: &[Vec3]| v.iter().map(|&p| rotate(&r, p)).collect::<Vec<_>>();
        let rgt = rot(&gt);
        let rindex = KdIndex::build(&rgt).unwrap();
        let rotated = angular_error_indexed(&rot(&pts), &rot(normals), &rot(gt_normals), &rindex);
        // rotation can break near-ties between nearest neighbours, so only
        // compare when every assignment is unambiguous
        let unambiguous = pts.iter().all(|&p| {
            let mut d: Vec<f64> = gt.iter().map(|&q| diffatlas::vec3::dist2(p, q)).collect();
            d.sort_by(f64::total_cmp);
            d.len() < 2 || d[1] - d[0] > 1e-6
        });
        if unambiguous {
            prop_assert!((rotated - base).abs() < 1e-4, "{} vs {}", rotated, base);
        }
    }

    #[test]
    fn ply_and_obj_round_trip_bit_exact(pts in prop::collection::vec(point(), 1..100), seed_normals in prop::collection::vec(unit(), 100)) {
        let dir = tempfile::tempdir().unwrap();
        let normals = seed_normals[..pts.len()].to_vec();
        let c = PointCloud::new(pts).with_normals(normals).unwrap();
        let ply = dir.path().join("c.ply");
        save_ply(&ply, &c).unwrap();
        prop_assert_eq!(&load_ply(&ply).unwrap().0, &c);
        let obj = dir.path().join("c.obj");
        save_obj(&obj, &c).unwrap();
        prop_assert_eq!(&load_obj(&obj).unwrap().0, &c);
    }
}
