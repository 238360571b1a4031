//! File-format round trips.

use nalgebra::{Quaternion, Translation3, UnitQuaternion};
use proptest::prelude::*;
use widefov_core::io::{read_pfm, read_ply, write_pfm, write_ply, Pfm, PointCloud, Trajectory};
use widefov_core::{Image, Pose, RayField, ScalarMap, Vec3};

fn f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3).prop_map(|(x, y, z)| Vec3::new(f32_exact(x), f32_exact(y), f32_exact(z)))
}

proptest! {
    #[test]
    fn pfm_image_round_trip(w in 1usize..12, h in 1usize..12, seed in prop::collection::vec(0.0f64..1.0, 144 * 3)) {
        let data: Vec<[f64; 3]> = (0..w * h).map(|i| [0, 1, 2].map(|c| f32_exact(seed[3 * i + c]))).collect();
        let img = Image::new(w, h, data).unwrap();
        let bytes = Pfm::from_image(&img).to_bytes().unwrap();
        prop_assert_eq!(Pfm::from_bytes(&bytes).unwrap().to_image().unwrap(), img);
    }

    #[test]
    fn pfm_scalar_round_trip_keeps_the_mask(w in 1usize..12, h in 1usize..12, vals in prop::collection::vec(-5.0f64..5.0, 144)) {
        let values: Vec<f64> = vals[..w * h].iter().map(|v| f32_exact(*v)).collect();
        let mask: Vec<bool> = values.iter().map(|v| *v > 0.0).collect();
        let map = ScalarMap::new(w, h, values.clone(), mask.clone()).unwrap();
        let back = Pfm::from_bytes(&Pfm::from_scalar(&map).to_bytes().unwrap()).unwrap().to_positive_scalar().unwrap();
        prop_assert_eq!(&back.mask, &mask);
        for i in 0..w * h {
            if mask[i] {
                prop_assert_eq!(back.values[i], values[i]);
            }
        }
    }

    #[test]
    fn pfm_ray_round_trip(dirs in prop::collection::vec(vec3(), 1..40), drop in 0usize..40) {
        let n = dirs.len();
        let mask: Vec<bool> = (0..n).map(|i| i != drop && dirs[i] != Vec3::zeros()).collect();
        let rays = RayField::new(n, 1, dirs.clone(), mask.clone()).unwrap();
        let back = Pfm::from_bytes(&Pfm::from_rays(&rays).to_bytes().unwrap()).unwrap().to_rays().unwrap();
        prop_assert_eq!(&back.mask, &mask);
        for i in (0..n).filter(|&i| mask[i]) {
            prop_assert_eq!(back.dirs[i], dirs[i]);
        }
    }

    #[test]
    fn ply_round_trip(points in prop::collection::vec(vec3(), 1..50), with_normals in any::<bool>()) {
        let normals = with_normals.then(|| points.iter().map(|p| p * 0.5).collect::<Vec<_>>());
        let cloud = PointCloud::new(points, normals).unwrap();
        prop_assert_eq!(PointCloud::from_bytes(&cloud.to_bytes()).unwrap(), cloud);
    }

    #[test]
    fn tum_round_trip_is_exact(
        raw in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4, -1e4f64..1e4, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.05f64..1.0), 1..20),
    ) {
        let poses: Vec<Pose> = raw
            .iter()
            .map(|&(x, y, z, qx, qy, qz, qw)| {
                Pose::from_parts(Translation3::new(x, y, z), UnitQuaternion::from_quaternion(Quaternion::new(qw, qx, qy, qz)))
            })
            .collect();
        let traj = Trajectory::from_poses(poses);
        prop_assert_eq!(Trajectory::parse(&traj.to_text()).unwrap(), traj);
    }
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let map = ScalarMap::new(3, 2, vec![1.0, 2.0, 0.5, 0.25, 4.0, 8.0], vec![true; 6]).unwrap();
    write_pfm(dir.path().join("m.pfm"), &Pfm::from_scalar(&map)).unwrap();
    assert_eq!(read_pfm(dir.path().join("m.pfm")).unwrap().to_positive_scalar().unwrap(), map);
    let cloud = PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-0.5, 0.25, 8.0)], None).unwrap();
    write_ply(dir.path().join("c.ply"), &cloud).unwrap();
    assert_eq!(read_ply(dir.path().join("c.ply")).unwrap(), cloud);
    assert!(read_pfm(dir.path().join("missing.pfm")).is_err());
}
