//! Pixel-grid containers and rigid-transform helpers shared by all modules.

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Camera-to-world rigid transform.
pub type Pose = Isometry3<f64>;

/// Per-pixel unit viewing directions with a validity mask (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct RayField {
    pub width: usize,
    pub height: usize,
    pub dirs: Vec<Vec3>,
    pub mask: Vec<bool>,
}

/// Per-pixel scalar values with a validity mask (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Radial distance along each ray, in meters.
pub type RadialMap = ScalarMap;
/// Predicted uncertainty of the radial distance, in meters.
pub type UncertaintyMap = ScalarMap;

/// Camera-local 3D points, one per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMap {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Vec3>,
    pub mask: Vec<bool>,
}

/// Unit surface normals, one per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Vec3>,
    pub mask: Vec<bool>,
}

/// Linear RGB image with values nominally in [0, 1] (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "image: expected {} pixels for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

fn check_len(what: &str, width: usize, height: usize, a: usize, b: usize) -> Result<()> {
    if a != width * height || b != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected {} entries for {width}x{height}, got {a} values and {b} mask entries",
            width * height
        )));
    }
    Ok(())
}

impl RayField {
    pub fn new(width: usize, height: usize, dirs: Vec<Vec3>, mask: Vec<bool>) -> Result<Self> {
        check_len("ray field", width, height, dirs.len(), mask.len())?;
        Ok(Self {
            width,
            height,
            dirs,
            mask,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn same_shape(&self, w: usize, h: usize) -> bool {
        self.width == w && self.height == h
    }
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        check_len("scalar map", width, height, values.len(), mask.len())?;
        Ok(Self {
            width,
            height,
            values,
            mask,
        })
    }

    /// All-valid map filled with `value`.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
            mask: vec![true; width * height],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PointMap {
    pub fn new(width: usize, height: usize, points: Vec<Vec3>, mask: Vec<bool>) -> Result<Self> {
        check_len("point map", width, height, points.len(), mask.len())?;
        Ok(Self {
            width,
            height,
            points,
            mask,
        })
    }

    /// `points = dirs ⊙ radial`, valid where both inputs are valid.
    pub fn from_rays_and_radial(rays: &RayField, radial: &RadialMap) -> Result<Self> {
        if !rays.same_shape(radial.width, radial.height) {
            return Err(Error::DimensionMismatch(format!(
                "rays {}x{} vs radial {}x{}",
                rays.width, rays.height, radial.width, radial.height
            )));
        }
        let n = rays.len();
        let mut points = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for i in 0..n {
            let ok = rays.mask[i] && radial.mask[i];
            mask.push(ok);
            points.push(if ok { rays.dirs[i] * radial.values[i] } else { Vec3::zeros() });
        }
        Ok(Self {
            width: rays.width,
            height: rays.height,
            points,
            mask,
        })
    }

    /// Euclidean norm of each point.
    pub fn radial(&self) -> RadialMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            values: self.points.iter().map(|p| p.norm()).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Points expressed in the world frame.
    pub fn to_world(&self, pose: &Pose) -> Vec<Vec3> {
        self.points
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(p, _)| pose.transform_point(&(*p).into()).coords)
            .collect()
    }
}

impl NormalMap {
    pub fn new(width: usize, height: usize, normals: Vec<Vec3>, mask: Vec<bool>) -> Result<Self> {
        check_len("normal map", width, height, normals.len(), mask.len())?;
        Ok(Self {
            width,
            height,
            normals,
            mask,
        })
    }
}

pub fn rot_x(angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), angle)
}

pub fn rot_y(angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), angle)
}

pub fn rot_z(angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), angle)
}

/// Pose from a rotation matrix and a translation.
pub fn pose_from_parts(rotation: &Rotation3<f64>, translation: &Vec3) -> Pose {
    Isometry3::from_parts(
        Translation3::from(*translation),
        UnitQuaternion::from_rotation_matrix(rotation),
    )
}

/// `T_{i<-j} = T_i^{-1} T_j`.
pub fn relative_pose(ti: &Pose, tj: &Pose) -> Pose {
    ti.inverse() * tj
}

/// Geodesic angle between two rotation matrices, in radians.
///
/// Evaluated as `atan2(sin, cos)` of the relative rotation, which equals
/// `arccos((tr(R_gtᵀ R_hat) − 1) / 2)` but stays accurate near zero and is
/// exactly zero for identical inputs.
pub fn rotation_geodesic(r_hat: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let m = r_gt.transpose() * r_hat;
    let cos = (m.trace() - 1.0) / 2.0;
    let sin = 0.5
        * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
    sin.atan2(cos)
}

/// Geodesic angle between the rotation parts of two poses, in radians.
pub fn pose_rotation_geodesic(a: &Pose, b: &Pose) -> f64 {
    rotation_geodesic(
        a.rotation.to_rotation_matrix().matrix(),
        b.rotation.to_rotation_matrix().matrix(),
    )
}

/// Angle between two vectors in radians; `None` when either is zero.
pub fn angle_between(a: &Vec3, b: &Vec3) -> Option<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    // atan2 form stays accurate for nearly parallel vectors
    Some(a.cross(b).norm().atan2(a.dot(b)))
}

/// Spherical angles of a direction: polar angle from +y (north) in `[0, π]`
/// and azimuth `atan2(x, z)` wrapped to `[0, 2π)`.
pub fn direction_to_angles(d: &Vec3) -> (f64, f64) {
    let n = d.norm();
    let theta = (d.y / n).clamp(-1.0, 1.0).acos();
    let mut phi = d.x.atan2(d.z);
    if phi < 0.0 {
        phi += std::f64::consts::TAU;
    }
    if phi >= std::f64::consts::TAU {
        phi -= std::f64::consts::TAU;
    }
    (theta, phi)
}

/// Inverse of [`direction_to_angles`].
pub fn angles_to_direction(theta: f64, phi: f64) -> Vec3 {
    let s = theta.sin();
    Vec3::new(s * phi.sin(), theta.cos(), s * phi.cos())
}

/// Wraps an angle difference into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn geodesic_of_z_rotation() {
        let r = rot_z(PI / 6.0);
        assert_relative_eq!(rotation_geodesic(r.matrix(), &Matrix3::identity()), PI / 6.0, epsilon = 1e-12);
        assert_eq!(rotation_geodesic(r.matrix(), r.matrix()), 0.0);
    }

    #[test]
    fn relative_pose_identity_and_translation() {
        let t = pose_from_parts(&rot_y(0.3), &Vec3::new(1.0, 2.0, 3.0));
        let rel = relative_pose(&t, &t);
        assert!(rel.translation.vector.norm() < 1e-12);
        assert!(rel.rotation.angle() < 1e-12);

        let tj = pose_from_parts(&Rotation3::identity(), &Vec3::new(1.0, 0.0, 0.0));
        let rel = relative_pose(&Pose::identity(), &tj);
        assert_eq!(rel.translation.vector, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(rel.rotation.angle(), 0.0);
    }

    #[test]
    fn angles_round_trip() {
        for &(t, p) in &[(0.3, 0.1), (1.2, 3.0), (2.9, 6.0), (PI / 2.0, 0.0)] {
            let (t2, p2) = direction_to_angles(&angles_to_direction(t, p));
            assert_relative_eq!(t, t2, epsilon = 1e-12);
            assert_relative_eq!(p, p2, epsilon = 1e-12);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(2.0 * PI + 0.1), 0.1, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(PI), PI, epsilon = 1e-12);
    }

    #[test]
    fn point_map_radial_matches_norm() {
        let rays = RayField::new(2, 1, vec![Vec3::z(), Vec3::new(0.6, 0.0, 0.8)], vec![true, true]).unwrap();
        let radial = ScalarMap::new(2, 1, vec![2.0, 3.0], vec![true, false]).unwrap();
        let pm = PointMap::from_rays_and_radial(&rays, &radial).unwrap();
        assert_eq!(pm.mask, vec![true, false]);
        assert_relative_eq!(pm.radial().values[0], 2.0);
    }
}
