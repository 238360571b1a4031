//! Analytic box-interior scenes: exact radial distances, points, normals
//! and textured images for any camera model, plus camera trajectories.

use std::f64::consts::{PI, TAU};

use nalgebra::{Quaternion, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::ViewSample;
use crate::camera::{ray_field, CameraModel};
use crate::error::{Error, Result};
use crate::geometry::{rot_y, Image, NormalMap, PointMap, Pose, RadialMap, RayField, ScalarMap, Vec3};
use crate::par;

/// Procedural surface texture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    /// 0.25 m checkerboard blended with a linear gradient across the face.
    CheckerGradient,
    /// Smooth product of sinusoids with a 0.5 m wavelength.
    Sinusoid,
}

/// Axis-aligned box centered at the origin, viewed from inside.
///
/// Faces are indexed `+x, −x, +y, −y, +z, −z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxScene {
    /// Full interior extent along each axis, in meters.
    pub size: [f64; 3],
    pub textures: [Texture; 6],
    /// Camera-to-world poses as `[tx, ty, tz, qx, qy, qz, qw]`.
    #[serde(default, with = "pose_list")]
    pub trajectory: Vec<Pose>,
}

mod pose_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(poses: &[Pose], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<[f64; 7]> = poses
            .iter()
            .map(|p| {
                let t = p.translation.vector;
                let q = p.rotation.quaternion();
                [t.x, t.y, t.z, q.i, q.j, q.k, q.w]
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Pose>, D::Error> {
        let rows: Vec<[f64; 7]> = Vec::deserialize(d)?;
        rows.into_iter()
            .map(|r| {
                let q = Quaternion::new(r[6], r[3], r[4], r[5]);
                if !(q.norm() > 1e-12) {
                    return Err(serde::de::Error::custom("zero quaternion in trajectory"));
                }
                Ok(Pose::from_parts(
                    Translation3::new(r[0], r[1], r[2]),
                    UnitQuaternion::from_quaternion(q),
                ))
            })
            .collect()
    }
}

/// Inward unit normal of each face.
pub const FACE_NORMALS: [[f64; 3]; 6] = [
    [-1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, -1.0],
    [0.0, 0.0, 1.0],
];

impl BoxScene {
    pub fn new(size: [f64; 3], textures: [Texture; 6]) -> Result<Self> {
        let scene = Self {
            size,
            textures,
            trajectory: Vec::new(),
        };
        scene.validate()?;
        Ok(scene)
    }

    /// A box with checker-gradient textures on every face.
    pub fn checkered(size: [f64; 3]) -> Result<Self> {
        Self::new(size, [Texture::CheckerGradient; 6])
    }

    pub fn validate(&self) -> Result<()> {
        if self.size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(format!("box size must be positive, got {:?}", self.size)));
        }
        for (i, p) in self.trajectory.iter().enumerate() {
            if !self.contains(&p.translation.vector) {
                return Err(Error::OutOfRange(format!("trajectory pose {i} lies outside the box")));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let scene: Self = serde_json::from_str(s)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn half_extents(&self) -> Vec3 {
        Vec3::new(self.size[0], self.size[1], self.size[2]) * 0.5
    }

    /// Strictly inside the box.
    pub fn contains(&self, p: &Vec3) -> bool {
        let h = self.half_extents();
        (0..3).all(|c| p[c].abs() < h[c])
    }

    /// Distance from a point to the nearest face plane.
    pub fn distance_to_surface(&self, p: &Vec3) -> f64 {
        let h = self.half_extents();
        (0..3).map(|c| (h[c] - p[c].abs()).abs()).fold(f64::INFINITY, f64::min)
    }

    /// First surface hit of the ray `origin + t·dir` from inside the box:
    /// the distance `t` and the face index.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, usize)> {
        let h = self.half_extents();
        let mut best: Option<(f64, usize)> = None;
        for c in 0..3 {
            if dir[c] == 0.0 {
                continue;
            }
            let (plane, face) = if dir[c] > 0.0 { (h[c], 2 * c) } else { (-h[c], 2 * c + 1) };
            let t = (plane - origin[c]) / dir[c];
            if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, face));
            }
        }
        best
    }

    /// Texture color of a surface point on `face`.
    pub fn shade(&self, face: usize, p: &Vec3) -> [f64; 3] {
        let axis = face / 2;
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        let h = self.half_extents();
        let u = p[a];
        let v = p[b];
        let un = (u / h[a] + 1.0) * 0.5;
        let vn = (v / h[b] + 1.0) * 0.5;
        let tint = face as f64 / 5.0;
        match self.textures[face] {
            Texture::CheckerGradient => {
                let cell = ((u / 0.25).floor() + (v / 0.25).floor()).rem_euclid(2.0);
                let c = 0.25 + 0.5 * cell;
                [0.6 * c + 0.4 * un, 0.6 * c + 0.4 * vn, 0.6 * c + 0.4 * tint]
            }
            Texture::Sinusoid => {
                let s = (TAU * u / 0.5).sin() * (TAU * v / 0.5).cos();
                [
                    0.5 + 0.35 * s,
                    0.5 + 0.25 * (TAU * (u + v) / 0.7).sin(),
                    0.3 + 0.2 * tint + 0.2 * (TAU * v / 0.6).cos(),
                ]
            }
        }
    }
}

/// Everything a camera sees of a [`BoxScene`], in the camera frame.
#[derive(Clone, Debug)]
pub struct RenderedView {
    pub cam: CameraModel,
    pub pose: Pose,
    pub rays: RayField,
    pub radial: RadialMap,
    pub points: PointMap,
    /// Inward face normals expressed in the camera frame.
    pub normals: NormalMap,
    pub image: Image,
    /// Face index per pixel, `None` where the ray is invalid.
    pub faces: Vec<Option<usize>>,
}

impl RenderedView {
    pub fn to_view_sample(&self) -> ViewSample {
        ViewSample {
            image: self.image.clone(),
            radial: self.radial.clone(),
            cam: self.cam.clone(),
            pose: self.pose,
        }
    }
}

/// Exact per-pixel ray casting against the box interior.
pub fn render_view(scene: &BoxScene, cam: &CameraModel, pose: &Pose) -> Result<RenderedView> {
    scene.validate()?;
    cam.validate()?;
    let origin = pose.translation.vector;
    if !scene.contains(&origin) {
        return Err(Error::OutOfRange(format!("camera at {origin:?} is not inside the box")));
    }
    let rays = ray_field(cam);
    let rot = pose.rotation;
    let inv = rot.inverse();
    let hits = par::map_range(rays.len(), |i| {
        if !rays.mask[i] {
            return None;
        }
        let d = rays.dirs[i];
        let dw = rot * d;
        let (t, face) = scene.intersect(&origin, &dw)?;
        let hit = origin + dw * t;
        let n = FACE_NORMALS[face];
        let normal = inv * Vec3::new(n[0], n[1], n[2]);
        Some((d * t, normal, scene.shade(face, &hit), face))
    });
    let (w, h) = (rays.width, rays.height);
    let mask: Vec<bool> = hits.iter().map(Option::is_some).collect();
    let points: Vec<Vec3> = hits.iter().map(|o| o.map_or(Vec3::zeros(), |x| x.0)).collect();
    let radial = ScalarMap {
        width: w,
        height: h,
        values: points.iter().map(|p| p.norm()).collect(),
        mask: mask.clone(),
    };
    let normals = NormalMap {
        width: w,
        height: h,
        normals: hits.iter().map(|o| o.map_or(Vec3::zeros(), |x| x.1)).collect(),
        mask: mask.clone(),
    };
    let image = Image {
        width: w,
        height: h,
        data: hits.iter().map(|o| o.map_or([0.0; 3], |x| x.2)).collect(),
    };
    let faces = hits.iter().map(|o| o.map(|x| x.3)).collect();
    Ok(RenderedView {
        cam: cam.clone(),
        pose: *pose,
        rays,
        radial,
        points: PointMap {
            width: w,
            height: h,
            points,
            mask,
        },
        normals,
        image,
        faces,
    })
}

/// Camera path shapes for [`make_trajectory`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    /// Horizontal circle about the box center; each camera faces along
    /// its position's azimuth.
    Circle { radius: f64 },
    /// Evenly spaced along x through the center, all facing +z.
    Line { length: f64 },
    /// Uniform positions within the central 80% of the box and uniformly
    /// random orientations.
    Random,
}

/// `n` camera poses inside the box following `pattern`.
pub fn make_trajectory(scene: &BoxScene, n: usize, pattern: Pattern, seed: u64) -> Result<Vec<Pose>> {
    scene.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("trajectory needs at least one pose".into()));
    }
    let poses: Vec<Pose> = match pattern {
        Pattern::Circle { radius } => (0..n)
            .map(|i| {
                let a = TAU * i as f64 / n as f64;
                let p = Vec3::new(radius * a.sin(), 0.0, radius * a.cos());
                Pose::from_parts(Translation3::from(p), UnitQuaternion::from_rotation_matrix(&rot_y(a)))
            })
            .collect(),
        Pattern::Line { length } => (0..n)
            .map(|i| {
                let x = if n == 1 {
                    0.0
                } else {
                    -0.5 * length + length * i as f64 / (n - 1) as f64
                };
                Pose::from_parts(Translation3::new(x, 0.0, 0.0), UnitQuaternion::identity())
            })
            .collect(),
        Pattern::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = scene.half_extents() * 0.8;
            (0..n)
                .map(|_| {
                    let p = Vec3::new(
                        rng.random_range(-h.x..h.x),
                        rng.random_range(-h.y..h.y),
                        rng.random_range(-h.z..h.z),
                    );
                    Pose::from_parts(Translation3::from(p), random_rotation(&mut rng))
                })
                .collect()
        }
    };
    for (i, p) in poses.iter().enumerate() {
        if !p.translation.vector.iter().all(|c| c.is_finite()) || !scene.contains(&p.translation.vector) {
            return Err(Error::OutOfRange(format!("pose {i} of the {pattern:?} pattern lies outside the box")));
        }
    }
    Ok(poses)
}

/// Uniformly distributed rotation (Shoemake's method).
pub fn random_rotation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    UnitQuaternion::from_quaternion(Quaternion::new(
        b * (2.0 * PI * u3).cos(),
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
    ))
}
