//! Wide field-of-view camera models and the pixel <-> ray <-> point mappings.
//!
//! Conventions: pinhole and Kannala-Brandt cameras look down +z with +x
//! right and +y down. Equirectangular cameras put longitude 0 / latitude 0
//! on +z and the north pole on +y. Pixel `(u, v)` covers `[u, u+1) x [v, v+1)`
//! in continuous image coordinates, so its center is `(u + 0.5, v + 0.5)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RayField, Vec3};
use crate::par;

/// Maximum Newton/bisection iterations when inverting the KB polynomial.
pub const KB_MAX_ITER: usize = 50;
/// Residual tolerance of the KB inversion, in radians.
pub const KB_TOLERANCE: f64 = 1e-10;

const KB_MONOTONE_SAMPLES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pinhole {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Kannala-Brandt fisheye: `θ_d = θ + k1 θ³ + k2 θ⁵ + k3 θ⁷ + k4 θ⁹`, `r = f θ_d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KannalaBrandt {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    /// Declared full field of view in degrees; pixels beyond it are invalid.
    #[serde(default = "default_max_fov_deg")]
    pub max_fov_deg: f64,
}

fn default_max_fov_deg() -> f64 {
    180.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equirectangular {
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CameraModel {
    Pinhole(Pinhole),
    KannalaBrandt(KannalaBrandt),
    Equirectangular(Equirectangular),
}

/// Continuous image coordinates of a projected point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub x: f64,
    pub y: f64,
    pub in_bounds: bool,
}

fn check_intrinsics(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidCamera(format!("image size {width}x{height} is empty")));
    }
    if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
        return Err(Error::InvalidCamera(format!("focal lengths must be positive, got fx={fx}, fy={fy}")));
    }
    if !(cx.is_finite() && cy.is_finite()) || cx < 0.0 || cx >= width as f64 || cy < 0.0 || cy >= height as f64 {
        return Err(Error::InvalidCamera(format!(
            "principal point ({cx}, {cy}) outside the {width}x{height} image"
        )));
    }
    Ok(())
}

fn in_image(x: f64, y: f64, width: usize, height: usize) -> bool {
    x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64
}

impl Pinhole {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Centered pinhole with the given horizontal field of view.
    pub fn with_hfov(hfov: f64, width: usize, height: usize) -> Result<Self> {
        let f = width as f64 / 2.0 / (hfov / 2.0).tan();
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        check_intrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    pub fn unproject(&self, x: f64, y: f64) -> Option<Vec3> {
        let d = Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0);
        Some(d.normalize())
    }

    pub fn project(&self, p: &Vec3) -> Projection {
        if p.z <= 0.0 {
            return Projection {
                x: f64::NAN,
                y: f64::NAN,
                in_bounds: false,
            };
        }
        let x = self.fx * p.x / p.z + self.cx;
        let y = self.fy * p.y / p.z + self.cy;
        Projection {
            x,
            y,
            in_bounds: in_image(x, y, self.width, self.height),
        }
    }
}

impl KannalaBrandt {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        k: [f64; 4],
        max_fov_deg: f64,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            k1: k[0],
            k2: k[1],
            k3: k[2],
            k4: k[3],
            max_fov_deg,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        check_intrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?;
        if !(self.max_fov_deg > 0.0 && self.max_fov_deg <= 360.0) {
            return Err(Error::InvalidCamera(format!(
                "max_fov_deg must lie in (0, 360], got {}",
                self.max_fov_deg
            )));
        }
        if ![self.k1, self.k2, self.k3, self.k4].iter().all(|k| k.is_finite()) {
            return Err(Error::InvalidCamera("non-finite distortion coefficient".into()));
        }
        let theta_max = self.theta_max();
        let mut prev = 0.0;
        for i in 1..=KB_MONOTONE_SAMPLES {
            let theta = theta_max * i as f64 / KB_MONOTONE_SAMPLES as f64;
            let td = self.distort(theta);
            if self.distort_derivative(theta) <= 0.0 || td <= prev {
                return Err(Error::InvalidCamera(format!(
                    "distortion polynomial is not strictly monotone up to {:.3} rad (fails near {theta:.4} rad)",
                    theta_max
                )));
            }
            prev = td;
        }
        Ok(())
    }

    /// Half of the declared field of view, in radians.
    pub fn theta_max(&self) -> f64 {
        self.max_fov_deg.to_radians() / 2.0
    }

    /// Distorted angle `θ_d(θ)`.
    pub fn distort(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        theta * (1.0 + t2 * (self.k1 + t2 * (self.k2 + t2 * (self.k3 + t2 * self.k4))))
    }

    pub fn distort_derivative(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        1.0 + t2 * (3.0 * self.k1 + t2 * (5.0 * self.k2 + t2 * (7.0 * self.k3 + t2 * 9.0 * self.k4)))
    }

    /// Largest distorted angle inside the declared field of view.
    pub fn theta_d_max(&self) -> f64 {
        self.distort(self.theta_max())
    }

    /// Inverts `θ_d(θ)` by Newton iteration safeguarded with bisection.
    pub fn theta_from_distorted(&self, theta_d: f64) -> Result<f64> {
        let hi_d = self.theta_d_max();
        if !theta_d.is_finite() || theta_d < 0.0 || theta_d > hi_d * (1.0 + 1e-12) {
            return Err(Error::OutOfRange(format!(
                "distorted angle {theta_d} outside the monotone range [0, {hi_d}]"
            )));
        }
        if theta_d == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0, self.theta_max());
        let mut theta = theta_d.min(hi);
        for _ in 0..KB_MAX_ITER {
            let f = self.distort(theta) - theta_d;
            if f.abs() <= KB_TOLERANCE * 1e-3 {
                return Ok(theta);
            }
            if f > 0.0 {
                hi = theta;
            } else {
                lo = theta;
            }
            let newton = theta - f / self.distort_derivative(theta);
            theta = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        if (self.distort(theta) - theta_d).abs() <= KB_TOLERANCE {
            Ok(theta)
        } else {
            Err(Error::Degenerate(format!("KB inversion did not converge for θ_d = {theta_d}")))
        }
    }

    pub fn unproject(&self, x: f64, y: f64) -> Option<Vec3> {
        let mx = (x - self.cx) / self.fx;
        let my = (y - self.cy) / self.fy;
        let theta_d = mx.hypot(my);
        if theta_d == 0.0 {
            return Some(Vec3::z());
        }
        let theta = self.theta_from_distorted(theta_d).ok()?;
        let s = theta.sin() / theta_d;
        Some(Vec3::new(s * mx, s * my, theta.cos()))
    }

    pub fn project(&self, p: &Vec3) -> Projection {
        let rho = p.x.hypot(p.y);
        let theta = rho.atan2(p.z);
        let (x, y) = if rho == 0.0 {
            (self.cx, self.cy)
        } else {
            let td = self.distort(theta);
            (self.fx * td * p.x / rho + self.cx, self.fy * td * p.y / rho + self.cy)
        };
        Projection {
            x,
            y,
            in_bounds: theta <= self.theta_max() && in_image(x, y, self.width, self.height),
        }
    }
}

impl Equirectangular {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        let cam = Self { width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width != 2 * self.height {
            return Err(Error::InvalidCamera(format!(
                "equirectangular image must be 2:1 and non-empty, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Longitude of a continuous column coordinate.
    pub fn longitude(&self, x: f64) -> f64 {
        TAU * x / self.width as f64 - PI
    }

    /// Latitude of a continuous row coordinate.
    pub fn latitude(&self, y: f64) -> f64 {
        FRAC_PI_2 - PI * y / self.height as f64
    }

    pub fn unproject(&self, x: f64, y: f64) -> Option<Vec3> {
        let lon = self.longitude(x);
        let lat = self.latitude(y);
        Some(Vec3::new(lat.cos() * lon.sin(), lat.sin(), lat.cos() * lon.cos()))
    }

    pub fn project(&self, p: &Vec3) -> Projection {
        let n = p.norm();
        let lon = p.x.atan2(p.z);
        let lat = (p.y / n).clamp(-1.0, 1.0).asin();
        let w = self.width as f64;
        let mut x = (lon + PI) / TAU * w;
        if x >= w {
            x -= w;
        }
        let y = (FRAC_PI_2 - lat) / PI * self.height as f64;
        Projection {
            x,
            y,
            in_bounds: x >= 0.0 && x < w && y >= 0.0 && y <= self.height as f64,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            CameraModel::Pinhole(c) => c.validate(),
            CameraModel::KannalaBrandt(c) => c.validate(),
            CameraModel::Equirectangular(c) => c.validate(),
        }
    }

    /// Parses and validates a camera description.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cam: CameraModel =
            serde_json::from_str(s).map_err(|e| Error::InvalidCamera(format!("camera JSON: {e}")))?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("camera serializes")
    }

    pub fn width(&self) -> usize {
        match self {
            CameraModel::Pinhole(c) => c.width,
            CameraModel::KannalaBrandt(c) => c.width,
            CameraModel::Equirectangular(c) => c.width,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            CameraModel::Pinhole(c) => c.height,
            CameraModel::KannalaBrandt(c) => c.height,
            CameraModel::Equirectangular(c) => c.height,
        }
    }

    pub fn model_name(&self) -> &'static str {
        match self {
            CameraModel::Pinhole(_) => "pinhole",
            CameraModel::KannalaBrandt(_) => "kannala_brandt",
            CameraModel::Equirectangular(_) => "equirectangular",
        }
    }

    /// Unit ray through continuous image coordinates, if the model defines one.
    pub fn unproject(&self, x: f64, y: f64) -> Option<Vec3> {
        match self {
            CameraModel::Pinhole(c) => c.unproject(x, y),
            CameraModel::KannalaBrandt(c) => c.unproject(x, y),
            CameraModel::Equirectangular(c) => c.unproject(x, y),
        }
    }

    /// Unit ray through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Option<Vec3> {
        self.unproject(u as f64 + 0.5, v as f64 + 0.5)
    }

    /// Projects a camera-frame point to continuous image coordinates.
    pub fn project(&self, p: &Vec3) -> Result<Projection> {
        if *p == Vec3::zeros() || !p.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument(format!("cannot project point {p:?}")));
        }
        Ok(match self {
            CameraModel::Pinhole(c) => c.project(p),
            CameraModel::KannalaBrandt(c) => c.project(p),
            CameraModel::Equirectangular(c) => c.project(p),
        })
    }
}

/// One unit ray per pixel center; pixels without a defined ray are masked out.
pub fn ray_field(cam: &CameraModel) -> RayField {
    let (w, h) = (cam.width(), cam.height());
    let mut cells = vec![(Vec3::zeros(), false); w * h];
    par::for_each_row(&mut cells, w, |v, row| {
        for (u, cell) in row.iter_mut().enumerate() {
            if let Some(d) = cam.pixel_ray(u, v) {
                *cell = (d, true);
            }
        }
    });
    let (dirs, mask) = cells.into_iter().unzip();
    RayField {
        width: w,
        height: h,
        dirs,
        mask,
    }
}

/// Inverse of the Kannala-Brandt distortion polynomial.
pub fn kb_theta_inverse(cam: &KannalaBrandt, theta_d: f64) -> Result<f64> {
    cam.theta_from_distorted(theta_d)
}
