//! Spherical-harmonics ray fields.
//!
//! A ray field is expanded as `R(θ, φ) = Σ_lm k_lm Y_lm(θ, φ)` with real,
//! orthonormal harmonics (Condon-Shortley phase included) and vector-valued
//! coefficients `k_lm ∈ R³`. Each pixel is assigned its evaluation angles by
//! a [`Chart`]; the reconstructed vectors are normalized to unit rays.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::{RayField, Vec3};
use crate::par;

/// Highest supported harmonic degree.
pub const MAX_DEGREE: usize = 8;
/// Default degree (16 harmonics).
pub const DEFAULT_DEGREE: usize = 3;
/// Condition-number estimate above which a design matrix counts as rank deficient.
pub const MAX_CONDITION: f64 = 1e12;
/// Reconstructed vectors shorter than this are masked out.
pub const MIN_RECONSTRUCTED_NORM: f64 = 1e-6;

/// Camera class label keying coefficient sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraClass {
    Pinhole,
    Fisheye,
    Sphere,
}

impl CameraClass {
    pub const ALL: [CameraClass; 3] = [CameraClass::Pinhole, CameraClass::Fisheye, CameraClass::Sphere];
}

impl From<&CameraModel> for CameraClass {
    fn from(cam: &CameraModel) -> Self {
        match cam {
            CameraModel::Pinhole(_) => CameraClass::Pinhole,
            CameraModel::KannalaBrandt(_) => CameraClass::Fisheye,
            CameraModel::Equirectangular(_) => CameraClass::Sphere,
        }
    }
}

/// Real SH basis up to degree `L`, `(L+1)²` functions in `(l, m)` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SHBasis {
    degree: usize,
}

impl SHBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "harmonic degree {degree} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        Ok(Self { degree })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn size(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    /// Flat index of `(l, m)`.
    pub fn index(l: usize, m: i64) -> usize {
        ((l * l + l) as i64 + m) as usize
    }

    /// Evaluates all harmonics at `(θ, φ)` without range checks.
    pub fn eval_into(&self, theta: f64, phi: f64, out: &mut [f64]) {
        let lmax = self.degree;
        let x = theta.cos();
        let s = theta.sin();
        // associated Legendre P_l^m(cos θ) with Condon-Shortley phase, m >= 0
        let mut p = [[0.0f64; MAX_DEGREE + 1]; MAX_DEGREE + 1];
        let mut pmm = 1.0;
        for m in 0..=lmax {
            if m > 0 {
                pmm *= -((2 * m - 1) as f64) * s;
            }
            p[m][m] = pmm;
            if m < lmax {
                p[m + 1][m] = x * (2 * m + 1) as f64 * pmm;
            }
            for l in (m + 2)..=lmax {
                p[l][m] = ((2 * l - 1) as f64 * x * p[l - 1][m] - (l + m - 1) as f64 * p[l - 2][m]) / (l - m) as f64;
            }
        }
        for l in 0..=lmax {
            let center = l * l + l;
            out[center] = norm_factor(l, 0) * p[l][0];
            for m in 1..=l {
                let k = std::f64::consts::SQRT_2 * norm_factor(l, m) * p[l][m];
                let (sin_m, cos_m) = (m as f64 * phi).sin_cos();
                out[center + m] = k * cos_m;
                out[center - m] = k * sin_m;
            }
        }
    }

    pub fn eval(&self, theta: f64, phi: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.eval_into(theta, phi, &mut out);
        out
    }
}

fn norm_factor(l: usize, m: usize) -> f64 {
    // (l-m)!/(l+m)! as a running product
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// Real SH values at `(θ, φ)`, `θ ∈ [0, π]`, `φ ∈ [0, 2π)`.
pub fn sh_eval(basis: &SHBasis, theta: f64, phi: f64) -> Result<Vec<f64>> {
    if !(0.0..=PI).contains(&theta) || !(0.0..TAU).contains(&phi) {
        return Err(Error::OutOfRange(format!(
            "angles (θ={theta}, φ={phi}) outside [0, π] x [0, 2π)"
        )));
    }
    Ok(basis.eval(theta, phi))
}

/// Identity equirectangular chart: `θ = π(v+0.5)/H`, `φ = 2π(u+0.5)/W`.
pub fn grid_angles(width: usize, height: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(width * height);
    for v in 0..height {
        for u in 0..width {
            out.push(equirect_angles(u, v, width, height));
        }
    }
    out
}

fn equirect_angles(u: usize, v: usize, width: usize, height: usize) -> (f64, f64) {
    (
        PI * (v as f64 + 0.5) / height as f64,
        TAU * (u as f64 + 0.5) / width as f64,
    )
}

/// Assignment of SH evaluation angles to pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chart {
    /// The identity chart of [`grid_angles`]; covers the full sphere.
    #[default]
    Equirect,
    /// Pole at `(cx, cy)`: `θ = scale · ρ` (radians per pixel), `φ = atan2(dy, dx)`.
    /// Pixels with `θ > π` fall outside the chart.
    Polar { cx: f64, cy: f64, scale: f64 },
}

impl Chart {
    /// Chart matched to a camera: identity for full-sphere images, polar
    /// around the principal point with `1/f` radians per pixel otherwise.
    pub fn for_camera(cam: &CameraModel) -> Chart {
        match cam {
            CameraModel::Equirectangular(_) => Chart::Equirect,
            CameraModel::Pinhole(c) => Chart::Polar {
                cx: c.cx,
                cy: c.cy,
                scale: 2.0 / (c.fx + c.fy),
            },
            CameraModel::KannalaBrandt(c) => Chart::Polar {
                cx: c.cx,
                cy: c.cy,
                scale: 2.0 / (c.fx + c.fy),
            },
        }
    }

    pub fn angles(&self, u: usize, v: usize, width: usize, height: usize) -> Option<(f64, f64)> {
        match *self {
            Chart::Equirect => Some(equirect_angles(u, v, width, height)),
            Chart::Polar { cx, cy, scale } => {
                let dx = u as f64 + 0.5 - cx;
                let dy = v as f64 + 0.5 - cy;
                let theta = scale * dx.hypot(dy);
                if theta > PI {
                    return None;
                }
                let mut phi = dy.atan2(dx).rem_euclid(TAU);
                if phi >= TAU {
                    phi = 0.0;
                }
                Some((theta, phi))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Chart::Polar { cx, cy, scale } = *self {
            if !(scale.is_finite() && scale > 0.0 && cx.is_finite() && cy.is_finite()) {
                return Err(Error::InvalidArgument(format!("invalid polar chart {self:?}")));
            }
        }
        Ok(())
    }
}

/// Fitted coefficients, one 3-vector per harmonic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SHCoeffs {
    pub degree: usize,
    pub camera_class: CameraClass,
    #[serde(default)]
    pub chart: Chart,
    pub coeffs: Vec<[f64; 3]>,
}

impl SHCoeffs {
    pub fn validate(&self) -> Result<()> {
        let basis = SHBasis::new(self.degree)?;
        if self.coeffs.len() != basis.size() {
            return Err(Error::DimensionMismatch(format!(
                "degree {} needs {} coefficient rows, got {}",
                self.degree,
                basis.size(),
                self.coeffs.len()
            )));
        }
        self.chart.validate()
    }

    pub fn basis(&self) -> SHBasis {
        SHBasis { degree: self.degree }
    }

    /// Raw (unnormalized) expansion at `(θ, φ)`.
    pub fn evaluate(&self, theta: f64, phi: f64) -> Vec3 {
        let y = self.basis().eval(theta, phi);
        let mut acc = Vec3::zeros();
        for (k, yk) in self.coeffs.iter().zip(&y) {
            acc += Vec3::new(k[0], k[1], k[2]) * *yk;
        }
        acc
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: SHCoeffs = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("coefficients serialize")
    }
}

/// Result of a least-squares fit.
#[derive(Clone, Debug)]
pub struct SHFit {
    pub coeffs: SHCoeffs,
    /// RMS over masked pixels of `‖Σ k Y − d‖` before normalization.
    pub residual_rms: f64,
    pub samples: usize,
}

/// Per-channel linear least squares of raw target vectors against the basis
/// evaluated at the chart angles. Returns `B x 3` coefficients and the
/// residual RMS.
pub fn fit_vectors(
    basis: &SHBasis,
    chart: &Chart,
    width: usize,
    height: usize,
    targets: &[Vec3],
    mask: &[bool],
) -> Result<(Vec<[f64; 3]>, f64, usize)> {
    chart.validate()?;
    if targets.len() != width * height || mask.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "expected {} targets for {width}x{height}",
            width * height
        )));
    }
    let samples: Vec<(usize, (f64, f64))> = (0..width * height)
        .filter(|&i| mask[i])
        .filter_map(|i| chart.angles(i % width, i / width, width, height).map(|a| (i, a)))
        .collect();
    let b = basis.size();
    let m = samples.len();
    if m < b {
        let degree = (0..=basis.degree()).find(|l| (l + 1) * (l + 1) > m).unwrap_or(0);
        return Err(Error::RankDeficient {
            degree,
            condition: f64::INFINITY,
        });
    }
    let rows = par::map_slice(&samples, |&(_, (t, p))| basis.eval(t, p));
    let design = DMatrix::from_fn(m, b, |r, c| rows[r][c]);
    let rhs = DMatrix::from_fn(m, 3, |r, c| targets[samples[r].0][c]);

    let qr = design.clone().qr();
    let r = qr.r();
    let cond = condition_estimate(&r);
    if !(cond <= MAX_CONDITION) {
        let degree = (0..=basis.degree())
            .find(|l| {
                let k = (l + 1) * (l + 1);
                !(condition_estimate(&r.view((0, 0), (k, k)).into_owned()) <= MAX_CONDITION)
            })
            .unwrap_or(basis.degree());
        return Err(Error::RankDeficient { degree, condition: cond });
    }
    let qty = qr.q().transpose() * &rhs;
    let sol = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient {
            degree: basis.degree(),
            condition: cond,
        })?;
    let resid = &design * &sol - &rhs;
    let sq: Vec<f64> = (0..m).map(|i| resid.row(i).norm_squared()).collect();
    let residual_rms = (par::sum(&sq) / m as f64).sqrt();
    let coeffs = (0..b).map(|k| [sol[(k, 0)], sol[(k, 1)], sol[(k, 2)]]).collect();
    Ok((coeffs, residual_rms, m))
}

fn condition_estimate(r: &DMatrix<f64>) -> f64 {
    let sv = r.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Fits coefficients reproducing `rays` under `chart`.
pub fn fit_coeffs(basis: &SHBasis, rays: &RayField, chart: &Chart, cls: CameraClass) -> Result<SHFit> {
    let (coeffs, residual_rms, samples) = fit_vectors(basis, chart, rays.width, rays.height, &rays.dirs, &rays.mask)?;
    Ok(SHFit {
        coeffs: SHCoeffs {
            degree: basis.degree(),
            camera_class: cls,
            chart: *chart,
            coeffs,
        },
        residual_rms,
        samples,
    })
}

/// Fits the analytic ray field of a camera with its matched chart and class.
pub fn fit_camera(basis: &SHBasis, cam: &CameraModel) -> Result<SHFit> {
    let rays = crate::camera::ray_field(cam);
    fit_coeffs(basis, &rays, &Chart::for_camera(cam), CameraClass::from(cam))
}

/// `normalize(Σ k Y)` at each pixel; masked where the chart is undefined or
/// the raw norm is below [`MIN_RECONSTRUCTED_NORM`].
pub fn reconstruct_rays(coeffs: &SHCoeffs, width: usize, height: usize) -> RayField {
    let mut cells = vec![(Vec3::zeros(), false); width * height];
    par::for_each_row(&mut cells, width, |v, row| {
        for (u, cell) in row.iter_mut().enumerate() {
            if let Some((t, p)) = coeffs.chart.angles(u, v, width, height) {
                let raw = coeffs.evaluate(t, p);
                let n = raw.norm();
                if n >= MIN_RECONSTRUCTED_NORM {
                    *cell = (raw / n, true);
                }
            }
        }
    });
    let (dirs, mask) = cells.into_iter().unzip();
    RayField {
        width,
        height,
        dirs,
        mask,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AngularError {
    pub rms: f64,
    pub max: f64,
    pub count: usize,
}

/// Per-pixel `arccos(clamp(a·b))` over the mask intersection.
pub fn angular_error(a: &RayField, b: &RayField) -> Result<AngularError> {
    if !a.same_shape(b.width, b.height) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let idx: Vec<usize> = (0..a.len()).filter(|&i| a.mask[i] && b.mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::Empty("ray fields share no valid pixel".into()));
    }
    let ang = par::map_slice(&idx, |&i| a.dirs[i].dot(&b.dirs[i]).clamp(-1.0, 1.0).acos());
    let sq: Vec<f64> = ang.iter().map(|x| x * x).collect();
    Ok(AngularError {
        rms: (par::sum(&sq) / idx.len() as f64).sqrt(),
        max: ang.iter().copied().fold(0.0, f64::max),
        count: idx.len(),
    })
}

/// Coefficient sets keyed by camera class.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoeffStore {
    sets: BTreeMap<CameraClass, SHCoeffs>,
}

impl CoeffStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `coeffs` under its own class label, returning any previous set.
    pub fn insert(&mut self, coeffs: SHCoeffs) -> Option<SHCoeffs> {
        self.sets.insert(coeffs.camera_class, coeffs)
    }

    pub fn get(&self, cls: CameraClass) -> Option<&SHCoeffs> {
        self.sets.get(&cls)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}
