//! Wide-FoV augmentations: equirectangular rotation of image, radial map and
//! pose, and reprojection into another camera model by forward softmax
//! splatting.

use nalgebra::{Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{CameraModel, Equirectangular, KannalaBrandt};
use crate::error::{Error, Result};
use crate::geometry::{rot_x, rot_y, Image, Pose, RadialMap, ScalarMap};
use crate::par;

/// Default splatting sharpness, per unit of inverse radial distance.
pub const DEFAULT_ALPHA: f64 = 50.0;

/// Targets whose accumulated weight falls below this are holes.
pub const HOLE_THRESHOLD: f64 = 1e-6;

/// Image, radial map, camera and camera-to-world pose of one view.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSample {
    pub image: Image,
    pub radial: RadialMap,
    pub cam: CameraModel,
    pub pose: Pose,
}

impl ViewSample {
    pub fn new(image: Image, radial: RadialMap, cam: CameraModel, pose: Pose) -> Result<Self> {
        let v = Self {
            image,
            radial,
            cam,
            pose,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        self.cam.validate()?;
        let (w, h) = (self.cam.width(), self.cam.height());
        if self.image.width != w || self.image.height != h || self.image.data.len() != w * h {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{} vs camera {w}x{h}",
                self.image.width, self.image.height
            )));
        }
        if self.radial.width != w
            || self.radial.height != h
            || self.radial.values.len() != w * h
            || self.radial.mask.len() != w * h
        {
            return Err(Error::DimensionMismatch(format!(
                "radial map {}x{} vs camera {w}x{h}",
                self.radial.width, self.radial.height
            )));
        }
        Ok(())
    }
}

/// Rotation applied by [`erp_rotate`]: azimuth about +y, then elevation
/// about +x, `R = R_y(azimuth)·R_x(elevation)`.
pub fn erp_rotation(azimuth: f64, elevation: f64) -> Rotation3<f64> {
    rot_y(azimuth) * rot_x(elevation)
}

/// Azimuth drawn uniformly from `[0, 2π)`.
pub fn sample_azimuth(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).random_range(0.0..std::f64::consts::TAU)
}

/// Rotates an equirectangular view by [`erp_rotation`].
pub fn erp_rotate(v: &ViewSample, azimuth: f64, elevation: f64) -> Result<ViewSample> {
    if !azimuth.is_finite() || !elevation.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rotation angles must be finite, got azimuth {azimuth} and elevation {elevation}"
        )));
    }
    erp_rotate_by(v, &erp_rotation(azimuth, elevation))
}

/// Resamples an equirectangular view so that output ray `d'` shows what the
/// input saw along `R⁻¹d'`. The pose becomes `T·R⁻¹`, which keeps world
/// points fixed. Bilinear interpolation wraps in longitude and clamps rows
/// at the poles; an output radial value is valid only when every
/// contributing input neighbor is valid.
pub fn erp_rotate_by(v: &ViewSample, r: &Rotation3<f64>) -> Result<ViewSample> {
    v.validate()?;
    let erp = match &v.cam {
        CameraModel::Equirectangular(c) => c.clone(),
        other => {
            return Err(Error::InvalidCamera(format!(
                "erp_rotate needs an equirectangular view, got {}",
                other.model_name()
            )))
        }
    };
    if *r.matrix() == *Rotation3::identity().matrix() {
        return Ok(v.clone());
    }
    let (w, h) = (erp.width, erp.height);
    let inv = r.inverse();
    let samples = par::map_range(w * h, |i| {
        let d = erp.unproject((i % w) as f64 + 0.5, (i / w) as f64 + 0.5).expect("ERP rays are total");
        let p = erp.project(&(inv * d));
        sample_erp(&erp, &v.image, &v.radial, p.x - 0.5, p.y - 0.5)
    });
    let mut data = Vec::with_capacity(w * h);
    let mut values = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for (c, r, m) in samples {
        data.push(c);
        values.push(if m { r } else { 0.0 });
        mask.push(m);
    }
    let q = UnitQuaternion::from_rotation_matrix(&inv);
    let pose = Pose::from_parts(v.pose.translation, v.pose.rotation * q);
    Ok(ViewSample {
        image: Image { width: w, height: h, data },
        radial: ScalarMap {
            width: w,
            height: h,
            values,
            mask,
        },
        cam: v.cam.clone(),
        pose,
    })
}

/// Bilinear sample at fractional pixel indices (integer = pixel center).
fn sample_erp(erp: &Equirectangular, image: &Image, radial: &RadialMap, fx: f64, fy: f64) -> ([f64; 3], f64, bool) {
    let (w, h) = (erp.width as i64, erp.height as i64);
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut color = [0.0; 3];
    let mut value = 0.0;
    let mut valid = true;
    for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
        for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
            let wgt = wx * wy;
            if wgt == 0.0 {
                continue;
            }
            let xi = (x0 + dx).rem_euclid(w) as usize;
            let yi = (y0 + dy).clamp(0, h - 1) as usize;
            let k = yi * erp.width + xi;
            for (c, s) in color.iter_mut().zip(image.data[k]) {
                *c += wgt * s;
            }
            value += wgt * radial.values[k];
            valid &= radial.mask[k];
        }
    }
    (color, value, valid)
}

/// Output of [`softmax_splat`].
#[derive(Clone, Debug, PartialEq)]
pub struct Splat {
    /// Weight-normalized colors; holes are black.
    pub image: Image,
    /// Weight-normalized radial values, masked at holes.
    pub radial: RadialMap,
    /// Softmax denominator per target; values are all marked valid.
    pub weight: ScalarMap,
}

impl Splat {
    pub fn hole_mask(&self) -> Vec<bool> {
        self.weight.values.iter().map(|&w| w < HOLE_THRESHOLD).collect()
    }
}

/// Forward softmax splatting.
///
/// Source pixel `i` with target position `flow[i]` (fractional pixel
/// indices, integer = pixel center) adds to each of its four bilinear
/// neighbors with weight `bilinear · exp(alpha · importance[i])`. Colors and
/// radial values are divided by the accumulated weight. Sources masked in
/// `src_radial` or with `flow[i] = None` do not contribute. Exponents are
/// shifted by the per-target maximum before accumulation, and accumulation
/// runs in source order, so results are independent of thread count.
pub fn softmax_splat(
    src_image: &Image,
    src_radial: &RadialMap,
    flow: &[Option<(f64, f64)>],
    importance: &[f64],
    alpha: f64,
    dst_width: usize,
    dst_height: usize,
) -> Result<Splat> {
    let n = src_image.width * src_image.height;
    if src_image.data.len() != n
        || src_radial.values.len() != n
        || src_radial.mask.len() != n
        || flow.len() != n
        || importance.len() != n
    {
        return Err(Error::DimensionMismatch(format!(
            "splat inputs: image {n} pixels, radial {}, flow {}, importance {}",
            src_radial.values.len(),
            flow.len(),
            importance.len()
        )));
    }
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be finite, got {alpha}")));
    }
    let m = dst_width * dst_height;
    let taps = par::map_range(n, |i| -> Result<[(usize, f64); 4]> {
        let mut out = [(usize::MAX, 0.0); 4];
        let Some((fx, fy)) = flow[i] else { return Ok(out) };
        if !src_radial.mask[i] {
            return Ok(out);
        }
        if !fx.is_finite() || !fy.is_finite() || !importance[i].is_finite() || !src_radial.values[i].is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite flow or importance at source pixel {i}")));
        }
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let mut k = 0;
        for (dy, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
            for (dx, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
                let (x, y) = (x0 + dx, y0 + dy);
                let b = wx * wy;
                if b > 0.0 && x >= 0.0 && y >= 0.0 && x < dst_width as f64 && y < dst_height as f64 {
                    out[k] = (y as usize * dst_width + x as usize, b);
                }
                k += 1;
            }
        }
        Ok(out)
    });
    let taps: Vec<[(usize, f64); 4]> = taps.into_iter().collect::<Result<_>>()?;

    let mut peak = vec![f64::NEG_INFINITY; m];
    for (i, t) in taps.iter().enumerate() {
        for &(k, _) in t.iter().filter(|(k, _)| *k != usize::MAX) {
            peak[k] = peak[k].max(alpha * importance[i]);
        }
    }
    let mut acc = vec![[0.0f64; 5]; m];
    for (i, t) in taps.iter().enumerate() {
        for &(k, b) in t.iter().filter(|(k, _)| *k != usize::MAX) {
            let wgt = b * (alpha * importance[i] - peak[k]).exp();
            let c = src_image.data[i];
            let a = &mut acc[k];
            a[0] += wgt;
            a[1] += wgt * c[0];
            a[2] += wgt * c[1];
            a[3] += wgt * c[2];
            a[4] += wgt * src_radial.values[i];
        }
    }

    let mut data = vec![[0.0; 3]; m];
    let mut values = vec![0.0; m];
    let mut mask = vec![false; m];
    let mut weight = vec![0.0; m];
    for k in 0..m {
        let a = acc[k];
        if a[0] == 0.0 {
            continue;
        }
        weight[k] = a[0] * peak[k].exp();
        if weight[k] < HOLE_THRESHOLD {
            continue;
        }
        data[k] = [a[1] / a[0], a[2] / a[0], a[3] / a[0]];
        values[k] = a[4] / a[0];
        mask[k] = true;
    }
    Ok(Splat {
        image: Image {
            width: dst_width,
            height: dst_height,
            data,
        },
        radial: ScalarMap {
            width: dst_width,
            height: dst_height,
            values,
            mask,
        },
        weight: ScalarMap {
            width: dst_width,
            height: dst_height,
            values: weight,
            mask: vec![true; m],
        },
    })
}

/// A reprojected view together with its splatting weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Warped {
    pub view: ViewSample,
    pub weight: ScalarMap,
}

/// Reprojects a view into `target` at the same pose.
///
/// Each valid source pixel is lifted to 3D along its ray by its radial
/// distance, projected into the target, and splatted with importance
/// `1 / radial` so nearer surfaces win.
pub fn reproject(v: &ViewSample, target: &CameraModel, alpha: f64) -> Result<Warped> {
    reproject_rotated(v, target, &Rotation3::identity(), alpha)
}

/// Like [`reproject`] with the target camera rotated by `rotation` relative
/// to the source camera; the output pose is `T·rotation`.
pub fn reproject_rotated(v: &ViewSample, target: &CameraModel, rotation: &Rotation3<f64>, alpha: f64) -> Result<Warped> {
    v.validate()?;
    target.validate()?;
    let (w, h) = (v.cam.width(), v.cam.height());
    let inv = rotation.inverse();
    let (tw, th) = (target.width(), target.height());
    let src = par::map_range(w * h, |i| {
        if !v.radial.mask[i] {
            return None;
        }
        let r = v.radial.values[i];
        if !(r.is_finite() && r > 0.0) {
            return None;
        }
        let d = v.cam.pixel_ray(i % w, i / w)?;
        let p = target.project(&(inv * (d * r))).ok()?;
        let (fx, fy) = (p.x - 0.5, p.y - 0.5);
        let touches = fx > -1.0 && fy > -1.0 && fx < tw as f64 && fy < th as f64;
        touches.then_some(((fx, fy), 1.0 / r))
    });
    if src.iter().all(Option::is_none) {
        return Err(Error::Empty(format!(
            "no source pixel projects into the {} target",
            target.model_name()
        )));
    }
    let flow: Vec<Option<(f64, f64)>> = src.iter().map(|s| s.map(|x| x.0)).collect();
    let importance: Vec<f64> = src.iter().map(|s| s.map_or(0.0, |x| x.1)).collect();
    let s = softmax_splat(&v.image, &v.radial, &flow, &importance, alpha, tw, th)?;
    Ok(Warped {
        view: ViewSample {
            image: s.image,
            radial: s.radial,
            cam: target.clone(),
            pose: Pose::from_parts(v.pose.translation, v.pose.rotation * UnitQuaternion::from_rotation_matrix(rotation)),
        },
        weight: s.weight,
    })
}

/// Reprojects a pinhole view into a Kannala-Brandt fisheye camera.
pub fn pinhole_to_fisheye(v: &ViewSample, target: &KannalaBrandt, alpha: f64) -> Result<Warped> {
    if !matches!(v.cam, CameraModel::Pinhole(_)) {
        return Err(Error::InvalidCamera(format!(
            "pinhole_to_fisheye needs a pinhole view, got {}",
            v.cam.model_name()
        )));
    }
    reproject(v, &CameraModel::KannalaBrandt(target.clone()), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Pinhole;
    use crate::oracle::{render_view, BoxScene};
    use std::f64::consts::TAU;

    fn erp_view(w: usize) -> ViewSample {
        let scene = BoxScene::checkered([4.0, 3.0, 5.0]).unwrap();
        let cam = CameraModel::Equirectangular(Equirectangular::new(w, w / 2).unwrap());
        let pose = Pose::from_parts(nalgebra::Translation3::new(0.3, -0.2, 0.1), UnitQuaternion::identity());
        render_view(&scene, &cam, &pose).unwrap().to_view_sample()
    }

    fn one_pixel(value: f64) -> (Image, RadialMap) {
        (Image::filled(1, 1, [value; 3]), ScalarMap::filled(1, 1, value))
    }

    #[test]
    fn zero_rotation_is_identity() {
        let v = erp_view(32);
        assert_eq!(erp_rotate(&v, 0.0, 0.0).unwrap(), v);
    }

    #[test]
    fn full_turn_is_identity_within_interpolation_error() {
        let v = erp_view(64);
        let r = erp_rotate(&v, TAU, 0.0).unwrap();
        for (a, b) in r.image.data.iter().zip(&v.image.data) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-6);
            }
        }
        for i in 0..v.radial.len() {
            assert_eq!(r.radial.mask[i], v.radial.mask[i]);
            assert!((r.radial.values[i] - v.radial.values[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn rotation_updates_pose() {
        let v = erp_view(16);
        let r = erp_rotate(&v, 0.7, 0.2).unwrap();
        let expected = v.pose.rotation.to_rotation_matrix() * erp_rotation(0.7, 0.2).inverse();
        assert!((r.pose.rotation.to_rotation_matrix().matrix() - expected.matrix()).norm() < 1e-12);
        assert_eq!(r.pose.translation, v.pose.translation);
    }

    #[test]
    fn non_erp_input_is_rejected() {
        let mut v = erp_view(16);
        v.cam = CameraModel::Pinhole(Pinhole::with_hfov(1.0, 16, 8).unwrap());
        assert!(erp_rotate(&v, 0.1, 0.0).is_err());
    }

    #[test]
    fn single_source_copies_exactly() {
        let (img, rad) = one_pixel(0.37);
        let s = softmax_splat(&img, &rad, &[Some((2.0, 1.0))], &[3.3], 50.0, 4, 3).unwrap();
        let k = 4 + 2;
        assert_eq!(s.image.data[k], [0.37; 3]);
        assert_eq!(s.radial.values[k], 0.37);
        assert_eq!(s.radial.mask.iter().filter(|m| **m).count(), 1);
    }

    #[test]
    fn equal_importance_averages() {
        let img = Image::new(2, 1, vec![[0.2; 3], [0.6; 3]]).unwrap();
        let rad = ScalarMap::new(2, 1, vec![1.0, 3.0], vec![true; 2]).unwrap();
        let flow = [Some((0.0, 0.0)), Some((0.0, 0.0))];
        let s = softmax_splat(&img, &rad, &flow, &[0.5, 0.5], 50.0, 1, 1).unwrap();
        assert!((s.image.data[0][0] - 0.4).abs() < 1e-15);
        assert!((s.radial.values[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dominant_importance_wins() {
        let img = Image::new(2, 1, vec![[0.0; 3], [1.0; 3]]).unwrap();
        let rad = ScalarMap::new(2, 1, vec![1.0, 2.0], vec![true; 2]).unwrap();
        let flow = [Some((0.0, 0.0)), Some((0.0, 0.0))];
        let alpha = 50.0;
        let s = softmax_splat(&img, &rad, &flow, &[0.1, 0.1 + 20.0 / alpha], alpha, 1, 1).unwrap();
        let w = (-20f64).exp();
        assert!((s.image.data[0][0] - 1.0 / (1.0 + w)).abs() < 1e-15);
        assert!((s.image.data[0][0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mass_is_conserved_for_uniform_importance() {
        let n = 40;
        let img = Image::filled(n, 1, [0.5; 3]);
        let rad = ScalarMap::filled(n, 1, 1.0);
        let flow: Vec<_> = (0..n).map(|i| Some((0.37 * i as f64 % 7.0, (0.61 * i as f64) % 4.0))).collect();
        let s = softmax_splat(&img, &rad, &flow, &vec![0.0; n], 50.0, 8, 5).unwrap();
        let total: f64 = s.weight.values.iter().sum();
        assert!((total - n as f64).abs() < 1e-6);
    }

    #[test]
    fn huge_importance_stays_finite() {
        let img = Image::new(2, 1, vec![[0.0; 3], [1.0; 3]]).unwrap();
        let rad = ScalarMap::filled(2, 1, 1.0);
        let flow = [Some((0.0, 0.0)), Some((0.0, 0.0))];
        let s = softmax_splat(&img, &rad, &flow, &[100.0, 99.0], 50.0, 1, 1).unwrap();
        assert!(s.image.data[0][0].is_finite());
        assert!(s.radial.mask[0]);
    }

    #[test]
    fn backward_target_is_an_error() {
        let scene = BoxScene::checkered([4.0, 4.0, 4.0]).unwrap();
        let cam = CameraModel::Pinhole(Pinhole::with_hfov(1.0, 16, 16).unwrap());
        let v = render_view(&scene, &cam, &Pose::identity()).unwrap().to_view_sample();
        let kb = KannalaBrandt::new(8.0, 8.0, 8.0, 8.0, 16, 16, [0.0; 4], 60.0).unwrap();
        assert!(pinhole_to_fisheye(&v, &kb, DEFAULT_ALPHA).is_ok());
        let back = CameraModel::KannalaBrandt(kb);
        assert!(matches!(
            reproject_rotated(&v, &back, &rot_y(std::f64::consts::PI), DEFAULT_ALPHA),
            Err(Error::Empty(_))
        ));
    }
}
