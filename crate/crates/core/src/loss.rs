//! Training losses over multi-view predictions, with analytic gradients for
//! the point, radial and uncertainty terms.
//!
//! Per-pixel terms are reduced with [`par::sum`], so values are identical
//! for any thread count.

use serde::{Deserialize, Serialize};

use crate::align::{solve_optimal_scale, ScaleSolveInput};
use crate::error::{Error, Result};
use crate::geometry::{
    angle_between, direction_to_angles, wrap_angle, NormalMap, PointMap, Pose, RadialMap, RayField,
    UncertaintyMap, Vec3,
};
use crate::par;

pub use crate::geometry::{relative_pose, rotation_geodesic};

/// Overshoot weight of the polar-angle term in the ray loss.
pub const RAY_ALPHA_THETA: f64 = 0.7;
/// Overshoot weight of the azimuth term in the ray loss.
pub const RAY_ALPHA_PHI: f64 = 0.5;

/// Network outputs for one view.
#[derive(Clone, Debug)]
pub struct ViewPrediction {
    pub rays: RayField,
    pub radial: RadialMap,
    pub uncertainty: UncertaintyMap,
    pub pose: Pose,
}

/// Supervision for one view.
#[derive(Clone, Debug)]
pub struct ViewGroundTruth {
    pub points: PointMap,
    pub radial: RadialMap,
    pub rays: RayField,
    pub pose: Pose,
    /// Computed from `points` when absent.
    pub normals: Option<NormalMap>,
}

impl ViewGroundTruth {
    /// Ground truth whose points, radial distances and rays all derive from
    /// one ray field and radial map.
    pub fn from_rays_and_radial(rays: RayField, radial: RadialMap, pose: Pose) -> Result<Self> {
        let points = PointMap::from_rays_and_radial(&rays, &radial)?;
        Ok(Self {
            points,
            radial,
            rays,
            pose,
            normals: None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub normal: f64,
    pub pose: f64,
    pub ray: f64,
    pub rad: f64,
    pub uncer: f64,
    /// Weight of the translation term inside the pose loss.
    pub trans: f64,
    pub huber_delta: f64,
    /// Mix between the polar and azimuth ray terms.
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            normal: 10.0,
            pose: 0.1,
            ray: 1.0,
            rad: 1.0,
            uncer: 0.1,
            trans: 1.0,
            huber_delta: 0.1,
            beta: 0.75,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("normal", self.normal),
            ("pose", self.pose),
            ("ray", self.ray),
            ("rad", self.rad),
            ("uncer", self.uncer),
            ("trans", self.trans),
            ("huber_delta", self.huber_delta),
            ("beta", self.beta),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("loss weight {name} must be finite and >= 0, got {v}")));
            }
        }
        if self.huber_delta == 0.0 {
            return Err(Error::InvalidArgument("huber_delta must be positive".into()));
        }
        if self.beta > 1.0 {
            return Err(Error::InvalidArgument(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        Ok(())
    }
}

fn check_shape(what: &str, w: usize, h: usize, w2: usize, h2: usize) -> Result<()> {
    if (w, h) != (w2, h2) {
        return Err(Error::DimensionMismatch(format!("{what}: {w}x{h} vs {w2}x{h2}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointLoss {
    pub value: f64,
    /// Optimal global scale applied to the predicted points.
    pub scale: f64,
    /// Derivative of `value` with respect to each predicted point, per view,
    /// with the scale held fixed. Zero on unused pixels.
    pub grad: Vec<Vec<Vec3>>,
    /// Number of pixels that contributed.
    pub count: usize,
}

/// Scale-invariant point loss on predicted points `ray ⊙ radial`.
pub fn point_loss(pred: &[ViewPrediction], gt: &[ViewGroundTruth]) -> Result<PointLoss> {
    let maps = pred
        .iter()
        .map(|p| PointMap::from_rays_and_radial(&p.rays, &p.radial))
        .collect::<Result<Vec<_>>>()?;
    let gt_points: Vec<&PointMap> = gt.iter().map(|g| &g.points).collect();
    let gt_radial: Vec<&RadialMap> = gt.iter().map(|g| &g.radial).collect();
    point_loss_from_points(&maps, &gt_points, &gt_radial)
}

/// Point loss on explicit predicted point maps. Pixels are used where the
/// predicted point, the ground-truth point and the ground-truth radial
/// distance are all valid; each is weighted by the inverse ground-truth
/// radial distance.
pub fn point_loss_from_points(pred: &[PointMap], gt_points: &[&PointMap], gt_radial: &[&RadialMap]) -> Result<PointLoss> {
    if pred.len() != gt_points.len() || pred.len() != gt_radial.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted views vs {} ground-truth views",
            pred.len(),
            gt_points.len()
        )));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut w = Vec::new();
    let mut index = Vec::new();
    for (v, ((p, g), d)) in pred.iter().zip(gt_points).zip(gt_radial).enumerate() {
        check_shape("point maps", p.width, p.height, g.width, g.height)?;
        check_shape("radial map", p.width, p.height, d.width, d.height)?;
        for i in 0..p.points.len() {
            if p.mask[i] && g.mask[i] && d.mask[i] {
                let dist = d.values[i];
                if !(dist > 0.0 && dist.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "ground-truth radial distance must be positive, got {dist} in view {v}"
                    )));
                }
                a.push(p.points[i]);
                b.push(g.points[i]);
                w.push(1.0 / dist);
                index.push((v, i));
            }
        }
    }
    if a.is_empty() {
        return Err(Error::Empty("point loss has no valid pixels".into()));
    }
    let scale = solve_optimal_scale(&ScaleSolveInput::new(&a, &b, &w)?)?;
    let m = a.len();
    let norm = 1.0 / (3.0 * m as f64);
    let terms = par::map_range(m, |k| w[k] * (scale * a[k] - b[k]).abs().sum());
    let value = par::sum(&terms) * norm;
    let mut grad: Vec<Vec<Vec3>> = pred.iter().map(|p| vec![Vec3::zeros(); p.points.len()]).collect();
    for (k, &(v, i)) in index.iter().enumerate() {
        let r = scale * a[k] - b[k];
        grad[v][i] = r.map(sign) * (scale * w[k] * norm);
    }
    Ok(PointLoss {
        value,
        scale,
        grad,
        count: m,
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// 8-neighbor offsets `(dx, dy)` in cyclic order around the center.
const RING: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];

/// Per-pixel normals from the sum of cross products of consecutive
/// neighbor offsets, oriented toward the camera. Border pixels, pixels with
/// an invalid neighbor, and degenerate neighborhoods are masked out.
pub fn normals_from_pointmap(pm: &PointMap) -> NormalMap {
    let (w, h) = (pm.width, pm.height);
    let out = par::map_range(w * h, |idx| {
        let (x, y) = ((idx % w) as isize, (idx / w) as isize);
        if x < 1 || y < 1 || x + 1 >= w as isize || y + 1 >= h as isize || !pm.mask[idx] {
            return None;
        }
        let c = pm.points[idx];
        let mut v = [Vec3::zeros(); 8];
        let mut scale = 0.0;
        for (k, (dx, dy)) in RING.iter().enumerate() {
            let j = ((y + dy) as usize) * w + (x + dx) as usize;
            if !pm.mask[j] {
                return None;
            }
            v[k] = pm.points[j] - c;
            scale += v[k].norm_squared();
        }
        let mut n = Vec3::zeros();
        for k in 0..8 {
            n += v[k].cross(&v[(k + 1) % 8]);
        }
        let len = n.norm();
        if !(len.is_finite() && len > 1e-12 * scale) {
            return None;
        }
        let mut n = n / len;
        if n.dot(&c) > 0.0 {
            n = -n;
        }
        Some(n)
    });
    let mask = out.iter().map(Option::is_some).collect();
    let normals = out.into_iter().map(|n| n.unwrap_or_else(Vec3::zeros)).collect();
    NormalMap {
        width: w,
        height: h,
        normals,
        mask,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormalLoss {
    /// Sum of per-pixel angles (radians).
    pub sum: f64,
    pub mean: f64,
    pub count: usize,
}

/// Angles between corresponding normals, summed over the mask intersection.
/// The angle is evaluated in `atan2` form, which for unit vectors equals
/// `arccos(n̂·n)` and is exactly zero for identical inputs.
pub fn normal_loss(pred: &NormalMap, gt: &NormalMap) -> Result<NormalLoss> {
    normal_loss_views(std::slice::from_ref(pred), std::slice::from_ref(gt))
}

pub fn normal_loss_views(pred: &[NormalMap], gt: &[NormalMap]) -> Result<NormalLoss> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} normal maps", pred.len(), gt.len())));
    }
    let mut angles = Vec::new();
    for (p, g) in pred.iter().zip(gt) {
        check_shape("normal maps", p.width, p.height, g.width, g.height)?;
        let idx: Vec<usize> = (0..p.normals.len()).filter(|&i| p.mask[i] && g.mask[i]).collect();
        angles.extend(par::map_slice(&idx, |&i| {
            angle_between(&p.normals[i], &g.normals[i]).unwrap_or(std::f64::consts::FRAC_PI_2)
        }));
    }
    if angles.is_empty() {
        return Err(Error::Empty("normal masks do not intersect".into()));
    }
    let sum = par::sum(&angles);
    Ok(NormalLoss {
        sum,
        mean: sum / angles.len() as f64,
        count: angles.len(),
    })
}

/// `0.5 r²` for `r ≤ δ`, `δ (r − δ/2)` beyond.
pub fn huber(r: f64, delta: f64) -> f64 {
    if r <= delta {
        0.5 * r * r
    } else {
        delta * (r - 0.5 * delta)
    }
}

/// Mean over ordered view pairs of the relative-rotation geodesic plus the
/// weighted Huber penalty on the scaled relative translation.
pub fn pose_loss(pred: &[Pose], gt: &[Pose], scale: f64, weights: &LossWeights) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} predicted vs {} ground-truth poses", pred.len(), gt.len())));
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("pose loss needs at least 2 views, got {n}")));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let terms = par::map_slice(&pairs, |&(i, j)| {
        let rp = relative_pose(&pred[i], &pred[j]);
        let rg = relative_pose(&gt[i], &gt[j]);
        let rot = rotation_geodesic(
            rp.rotation.to_rotation_matrix().matrix(),
            rg.rotation.to_rotation_matrix().matrix(),
        );
        let r = (scale * rp.translation.vector - rg.translation.vector).norm();
        rot + weights.trans * huber(r, weights.huber_delta)
    });
    Ok(par::sum(&terms) / (n * (n - 1)) as f64)
}

fn asymmetric(residual: f64, alpha: f64) -> f64 {
    if residual > 0.0 {
        alpha * residual
    } else {
        (1.0 - alpha) * -residual
    }
}

/// Asymmetric angular ray loss with the default mix `β = 0.75`.
pub fn ray_loss(pred: &RayField, gt: &RayField) -> Result<f64> {
    ray_loss_with(pred, gt, LossWeights::default().beta)
}

/// `β L_θ + (1 − β) L_φ`, each a sum over the mask intersection of the
/// overshoot-weighted absolute angle residual. Azimuth residuals wrap to
/// `(−π, π]`.
pub fn ray_loss_with(pred: &RayField, gt: &RayField, beta: f64) -> Result<f64> {
    let (l_theta, l_phi, count) = ray_terms(pred, gt)?;
    if count == 0 {
        return Err(Error::Empty("ray masks do not intersect".into()));
    }
    Ok(beta * l_theta + (1.0 - beta) * l_phi)
}

fn ray_terms(pred: &RayField, gt: &RayField) -> Result<(f64, f64, usize)> {
    check_shape("ray fields", pred.width, pred.height, gt.width, gt.height)?;
    let idx: Vec<usize> = (0..pred.dirs.len()).filter(|&i| pred.mask[i] && gt.mask[i]).collect();
    if let Some(&i) = idx
        .iter()
        .find(|&&i| !(pred.dirs[i].norm() > 0.0 && gt.dirs[i].norm() > 0.0))
    {
        return Err(Error::InvalidArgument(format!("zero-length ray at pixel {i}")));
    }
    let pairs = par::map_slice(&idx, |&i| {
        let (tp, pp) = direction_to_angles(&pred.dirs[i]);
        let (tg, pg) = direction_to_angles(&gt.dirs[i]);
        (
            asymmetric(tp - tg, RAY_ALPHA_THETA),
            asymmetric(wrap_angle(pp - pg), RAY_ALPHA_PHI),
        )
    });
    let th: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ph: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok((par::sum(&th), par::sum(&ph), idx.len()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarLoss {
    pub value: f64,
    /// Derivative of `value` per pixel; zero outside the mask intersection.
    pub grad: Vec<f64>,
    pub count: usize,
}

/// Mean absolute radial error over the mask intersection.
pub fn radial_loss(pred: &RadialMap, gt: &RadialMap) -> Result<ScalarLoss> {
    check_shape("radial maps", pred.width, pred.height, gt.width, gt.height)?;
    let idx: Vec<usize> = (0..pred.values.len()).filter(|&i| pred.mask[i] && gt.mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::Empty("radial masks do not intersect".into()));
    }
    let m = idx.len() as f64;
    let terms = par::map_slice(&idx, |&i| (pred.values[i] - gt.values[i]).abs());
    let mut grad = vec![0.0; pred.values.len()];
    for &i in &idx {
        grad[i] = sign(pred.values[i] - gt.values[i]) / m;
    }
    Ok(ScalarLoss {
        value: par::sum(&terms) / m,
        grad,
        count: idx.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyLoss {
    pub value: f64,
    /// Derivative with respect to the predicted radial distance.
    pub grad_radial: Vec<f64>,
    /// Derivative with respect to the predicted uncertainty.
    pub grad_uncertainty: Vec<f64>,
    pub count: usize,
}

/// Mean of `| |D̂ − D| − Û |` over the intersection of all three masks.
pub fn uncertainty_loss(pred_radial: &RadialMap, gt_radial: &RadialMap, pred_unc: &UncertaintyMap) -> Result<UncertaintyLoss> {
    check_shape("radial maps", pred_radial.width, pred_radial.height, gt_radial.width, gt_radial.height)?;
    check_shape("uncertainty map", pred_radial.width, pred_radial.height, pred_unc.width, pred_unc.height)?;
    let idx: Vec<usize> = (0..pred_radial.values.len())
        .filter(|&i| pred_radial.mask[i] && gt_radial.mask[i] && pred_unc.mask[i])
        .collect();
    if idx.is_empty() {
        return Err(Error::Empty("uncertainty masks do not intersect".into()));
    }
    let m = idx.len() as f64;
    let terms = par::map_slice(&idx, |&i| ((pred_radial.values[i] - gt_radial.values[i]).abs() - pred_unc.values[i]).abs());
    let n = pred_radial.values.len();
    let mut grad_radial = vec![0.0; n];
    let mut grad_uncertainty = vec![0.0; n];
    for &i in &idx {
        let r = pred_radial.values[i] - gt_radial.values[i];
        let outer = sign(r.abs() - pred_unc.values[i]);
        grad_radial[i] = outer * sign(r) / m;
        grad_uncertainty[i] = -outer / m;
    }
    Ok(UncertaintyLoss {
        value: par::sum(&terms) / m,
        grad_radial,
        grad_uncertainty,
        count: idx.len(),
    })
}

/// Unweighted loss terms and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub points: f64,
    /// Sum over pixels; see `normal_mean` for the per-pixel mean.
    pub normal: f64,
    pub normal_mean: f64,
    pub pose: f64,
    pub ray: f64,
    pub rad: f64,
    pub uncer: f64,
    /// Global scale from the point loss, reused by the pose loss.
    pub scale: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `points + λ_normal·normal + λ_pose·pose + λ_ray·ray + λ_rad·rad + λ_uncer·uncer`.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        self.points + w.normal * self.normal + w.pose * self.pose + w.ray * self.ray + w.rad * self.rad + w.uncer * self.uncer
    }
}

/// Every loss term for a multi-view prediction. Radial and uncertainty
/// means pool pixels across views; normal and ray sums add across views.
pub fn total_loss(pred: &[ViewPrediction], gt: &[ViewGroundTruth], weights: &LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} predicted vs {} ground-truth views", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("no views".into()));
    }
    let (w0, h0) = (pred[0].rays.width, pred[0].rays.height);
    for (p, g) in pred.iter().zip(gt) {
        check_shape("views", w0, h0, p.rays.width, p.rays.height)?;
        check_shape("views", w0, h0, g.points.width, g.points.height)?;
    }

    let pl = point_loss(pred, gt)?;

    let pred_points = pred
        .iter()
        .map(|p| PointMap::from_rays_and_radial(&p.rays, &p.radial))
        .collect::<Result<Vec<_>>>()?;
    let pred_normals: Vec<NormalMap> = pred_points.iter().map(normals_from_pointmap).collect();
    let gt_normals: Vec<NormalMap> = gt
        .iter()
        .map(|g| g.normals.clone().unwrap_or_else(|| normals_from_pointmap(&g.points)))
        .collect();
    let nl = normal_loss_views(&pred_normals, &gt_normals)?;

    let pred_poses: Vec<Pose> = pred.iter().map(|p| p.pose).collect();
    let gt_poses: Vec<Pose> = gt.iter().map(|g| g.pose).collect();
    let pose = pose_loss(&pred_poses, &gt_poses, pl.scale, weights)?;

    let (mut l_theta, mut l_phi, mut ray_count) = (0.0, 0.0, 0);
    for (p, g) in pred.iter().zip(gt) {
        let (t, f, c) = ray_terms(&p.rays, &g.rays)?;
        l_theta += t;
        l_phi += f;
        ray_count += c;
    }
    if ray_count == 0 {
        return Err(Error::Empty("ray masks do not intersect".into()));
    }
    let ray = weights.beta * l_theta + (1.0 - weights.beta) * l_phi;

    let (mut rad_sum, mut rad_n, mut unc_sum, mut unc_n) = (0.0, 0, 0.0, 0);
    for (p, g) in pred.iter().zip(gt) {
        if let Ok(r) = radial_loss(&p.radial, &g.radial) {
            rad_sum += r.value * r.count as f64;
            rad_n += r.count;
        }
        if let Ok(u) = uncertainty_loss(&p.radial, &g.radial, &p.uncertainty) {
            unc_sum += u.value * u.count as f64;
            unc_n += u.count;
        }
    }
    if rad_n == 0 {
        return Err(Error::Empty("radial masks do not intersect".into()));
    }
    if unc_n == 0 {
        return Err(Error::Empty("uncertainty masks do not intersect".into()));
    }

    let mut out = LossBreakdown {
        points: pl.value,
        normal: nl.sum,
        normal_mean: nl.mean,
        pose,
        ray,
        rad: rad_sum / rad_n as f64,
        uncer: unc_sum / unc_n as f64,
        scale: pl.scale,
        total: 0.0,
    };
    out.total = out.weighted_total(weights);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{ray_field, CameraModel, Pinhole};
    use crate::geometry::{angles_to_direction, pose_from_parts, rot_y, rot_z, ScalarMap};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn single_ray(d: Vec3) -> RayField {
        RayField::new(1, 1, vec![d], vec![true]).unwrap()
    }

    #[test]
    fn ray_loss_hand_cases() {
        let (t, p) = (1.0, 2.0);
        let gt = single_ray(angles_to_direction(t, p));
        let over = single_ray(angles_to_direction(t + 0.1, p));
        assert!((ray_loss(&over, &gt).unwrap() - 0.0525).abs() < 1e-12);
        let under = single_ray(angles_to_direction(t - 0.1, p - 0.2));
        assert!((ray_loss(&under, &gt).unwrap() - 0.0475).abs() < 1e-12);
        assert_eq!(ray_loss(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn ray_loss_wraps_azimuth() {
        let gt = single_ray(angles_to_direction(1.0, 0.05));
        let pred = single_ray(angles_to_direction(1.0, 0.05 + 2.0 * PI));
        assert!(ray_loss(&pred, &gt).unwrap() < 1e-12);
        let a = single_ray(angles_to_direction(1.0, 0.02));
        let b = single_ray(angles_to_direction(1.0, 2.0 * PI - 0.02));
        assert_relative_eq!(ray_loss(&a, &b).unwrap(), 0.25 * 0.5 * 0.04, epsilon = 1e-12);
    }

    #[test]
    fn ray_loss_empty_intersection() {
        let a = RayField::new(1, 1, vec![Vec3::z()], vec![false]).unwrap();
        assert!(ray_loss(&a, &a).is_err());
    }

    #[test]
    fn point_loss_single_pixel_absorbs_scale() {
        let pred = PointMap::new(1, 1, vec![Vec3::new(0.0, 0.0, 2.0)], vec![true]).unwrap();
        let gt = PointMap::new(1, 1, vec![Vec3::new(0.0, 0.0, 1.0)], vec![true]).unwrap();
        let d = ScalarMap::filled(1, 1, 1.0);
        let out = point_loss_from_points(&[pred], &[&gt], &[&d]).unwrap();
        assert_eq!(out.scale, 0.5);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn point_loss_empty_mask() {
        let pred = PointMap::new(1, 1, vec![Vec3::z()], vec![false]).unwrap();
        let d = ScalarMap::filled(1, 1, 1.0);
        assert!(point_loss_from_points(std::slice::from_ref(&pred), &[&pred], &[&d]).is_err());
    }

    #[test]
    fn normals_of_a_plane() {
        let cam = CameraModel::Pinhole(Pinhole::with_hfov(60f64.to_radians(), 16, 12).unwrap());
        let rays = ray_field(&cam);
        let radial = ScalarMap::new(16, 12, rays.dirs.iter().map(|d| 1.0 / d.z).collect(), vec![true; 192]).unwrap();
        let pm = PointMap::from_rays_and_radial(&rays, &radial).unwrap();
        let n = normals_from_pointmap(&pm);
        for y in 0..12 {
            for x in 0..16 {
                let i = y * 16 + x;
                let interior = x > 0 && y > 0 && x < 15 && y < 11;
                assert_eq!(n.mask[i], interior);
                if interior {
                    assert!((n.normals[i] - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn normals_tiny_map_is_empty() {
        let pm = PointMap::new(2, 2, vec![Vec3::z(); 4], vec![true; 4]).unwrap();
        assert!(normals_from_pointmap(&pm).mask.iter().all(|m| !m));
    }

    #[test]
    fn normal_loss_cases() {
        let a = NormalMap::new(3, 1, vec![Vec3::x(); 3], vec![true; 3]).unwrap();
        let b = NormalMap::new(3, 1, vec![Vec3::y(); 3], vec![true; 3]).unwrap();
        assert_eq!(normal_loss(&a, &a).unwrap().sum, 0.0);
        let l = normal_loss(&a, &b).unwrap();
        assert_relative_eq!(l.sum, 1.5 * PI, epsilon = 1e-12);
        assert_relative_eq!(l.mean, 0.5 * PI, epsilon = 1e-12);
        let c = NormalMap::new(3, 1, vec![Vec3::x(); 3], vec![false; 3]).unwrap();
        assert!(normal_loss(&a, &c).is_err());
    }

    #[test]
    fn pose_loss_cases() {
        let w = LossWeights::default();
        let gt = vec![Pose::identity(), pose_from_parts(&rot_y(0.2), &Vec3::new(1.0, 0.0, 0.0))];
        assert_eq!(pose_loss(&gt, &gt, 1.0, &w).unwrap(), 0.0);
        let pred = vec![Pose::identity(), pose_from_parts(&rot_y(0.2), &Vec3::new(1.05, 0.0, 0.0))];
        // the reverse pair sees the same error rotated, so both terms match
        assert_relative_eq!(pose_loss(&pred, &gt, 1.0, &w).unwrap(), 0.00125, epsilon = 1e-12);
        assert!(pose_loss(&gt[..1], &gt[..1], 1.0, &w).is_err());
    }

    #[test]
    fn pose_loss_rotation_term() {
        let w = LossWeights::default();
        let gt = vec![Pose::identity(), Pose::identity()];
        let pred = vec![Pose::identity(), pose_from_parts(&rot_z(PI / 6.0), &Vec3::zeros())];
        assert_relative_eq!(pose_loss(&pred, &gt, 1.0, &w).unwrap(), PI / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber(0.05, 0.1), 0.5 * 0.05 * 0.05);
        assert_relative_eq!(huber(0.3, 0.1), 0.1 * 0.25);
        assert_relative_eq!(huber(0.1, 0.1), 0.005);
    }

    #[test]
    fn radial_and_uncertainty_cases() {
        let gt = ScalarMap::filled(4, 2, 2.0);
        let off = ScalarMap::filled(4, 2, 2.3);
        assert_relative_eq!(radial_loss(&off, &gt).unwrap().value, 0.3, epsilon = 1e-12);
        assert_eq!(radial_loss(&gt, &gt).unwrap().value, 0.0);
        let u = ScalarMap::filled(4, 2, 0.2);
        assert_relative_eq!(uncertainty_loss(&gt, &gt, &u).unwrap().value, 0.2);
        let exact = ScalarMap::filled(4, 2, 0.3);
        assert!(uncertainty_loss(&off, &gt, &exact).unwrap().value < 1e-12);
    }

    #[test]
    fn weighted_total_with_unit_terms() {
        let b = LossBreakdown {
            points: 1.0,
            normal: 1.0,
            pose: 1.0,
            ray: 1.0,
            rad: 1.0,
            uncer: 1.0,
            ..Default::default()
        };
        assert_relative_eq!(b.weighted_total(&LossWeights::default()), 13.2, epsilon = 1e-12);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let bad = LossWeights {
            normal: -1.0,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
        let w: LossWeights = serde_json::from_str(r#"{"normal": 5.0}"#).unwrap();
        assert_eq!(w.normal, 5.0);
        assert_eq!(w.pose, 0.1);
    }
}
