//! Evaluation metrics: pairwise pose accuracies and AUC, trajectory errors,
//! point-cloud accuracy / completion / normal consistency, and depth errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::align::{umeyama, Similarity};
use crate::error::{Error, Result};
use crate::geometry::{angle_between, relative_pose, rotation_geodesic, Pose, RadialMap, Vec3};
use crate::par;
use crate::spatial::KdTree;

/// Named scalar metrics, serialized as a flat JSON object with sorted keys.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricReport(pub BTreeMap<String, f64>);

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: f64) {
        self.0.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.get(key).copied()
    }

    /// One row per scene; columns are the sorted union of all keys, and a
    /// metric missing from a scene is left empty.
    pub fn to_csv(rows: &[(String, MetricReport)]) -> String {
        let mut keys: Vec<&String> = rows.iter().flat_map(|(_, r)| r.0.keys()).collect();
        keys.sort();
        keys.dedup();
        let mut out = String::from("scene");
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for (scene, r) in rows {
            out.push_str(scene);
            for k in &keys {
                out.push(',');
                if let Some(v) = r.0.get(*k) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

fn check_pose_sets(pred: &[Pose], gt: &[Pose], min: usize) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} predicted vs {} ground-truth poses", pred.len(), gt.len())));
    }
    if pred.len() < min {
        return Err(Error::InvalidArgument(format!("need at least {min} poses, got {}", pred.len())));
    }
    Ok(())
}

/// Per-pair angular errors in degrees over unordered pairs `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairErrors {
    pub rotation_deg: Vec<f64>,
    /// Two entries per pair, one for each direction of the relative
    /// translation. Pairs whose ground-truth relative translation is zero are
    /// left out.
    pub translation_deg: Vec<f64>,
}

fn translation_angle(pred: &[Pose], gt: &[Pose], i: usize, j: usize) -> Option<f64> {
    let tg = relative_pose(&gt[i], &gt[j]).translation.vector;
    let tp = relative_pose(&pred[i], &pred[j]).translation.vector;
    if tg.norm() == 0.0 {
        None
    } else {
        Some(angle_between(&tp, &tg).map_or(180.0, f64::to_degrees))
    }
}

/// Relative-rotation geodesic and relative-translation direction angles for
/// every unordered pair. The translation angle is taken in both directions
/// `i → j` and `j → i`, so the result does not depend on frame order. A zero
/// predicted translation counts as 180°.
pub fn pair_errors(pred: &[Pose], gt: &[Pose]) -> Result<PairErrors> {
    check_pose_sets(pred, gt, 2)?;
    let n = pred.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let errs = par::map_slice(&pairs, |&(i, j)| {
        let rp = relative_pose(&pred[i], &pred[j]);
        let rg = relative_pose(&gt[i], &gt[j]);
        let rot = rotation_geodesic(
            rp.rotation.to_rotation_matrix().matrix(),
            rg.rotation.to_rotation_matrix().matrix(),
        )
        .to_degrees();
        (rot, translation_angle(pred, gt, i, j), translation_angle(pred, gt, j, i))
    });
    Ok(PairErrors {
        rotation_deg: errs.iter().map(|e| e.0).collect(),
        translation_deg: errs.iter().flat_map(|e| [e.1, e.2]).flatten().collect(),
    })
}

fn percent_below(errs: &[f64], tau: f64) -> f64 {
    100.0 * errs.iter().filter(|e| **e < tau).count() as f64 / errs.len() as f64
}

impl PairErrors {
    /// `(RRA@τ, RTA@τ)` in percent, counting errors strictly below `τ`.
    pub fn accuracy(&self, tau: f64) -> Result<(f64, f64)> {
        if self.translation_deg.is_empty() {
            return Err(Error::Degenerate("every ground-truth relative translation is zero".into()));
        }
        Ok((percent_below(&self.rotation_deg, tau), percent_below(&self.translation_deg, tau)))
    }

    /// Mean over integer thresholds `1..=tau_max` of `min(RRA, RTA)`.
    pub fn auc(&self, tau_max: u32) -> Result<f64> {
        if tau_max == 0 {
            return Err(Error::InvalidArgument("tau_max must be at least 1".into()));
        }
        let mut acc = 0.0;
        for t in 1..=tau_max {
            let (r, a) = self.accuracy(t as f64)?;
            acc += r.min(a);
        }
        Ok(acc / tau_max as f64)
    }
}

/// Relative rotation and translation accuracy at `tau` degrees, in percent.
pub fn rra_rta(pred: &[Pose], gt: &[Pose], tau: f64) -> Result<(f64, f64)> {
    pair_errors(pred, gt)?.accuracy(tau)
}

/// Area under the `min(RRA, RTA)` curve up to `tau_max` degrees, in percent.
pub fn auc_at(pred: &[Pose], gt: &[Pose], tau_max: u32) -> Result<f64> {
    pair_errors(pred, gt)?.auc(tau_max)
}

fn positions(poses: &[Pose]) -> Vec<Vec3> {
    poses.iter().map(|p| p.translation.vector).collect()
}

fn rms(values: &[f64]) -> f64 {
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    (par::sum(&sq) / sq.len() as f64).sqrt()
}

/// Absolute trajectory error and the similarity that aligned the predicted
/// camera centers onto the ground truth.
pub fn ate_with_alignment(pred: &[Pose], gt: &[Pose]) -> Result<(f64, Similarity)> {
    check_pose_sets(pred, gt, 3)?;
    let p = positions(pred);
    let g = positions(gt);
    let sim = umeyama(&p, &g, true)?;
    let errs: Vec<f64> = p.iter().zip(&g).map(|(a, b)| (sim.apply(a) - b).norm()).collect();
    Ok((rms(&errs), sim))
}

/// RMSE of camera centers after similarity alignment, in meters.
pub fn ate(pred: &[Pose], gt: &[Pose]) -> Result<f64> {
    ate_with_alignment(pred, gt).map(|r| r.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rpe {
    /// Meters, RMSE.
    pub trans: f64,
    /// Degrees, RMSE.
    pub rot_deg: f64,
    /// Scale applied to predicted translations.
    pub scale: f64,
}

/// Relative pose error over consecutive frames. Predicted translations are
/// scaled by the trajectory alignment scale; with fewer than three frames,
/// or a degenerate trajectory, the ratio of path lengths is used instead.
pub fn rpe(pred: &[Pose], gt: &[Pose]) -> Result<Rpe> {
    check_pose_sets(pred, gt, 2)?;
    let n = pred.len();
    let dp: Vec<Pose> = (0..n - 1).map(|i| relative_pose(&pred[i], &pred[i + 1])).collect();
    let dg: Vec<Pose> = (0..n - 1).map(|i| relative_pose(&gt[i], &gt[i + 1])).collect();
    let scale = match ate_with_alignment(pred, gt) {
        Ok((_, sim)) => sim.scale,
        Err(_) => {
            let lp: f64 = dp.iter().map(|d| d.translation.vector.norm()).sum();
            let lg: f64 = dg.iter().map(|d| d.translation.vector.norm()).sum();
            if lp > 0.0 {
                lg / lp
            } else {
                1.0
            }
        }
    };
    let mut te = Vec::with_capacity(n - 1);
    let mut re = Vec::with_capacity(n - 1);
    for (p, g) in dp.iter().zip(&dg) {
        let mut ps = *p;
        ps.translation.vector *= scale;
        let e = g.inverse() * ps;
        te.push(e.translation.vector.norm());
        re.push(
            rotation_geodesic(
                ps.rotation.to_rotation_matrix().matrix(),
                g.rotation.to_rotation_matrix().matrix(),
            )
            .to_degrees(),
        );
    }
    Ok(Rpe {
        trans: rms(&te),
        rot_deg: rms(&re),
        scale,
    })
}

/// All pose metrics at one threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PoseReport {
    pub rra: f64,
    pub rta: f64,
    pub auc: f64,
    pub ate: f64,
    pub rpe_trans: f64,
    pub rpe_rot: f64,
}

pub fn pose_report(pred: &[Pose], gt: &[Pose], tau: u32) -> Result<PoseReport> {
    let errs = pair_errors(pred, gt)?;
    let (rra, rta) = errs.accuracy(tau as f64)?;
    let auc = errs.auc(tau)?;
    let ate = ate(pred, gt)?;
    let r = rpe(pred, gt)?;
    Ok(PoseReport {
        rra,
        rta,
        auc,
        ate,
        rpe_trans: r.trans,
        rpe_rot: r.rot_deg,
    })
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    par::sort_by(&mut v, |a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn mean(values: &[f64]) -> f64 {
    par::sum(values) / values.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AccComp {
    pub acc_mean: f64,
    pub acc_median: f64,
    pub comp_mean: f64,
    pub comp_median: f64,
}

/// Nearest-neighbor distances from every point of `from` to `to`.
pub fn nn_distances(from: &[Vec3], to: &KdTree) -> Vec<f64> {
    to.nearest_all(from).iter().map(|n| n.distance()).collect()
}

/// Accuracy (predicted to ground truth) and completion (ground truth to
/// predicted) nearest-neighbor distances.
pub fn accuracy_completion(pred: &[Vec3], gt: &[Vec3]) -> Result<AccComp> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Empty("point clouds must be non-empty".into()));
    }
    let gt_tree = KdTree::build(gt)?;
    let pred_tree = KdTree::build(pred)?;
    let acc = nn_distances(pred, &gt_tree);
    let comp = nn_distances(gt, &pred_tree);
    Ok(AccComp {
        acc_mean: mean(&acc),
        acc_median: median(&acc).unwrap_or(0.0),
        comp_mean: mean(&comp),
        comp_median: median(&comp).unwrap_or(0.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormalConsistency {
    pub nc_mean: f64,
    pub nc_median: f64,
}

/// `|n̂·n|` against the nearest neighbor's normal, averaged over both
/// directions (predicted to ground truth and back).
pub fn normal_consistency(pred: &[Vec3], pred_normals: &[Vec3], gt: &[Vec3], gt_normals: &[Vec3]) -> Result<NormalConsistency> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Empty("point clouds must be non-empty".into()));
    }
    if pred.len() != pred_normals.len() || gt.len() != gt_normals.len() {
        return Err(Error::DimensionMismatch("every point needs a normal".into()));
    }
    let gt_tree = KdTree::build(gt)?;
    let pred_tree = KdTree::build(pred)?;
    let fwd: Vec<f64> = gt_tree
        .nearest_all(pred)
        .iter()
        .zip(pred_normals)
        .map(|(nb, n)| n.dot(&gt_normals[nb.index]).abs())
        .collect();
    let bwd: Vec<f64> = pred_tree
        .nearest_all(gt)
        .iter()
        .zip(gt_normals)
        .map(|(nb, n)| n.dot(&pred_normals[nb.index]).abs())
        .collect();
    Ok(NormalConsistency {
        nc_mean: 0.5 * (mean(&fwd) + mean(&bwd)),
        nc_median: 0.5 * (median(&fwd).unwrap_or(0.0) + median(&bwd).unwrap_or(0.0)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Median-scaling factor applied to the prediction.
    pub scale: f64,
}

/// Depth errors after scaling the prediction by `median(gt) / median(pred)`.
/// Threshold accuracies count ratios strictly below `1.25^k`.
pub fn depth_metrics(pred: &RadialMap, gt: &RadialMap) -> Result<DepthMetrics> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let idx: Vec<usize> = (0..pred.values.len()).filter(|&i| pred.mask[i] && gt.mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::Empty("depth masks do not intersect".into()));
    }
    if let Some(&i) = idx.iter().find(|&&i| !(gt.values[i] > 0.0) || !(pred.values[i] > 0.0)) {
        return Err(Error::InvalidArgument(format!("non-positive depth at pixel {i}")));
    }
    let p: Vec<f64> = idx.iter().map(|&i| pred.values[i]).collect();
    let g: Vec<f64> = idx.iter().map(|&i| gt.values[i]).collect();
    let scale = median(&g).unwrap_or(1.0) / median(&p).unwrap_or(1.0);
    let ps: Vec<f64> = p.iter().map(|v| v * scale).collect();
    let rel: Vec<f64> = ps.iter().zip(&g).map(|(a, b)| (a - b).abs() / b).collect();
    let sq: Vec<f64> = ps.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).collect();
    let ratio: Vec<f64> = ps.iter().zip(&g).map(|(a, b)| (a / b).max(b / a)).collect();
    let frac = |t: f64| ratio.iter().filter(|r| **r < t).count() as f64 / ratio.len() as f64;
    Ok(DepthMetrics {
        abs_rel: mean(&rel),
        rmse: mean(&sq).sqrt(),
        delta1: frac(1.25),
        delta2: frac(1.25f64.powi(2)),
        delta3: frac(1.25f64.powi(3)),
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pose_from_parts, rot_x, rot_y, rot_z, ScalarMap};
    use approx::assert_relative_eq;

    fn curved_trajectory(n: usize) -> Vec<Pose> {
        (0..n)
            .map(|i| pose_from_parts(&rot_y(0.1 * i as f64), &Vec3::new(i as f64, 0.2 * (i * i) as f64, 0.0)))
            .collect()
    }

    #[test]
    fn perfect_poses() {
        let gt = curved_trajectory(6);
        let r = pose_report(&gt, &gt, 30).unwrap();
        assert_eq!((r.rra, r.rta, r.auc), (100.0, 100.0, 100.0));
        assert!(r.ate < 1e-12);
        assert_eq!((r.rpe_trans, r.rpe_rot), (0.0, 0.0));
    }

    #[test]
    fn rotation_errors_of_45_degrees() {
        let gt = vec![Pose::identity(), pose_from_parts(&rot_x(0.0), &Vec3::x())];
        let pred = vec![Pose::identity(), pose_from_parts(&rot_z(45f64.to_radians()), &Vec3::x())];
        assert_eq!(rra_rta(&pred, &gt, 30.0).unwrap().0, 0.0);
        assert_eq!(rra_rta(&pred, &gt, 50.0).unwrap().0, 100.0);
    }

    #[test]
    fn auc_step_function() {
        let errs = PairErrors {
            rotation_deg: vec![15.5; 4],
            translation_deg: vec![15.5; 4],
        };
        assert_relative_eq!(errs.auc(30).unwrap(), 50.0, epsilon = 1e-12);
        assert!(errs.auc(0).is_err());
    }

    #[test]
    fn too_few_poses() {
        let one = vec![Pose::identity()];
        assert!(rra_rta(&one, &one, 30.0).is_err());
        assert!(ate(&curved_trajectory(2), &curved_trajectory(2)).is_err());
        assert!(rra_rta(&curved_trajectory(3), &curved_trajectory(2), 30.0).is_err());
    }

    #[test]
    fn ate_absorbs_similarity() {
        let gt = curved_trajectory(8);
        let s = Similarity {
            scale: 2.5,
            rotation: rot_z(0.7),
            translation: Vec3::new(1.0, -3.0, 0.5),
        };
        let pred: Vec<Pose> = gt
            .iter()
            .map(|p| {
                let r = s.rotation * p.rotation.to_rotation_matrix();
                pose_from_parts(&r, &s.apply(&p.translation.vector))
            })
            .collect();
        assert!(ate(&pred, &gt).unwrap() < 1e-9);
        let r = rpe(&pred, &gt).unwrap();
        assert!(r.trans < 1e-9 && r.rot_deg < 1e-9);
    }

    #[test]
    fn rpe_single_pair_rotation() {
        let gt = vec![Pose::identity(), pose_from_parts(&rot_y(0.0), &Vec3::x())];
        let pred = vec![Pose::identity(), pose_from_parts(&rot_y(10f64.to_radians()), &Vec3::x())];
        let r = rpe(&pred, &gt).unwrap();
        assert_relative_eq!(r.rot_deg, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn acc_comp_hand_example() {
        let pred = vec![Vec3::zeros()];
        let gt = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0)];
        let r = accuracy_completion(&pred, &gt).unwrap();
        assert_eq!(r.acc_mean, 1.0);
        assert_eq!(r.comp_mean, 2.0);
        assert_eq!(r.comp_median, 2.0);
        assert!(accuracy_completion(&[], &gt).is_err());
    }

    #[test]
    fn normal_consistency_cases() {
        let pts = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        let nx = vec![Vec3::x(); 3];
        let ny = vec![Vec3::y(); 3];
        assert_eq!(normal_consistency(&pts, &nx, &pts, &nx).unwrap().nc_mean, 1.0);
        assert_eq!(normal_consistency(&pts, &nx, &pts, &ny).unwrap().nc_mean, 0.0);
        assert!(normal_consistency(&pts, &nx[..2], &pts, &nx).is_err());
    }

    #[test]
    fn depth_cases() {
        let gt = ScalarMap::new(3, 1, vec![1.0, 2.0, 4.0], vec![true; 3]).unwrap();
        let r = depth_metrics(&gt, &gt).unwrap();
        assert_eq!((r.abs_rel, r.rmse, r.delta1, r.delta2, r.delta3), (0.0, 0.0, 1.0, 1.0, 1.0));
        let scaled = ScalarMap::new(3, 1, vec![1.2, 2.4, 4.8], vec![true; 3]).unwrap();
        let r = depth_metrics(&scaled, &gt).unwrap();
        assert!(r.abs_rel < 1e-12 && r.rmse < 1e-12);
        assert_eq!(r.delta1, 1.0);
        let none = ScalarMap::new(3, 1, vec![1.0; 3], vec![false; 3]).unwrap();
        assert!(depth_metrics(&none, &gt).is_err());
    }

    #[test]
    fn report_json_and_csv() {
        let mut a = MetricReport::new();
        a.insert("b", 2.0);
        a.insert("a", 1.0);
        assert_eq!(serde_json::to_string(&a).unwrap(), r#"{"a":1.0,"b":2.0}"#);
        let mut b = MetricReport::new();
        b.insert("c", 3.5);
        let csv = MetricReport::to_csv(&[("s1".into(), a), ("s2".into(), b)]);
        assert_eq!(csv, "scene,a,b,c\ns1,1,2,\ns2,,,3.5\n");
    }
}
