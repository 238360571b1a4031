//! Scale and rigid alignment between predicted and ground-truth geometry.
//!
//! * [`solve_optimal_scale`]: exact minimizer of the weighted ℓ1 objective
//!   `g(s) = Σ w |s·a − b|` over scalar coordinate terms (a weighted median).
//! * [`umeyama`]: closed-form least-squares similarity via SVD.
//! * [`icp`]: point-to-point ICP on a kd-tree.
//! * [`align_pipeline`]: Umeyama, then global scale refinement, then ICP.

use nalgebra::{Matrix3, Rotation3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::par;
use crate::spatial::KdTree;

/// `p ↦ s·R·p + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Rotation3<f64>,
    pub translation: Vec3,
}

impl Default for Similarity {
    fn default() -> Self {
        Self::identity()
    }
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Rotation3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn apply_all(&self, pts: &[Vec3]) -> Vec<Vec3> {
        par::map_slice(pts, |p| self.apply(p))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Similarity) -> Similarity {
        Similarity {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Similarity {
        let rt = self.rotation.inverse();
        Similarity {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }
}

/// Serializable summary of a [`Similarity`].
#[derive(Clone, Debug, Serialize)]
pub struct SimilarityRecord {
    pub scale: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&Similarity> for SimilarityRecord {
    fn from(s: &Similarity) -> Self {
        let m = s.rotation.matrix();
        SimilarityRecord {
            scale: s.scale,
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation: [s.translation.x, s.translation.y, s.translation.z],
        }
    }
}

/// Paired points with per-pair weights (typically `1 / radial distance`).
#[derive(Clone, Copy, Debug)]
pub struct ScaleSolveInput<'a> {
    pub pred: &'a [Vec3],
    pub gt: &'a [Vec3],
    pub weights: &'a [f64],
}

impl<'a> ScaleSolveInput<'a> {
    pub fn new(pred: &'a [Vec3], gt: &'a [Vec3], weights: &'a [f64]) -> Result<Self> {
        if pred.len() != gt.len() || pred.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} predicted, {} ground-truth points and {} weights",
                pred.len(),
                gt.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidArgument(format!("weights must be positive and finite, got {w}")));
        }
        Ok(Self { pred, gt, weights })
    }

    /// `g(s) = Σ_k w_k Σ_c |s·a_kc − b_kc|`.
    pub fn objective(&self, s: f64) -> f64 {
        let terms: Vec<f64> = (0..self.pred.len())
            .map(|k| self.weights[k] * (s * self.pred[k] - self.gt[k]).abs().sum())
            .collect();
        par::sum(&terms)
    }
}

/// Exact minimizer of the weighted ℓ1 scale objective: the lower weighted
/// median of `b/a` with weights `w|a|` over terms with `a ≠ 0`.
pub fn solve_optimal_scale(input: &ScaleSolveInput<'_>) -> Result<f64> {
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(3 * input.pred.len());
    for k in 0..input.pred.len() {
        for c in 0..3 {
            let a = input.pred[k][c];
            if a != 0.0 {
                terms.push((input.gt[k][c] / a, input.weights[k] * a.abs()));
            }
        }
    }
    if terms.is_empty() {
        return Err(Error::ConstantObjective(
            "every predicted coordinate is zero; the scale objective does not depend on s".into(),
        ));
    }
    lower_weighted_median(&mut terms)
        .ok_or_else(|| Error::InvalidArgument("non-finite scale terms".into()))
}

/// Smallest value whose cumulative weight reaches half the total.
pub fn lower_weighted_median(terms: &mut [(f64, f64)]) -> Option<f64> {
    if terms.iter().any(|(v, w)| !v.is_finite() || !w.is_finite()) {
        return None;
    }
    par::sort_by(terms, |a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let total: f64 = terms.iter().map(|t| t.1).sum();
    let half = 0.5 * total;
    let mut cum = 0.0;
    for &(v, w) in terms.iter() {
        cum += w;
        if cum >= half {
            return Some(v);
        }
    }
    terms.last().map(|t| t.0)
}

fn centroid(pts: &[Vec3]) -> Vec3 {
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
    let zs: Vec<f64> = pts.iter().map(|p| p.z).collect();
    Vec3::new(par::sum(&xs) / n, par::sum(&ys) / n, par::sum(&zs) / n)
}

/// Least-squares similarity (or rigid transform when `with_scale` is false)
/// mapping `src` onto `dst`.
pub fn umeyama(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<Similarity> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!("{} source vs {} target points", src.len(), dst.len())));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 pairs, got {}", src.len())));
    }
    let n = src.len() as f64;
    let coincide = src == dst;
    let mu_s = centroid(src);
    let mu_d = centroid(dst);
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let xs = s - mu_s;
        let xd = d - mu_d;
        cov += xd * xs.transpose();
        var_s += xs.norm_squared();
    }
    cov /= n;
    var_s /= n;
    if !(var_s > 0.0) {
        return Err(Error::Degenerate("source points coincide".into()));
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("U requested");
    let v_t = svd.v_t.expect("V^T requested");
    let sv = svd.singular_values;
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(sorted[0] > 0.0) || sorted[1] <= 1e-10 * sorted[0] {
        return Err(Error::Degenerate("collinear or coincident correspondences".into()));
    }
    if coincide {
        // zero residual is attainable exactly
        return Ok(Similarity::identity());
    }
    let mut signs = [1.0; 3];
    if u.determinant() * v_t.determinant() < 0.0 {
        signs[sv.imin()] = -1.0;
    }
    let s_mat = Matrix3::from_diagonal(&Vec3::new(signs[0], signs[1], signs[2]));
    let r = u * s_mat * v_t;
    let scale = if with_scale {
        (sv[0] * signs[0] + sv[1] * signs[1] + sv[2] * signs[2]) / var_s
    } else {
        1.0
    };
    let rotation = Rotation3::from_matrix_unchecked(r);
    Ok(Similarity {
        scale,
        translation: mu_d - scale * (rotation * mu_s),
        rotation,
    })
}

/// Root mean squared paired distance.
pub fn paired_rms(a: &[Vec3], b: &[Vec3]) -> f64 {
    let sq: Vec<f64> = a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).collect();
    (par::sum(&sq) / sq.len().max(1) as f64).sqrt()
}

/// Root mean squared distance from each point to its nearest neighbor in `tree`.
pub fn nearest_rms(tree: &KdTree, pts: &[Vec3]) -> f64 {
    let sq: Vec<f64> = tree.nearest_all(pts).iter().map(|n| n.dist_sq).collect();
    (par::sum(&sq) / sq.len().max(1) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpParams {
    pub max_iter: usize,
    /// Stop when the RMS decreases by less than this (meters).
    pub tol: f64,
    /// Correspondences farther than this multiple of the median distance are dropped.
    pub rejection_factor: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-6,
            rejection_factor: 5.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IcpResult {
    pub transform: Similarity,
    pub rms: f64,
    pub iterations: usize,
    /// RMS before the first iteration and after every accepted one.
    pub rms_history: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Rigid point-to-point ICP aligning `src` onto `dst`. An update that would
/// raise the RMS is rejected and ends the iteration.
pub fn icp(src: &[Vec3], dst: &[Vec3], params: &IcpParams) -> Result<IcpResult> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::Empty("ICP needs non-empty clouds".into()));
    }
    let tree = KdTree::build(dst)?;
    let mut current = Similarity::identity();
    let mut moved = src.to_vec();
    let mut nn = tree.nearest_all(&moved);
    let mut rms = rms_of(&nn);
    let mut history = vec![rms];
    let mut iterations = 0;

    for it in 1..=params.max_iter {
        iterations = it;
        let mut dists: Vec<f64> = nn.iter().map(|n| n.distance()).collect();
        let threshold = params.rejection_factor * median(&mut dists);
        let mut from = Vec::with_capacity(moved.len());
        let mut to = Vec::with_capacity(moved.len());
        for (p, n) in moved.iter().zip(&nn) {
            if n.distance() <= threshold {
                from.push(*p);
                to.push(tree.points()[n.index]);
            }
        }
        if from.len() < 3 {
            from = moved.clone();
            to = nn.iter().map(|n| tree.points()[n.index]).collect();
        }
        let delta = match umeyama(&from, &to, false) {
            Ok(d) => d,
            Err(_) => break,
        };
        let candidate = delta.compose(&current);
        let cand_moved = candidate.apply_all(src);
        let cand_nn = tree.nearest_all(&cand_moved);
        let cand_rms = rms_of(&cand_nn);
        if cand_rms > rms {
            break;
        }
        let change = rms - cand_rms;
        current = candidate;
        moved = cand_moved;
        nn = cand_nn;
        rms = cand_rms;
        history.push(rms);
        if change < params.tol {
            break;
        }
    }
    Ok(IcpResult {
        transform: current,
        rms,
        iterations,
        rms_history: history,
    })
}

fn rms_of(nn: &[crate::spatial::Neighbor]) -> f64 {
    let sq: Vec<f64> = nn.iter().map(|n| n.dist_sq).collect();
    (par::sum(&sq) / sq.len() as f64).sqrt()
}

/// Largest number of index pairs fed to the Umeyama stage.
pub const PIPELINE_MAX_PAIRS: usize = 20_000;

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub transform: Similarity,
    /// Nearest-neighbor RMS after the Umeyama stage alone.
    pub rms_umeyama: f64,
    /// Nearest-neighbor RMS after all stages.
    pub rms: f64,
    pub scale_refinement_applied: bool,
    pub icp_iterations: usize,
}

/// Umeyama with scale on index-paired points, then ℓ1 scale refinement about
/// the ground-truth centroid, then rigid ICP. Each later stage is kept only
/// if it does not raise the nearest-neighbor RMS.
pub fn align_pipeline(pred: &[Vec3], gt: &[Vec3]) -> Result<PipelineResult> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "index pairing needs equal cloud sizes, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 points, got {}", pred.len())));
    }
    let stride = pred.len().div_ceil(PIPELINE_MAX_PAIRS);
    let sub_pred: Vec<Vec3> = pred.iter().step_by(stride).copied().collect();
    let sub_gt: Vec<Vec3> = gt.iter().step_by(stride).copied().collect();
    let stage1 = umeyama(&sub_pred, &sub_gt, true)?;
    let tree = KdTree::build(gt)?;
    let p1 = stage1.apply_all(pred);
    let rms1 = nearest_rms(&tree, &p1);

    let c = centroid(gt);
    let a: Vec<Vec3> = p1.iter().map(|p| p - c).collect();
    let b: Vec<Vec3> = gt.iter().map(|p| p - c).collect();
    let ones = vec![1.0; a.len()];
    let mut stage2 = Similarity::identity();
    let mut p2 = p1.clone();
    let mut rms2 = rms1;
    let mut refined = false;
    if let Ok(s) = solve_optimal_scale(&ScaleSolveInput::new(&a, &b, &ones)?) {
        if s > 0.0 && s.is_finite() {
            let cand = Similarity {
                scale: s,
                rotation: Rotation3::identity(),
                translation: c - s * c,
            };
            let moved = cand.apply_all(&p1);
            let r = nearest_rms(&tree, &moved);
            if r <= rms1 {
                stage2 = cand;
                p2 = moved;
                rms2 = r;
                refined = true;
            }
        }
    }

    let icp_out = icp(&p2, gt, &IcpParams::default())?;
    let rms = icp_out.rms.min(rms2);
    let transform = icp_out.transform.compose(&stage2).compose(&stage1);
    Ok(PipelineResult {
        transform,
        rms_umeyama: rms1,
        rms,
        scale_refinement_applied: refined,
        icp_iterations: icp_out.iterations,
    })
}
