//! Subcommand implementations. Every report is pretty-printed JSON with a
//! fixed key order, written to `--out` or stdout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};
use widefov_core::align::{align_pipeline, SimilarityRecord};
use widefov_core::augment::{self, ViewSample};
use widefov_core::camera::{ray_field, CameraModel, Equirectangular};
use widefov_core::io::{read_pfm, read_ply, read_png, write_pfm, write_ply, write_png, Pfm, PointCloud, Trajectory};
use widefov_core::loss::{total_loss, LossBreakdown, LossWeights, ViewGroundTruth, ViewPrediction};
use widefov_core::metrics::{accuracy_completion, depth_metrics, normal_consistency, pose_report, DepthMetrics};
use widefov_core::oracle::{make_trajectory, render_view, BoxScene, Pattern};
use widefov_core::sampler::{probability_matrix, sample_views, DistanceMatrix};
use widefov_core::shray::{angular_error, fit_camera, fit_coeffs, reconstruct_rays, CameraClass, Chart, SHBasis, SHCoeffs};
use widefov_core::{Error, Image, NormalMap, Pose, Result, Vec3};

use crate::{
    AugmentCommand, ClassArg, Cli, Command, ErpRotateArgs, EvalDepthArgs, EvalLossArgs, EvalPointsArgs, EvalPoseArgs,
    FitRaysArgs, GlobalOpts, PatternArg, PinholeToFisheyeArgs, SampleArgs, SynthArgs, ViewInput,
};

/// 3 for numerical failures, 2 for everything else.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    configure_threads(cli.global.threads)?;
    let g = &cli.global;
    match &cli.command {
        Command::FitRays(a) => fit_rays(g, a),
        Command::EvalPose(a) => eval_pose(g, a),
        Command::EvalPoints(a) => eval_points(g, a),
        Command::EvalDepth(a) => eval_depth(g, a),
        Command::EvalLoss(a) => eval_loss(g, a),
        Command::Augment(AugmentCommand::ErpRotate(a)) => erp_rotate(g, a),
        Command::Augment(AugmentCommand::PinholeToFisheye(a)) => pinhole_to_fisheye(g, a),
        Command::Sample(a) => sample(g, a),
        Command::Synth(a) => synth(g, a),
    }
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::InvalidArgument("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes a report to `out`, or to stdout when `out` is `None`.
fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = to_json(value);
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn out_dir(g: &GlobalOpts) -> Result<&Path> {
    let dir = g
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("this command needs --out <directory>".into()))?;
    fs::create_dir_all(dir)?;
    Ok(dir)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[derive(Serialize)]
struct FitRaysReport {
    source: String,
    camera_class: CameraClass,
    degree: usize,
    width: usize,
    height: usize,
    samples: usize,
    residual_rms: f64,
    rms_deg: f64,
    max_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    coeffs_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coeffs: Option<SHCoeffs>,
}

fn fit_rays(g: &GlobalOpts, a: &FitRaysArgs) -> Result<()> {
    let basis = SHBasis::new(a.degree)?;
    let (source, rays, fit) = match (&a.camera, &a.rays) {
        (Some(path), _) => {
            let cam = CameraModel::from_json_file(path)?;
            let fit = fit_camera(&basis, &cam)?;
            (cam.model_name().to_string(), ray_field(&cam), fit)
        }
        (None, Some(path)) => {
            let rays = read_pfm(path)?.to_rays()?;
            let class = match a.class {
                ClassArg::Pinhole => CameraClass::Pinhole,
                ClassArg::Fisheye => CameraClass::Fisheye,
                ClassArg::Sphere => CameraClass::Sphere,
            };
            let fit = fit_coeffs(&basis, &rays, &Chart::Equirect, class)?;
            ("ray_field".to_string(), rays, fit)
        }
        (None, None) => return Err(Error::InvalidArgument("give --camera or --rays".into())),
    };
    let recon = reconstruct_rays(&fit.coeffs, rays.width, rays.height);
    let err = angular_error(&recon, &rays)?;
    let mut report = FitRaysReport {
        source,
        camera_class: fit.coeffs.camera_class,
        degree: a.degree,
        width: rays.width,
        height: rays.height,
        samples: fit.samples,
        residual_rms: fit.residual_rms,
        rms_deg: err.rms.to_degrees(),
        max_deg: err.max.to_degrees(),
        coeffs_path: None,
        coeffs: None,
    };
    match &g.out {
        Some(path) => {
            fs::write(path, fit.coeffs.to_json_string() + "\n")?;
            report.coeffs_path = Some(path_string(path));
        }
        None => report.coeffs = Some(fit.coeffs),
    }
    print!("{}", to_json(&report));
    Ok(())
}

#[derive(Serialize)]
struct PoseReportJson {
    frames: usize,
    tau: u32,
    #[serde(rename = "RRA")]
    rra: f64,
    #[serde(rename = "RTA")]
    rta: f64,
    #[serde(rename = "AUC")]
    auc: f64,
    #[serde(rename = "ATE")]
    ate: f64,
    #[serde(rename = "RPE_trans")]
    rpe_trans: f64,
    #[serde(rename = "RPE_rot")]
    rpe_rot: f64,
}

fn eval_pose(g: &GlobalOpts, a: &EvalPoseArgs) -> Result<()> {
    let pred = Trajectory::read(&a.pred)?;
    let gt = Trajectory::read(&a.gt)?;
    if gt.is_empty() {
        return Err(Error::Empty(format!("{} holds no poses", a.gt.display())));
    }
    let pred_poses = gt.match_ids(&pred)?;
    let r = pose_report(&pred_poses, &gt.poses, a.tau)?;
    emit(
        g.out.as_deref(),
        &PoseReportJson {
            frames: gt.len(),
            tau: a.tau,
            rra: r.rra,
            rta: r.rta,
            auc: r.auc,
            ate: r.ate,
            rpe_trans: r.rpe_trans,
            rpe_rot: r.rpe_rot,
        },
    )
}

#[derive(Serialize)]
struct PointsReport {
    points: usize,
    acc_mean: f64,
    acc_median: f64,
    comp_mean: f64,
    comp_median: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    nc_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nc_median: Option<f64>,
    alignment: SimilarityRecord,
    alignment_rms: f64,
    icp_iterations: usize,
}

fn eval_points(g: &GlobalOpts, a: &EvalPointsArgs) -> Result<()> {
    let pred = read_ply(&a.pred)?;
    let gt = read_ply(&a.gt)?;
    let al = align_pipeline(&pred.points, &gt.points)?;
    let aligned = al.transform.apply_all(&pred.points);
    let ac = accuracy_completion(&aligned, &gt.points)?;
    let nc = match (&pred.normals, &gt.normals) {
        (Some(pn), Some(gn)) => {
            let rotated: Vec<Vec3> = pn.iter().map(|n| al.transform.rotation * n).collect();
            Some(normal_consistency(&aligned, &rotated, &gt.points, gn)?)
        }
        _ => {
            eprintln!("warning: normals missing from an input cloud; normal consistency omitted");
            None
        }
    };
    emit(
        g.out.as_deref(),
        &PointsReport {
            points: gt.len(),
            acc_mean: ac.acc_mean,
            acc_median: ac.acc_median,
            comp_mean: ac.comp_mean,
            comp_median: ac.comp_median,
            nc_mean: nc.map(|n| n.nc_mean),
            nc_median: nc.map(|n| n.nc_median),
            alignment: SimilarityRecord::from(&al.transform),
            alignment_rms: al.rms,
            icp_iterations: al.icp_iterations,
        },
    )
}

fn eval_depth(g: &GlobalOpts, a: &EvalDepthArgs) -> Result<()> {
    let pred = read_pfm(&a.pred)?.to_positive_scalar()?;
    let gt = read_pfm(&a.gt)?.to_positive_scalar()?;
    let m: DepthMetrics = depth_metrics(&pred, &gt)?;
    emit(g.out.as_deref(), &m)
}

/// Per-view inputs of `eval-loss`; paths are relative to the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossViewEntry {
    pub pred_rays: PathBuf,
    pub pred_radial: PathBuf,
    pub pred_uncertainty: PathBuf,
    pub gt_rays: PathBuf,
    pub gt_radial: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_normals: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossManifest {
    pub views: Vec<LossViewEntry>,
    /// Trajectories listing one pose per view, matched by id.
    pub pred_poses: PathBuf,
    pub gt_poses: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<LossWeights>,
}

#[derive(Serialize)]
struct LossReport {
    views: usize,
    weights: LossWeights,
    breakdown: LossBreakdown,
}

fn apply_override(w: &LossWeights, spec: &str) -> Result<LossWeights> {
    let (name, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override {spec:?} is not NAME=VALUE")))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("override {spec:?} has a non-numeric value")))?;
    let mut map: BTreeMap<String, f64> = serde_json::from_value(serde_json::to_value(w)?)?;
    match map.get_mut(name.trim()) {
        Some(slot) => *slot = value,
        None => return Err(Error::InvalidArgument(format!("unknown loss weight {name:?}"))),
    }
    Ok(serde_json::from_value(serde_json::to_value(map)?)?)
}

fn eval_loss(g: &GlobalOpts, a: &EvalLossArgs) -> Result<()> {
    let manifest: LossManifest = read_json(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let at = |p: &Path| base.join(p);

    let mut weights = manifest.weights.unwrap_or_default();
    if let Some(path) = &a.weights {
        weights = read_json(path)?;
    }
    for spec in &a.overrides {
        weights = apply_override(&weights, spec)?;
    }
    weights.validate()?;

    let pred_traj = Trajectory::read(at(&manifest.pred_poses))?;
    let gt_traj = Trajectory::read(at(&manifest.gt_poses))?;
    if gt_traj.len() != manifest.views.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} views but {} ground-truth poses",
            manifest.views.len(),
            gt_traj.len()
        )));
    }
    let pred_poses = gt_traj.match_ids(&pred_traj)?;

    let mut pred = Vec::with_capacity(manifest.views.len());
    let mut gt = Vec::with_capacity(manifest.views.len());
    for (i, v) in manifest.views.iter().enumerate() {
        pred.push(ViewPrediction {
            rays: read_pfm(at(&v.pred_rays))?.to_rays()?,
            radial: read_pfm(at(&v.pred_radial))?.to_positive_scalar()?,
            uncertainty: read_pfm(at(&v.pred_uncertainty))?.to_scalar_where(|u| u.is_finite() && u >= 0.0)?,
            pose: pred_poses[i],
        });
        let rays = read_pfm(at(&v.gt_rays))?.to_rays()?;
        let radial = read_pfm(at(&v.gt_radial))?.to_positive_scalar()?;
        let mut view = ViewGroundTruth::from_rays_and_radial(rays, radial, gt_traj.poses[i])?;
        if let Some(p) = &v.gt_normals {
            let pfm = read_pfm(at(p))?;
            let (normals, mask) = pfm.to_vectors()?;
            view.normals = Some(NormalMap::new(pfm.width, pfm.height, normals, mask)?);
        }
        gt.push(view);
    }
    let breakdown = total_loss(&pred, &gt, &weights)?;
    emit(
        g.out.as_deref(),
        &LossReport {
            views: pred.len(),
            weights,
            breakdown,
        },
    )
}

fn read_image(path: &Path) -> Result<Image> {
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        read_png(path)
    } else {
        read_pfm(path)?.to_image()
    }
}

/// Loads a view; returns it with the id of its pose line.
fn read_view(v: &ViewInput, cam: CameraModel) -> Result<(ViewSample, String)> {
    let image = read_image(&v.image)?;
    let radial = read_pfm(&v.radial)?.to_positive_scalar()?;
    let (id, pose) = match &v.pose {
        Some(p) => {
            let t = Trajectory::read(p)?;
            if t.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "{} must hold exactly one pose, found {}",
                    p.display(),
                    t.len()
                )));
            }
            (t.ids[0].clone(), t.poses[0])
        }
        None => ("0".to_string(), Pose::identity()),
    };
    Ok((ViewSample::new(image, radial, cam, pose)?, id))
}

/// Writes image (PFM and PNG), radial map, pose and camera of a view.
fn write_view(dir: &Path, v: &ViewSample, id: &str) -> Result<Vec<String>> {
    let names = ["image.pfm", "image.png", "radial.pfm", "pose.txt", "camera.json"];
    write_pfm(dir.join(names[0]), &Pfm::from_image(&v.image))?;
    write_png(dir.join(names[1]), &v.image)?;
    write_pfm(dir.join(names[2]), &Pfm::from_scalar(&v.radial))?;
    Trajectory::new(vec![id.to_string()], vec![v.pose])?.write(dir.join(names[3]))?;
    fs::write(dir.join(names[4]), v.cam.to_json_string() + "\n")?;
    Ok(names.iter().map(|s| s.to_string()).collect())
}

#[derive(Serialize)]
struct AugmentReport {
    operation: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    azimuth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    elevation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    width: usize,
    height: usize,
    valid_pixels: usize,
    holes: usize,
    files: Vec<String>,
}

fn erp_rotate(g: &GlobalOpts, a: &ErpRotateArgs) -> Result<()> {
    let image = read_image(&a.view.image)?;
    let cam = CameraModel::Equirectangular(Equirectangular::new(image.width, image.height)?);
    let (v, id) = read_view(&a.view, cam)?;
    let azimuth = a.azimuth.unwrap_or_else(|| augment::sample_azimuth(g.seed));
    let r = augment::erp_rotate(&v, azimuth, a.elevation)?;
    let dir = out_dir(g)?;
    let files = write_view(dir, &r, &id)?;
    let valid = r.radial.mask.iter().filter(|m| **m).count();
    print!(
        "{}",
        to_json(&AugmentReport {
            operation: "erp_rotate",
            azimuth: Some(azimuth),
            elevation: Some(a.elevation),
            alpha: None,
            width: r.image.width,
            height: r.image.height,
            valid_pixels: valid,
            holes: r.radial.mask.len() - valid,
            files,
        })
    );
    Ok(())
}

fn pinhole_to_fisheye(g: &GlobalOpts, a: &PinholeToFisheyeArgs) -> Result<()> {
    let cam = CameraModel::from_json_file(&a.camera)?;
    let target = match CameraModel::from_json_file(&a.target)? {
        CameraModel::KannalaBrandt(kb) => kb,
        other => {
            return Err(Error::InvalidCamera(format!(
                "target must be a Kannala-Brandt camera, got {}",
                other.model_name()
            )))
        }
    };
    let (v, id) = read_view(&a.view, cam)?;
    let w = augment::pinhole_to_fisheye(&v, &target, a.alpha)?;
    let dir = out_dir(g)?;
    let mut files = write_view(dir, &w.view, &id)?;
    write_pfm(dir.join("weight.pfm"), &Pfm::from_scalar(&w.weight))?;
    files.push("weight.pfm".into());
    let valid = w.view.radial.mask.iter().filter(|m| **m).count();
    print!(
        "{}",
        to_json(&AugmentReport {
            operation: "pinhole_to_fisheye",
            azimuth: None,
            elevation: None,
            alpha: Some(a.alpha),
            width: w.view.image.width,
            height: w.view.image.height,
            valid_pixels: valid,
            holes: w.view.radial.mask.len() - valid,
            files,
        })
    );
    Ok(())
}

#[derive(Serialize)]
struct SampleReport {
    seed: u64,
    temperature: f64,
    k: usize,
    views: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ids: Option<Vec<String>>,
}

fn sample(g: &GlobalOpts, a: &SampleArgs) -> Result<()> {
    let mut ids = None;
    let d = if let Some(p) = &a.positions {
        let pos: Vec<[f64; 3]> = read_json(p)?;
        DistanceMatrix::from_positions(&pos.iter().map(|x| Vec3::new(x[0], x[1], x[2])).collect::<Vec<_>>())
    } else if let Some(p) = &a.trajectory {
        let t = Trajectory::read(p)?;
        let centers: Vec<Vec3> = t.poses.iter().map(|p| p.translation.vector).collect();
        ids = Some(t.ids);
        DistanceMatrix::from_positions(&centers)
    } else if let Some(p) = &a.distances {
        let rows: Vec<Vec<f64>> = read_json(p)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("distance matrix must be square".into()));
        }
        DistanceMatrix::new(n, rows.concat())?
    } else {
        return Err(Error::InvalidArgument("give --positions, --trajectory or --distances".into()));
    };
    let p = probability_matrix(&d, a.temperature)?;
    let views = sample_views(&p, a.k, g.seed)?;
    let ids = ids.map(|all: Vec<String>| views.iter().map(|&i| all[i].clone()).collect());
    emit(
        g.out.as_deref(),
        &SampleReport {
            seed: g.seed,
            temperature: a.temperature,
            k: a.k,
            views,
            ids,
        },
    )
}

#[derive(Serialize)]
struct SynthReport {
    camera: &'static str,
    width: usize,
    height: usize,
    views: usize,
    files: Vec<String>,
}

fn synth(g: &GlobalOpts, a: &SynthArgs) -> Result<()> {
    let mut scene = match &a.scene {
        Some(p) => BoxScene::from_json_str(&fs::read_to_string(p)?)?,
        None => BoxScene::checkered([4.0, 3.0, 5.0])?,
    };
    let cam = match &a.camera {
        Some(p) => CameraModel::from_json_file(p)?,
        None => CameraModel::Equirectangular(Equirectangular::new(128, 64)?),
    };
    let pattern = match a.pattern {
        None if !scene.trajectory.is_empty() => None,
        None | Some(PatternArg::Circle) => Some(Pattern::Circle { radius: a.radius }),
        Some(PatternArg::Line) => Some(Pattern::Line { length: a.length }),
        Some(PatternArg::Random) => Some(Pattern::Random),
    };
    if let Some(p) = pattern {
        scene.trajectory = make_trajectory(&scene, a.n, p, g.seed)?;
    }
    let dir = out_dir(g)?;
    let mut files = vec!["scene.json".to_string(), "camera.json".into(), "trajectory.txt".into()];
    fs::write(dir.join(&files[0]), scene.to_json_string() + "\n")?;
    fs::write(dir.join(&files[1]), cam.to_json_string() + "\n")?;
    let traj = Trajectory::from_poses(scene.trajectory.clone());
    traj.write(dir.join(&files[2]))?;

    let mut views = Vec::new();
    for (i, pose) in scene.trajectory.iter().enumerate() {
        let v = render_view(&scene, &cam, pose)?;
        let name = |s: &str| format!("view_{i:04}_{s}");
        let written = [
            name("image.pfm"),
            name("image.png"),
            name("radial.pfm"),
            name("rays.pfm"),
            name("normals.pfm"),
            name("uncertainty.pfm"),
            name("points.ply"),
        ];
        write_pfm(dir.join(&written[0]), &Pfm::from_image(&v.image))?;
        write_png(dir.join(&written[1]), &v.image)?;
        write_pfm(dir.join(&written[2]), &Pfm::from_scalar(&v.radial))?;
        write_pfm(dir.join(&written[3]), &Pfm::from_rays(&v.rays))?;
        write_pfm(dir.join(&written[4]), &Pfm::from_normals(&v.normals))?;
        let zeros = widefov_core::ScalarMap::filled(v.radial.width, v.radial.height, 0.0);
        write_pfm(dir.join(&written[5]), &Pfm::from_scalar(&zeros))?;
        let rot: Rotation3<f64> = pose.rotation.to_rotation_matrix();
        let world_normals: Vec<Vec3> = v
            .normals
            .normals
            .iter()
            .zip(&v.normals.mask)
            .filter(|(_, m)| **m)
            .map(|(n, _)| rot * n)
            .collect();
        let cloud = PointCloud::new(v.points.to_world(pose), Some(world_normals))?;
        write_ply(dir.join(&written[6]), &cloud)?;
        views.push(LossViewEntry {
            pred_rays: written[3].clone().into(),
            pred_radial: written[2].clone().into(),
            pred_uncertainty: written[5].clone().into(),
            gt_rays: written[3].clone().into(),
            gt_radial: written[2].clone().into(),
            gt_normals: None,
        });
        files.extend(written);
    }
    let manifest = LossManifest {
        views,
        pred_poses: "trajectory.txt".into(),
        gt_poses: "trajectory.txt".into(),
        weights: None,
    };
    fs::write(dir.join("loss_manifest.json"), to_json(&manifest))?;
    files.push("loss_manifest.json".into());
    print!(
        "{}",
        to_json(&SynthReport {
            camera: cam.model_name(),
            width: cam.width(),
            height: cam.height(),
            views: scene.trajectory.len(),
            files,
        })
    );
    Ok(())
}
