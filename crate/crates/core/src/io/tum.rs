//! Trajectory text: one pose per line, `id tx ty tz qx qy qz qw`, with the
//! quaternion stored w-last and poses mapping camera to world. Blank lines
//! and lines starting with `#` are skipped.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, Translation3, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    /// Frame identifiers, kept verbatim.
    pub ids: Vec<String>,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(ids: Vec<String>, poses: Vec<Pose>) -> Result<Self> {
        if ids.len() != poses.len() {
            return Err(Error::DimensionMismatch(format!("{} ids but {} poses", ids.len(), poses.len())));
        }
        Ok(Self { ids, poses })
    }

    /// Ids are the decimal frame indices.
    pub fn from_poses(poses: Vec<Pose>) -> Self {
        Self {
            ids: (0..poses.len()).map(|i| i.to_string()).collect(),
            poses,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut ids = Vec::new();
        let mut poses = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 8 {
                return Err(Error::format(
                    "trajectory",
                    format!("line {}: expected 8 fields, got {}", lineno + 1, toks.len()),
                ));
            }
            let mut v = [0.0; 7];
            for (k, t) in toks[1..].iter().enumerate() {
                v[k] = t
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::format("trajectory", format!("line {}: bad number {t:?}", lineno + 1)))?;
            }
            let q = Quaternion::new(v[6], v[3], v[4], v[5]);
            if q.norm() < 1e-12 {
                return Err(Error::format("trajectory", format!("line {}: zero quaternion", lineno + 1)));
            }
            // already-unit quaternions are kept bit-for-bit
            let rot = if (q.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
                UnitQuaternion::new_unchecked(q)
            } else {
                UnitQuaternion::from_quaternion(q)
            };
            ids.push(toks[0].to_string());
            poses.push(Pose::from_parts(Translation3::new(v[0], v[1], v[2]), rot));
        }
        Ok(Self { ids, poses })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# id tx ty tz qx qy qz qw\n");
        for (id, p) in self.ids.iter().zip(&self.poses) {
            let t = p.translation.vector;
            let q = p.rotation.quaternion();
            out.push_str(&format!(
                "{id} {} {} {} {} {} {} {}\n",
                t.x, t.y, t.z, q.i, q.j, q.k, q.w
            ));
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Reorders `other` to follow this trajectory's ids; both must hold the
    /// same id set.
    pub fn match_ids(&self, other: &Trajectory) -> Result<Vec<Pose>> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "trajectories have {} and {} frames",
                self.len(),
                other.len()
            )));
        }
        let index: std::collections::HashMap<&str, usize> =
            other.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        if index.len() != other.len() {
            return Err(Error::InvalidArgument("duplicate frame ids".into()));
        }
        self.ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| other.poses[i])
                    .ok_or_else(|| Error::InvalidArgument(format!("frame id {id:?} missing from the other trajectory")))
            })
            .collect()
    }
}
