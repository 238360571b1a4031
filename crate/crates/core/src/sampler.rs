//! Distance-softmax view sampling: closer viewpoints are drawn with higher
//! probability so sampled views overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Default softmax temperature, in meters.
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

/// Symmetric pairwise camera distances with a zero diagonal (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::DimensionMismatch(format!("{} entries for a {n}x{n} matrix", d.len())));
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidArgument(format!("distance ({i}, {j}) = {v} is not a finite non-negative value")));
                }
                if (v - d[j * n + i]).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!("distance matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, d })
    }

    /// Euclidean distances between camera centers.
    pub fn from_positions(pos: &[Vec3]) -> Self {
        let n = pos.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = (pos[i] - pos[j]).norm();
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

/// Row-stochastic matrix with a zero diagonal (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMatrix {
    n: usize,
    p: Vec<f64>,
}

impl ProbabilityMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.n..(i + 1) * self.n]
    }
}

/// Row `i` is the softmax over `j ≠ i` of `−d[i][j] / temperature`.
pub fn probability_matrix(d: &DistanceMatrix, temperature: f64) -> Result<ProbabilityMatrix> {
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 views, got {n}")));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let max = (0..n)
            .filter(|&j| j != i)
            .map(|j| -d.get(i, j) / temperature)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let e = (-d.get(i, j) / temperature - max).exp();
            p[i * n + j] = e;
            total += e;
        }
        for j in 0..n {
            p[i * n + j] /= total;
        }
    }
    Ok(ProbabilityMatrix { n, p })
}

/// Draws `k` distinct views: a uniform anchor, then each next view from the
/// previous view's row renormalized over the views not yet chosen.
pub fn sample_views(p: &ProbabilityMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = p.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot sample {k} views out of {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; n];
    let mut out = Vec::with_capacity(k);
    let mut cur = rng.random_range(0..n);
    chosen[cur] = true;
    out.push(cur);
    while out.len() < k {
        let row = p.row(cur);
        let total: f64 = (0..n).filter(|&j| !chosen[j]).map(|j| row[j]).sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = None;
            for j in (0..n).filter(|&j| !chosen[j] && row[j] > 0.0) {
                cum += row[j];
                pick = Some(j);
                if u < cum {
                    break;
                }
            }
            pick.expect("positive total implies a positive entry")
        } else {
            let remaining: Vec<usize> = (0..n).filter(|&j| !chosen[j]).collect();
            remaining[rng.random_range(0..remaining.len())]
        };
        chosen[next] = true;
        out.push(next);
        cur = next;
    }
    Ok(out)
}
