//! Static 3D kd-tree for exact nearest-neighbor queries.
//!
//! Ties in distance resolve to the lowest point index, so results agree with
//! a brute-force scan that keeps the first minimum.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::par;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Result of a nearest-neighbor query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist_sq.sqrt()
    }
}

/// Squared Euclidean distance, summed in x, y, z order.
#[inline]
pub fn dist_sq(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("cannot index an empty point set".into()));
        }
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, points.len());
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn nearest(&self, q: &Vec3) -> Neighbor {
        let mut best = Neighbor {
            index: usize::MAX,
            dist_sq: f64::INFINITY,
        };
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut Neighbor) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist_sq(q, &self.points[i]);
                    if d < best.dist_sq || (d == best.dist_sq && i < best.index) {
                        *best = Neighbor { index: i, dist_sq: d };
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.dist_sq {
                    self.search(far, q, best);
                }
            }
        }
    }

    /// Nearest neighbor of every query point, in query order.
    pub fn nearest_all(&self, queries: &[Vec3]) -> Vec<Neighbor> {
        par::map_slice(queries, |q| self.nearest(q))
    }
}

/// O(n) scan keeping the first minimum.
pub fn brute_force_nearest(points: &[Vec3], q: &Vec3) -> Option<Neighbor> {
    let mut best: Option<Neighbor> = None;
    for (i, p) in points.iter().enumerate() {
        let d = dist_sq(q, p);
        if best.is_none_or(|b| d < b.dist_sq) {
            best = Some(Neighbor { index: i, dist_sq: d });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input_rejected() {
        assert!(KdTree::build(&[]).is_err());
    }

    #[test]
    fn duplicate_points_resolve_to_lowest_index() {
        let pts = vec![Vec3::new(1.0, 0.0, 0.0); 20];
        let t = KdTree::build(&pts).unwrap();
        assert_eq!(t.nearest(&Vec3::zeros()).index, 0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64), 1..200),
            qs in prop::collection::vec((-12.0..12.0f64, -12.0..12.0f64, -12.0..12.0f64), 1..20),
        ) {
            let pts: Vec<Vec3> = pts.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
            let tree = KdTree::build(&pts).unwrap();
            for (x, y, z) in qs {
                let q = Vec3::new(x, y, z);
                prop_assert_eq!(tree.nearest(&q), brute_force_nearest(&pts, &q).unwrap());
            }
        }
    }
}
