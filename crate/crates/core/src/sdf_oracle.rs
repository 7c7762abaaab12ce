//! Approximate signed distance to an oriented point sample.
//!
//! The magnitude is the exact distance to the nearest sample (KD-tree); the
//! sign is a majority vote of `⟨p − p_j, N_j⟩` over the `k_sign` nearest
//! samples, ties counting as outside.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::implicit_geom::AnalyticSurface;

pub const DEFAULT_K_SIGN: usize = 8;
const LEAF_SIZE: usize = 8;

/// Anything that can label off-surface points with a signed distance.
pub trait DistanceOracle: Sync {
    fn signed_distance(&self, p: &Point3<f64>) -> f64;
}

impl DistanceOracle for AnalyticSurface {
    fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.sdf(p)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Exact nearest-neighbour index over a static point set.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Point3<f64>>,
    /// Permutation of point indices; leaves own contiguous ranges.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[inline]
fn dist2(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

impl KdTree {
    pub fn build(points: Vec<Point3<f64>>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            let n = points.len();
            Self::build_node(&points, &mut order, 0, n, &mut nodes);
        }
        KdTree {
            points,
            order,
            nodes,
        }
    }

    fn build_node(
        points: &[Point3<f64>],
        order: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let id = nodes.len();
        if end - start <= LEAF_SIZE {
            nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split along the axis of largest extent
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(points[i][a]);
                hi[a] = hi[a].max(points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = points[order[mid]][axis];
        nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = Self::build_node(points, order, start, mid, nodes);
        let right = Self::build_node(points, order, mid, end, nodes);
        nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    /// Index and distance of the nearest point (lowest index on ties).
    pub fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        self.k_nearest(q, 1).first().copied()
    }

    /// The `k` nearest points sorted by (distance, index).
    pub fn k_nearest(&self, q: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        if self.nodes.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.dist2.sqrt())).collect()
    }

    fn search(&self, node: usize, q: &Point3<f64>, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate {
                        dist2: dist2(q, &self.points[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[axis] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, k, heap);
                // `<=` keeps equal-distance candidates with lower indices reachable
                if heap.len() < k || delta * delta <= heap.peek().unwrap().dist2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

/// Signed distance oracle over oriented points.
#[derive(Clone, Debug)]
pub struct SdfOracle {
    tree: KdTree,
    normals: Vec<Vector3<f64>>,
    k_sign: usize,
}

impl SdfOracle {
    pub fn new(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>, k_sign: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("distance oracle needs at least one point".into()));
        }
        if points.len() != normals.len() {
            return Err(Error::SizeMismatch(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if k_sign == 0 {
            return Err(Error::Config("k_sign must be positive".into()));
        }
        Ok(SdfOracle {
            tree: KdTree::build(points),
            normals,
            k_sign,
        })
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn k_sign(&self) -> usize {
        self.k_sign
    }

    pub fn unsigned_distance(&self, p: &Point3<f64>) -> f64 {
        self.tree.nearest(p).map(|(_, d)| d).unwrap_or(f64::INFINITY)
    }

    /// Majority vote over the nearest samples; ties give `+1`.
    pub fn sign_estimate(&self, p: &Point3<f64>) -> f64 {
        let k = self.k_sign.min(self.tree.len());
        let votes: i64 = self
            .tree
            .k_nearest(p, k)
            .iter()
            .map(|&(j, _)| {
                let d = (p - self.tree.points[j]).dot(&self.normals[j]);
                if d < 0.0 {
                    -1
                } else if d > 0.0 {
                    1
                } else {
                    0
                }
            })
            .sum();
        if votes < 0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        let d = self.unsigned_distance(p);
        if d == 0.0 {
            0.0
        } else {
            self.sign_estimate(p) * d
        }
    }
}

impl DistanceOracle for SdfOracle {
    fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        SdfOracle::signed_distance(self, p)
    }
}
