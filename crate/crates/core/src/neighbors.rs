//! Exact nearest-neighbour queries over 3D point sets.
//!
//! The tree splits at the median of the widest bounding-box axis until
//! fewer than [`LEAF_SIZE`] points remain. All distances are squared and
//! computed with [`vec3::dist2`], so results agree bit for bit with a brute
//! force scan. Ties in distance resolve to the lowest point index.

use crate::vec3::{self, Vec3};

pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeighborError {
    #[error("cannot build an index over an empty point set")]
    Empty,
}

#[derive(Debug, Clone, Copy)]
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

#[derive(Debug, Clone)]
pub struct KdIndex {
    points: Vec<Vec3>,
    /// Points permuted into tree order, so leaves are contiguous.
    sorted: Vec<Vec3>,
    /// Original index of each entry of `sorted`.
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdIndex {
    pub fn build(points: &[Vec3]) -> Result<Self, NeighborError> {
        if points.is_empty() {
            return Err(NeighborError::Empty);
        }
        let mut ids: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        build_range(points, &mut ids, &mut nodes, 0, points.len());
        let sorted = ids.iter().map(|&i| points[i]).collect();
        Ok(Self {
            points: points.to_vec(),
            sorted,
            ids,
            nodes,
        })
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

    /// Depth of the tree (a single leaf has depth 1).
    pub fn depth(&self) -> usize {
        fn rec(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => 1 + rec(nodes, left).max(rec(nodes, right)),
            }
        }
        rec(&self.nodes, 0)
    }

    /// Index and squared distance of the closest point to `q`.
    pub fn nearest(&self, q: Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &mut best);
        best
    }

    fn nearest_rec(&self, id: usize, q: Vec3, best: &mut (usize, f64)) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for (p, &i) in self.sorted[start..end].iter().zip(&self.ids[start..end]) {
                    let d = vec3::dist2(*p, q);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
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
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.nearest_rec(near, q, best);
                // `<=` keeps equidistant candidates reachable for the tie-break
                if diff * diff <= best.1 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// Number of points with distance at most `radius` from `q`.
    pub fn count_within(&self, q: Vec3, radius: f64) -> usize {
        let mut count = 0;
        self.visit_within(0, q, radius * radius, &mut |_| count += 1);
        count
    }

    /// Indices of all points within `radius` of `q`, ascending.
    pub fn within_radius(&self, q: Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_within(0, q, radius * radius, &mut |i| out.push(i));
        out.sort_unstable();
        out
    }

    fn visit_within(&self, id: usize, q: Vec3, r2: f64, f: &mut impl FnMut(usize)) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for (p, &i) in self.sorted[start..end].iter().zip(&self.ids[start..end]) {
                    if vec3::dist2(*p, q) <= r2 {
                        f(i);
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
                if diff <= 0.0 || diff * diff <= r2 {
                    self.visit_within(left, q, r2, f);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.visit_within(right, q, r2, f);
                }
            }
        }
    }
}

fn build_range(
    points: &[Vec3],
    ids: &mut [usize],
    nodes: &mut Vec<Node>,
    start: usize,
    end: usize,
) -> usize {
    let id = nodes.len();
    nodes.push(Node::Leaf { start, end });
    if end - start <= LEAF_SIZE {
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &ids[start..end] {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    let mid = start + (end - start) / 2;
    ids[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis])
    });
    let value = points[ids[mid]][axis];
    let left = build_range(points, ids, nodes, start, mid);
    let right = build_range(points, ids, nodes, mid, end);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

/// Linear-scan reference for [`KdIndex::nearest`].
pub fn brute_force_nearest(points: &[Vec3], q: Vec3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, &p) in points.iter().enumerate() {
        let d = vec3::dist2(p, q);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}
