//! Exact nearest-neighbour queries over a static point set.
//!
//! Neighbours are ordered by `(squared distance, index)`, so ties resolve to
//! the lowest point index and results are identical to a brute-force scan.

use std::cmp::Ordering;

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist2.sqrt()
    }

    fn cmp_key(&self, other: &Neighbor) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[inline]
pub fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone)]
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

/// Kd-tree over reference positions.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let (lo, hi) = self.order[start..end].iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), &i| (lo.inf(&self.points[i]), hi.sup(&self.points[i])),
        );
        let extent = hi - lo;
        let axis = extent.imax();
        if extent[axis] == 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = (start + end) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end }); // placeholder
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

    pub fn nearest(&self, query: &Vec3) -> Option<Neighbor> {
        self.k_nearest_filtered(query, 1, |_| true).into_iter().next()
    }

    pub fn k_nearest(&self, query: &Vec3, k: usize) -> Vec<Neighbor> {
        self.k_nearest_filtered(query, k, |_| true)
    }

    /// The `k` nearest points accepted by `keep`, sorted ascending.
    pub fn k_nearest_filtered(&self, query: &Vec3, k: usize, keep: impl Fn(usize) -> bool) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return best;
        }
        self.search(0, query, k, &keep, &mut best);
        best
    }

    fn search(
        &self,
        node: usize,
        query: &Vec3,
        k: usize,
        keep: &impl Fn(usize) -> bool,
        best: &mut Vec<Neighbor>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if !keep(i) {
                        continue;
                    }
                    let cand = Neighbor {
                        index: i,
                        dist2: dist2(query, &self.points[i]),
                    };
                    if best.len() == k && cand.cmp_key(&best[k - 1]) != Ordering::Less {
                        continue;
                    }
                    let pos = best.binary_search_by(|n| n.cmp_key(&cand)).unwrap_or_else(|p| p);
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, keep, best);
                // `<=` keeps equal-distance candidates with lower indices reachable
                if best.len() < k || diff * diff <= best[k - 1].dist2 {
                    self.search(far, query, k, keep, best);
                }
            }
        }
    }
}
