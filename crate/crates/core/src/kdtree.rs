//! Static 3-d tree for k-nearest-neighbour queries.
//!
//! Results are ordered by distance, ties broken by the lower point index, so
//! queries are reproducible regardless of build order.

use crate::geometry::Vec3;

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    fn before(&self, other: &Neighbor) -> bool {
        self.dist_sq < other.dist_sq || (self.dist_sq == other.dist_sq && self.index < other.index)
    }
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut tree = KdTree {
            nodes: Vec::with_capacity(points.len()),
            points,
            root: None,
        };
        let mut idx: Vec<usize> = (0..tree.points.len()).collect();
        tree.root = tree.build(&mut idx);
        tree
    }

    fn build(&mut self, idx: &mut [usize]) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        // Split along the widest extent.
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in idx.iter() {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let pts = &self.points;
        idx.sort_unstable_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let node = self.nodes.len();
        self.nodes.push(Node {
            point: idx[mid],
            axis,
            left: None,
            right: None,
        });
        let (left, rest) = idx.split_at_mut(mid);
        let left = self.build(left);
        let right = self.build(&mut rest[1..]);
        self.nodes[node].left = left;
        self.nodes[node].right = right;
        Some(node)
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

    pub fn point(&self, index: usize) -> &Vec3 {
        &self.points[index]
    }

    /// Up to `k` nearest points, closest first.
    pub fn nearest(&self, query: &Vec3, k: usize) -> Vec<Neighbor> {
        let mut best = Vec::with_capacity(k + 1);
        if k > 0 {
            if let Some(root) = self.root {
                self.search(root, query, k, &mut best);
            }
        }
        best
    }

    fn search(&self, node: usize, q: &Vec3, k: usize, best: &mut Vec<Neighbor>) {
        let n = &self.nodes[node];
        let p = &self.points[n.point];
        let cand = Neighbor {
            index: n.point,
            dist_sq: (p - q).norm_squared(),
        };
        if best.len() < k || cand.before(best.last().expect("non-empty")) {
            let pos = best.partition_point(|b| b.before(&cand));
            best.insert(pos, cand);
            best.truncate(k);
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(c) = near {
            self.search(c, q, k, best);
        }
        if let Some(c) = far {
            // `<=` keeps equal-distance candidates reachable for the index tie-break.
            if best.len() < k || diff * diff <= best.last().expect("non-empty").dist_sq {
                self.search(c, q, k, best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], q: &Vec3, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - q).norm_squared(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 4.0)
            .collect();
        let tree = KdTree::new(pts.clone());
        for _ in 0..200 {
            let q = Vec3::new(rng.random(), rng.random(), rng.random()) * 4.0;
            let got: Vec<usize> = tree.nearest(&q, 5).iter().map(|n| n.index).collect();
            assert_eq!(got, brute(&pts, &q, 5));
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        // Lattice points equidistant from the query.
        let pts = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 0.0),
        ];
        let tree = KdTree::new(pts.clone());
        let got: Vec<usize> = tree
            .nearest(&Vec3::zeros(), 3)
            .iter()
            .map(|n| n.index)
            .collect();
        assert_eq!(got, vec![0, 1, 2]);
        assert_eq!(brute(&pts, &Vec3::zeros(), 3), got);
    }

    #[test]
    fn empty_and_small() {
        assert!(KdTree::new(Vec::new())
            .nearest(&Vec3::zeros(), 5)
            .is_empty());
        let tree = KdTree::new(vec![Vec3::x(), Vec3::y()]);
        assert_eq!(tree.nearest(&Vec3::zeros(), 5).len(), 2);
    }
}
