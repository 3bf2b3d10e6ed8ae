//! 3D kd-tree for nearest-neighbor, k-NN, and radius queries.
//!
//! Splits on the axis of largest extent with a median partition. Exact-tie
//! distances resolve to the smaller point index so that queries match a
//! brute-force scan deterministically.

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy)]
struct Node {
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

const LEAF: i32 = -1;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<Node>,
    root: i32,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> KdTree {
        let mut idx: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: LEAF,
        };
        tree.root = tree.build_rec(&mut idx);
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_rec(&mut self, idx: &mut [u32]) -> i32 {
        if idx.is_empty() {
            return LEAF;
        }
        let pts = &self.points;
        let axis = {
            let mut lo = Vec3::repeat(f64::INFINITY);
            let mut hi = Vec3::repeat(f64::NEG_INFINITY);
            for &i in idx.iter() {
                let p = &pts[i as usize];
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
            let ext = hi - lo;
            let mut axis = 0usize;
            if ext[1] > ext[axis] {
                axis = 1;
            }
            if ext[2] > ext[axis] {
                axis = 2;
            }
            axis
        };
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            pts[a as usize][axis]
                .total_cmp(&pts[b as usize][axis])
                .then(a.cmp(&b))
        });
        let point = idx[mid];
        let node_id = self.nodes.len() as i32;
        self.nodes.push(Node {
            point,
            axis: axis as u8,
            left: LEAF,
            right: LEAF,
        });
        let (lo_half, rest) = idx.split_at_mut(mid);
        let left = self.build_rec(lo_half);
        let right = self.build_rec(&mut rest[1..]);
        self.nodes[node_id as usize].left = left;
        self.nodes[node_id as usize].right = right;
        node_id
    }

    /// Index and squared distance of the nearest point, or None when empty.
    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        if self.root == LEAF {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(self.root, query, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, node_id: i32, query: &Vec3, best: &mut (usize, f64)) {
        let node = self.nodes[node_id as usize];
        let p = &self.points[node.point as usize];
        let d2 = (p - query).norm_squared();
        if d2 < best.1 || (d2 == best.1 && (node.point as usize) < best.0) {
            *best = (node.point as usize, d2);
        }
        let axis = node.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if near != LEAF {
            self.nearest_rec(near, query, best);
        }
        if far != LEAF && delta * delta <= best.1 {
            self.nearest_rec(far, query, best);
        }
    }

    /// Up to k nearest points within `radius`, sorted by ascending distance.
    /// Returns (index, squared distance) pairs.
    pub fn k_nearest_within(&self, query: &Vec3, k: usize, radius: f64) -> Vec<(usize, f64)> {
        if self.root == LEAF || k == 0 {
            return Vec::new();
        }
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.knn_rec(self.root, query, k, radius * radius, &mut heap);
        heap.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        heap.into_iter().map(|(d2, i)| (i, d2)).collect()
    }

    fn knn_rec(
        &self,
        node_id: i32,
        query: &Vec3,
        k: usize,
        radius2: f64,
        heap: &mut Vec<(f64, usize)>,
    ) {
        let node = self.nodes[node_id as usize];
        let p = &self.points[node.point as usize];
        let d2 = (p - query).norm_squared();
        if d2 <= radius2 {
            push_bounded(heap, k, (d2, node.point as usize));
        }
        let axis = node.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if near != LEAF {
            self.knn_rec(near, query, k, radius2, heap);
        }
        let worst = current_bound(heap, k, radius2);
        if far != LEAF && delta * delta <= worst {
            self.knn_rec(far, query, k, radius2, heap);
        }
    }
}

/// Keeps the k smallest entries; plain vector since k is small (~20).
fn push_bounded(heap: &mut Vec<(f64, usize)>, k: usize, item: (f64, usize)) {
    heap.push(item);
    if heap.len() > k {
        // evict the current maximum
        let mut worst = 0;
        for i in 1..heap.len() {
            let cmp = heap[i].0.total_cmp(&heap[worst].0).then(heap[i].1.cmp(&heap[worst].1));
            if cmp == std::cmp::Ordering::Greater {
                worst = i;
            }
        }
        heap.swap_remove(worst);
    }
}

fn current_bound(heap: &[(f64, usize)], k: usize, radius2: f64) -> f64 {
    if heap.len() < k {
        radius2
    } else {
        let mut worst = 0.0f64;
        for e in heap {
            worst = worst.max(e.0);
        }
        worst.min(radius2)
    }
}
