//! Hierarchical density-based clustering of dynamic candidates over the
//! mutual-reachability metric: core distances, a Prim MST on the dense
//! mutual-reachability graph, single-linkage condensation with a minimum
//! cluster size, and excess-of-mass cluster selection with an explicit
//! noise label.
//!
//! Dynamic candidate sets are small after the velocity filter (typically a
//! few thousand points), so the dense O(n^2) MST is the correctness-first
//! choice; a kd-tree Boruvka variant would be an optimization, not a
//! requirement.

use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};

/// Label assigned to points not belonging to any selected cluster.
pub const NOISE: i32 = -1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterParams {
    /// Smallest admissible object, in points.
    pub min_cluster_size: usize,
    /// Density conservativeness: neighbor count defining core distances.
    pub min_samples: usize,
    /// Permit the dendrogram root itself to be selected. Off by default,
    /// matching canonical excess-of-mass extraction.
    pub allow_single_cluster: bool,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            min_cluster_size: 30,
            min_samples: 10,
            allow_single_cluster: false,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_cluster_size < 2 {
            return Err("cluster.min_cluster_size must be >= 2".into());
        }
        if self.min_samples < 1 {
            return Err("cluster.min_samples must be >= 1".into());
        }
        Ok(())
    }
}

/// Per-point labels (cluster id or [`NOISE`]) over the input index set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    pub labels: Vec<i32>,
    pub n_clusters: usize,
}

impl ClusterLabeling {
    pub fn all_noise(n: usize) -> Self {
        ClusterLabeling {
            labels: vec![NOISE; n],
            n_clusters: 0,
        }
    }

    /// Point indices of cluster `id`, in input order.
    pub fn members(&self, id: i32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == id)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Distance from each point to its `min_samples`-th nearest neighbor,
/// self excluded. Requires at least `min_samples + 1` points.
pub fn core_distances(points: &[Vec3], min_samples: usize) -> Vec<f64> {
    let n = points.len();
    assert!(
        n > min_samples,
        "core distances need more than min_samples points"
    );
    let mut result = Vec::with_capacity(n);
    let mut dists: Vec<f64> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if j != i {
                dists.push((points[i] - points[j]).norm());
            }
        }
        let k = min_samples - 1;
        dists.select_nth_unstable_by(k, f64::total_cmp);
        result.push(dists[k]);
    }
    result
}

/// One edge of the minimum spanning tree over mutual-reachability weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

fn mutual_reachability(points: &[Vec3], core: &[f64], a: usize, b: usize) -> f64 {
    let d = (points[a] - points[b]).norm();
    core[a].max(core[b]).max(d)
}

/// Prim's MST over the complete mutual-reachability graph
/// w(a, b) = max(core(a), core(b), dist(a, b)). Ties in edge weight break
/// by (min index, max index) so the tree is deterministic.
pub fn mutual_reachability_mst(points: &[Vec3], core: &[f64]) -> Vec<MstEdge> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let edge_key = |w: f64, x: usize, y: usize| (w, x.min(y), x.max(y));
    let mut in_tree = vec![false; n];
    let mut best_w = vec![f64::INFINITY; n];
    let mut best_from = vec![usize::MAX; n];
    let mut mst = Vec::with_capacity(n - 1);
    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = mutual_reachability(points, core, current, v);
            if edge_key(w, current, v) < edge_key(best_w[v], best_from[v].min(v), best_from[v].max(v))
            {
                best_w[v] = w;
                best_from[v] = current;
            }
            if next == usize::MAX
                || edge_key(best_w[v], best_from[v], v) < edge_key(best_w[next], best_from[next], next)
            {
                next = v;
            }
        }
        mst.push(MstEdge {
            a: best_from[next],
            b: next,
            weight: best_w[next],
        });
        in_tree[next] = true;
        current = next;
    }
    mst
}

struct UnionFind {
    parent: Vec<usize>,
    /// For single-linkage: the dendrogram node currently representing the set.
    node: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            node: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

#[derive(Debug, Clone, Copy)]
struct SlNode {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

/// Single-linkage dendrogram from MST edges sorted by ascending weight.
/// Leaves are 0..n-1; internal node i has id n+i; the root is 2n-2.
fn single_linkage(n: usize, mst: &[MstEdge]) -> Vec<SlNode> {
    let mut edges: Vec<&MstEdge> = mst.iter().collect();
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.min(x.b).cmp(&y.a.min(y.b)))
            .then(x.a.max(x.b).cmp(&y.a.max(y.b)))
    });
    let mut uf = UnionFind::new(n);
    let mut tree = Vec::with_capacity(n - 1);
    for e in edges {
        let ra = uf.find(e.a);
        let rb = uf.find(e.b);
        let node = SlNode {
            left: uf.node[ra],
            right: uf.node[rb],
            distance: e.weight,
            size: uf.size[ra] + uf.size[rb],
        };
        let id = n + tree.len();
        tree.push(node);
        uf.parent[ra] = rb;
        uf.node[rb] = id;
        uf.size[rb] = node.size;
    }
    tree
}

/// Entry of the condensed tree: `child` left cluster `parent` at density
/// `lambda`. Children with id < n_points are single points (size 1).
#[derive(Debug, Clone, Copy)]
struct CondensedEntry {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
}

fn sl_size(n: usize, tree: &[SlNode], id: usize) -> usize {
    if id < n {
        1
    } else {
        tree[id - n].size
    }
}

fn collect_leaves(n: usize, tree: &[SlNode], root: usize, out: &mut Vec<usize>) {
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        if id < n {
            out.push(id);
        } else {
            let node = tree[id - n];
            stack.push(node.left);
            stack.push(node.right);
        }
    }
}

/// Condenses the dendrogram: splits where both sides reach
/// `min_cluster_size` spawn child clusters, smaller sides fall out as
/// points. Returns the entries plus the birth lambda of each condensed
/// cluster (ids from n_points upward, root = n_points).
fn condense(
    n: usize,
    tree: &[SlNode],
    min_cluster_size: usize,
) -> (Vec<CondensedEntry>, Vec<f64>) {
    let root = n + tree.len() - 1;
    let mut entries = Vec::new();
    let mut births = vec![0.0f64];
    let mut next_id = n + 1;
    // (sl node, condensed cluster id)
    let mut stack = vec![(root, n)];
    while let Some((sl_id, cid)) = stack.pop() {
        let node = tree[sl_id - n];
        let lambda = 1.0 / node.distance.max(1e-12);
        let size_l = sl_size(n, tree, node.left);
        let size_r = sl_size(n, tree, node.right);
        let l_big = size_l >= min_cluster_size;
        let r_big = size_r >= min_cluster_size;
        if l_big && r_big {
            for (child, size) in [(node.left, size_l), (node.right, size_r)] {
                let id = next_id;
                next_id += 1;
                births.push(lambda);
                entries.push(CondensedEntry {
                    parent: cid,
                    child: id,
                    lambda,
                    size,
                });
                stack.push((child, id));
            }
        } else {
            for (child, big) in [(node.left, l_big), (node.right, r_big)] {
                if big {
                    stack.push((child, cid));
                } else {
                    let mut leaves = Vec::new();
                    collect_leaves(n, tree, child, &mut leaves);
                    for leaf in leaves {
                        entries.push(CondensedEntry {
                            parent: cid,
                            child: leaf,
                            lambda,
                            size: 1,
                        });
                    }
                }
            }
        }
    }
    (entries, births)
}

/// Excess-of-mass cluster selection over the condensed tree, then point
/// labeling. Points never assigned to a selected cluster are [`NOISE`].
pub fn extract_clusters(
    n_points: usize,
    mst: &[MstEdge],
    params: &ClusterParams,
) -> ClusterLabeling {
    if n_points < 2 || mst.len() + 1 != n_points {
        return ClusterLabeling::all_noise(n_points);
    }
    let tree = single_linkage(n_points, mst);
    let (entries, births) = condense(n_points, &tree, params.min_cluster_size);
    let n_clusters_total = births.len();
    let idx = |cid: usize| cid - n_points;

    // stability(C) = sum over entries leaving C of (lambda - lambda_birth(C)) * size
    let mut stability = vec![0.0f64; n_clusters_total];
    for e in &entries {
        stability[idx(e.parent)] += (e.lambda - births[idx(e.parent)]) * e.size as f64;
    }

    let mut child_clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters_total];
    for e in &entries {
        if e.child >= n_points {
            child_clusters[idx(e.parent)].push(e.child);
        }
    }

    let mut selected = vec![false; n_clusters_total];
    let mut propagated = stability.clone();
    let first = if params.allow_single_cluster {
        n_points
    } else {
        n_points + 1
    };
    for cid in (first..n_points + n_clusters_total).rev() {
        let children_sum: f64 = child_clusters[idx(cid)]
            .iter()
            .map(|c| propagated[idx(*c)])
            .sum();
        if child_clusters[idx(cid)].is_empty() || stability[idx(cid)] > children_sum {
            selected[idx(cid)] = true;
            // deselect everything below
            let mut stack = child_clusters[idx(cid)].clone();
            while let Some(c) = stack.pop() {
                selected[idx(c)] = false;
                stack.extend(child_clusters[idx(c)].iter().copied());
            }
            propagated[idx(cid)] = stability[idx(cid)];
        } else {
            propagated[idx(cid)] = children_sum;
        }
    }

    let mut labels = vec![NOISE; n_points];
    let mut n_clusters = 0;
    for cid in n_points..n_points + n_clusters_total {
        if !selected[idx(cid)] {
            continue;
        }
        let label = n_clusters as i32;
        n_clusters += 1;
        // every point entry in the subtree belonged to this cluster
        let mut stack = vec![cid];
        while let Some(c) = stack.pop() {
            for e in entries.iter().filter(|e| e.parent == c) {
                if e.child < n_points {
                    labels[e.child] = label;
                } else {
                    stack.push(e.child);
                }
            }
        }
    }
    ClusterLabeling { labels, n_clusters }
}

/// Full clustering of a dynamic candidate point set: core distances,
/// mutual-reachability MST, condensation, and cluster selection.
pub fn cluster_dynamic(points: &[Vec3], params: &ClusterParams) -> ClusterLabeling {
    let n = points.len();
    if n <= params.min_samples || n < params.min_cluster_size {
        return ClusterLabeling::all_noise(n);
    }
    let core = core_distances(points, params.min_samples);
    let mst = mutual_reachability_mst(points, &core);
    extract_clusters(n, &mst, params)
}
