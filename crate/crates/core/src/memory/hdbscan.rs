//! HDBSCAN over Euclidean distance.
//!
//! Ties in the mutual-reachability hierarchy are resolved as level sets:
//! every edge of the same weight is cut at once, so the result does not
//! depend on edge order.

use alloc::vec;
use alloc::vec::Vec;

/// Cluster labels, `-1` for noise. Labels are numbered in order of each
/// cluster's smallest member index.
pub fn hdbscan(
    points: &[f64],
    dim: usize,
    min_cluster_size: usize,
    min_samples: usize,
) -> Vec<i32> {
    let n = if dim == 0 { 0 } else { points.len() / dim };
    if n == 0 {
        return Vec::new();
    }
    if n < min_cluster_size.max(2) {
        return vec![0; n];
    }
    let dist = pairwise(points, dim, n);
    let core = core_distances(&dist, n, min_samples);
    let mst = prim_mst(&dist, &core, n);
    let tree = LevelTree::build(n, mst);
    let condensed = condense(&tree, n, min_cluster_size);
    let selected = select_eom(&condensed);
    label_points(&condensed, &selected, n)
}

fn pairwise(x: &[f64], dim: usize, n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = (0..dim)
                .map(|k| {
                    let d = x[i * dim + k] - x[j * dim + k];
                    d * d
                })
                .sum();
            let v = libm::sqrt(s);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Distance to the `min_samples`-th nearest point, the point itself
/// counted as the first.
fn core_distances(dist: &[f64], n: usize, min_samples: usize) -> Vec<f64> {
    let k = min_samples.clamp(1, n) - 1;
    (0..n)
        .map(|i| {
            let mut row = dist[i * n..(i + 1) * n].to_vec();
            row.select_nth_unstable_by(k, f64::total_cmp);
            row[k]
        })
        .collect()
}

fn prim_mst(dist: &[f64], core: &[f64], n: usize) -> Vec<(usize, usize, f64)> {
    let mreach = |a: usize, b: usize| dist[a * n + b].max(core[a]).max(core[b]);
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut cur = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = mreach(cur, j);
            if w < best[j] {
                best[j] = w;
                from[j] = cur;
            }
            if next == usize::MAX || best[j] < best[next] {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, best[next]));
        cur = next;
    }
    edges
}

/// Hierarchy in which each internal node merges every component joined
/// by edges of one weight.
struct LevelTree {
    /// Internal nodes: merge weight and children (points are `0..n`,
    /// internal node `i` is `n + i`).
    nodes: Vec<(f64, Vec<usize>)>,
}

impl LevelTree {
    fn build(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Self {
        edges.sort_by(|a, b| a.2.total_cmp(&b.2));
        let mut parent: Vec<usize> = (0..n).collect();
        // tree node currently representing each union-find root
        let mut rep: Vec<usize> = (0..n).collect();
        let mut nodes: Vec<(f64, Vec<usize>)> = Vec::new();
        let mut i = 0;
        while i < edges.len() {
            let w = edges[i].2;
            let mut j = i;
            while j < edges.len() && edges[j].2 == w {
                j += 1;
            }
            // union all edges of this level, remembering the pre-level
            // representatives that get merged
            let level = &edges[i..j];
            let mut touched: Vec<usize> = Vec::new();
            for &(a, b, _) in level {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                touched.push(ra);
                touched.push(rb);
            }
            let mut before: Vec<(usize, usize)> = touched.iter().map(|&r| (r, rep[r])).collect();
            before.sort_unstable();
            before.dedup();
            for &(a, b, _) in level {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            for &(r, node) in &before {
                let root = find(&mut parent, r);
                match groups.iter_mut().find(|(gr, _)| *gr == root) {
                    Some((_, ch)) => ch.push(node),
                    None => groups.push((root, vec![node])),
                }
            }
            for (root, children) in groups {
                nodes.push((w, children));
                rep[root] = n + nodes.len() - 1;
            }
            i = j;
        }
        Self { nodes }
    }

    fn root(&self, n: usize) -> usize {
        if self.nodes.is_empty() {
            0
        } else {
            n + self.nodes.len() - 1
        }
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

#[derive(Clone, Debug)]
pub(crate) struct Condensed {
    /// Birth λ of each cluster; cluster 0 is the root.
    pub birth: Vec<f64>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub stability: Vec<f64>,
    /// Points belonging to each cluster at birth.
    pub members: Vec<Vec<usize>>,
}

fn lambda(w: f64) -> f64 {
    if w > 0.0 {
        1.0 / w
    } else {
        f64::INFINITY
    }
}

fn contribution(l: f64, birth: f64) -> f64 {
    if l == birth {
        0.0
    } else {
        l - birth
    }
}

fn condense(tree: &LevelTree, n: usize, mcs: usize) -> Condensed {
    let mut sizes = vec![1usize; n + tree.nodes.len()];
    for (i, (_, ch)) in tree.nodes.iter().enumerate() {
        sizes[n + i] = ch.iter().map(|&c| sizes[c]).sum();
    }
    let leaves = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if v < n {
                out.push(v);
            } else {
                stack.extend(tree.nodes[v - n].1.iter().copied());
            }
        }
        out.sort_unstable();
        out
    };

    let root = tree.root(n);
    let mut c = Condensed {
        birth: vec![0.0],
        parent: vec![None],
        children: vec![Vec::new()],
        stability: vec![0.0],
        members: vec![leaves(root)],
    };
    // (tree node, cluster it currently continues)
    let mut stack = vec![(root, 0usize)];
    while let Some((node, cl)) = stack.pop() {
        if node < n {
            continue;
        }
        let (w, ch) = &tree.nodes[node - n];
        let l = lambda(*w);
        let birth = c.birth[cl];
        let big: Vec<usize> = ch.iter().copied().filter(|&x| sizes[x] >= mcs).collect();
        let falling: usize = ch
            .iter()
            .filter(|&&x| sizes[x] < mcs)
            .map(|&x| sizes[x])
            .sum();
        c.stability[cl] += falling as f64 * contribution(l, birth);
        match big.len() {
            0 => {}
            1 => stack.push((big[0], cl)),
            _ => {
                for &b in &big {
                    c.stability[cl] += sizes[b] as f64 * contribution(l, birth);
                    let id = c.birth.len();
                    c.birth.push(l);
                    c.parent.push(Some(cl));
                    c.children.push(Vec::new());
                    c.stability.push(0.0);
                    c.members.push(leaves(b));
                    c.children[cl].push(id);
                    stack.push((b, id));
                }
            }
        }
    }
    c
}

fn select_eom(c: &Condensed) -> Vec<bool> {
    let k = c.birth.len();
    let mut selected = vec![false; k];
    if c.children[0].is_empty() {
        selected[0] = true;
        return selected;
    }
    let mut subtree = vec![0.0; k];
    // children always carry larger ids than their parent
    for id in (1..k).rev() {
        let kids: f64 = c.children[id].iter().map(|&x| subtree[x]).sum();
        if c.children[id].is_empty() || c.stability[id] >= kids {
            selected[id] = true;
            subtree[id] = c.stability[id];
            let mut stack = c.children[id].clone();
            while let Some(x) = stack.pop() {
                selected[x] = false;
                stack.extend(c.children[x].iter().copied());
            }
        } else {
            subtree[id] = kids;
        }
    }
    selected
}

fn label_points(c: &Condensed, selected: &[bool], n: usize) -> Vec<i32> {
    let mut raw = vec![usize::MAX; n];
    for (id, members) in c.members.iter().enumerate() {
        if selected[id] {
            for &p in members {
                raw[p] = id;
            }
        }
    }
    relabel(&raw)
}

/// Map arbitrary cluster ids (`usize::MAX` = noise) to `0..K` in order of
/// first appearance.
pub(crate) fn relabel(raw: &[usize]) -> Vec<i32> {
    let mut map: Vec<(usize, i32)> = Vec::new();
    raw.iter()
        .map(|&r| {
            if r == usize::MAX {
                return -1;
            }
            match map.iter().find(|(k, _)| *k == r) {
                Some(&(_, v)) => v,
                None => {
                    let v = map.len() as i32;
                    map.push((r, v));
                    v
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = vec![0.5; 20];
        assert_eq!(hdbscan(&pts, 2, 5, 5), vec![0; 10]);
    }

    #[test]
    fn too_few_points_fall_back_to_single_cluster() {
        assert_eq!(hdbscan(&[0.0, 1.0, 5.0], 1, 5, 5), vec![0, 0, 0]);
    }

    #[test]
    fn relabel_orders_by_first_member() {
        assert_eq!(relabel(&[7, usize::MAX, 3, 7]), vec![0, -1, 1, 0]);
    }
}
