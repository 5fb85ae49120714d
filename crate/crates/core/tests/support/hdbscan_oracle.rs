//! Brute-force HDBSCAN: all-pairs mutual reachability, Kruskal, then a
//! top-down walk that deletes the heaviest remaining edges of each
//! component at once.

pub fn labels(x: &[f64], dim: usize, mcs: usize, ms: usize) -> Vec<i32> {
    let n = x.len() / dim;
    if n < mcs.max(2) {
        return vec![0; n];
    }
    let d = |a: usize, b: usize| -> f64 {
        (0..dim)
            .map(|k| (x[a * dim + k] - x[b * dim + k]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut all: Vec<f64> = (0..n).map(|j| d(i, j)).collect();
            all.sort_by(f64::total_cmp);
            all[ms.clamp(1, n) - 1]
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            edges.push((d(a, b).max(core[a]).max(core[b]), a, b));
        }
    }
    edges.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut uf: Vec<usize> = (0..n).collect();
    fn root(uf: &mut Vec<usize>, mut v: usize) -> usize {
        while uf[v] != v {
            v = uf[v];
        }
        v
    }
    let mut mst = Vec::new();
    for (w, a, b) in edges {
        let (ra, rb) = (root(&mut uf, a), root(&mut uf, b));
        if ra != rb {
            uf[ra] = rb;
            mst.push((w, a, b));
        }
    }

    let mut tree = Tree::default();
    tree.add(None, 0.0, (0..n).collect());
    grow(&mut tree, 0, (0..n).collect(), mst, mcs);
    let keep = select(&tree, 0);
    let mut raw = vec![usize::MAX; n];
    for c in keep {
        for &p in &tree.members[c] {
            raw[p] = c;
        }
    }
    canonical(&raw)
}

#[derive(Default)]
struct Tree {
    birth: Vec<f64>,
    stability: Vec<f64>,
    children: Vec<Vec<usize>>,
    members: Vec<Vec<usize>>,
}

impl Tree {
    fn add(&mut self, parent: Option<usize>, birth: f64, members: Vec<usize>) -> usize {
        let id = self.birth.len();
        self.birth.push(birth);
        self.stability.push(0.0);
        self.children.push(Vec::new());
        self.members.push(members);
        if let Some(p) = parent {
            self.children[p].push(id);
        }
        id
    }
}

fn gain(l: f64, birth: f64) -> f64 {
    if l == birth {
        0.0
    } else {
        l - birth
    }
}

fn components(
    points: &[usize],
    edges: &[(f64, usize, usize)],
) -> Vec<(Vec<usize>, Vec<(f64, usize, usize)>)> {
    let mut out: Vec<(Vec<usize>, Vec<(f64, usize, usize)>)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for &p in points {
        if seen.contains(&p) {
            continue;
        }
        let mut comp = vec![p];
        seen.insert(p);
        let mut i = 0;
        while i < comp.len() {
            let v = comp[i];
            for &(_, a, b) in edges {
                let other = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if seen.insert(other) {
                    comp.push(other);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        let es = edges
            .iter()
            .copied()
            .filter(|e| comp.contains(&e.1))
            .collect();
        out.push((comp, es));
    }
    out
}

fn grow(t: &mut Tree, cl: usize, points: Vec<usize>, edges: Vec<(f64, usize, usize)>, mcs: usize) {
    if edges.is_empty() {
        return;
    }
    let w = edges.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let l = if w > 0.0 { 1.0 / w } else { f64::INFINITY };
    let rest: Vec<_> = edges.into_iter().filter(|e| e.0 != w).collect();
    let parts = components(&points, &rest);
    let birth = t.birth[cl];
    let big: Vec<_> = parts
        .iter()
        .filter(|(p, _)| p.len() >= mcs)
        .cloned()
        .collect();
    for (p, _) in parts.iter().filter(|(p, _)| p.len() < mcs) {
        t.stability[cl] += p.len() as f64 * gain(l, birth);
    }
    if big.len() == 1 {
        let (p, e) = big.into_iter().next().unwrap();
        grow(t, cl, p, e, mcs);
    } else if big.len() > 1 {
        for (p, e) in big {
            t.stability[cl] += p.len() as f64 * gain(l, birth);
            let id = t.add(Some(cl), l, p.clone());
            grow(t, id, p, e, mcs);
        }
    }
}

/// Returns the selected clusters of the subtree.
fn select(t: &Tree, c: usize) -> Vec<usize> {
    if t.children[c].is_empty() {
        return vec![c];
    }
    let below: Vec<usize> = t.children[c].iter().flat_map(|&k| select(t, k)).collect();
    if c == 0 {
        return below;
    }
    let below_stab: f64 = best(t, c);
    if t.stability[c] >= below_stab {
        vec![c]
    } else {
        below
    }
}

fn best(t: &Tree, c: usize) -> f64 {
    t.children[c]
        .iter()
        .map(|&k| {
            if t.children[k].is_empty() {
                t.stability[k]
            } else {
                t.stability[k].max(best(t, k))
            }
        })
        .sum()
}

pub fn canonical(raw: &[usize]) -> Vec<i32> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|&r| {
            if r == usize::MAX {
                -1
            } else {
                let next = map.len() as i32;
                *map.entry(r).or_insert(next)
            }
        })
        .collect()
}
