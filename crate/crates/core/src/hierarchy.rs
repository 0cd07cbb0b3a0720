//! Agglomerative hierarchical clustering over a dense distance matrix.
//!
//! Node ids follow the usual convention: leaves are `0..n`, and merge `t`
//! creates node `n + t`. Merge ties are broken by the pair with the smaller
//! (min, max) cluster ids, where a cluster's id is the smallest leaf it holds.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Average,
    Complete,
    Ward,
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "ward" => Ok(Linkage::Ward),
            other => Err(format!("unknown linkage `{other}`")),
        }
    }
}

impl std::fmt::Display for Linkage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Linkage::Average => "average",
            Linkage::Complete => "complete",
            Linkage::Ward => "ward",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

/// A binary merge tree over `n_leaves` leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Checks that every node except the root is used exactly once as a child
    /// and that children always precede their parent.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_leaves;
        if n == 0 {
            return Err(ModelError::MalformedDendrogram("no leaves".into()));
        }
        if self.merges.len() != n - 1 {
            return Err(ModelError::MalformedDendrogram(format!(
                "{} merges for {n} leaves",
                self.merges.len()
            )));
        }
        let mut used = vec![false; 2 * n - 1];
        for (t, m) in self.merges.iter().enumerate() {
            let node = n + t;
            for child in [m.left, m.right] {
                if child >= node {
                    return Err(ModelError::MalformedDendrogram(format!(
                        "merge {t} references node {child} before it exists"
                    )));
                }
                if std::mem::replace(&mut used[child], true) {
                    return Err(ModelError::MalformedDendrogram(format!(
                        "node {child} merged twice"
                    )));
                }
            }
            if m.left == m.right {
                return Err(ModelError::MalformedDendrogram(format!(
                    "merge {t} joins node {} with itself",
                    m.left
                )));
            }
        }
        Ok(())
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves - 2
    }

    /// Children of an internal node, `None` for leaves.
    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        (node >= self.n_leaves).then(|| {
            let m = &self.merges[node - self.n_leaves];
            (m.left, m.right)
        })
    }

    /// Left-to-right leaf order as drawn without any reordering.
    pub fn natural_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_leaves);
        let mut stack = vec![self.root()];
        while let Some(node) = stack.pop() {
            match self.children(node) {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(node),
            }
        }
        out
    }

    /// Flat labels after undoing merges down to `k` clusters. Labels are
    /// numbered by first appearance in leaf index order.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let n = self.n_leaves;
        let k = k.clamp(1, n);
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        // Representative leaf for every node created so far.
        let mut rep: Vec<usize> = (0..n).collect();
        for m in self.merges.iter().take(n - k) {
            let a = find(&mut parent, rep[m.left]);
            let b = find(&mut parent, rep[m.right]);
            parent[a.max(b)] = a.min(b);
            rep.push(a.min(b));
        }
        let mut ids = vec![usize::MAX; n];
        let mut next = 0;
        (0..n)
            .map(|i| {
                let root = find(&mut parent, i);
                if ids[root] == usize::MAX {
                    ids[root] = next;
                    next += 1;
                }
                ids[root]
            })
            .collect()
    }
}

/// Symmetric n x n distance matrix stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Euclidean distances between the rows of `points`.
    pub fn euclidean<R: AsRef<[f64]>>(points: &[R]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = points[i]
                    .as_ref()
                    .iter()
                    .zip(points[j].as_ref())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.d[i * self.n + j] = v;
        self.d[j * self.n + i] = v;
    }
}

/// Builds the full merge tree with Lance-Williams updates.
///
/// Each active cluster caches its nearest active neighbour, so a typical run
/// costs O(n^2) rather than O(n^3).
pub fn linkage(dist: &DistanceMatrix, method: Linkage) -> Dendrogram {
    let n = dist.len();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    if n <= 1 {
        return Dendrogram { n_leaves: n, merges };
    }
    let mut d = dist.clone();
    // Slot i holds the cluster whose smallest leaf is i.
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node = (0..n).collect::<Vec<_>>();
    let mut nn = vec![(f64::INFINITY, usize::MAX); n];

    let nearest = |d: &DistanceMatrix, active: &[bool], i: usize| -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..n {
            if j != i && active[j] {
                let v = d.get(i, j);
                if v < best.0 || (v == best.0 && j < best.1) {
                    best = (v, j);
                }
            }
        }
        best
    };
    for i in 0..n {
        nn[i] = nearest(&d, &active, i);
    }

    for step in 0..(n - 1) {
        // Global minimum with (dist, min id, max id) ordering.
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let (v, j) = nn[i];
            let (a, b) = (i.min(j), i.max(j));
            let better = match best {
                None => true,
                Some((bv, ba, bb)) => v < bv || (v == bv && (a, b) < (ba, bb)),
            };
            if better {
                best = Some((v, a, b));
            }
        }
        let (height, a, b) = best.expect("at least two active clusters");
        let (na, nb) = (size[a], size[b]);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let (dka, dkb) = (d.get(k, a), d.get(k, b));
            let nk = size[k] as f64;
            let updated = match method {
                Linkage::Average => (na as f64 * dka + nb as f64 * dkb) / (na + nb) as f64,
                Linkage::Complete => dka.max(dkb),
                Linkage::Ward => {
                    let total = na as f64 + nb as f64 + nk;
                    (((na as f64 + nk) * dka * dka + (nb as f64 + nk) * dkb * dkb
                        - nk * height * height)
                        / total)
                        .max(0.0)
                        .sqrt()
                }
            };
            d.set(k, a, updated);
        }
        active[b] = false;
        size[a] = na + nb;
        merges.push(Merge {
            left: node[a],
            right: node[b],
            distance: height,
            size: na + nb,
        });
        node[a] = n + step;

        for i in 0..n {
            if !active[i] {
                continue;
            }
            if i == a || nn[i].1 == a || nn[i].1 == b {
                nn[i] = nearest(&d, &active, i);
            } else {
                let v = d.get(i, a);
                if v < nn[i].0 || (v == nn[i].0 && a < nn[i].1) {
                    nn[i] = (v, a);
                }
            }
        }
    }
    Dendrogram { n_leaves: n, merges }
}
