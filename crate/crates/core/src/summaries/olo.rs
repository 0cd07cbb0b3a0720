//! Optimal leaf ordering of a dendrogram.
//!
//! Among the 2^(L-1) leaf orders reachable by flipping internal nodes, finds
//! one minimising the sum of distances between adjacent leaves. `best[i][j]`
//! holds the cheapest order of the subtree rooted at the lowest common
//! ancestor of leaves `i` and `j` that starts at `i` and ends at `j`; every
//! pair has exactly one such ancestor, so one L x L table covers all nodes.

use crate::error::ModelError;
use crate::hierarchy::{Dendrogram, DistanceMatrix};

/// Sum of distances between consecutive entries of `order`.
pub fn adjacent_cost(order: &[usize], dist: &DistanceMatrix) -> f64 {
    order.windows(2).map(|w| dist.get(w[0], w[1])).sum()
}

/// Leaf permutation minimising [`adjacent_cost`] over all orders consistent
/// with `dendro`. When the unflipped order is already optimal it is returned
/// unchanged.
pub fn optimal_leaf_order(dendro: &Dendrogram, dist: &DistanceMatrix) -> Result<Vec<usize>, ModelError> {
    dendro.validate()?;
    let n = dendro.n_leaves;
    if dist.len() != n {
        return Err(ModelError::MalformedDendrogram(format!(
            "{n} leaves but a {0}x{0} distance matrix",
            dist.len()
        )));
    }
    let natural = dendro.natural_order();
    if n <= 2 {
        return Ok(natural);
    }

    let mut best = vec![f64::INFINITY; n * n];
    // Split points: order(i, j) = order(i, a) ++ order(b, j).
    let mut via = vec![(0usize, 0usize); n * n];
    for i in 0..n {
        best[i * n + i] = 0.0;
        via[i * n + i] = (i, i);
    }

    // Leaves of every node in natural order, plus the two child leaf sets.
    let total = 2 * n - 1;
    let mut leaves: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    leaves.resize(total, Vec::new());
    let mut scratch = Vec::new();
    for t in 0..n - 1 {
        let node = n + t;
        let (w, x) = dendro.children(node).expect("internal node");
        let left = leaves[w].clone();
        let right = leaves[x].clone();
        join(dendro, &leaves, w, x, &left, &right, dist, &mut best, &mut via, &mut scratch);
        let mut all = left;
        all.extend_from_slice(&right);
        leaves[node] = all;
    }

    let root = dendro.root();
    let (l, r) = dendro.children(root).expect("root is internal");
    let (first, last) = (natural[0], natural[n - 1]);
    let mut pick = (first, last);
    let mut pick_cost = best[first * n + last];
    for &i in &leaves[l] {
        for &j in &leaves[r] {
            let c = best[i * n + j];
            if c < pick_cost {
                pick = (i, j);
                pick_cost = c;
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    unroll(pick.0, pick.1, n, &via, &mut order);
    if adjacent_cost(&natural, dist) <= adjacent_cost(&order, dist) {
        return Ok(natural);
    }
    Ok(order)
}

/// Leaves of `node`'s child that does not contain `leaf`; `[leaf]` for a leaf node.
fn far_side<'a>(dendro: &Dendrogram, leaves: &'a [Vec<usize>], node: usize, leaf: usize) -> &'a [usize] {
    match dendro.children(node) {
        None => &leaves[node],
        Some((a, b)) => {
            if leaves[a].contains(&leaf) {
                &leaves[b]
            } else {
                &leaves[a]
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn join(
    dendro: &Dendrogram,
    leaves: &[Vec<usize>],
    w: usize,
    x: usize,
    left: &[usize],
    right: &[usize],
    dist: &DistanceMatrix,
    best: &mut [f64],
    via: &mut [(usize, usize)],
    scratch: &mut Vec<(f64, usize)>,
) {
    let n = dist.len();
    for &i in left {
        // scratch[k] = cheapest order of w from i ending next to right leaf k.
        let hs = far_side(dendro, leaves, w, i);
        scratch.clear();
        for &k in right {
            let mut top = (f64::INFINITY, usize::MAX);
            for &h in hs {
                let c = best[i * n + h] + dist.get(h, k);
                if c < top.0 {
                    top = (c, h);
                }
            }
            scratch.push(top);
        }
        for &j in right {
            let ks = far_side(dendro, leaves, x, j);
            let mut top = (f64::INFINITY, usize::MAX, usize::MAX);
            for (slot, &k) in right.iter().enumerate() {
                if !ks.contains(&k) {
                    continue;
                }
                let (partial, h) = scratch[slot];
                let c = partial + best[k * n + j];
                if c < top.0 {
                    top = (c, h, k);
                }
            }
            let (c, h, k) = top;
            best[i * n + j] = c;
            best[j * n + i] = c;
            via[i * n + j] = (h, k);
            via[j * n + i] = (k, h);
        }
    }
}

fn unroll(i: usize, j: usize, n: usize, via: &[(usize, usize)], out: &mut Vec<usize>) {
    if i == j {
        out.push(i);
        return;
    }
    let (a, b) = via[i * n + j];
    unroll(i, a, n, via, out);
    unroll(b, j, n, via, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{linkage, Linkage, Merge};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Every leaf order reachable by flipping internal nodes.
    fn all_orders(dendro: &Dendrogram, node: usize) -> Vec<Vec<usize>> {
        match dendro.children(node) {
            None => vec![vec![node]],
            Some((l, r)) => {
                let mut out = Vec::new();
                for a in all_orders(dendro, l) {
                    for b in all_orders(dendro, r) {
                        out.push(a.iter().chain(&b).copied().collect());
                        out.push(b.iter().chain(&a).copied().collect());
                    }
                }
                out
            }
        }
    }

    #[test]
    fn two_leaves_keep_identity() {
        let d = DistanceMatrix::euclidean(&[[0.0], [1.0]]);
        let dendro = linkage(&d, Linkage::Average);
        assert_eq!(optimal_leaf_order(&dendro, &d).unwrap(), vec![0, 1]);
    }

    #[test]
    fn collinear_points_come_out_monotone() {
        let xs = [0.0, 7.0, 1.5, 3.0, 9.5, 4.0, 10.0];
        let pts: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
        let d = DistanceMatrix::euclidean(&pts);
        let dendro = linkage(&d, Linkage::Average);
        let order = optimal_leaf_order(&dendro, &d).unwrap();
        let vals: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
        let up = vals.windows(2).all(|w| w[0] <= w[1]);
        let down = vals.windows(2).all(|w| w[0] >= w[1]);
        assert!(up || down, "{vals:?}");
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let n = 3 + trial % 6;
            let pts: Vec<[f64; 2]> =
                (0..n).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
            let d = DistanceMatrix::euclidean(&pts);
            let dendro = linkage(&d, Linkage::Average);
            let got = adjacent_cost(&optimal_leaf_order(&dendro, &d).unwrap(), &d);
            let brute = all_orders(&dendro, dendro.root())
                .iter()
                .map(|o| adjacent_cost(o, &d))
                .fold(f64::INFINITY, f64::min);
            assert!((got - brute).abs() < 1e-9, "n={n}: {got} vs {brute}");
        }
    }

    #[test]
    fn rejects_malformed_input() {
        let d = DistanceMatrix::euclidean(&[[0.0], [1.0], [2.0]]);
        let bad = Dendrogram {
            n_leaves: 3,
            merges: vec![
                Merge { left: 0, right: 1, distance: 1.0, size: 2 },
                Merge { left: 3, right: 3, distance: 2.0, size: 4 },
            ],
        };
        assert!(optimal_leaf_order(&bad, &d).is_err());
        let good = linkage(&d, Linkage::Average);
        let small = DistanceMatrix::euclidean(&[[0.0], [1.0]]);
        assert!(optimal_leaf_order(&good, &small).is_err());
    }
}
