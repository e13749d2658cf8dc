//! Independent oracles shared by the integration suites. Nothing here calls
//! into the algorithm under test except to read a dendrogram's structure.

#![allow(dead_code)]

use dendroscan::rng::Stream;
use dendroscan::{Dendrogram, DissimilarityMatrix, Linkage};
use nalgebra::{DMatrix, DVector};

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

/// Symmetric, zero-diagonal, almost surely tie-free.
pub fn random_dissimilarity(rng: &mut Stream, n: usize) -> DissimilarityMatrix {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.uniform();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    DissimilarityMatrix { signal_ids: ids(n), d }
}

/// Uniformly random merge order with strictly increasing heights.
pub fn random_dendrogram(rng: &mut Stream, leaf_ids: Vec<String>) -> Dendrogram {
    let n = leaf_ids.len();
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    let mut height = 0.0;
    for k in 0..n - 1 {
        let a = active.swap_remove((rng.uniform() * active.len() as f64) as usize);
        let b = active.swap_remove((rng.uniform() * active.len() as f64) as usize);
        height += 0.01 + rng.uniform();
        merges.push((a.min(b), a.max(b), height));
        active.push(n + k);
    }
    Dendrogram::new(leaf_ids, merges, Linkage::Average).expect("random tree is valid")
}

pub fn shuffled(rng: &mut Stream, mut v: Vec<String>) -> Vec<String> {
    for i in (1..v.len()).rev() {
        let j = (rng.uniform() * (i + 1) as f64) as usize;
        v.swap(i, j);
    }
    v
}

/// Kruskal: the weights at which a minimum spanning forest joins two
/// components, in increasing order.
pub fn kruskal_weights(d: &[Vec<f64>]) -> Vec<f64> {
    let n = d.len();
    let mut edges: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (d[i][j], i, j))
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] != x {
            let root = find(p, p[x]);
            p[x] = root;
        }
        p[x]
    }
    let mut out = Vec::new();
    for (w, i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
            out.push(w);
        }
    }
    out
}

/// Leaf-to-root node path for every leaf, read off the merge list.
fn leaf_paths(dend: &Dendrogram) -> Vec<Vec<usize>> {
    let n = dend.n_leaves();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    for (k, m) in dend.merges().iter().enumerate() {
        parent[m.left] = n + k;
        parent[m.right] = n + k;
    }
    (0..n)
        .map(|leaf| {
            let mut path = vec![leaf];
            while parent[*path.last().unwrap()] != usize::MAX {
                path.push(parent[*path.last().unwrap()]);
            }
            path
        })
        .collect()
}

fn members(dend: &Dendrogram) -> Vec<Vec<usize>> {
    let n = dend.n_leaves();
    let mut m: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for merge in dend.merges() {
        let mut joined = m[merge.left].clone();
        joined.extend(&m[merge.right]);
        m.push(joined);
    }
    m
}

/// Row-stochastic element transition matrix built straight from the
/// definition: softmax of `r * nu` along each leaf's path (nu = 1 at the
/// leaf, 0 at the root), projected uniformly over each cluster's members.
pub fn transition_oracle(dend: &Dendrogram, r: f64) -> DMatrix<f64> {
    let n = dend.n_leaves();
    let members = members(dend);
    let mut w = DMatrix::zeros(n, n);
    for (i, path) in leaf_paths(dend).iter().enumerate() {
        let hops = (path.len() - 1) as f64;
        let raw: Vec<f64> = (0..path.len())
            .map(|k| (r * (hops - k as f64) / hops).exp())
            .collect();
        let z: f64 = raw.iter().sum();
        for (node, weight) in path.iter().zip(raw) {
            for &j in &members[*node] {
                w[(i, j)] += weight / z / members[*node].len() as f64;
            }
        }
        let row_sum: f64 = w.row(i).sum();
        for j in 0..n {
            w[(i, j)] /= row_sum;
        }
    }
    w
}

/// Personalized PageRank by direct solve: p (I - alpha W) = (1 - alpha) e_i.
pub fn ppr_oracle(w: &DMatrix<f64>, alpha: f64) -> Vec<Vec<f64>> {
    let n = w.nrows();
    let system = (DMatrix::identity(n, n) - w * alpha).transpose();
    let lu = system.lu();
    (0..n)
        .map(|i| {
            let mut rhs = DVector::zeros(n);
            rhs[i] = 1.0 - alpha;
            lu.solve(&rhs).expect("nonsingular").iter().copied().collect()
        })
        .collect()
}

/// Null distribution of U for tie-free samples, by enumerating every choice
/// of ranks for the first sample. Index = U, value = number of splits.
pub fn enumerate_u_counts(n1: usize, n2: usize) -> Vec<u64> {
    let n = n1 + n2;
    let mut counts = vec![0u64; n1 * n2 + 1];
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let rank_sum: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
        counts[rank_sum - n1 * (n1 + 1) / 2] += 1;
    }
    counts
}

/// Brute-force U of x over y: pairs with x above y.
pub fn count_u(x: &[f64], y: &[f64]) -> f64 {
    x.iter().map(|a| y.iter().filter(|b| a > *b).count() as f64).sum()
}

/// (less, greater, two-sided) exact p-values from enumeration counts.
pub fn brute_force_p(counts: &[u64], u: f64) -> (f64, f64, f64) {
    let total: u64 = counts.iter().sum();
    let u = u as usize;
    let low = counts[..=u].iter().sum::<u64>() as f64 / total as f64;
    let high = counts[u..].iter().sum::<u64>() as f64 / total as f64;
    (low, high, (2.0 * low.min(high)).min(1.0))
}

/// Distinct values drawn without replacement from a shuffled grid.
pub fn tie_free_sample(rng: &mut Stream, n: usize) -> Vec<f64> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = (rng.uniform() * 1e6).floor();
        if seen.insert(v as u64) {
            out.push(v);
        }
    }
    out
}
