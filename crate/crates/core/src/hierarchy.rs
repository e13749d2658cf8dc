//! Agglomerative hierarchical clustering and the dendrogram it produces.
//!
//! Nodes are referenced by index: `0..n` are the leaves, and `n + k` is the
//! cluster created by the `k`-th merge. The last merge is the root.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::correlation::DissimilarityMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Complete,
    Average,
    Ward,
}

impl Linkage {
    pub const ALL: [Linkage; 4] = [Linkage::Single, Linkage::Complete, Linkage::Average, Linkage::Ward];

    pub fn as_str(self) -> &'static str {
        match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
            Linkage::Ward => "ward",
        }
    }

    /// Lance–Williams update: dissimilarity between cluster `k` and the
    /// union of `i` and `j`, given the three pairwise dissimilarities and
    /// cluster sizes.
    fn update(self, d_ki: f64, d_kj: f64, d_ij: f64, n_i: f64, n_j: f64, n_k: f64) -> f64 {
        match self {
            Linkage::Single => d_ki.min(d_kj),
            Linkage::Complete => d_ki.max(d_kj),
            Linkage::Average => (n_i * d_ki + n_j * d_kj) / (n_i + n_j),
            Linkage::Ward => {
                ((n_i + n_k) * d_ki + (n_j + n_k) * d_kj - n_k * d_ij) / (n_i + n_j + n_k)
            }
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Linkage::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown linkage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DendrogramJson", into = "DendrogramJson")]
pub struct Dendrogram {
    leaf_ids: Vec<String>,
    merges: Vec<Merge>,
    linkage: Linkage,
}

/// Disjoint leaf-id sets covering every leaf. Clusters are ordered by their
/// first leaf, members by leaf order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub clusters: Vec<Vec<String>>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// True if every cluster of `self` lies inside some cluster of `coarser`.
    pub fn is_nested_in(&self, coarser: &Partition) -> bool {
        self.clusters.iter().all(|c| {
            coarser
                .clusters
                .iter()
                .any(|big| c.iter().all(|x| big.contains(x)))
        })
    }
}

impl Dendrogram {
    /// Validates the merge structure: `n - 1` merges, each child used once
    /// and created before its parent, consistent sizes, finite non-negative
    /// non-decreasing heights.
    pub fn new(leaf_ids: Vec<String>, merges: Vec<(usize, usize, f64)>, linkage: Linkage) -> Result<Self> {
        let n = leaf_ids.len();
        let bad = |m: String| Err(Error::MalformedDendrogram(m));
        if n < 2 {
            return bad(format!("need at least 2 leaves, got {n}"));
        }
        {
            let mut sorted: Vec<&String> = leaf_ids.iter().collect();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return bad("duplicate leaf id".into());
            }
        }
        if merges.len() != n - 1 {
            return bad(format!("expected {} merges, got {}", n - 1, merges.len()));
        }
        let mut used = vec![false; 2 * n - 1];
        let mut sizes: Vec<usize> = vec![1; n];
        let mut out = Vec::with_capacity(n - 1);
        let mut last_height = 0.0;
        for (k, &(left, right, height)) in merges.iter().enumerate() {
            let limit = n + k;
            if left >= limit || right >= limit || left == right {
                return bad(format!("merge {k} references invalid nodes ({left}, {right})"));
            }
            if used[left] || used[right] {
                return bad(format!("merge {k} reuses a node"));
            }
            if !(height.is_finite() && height >= 0.0) {
                return bad(format!("merge {k} has invalid height {height}"));
            }
            if height < last_height {
                return bad(format!("merge {k} height {height} below previous {last_height}"));
            }
            last_height = height;
            used[left] = true;
            used[right] = true;
            let size = sizes[left] + sizes[right];
            sizes.push(size);
            out.push(Merge {
                left,
                right,
                height,
                size,
            });
        }
        Ok(Dendrogram {
            leaf_ids,
            merges: out,
            linkage,
        })
    }

    pub fn leaf_ids(&self) -> &[String] {
        &self.leaf_ids
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn linkage(&self) -> Linkage {
        self.linkage
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_ids.len()
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves() - 2
    }

    pub fn leaf_index(&self, id: &str) -> Option<usize> {
        self.leaf_ids.iter().position(|x| x == id)
    }

    /// Parent of every node; the root maps to itself.
    pub fn parents(&self) -> Vec<usize> {
        let n = self.n_leaves();
        let mut parent: Vec<usize> = (0..2 * n - 1).collect();
        for (k, m) in self.merges.iter().enumerate() {
            parent[m.left] = n + k;
            parent[m.right] = n + k;
        }
        parent
    }

    /// Leaf indices under each node, ascending.
    pub fn node_members(&self) -> Vec<Vec<usize>> {
        let n = self.n_leaves();
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for m in &self.merges {
            let mut joined = members[m.left].clone();
            joined.extend_from_slice(&members[m.right]);
            joined.sort_unstable();
            members.push(joined);
        }
        members
    }

    /// Nodes from `leaf` up to and including the root.
    pub fn ancestors(&self, leaf: usize) -> Vec<usize> {
        let parent = self.parents();
        let mut path = vec![leaf];
        let mut node = leaf;
        while parent[node] != node {
            node = parent[node];
            path.push(node);
        }
        path
    }

    /// Clusters formed by all merges at height `<= height`.
    pub fn cut_at(&self, height: f64) -> Partition {
        let n = self.n_leaves();
        let mut uf = UnionFind::new(n);
        let members = self.node_members();
        for m in self.merges.iter().filter(|m| m.height <= height) {
            let a = members[m.left][0];
            let b = members[m.right][0];
            uf.union(a, b);
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for leaf in 0..n {
            let r = uf.find(leaf);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(leaf);
        }
        Partition {
            clusters: groups
                .into_iter()
                .map(|g| g.into_iter().map(|i| self.leaf_ids[i].clone()).collect())
                .collect(),
        }
    }

    /// Cophenetic distance: height of the merge that first joins two leaves.
    pub fn cophenetic(&self) -> Vec<Vec<f64>> {
        let n = self.n_leaves();
        let members = self.node_members();
        let mut c = vec![vec![0.0; n]; n];
        for m in &self.merges {
            for &a in &members[m.left] {
                for &b in &members[m.right] {
                    c[a][b] = m.height;
                    c[b][a] = m.height;
                }
            }
        }
        c
    }

    /// Label-independent description: every internal cluster as its sorted
    /// leaf ids with its merge height, sorted.
    pub fn canonical_form(&self) -> Vec<(Vec<String>, f64)> {
        let n = self.n_leaves();
        let members = self.node_members();
        let mut out: Vec<(Vec<String>, f64)> = self
            .merges
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let mut ids: Vec<String> = members[n + k].iter().map(|&i| self.leaf_ids[i].clone()).collect();
                ids.sort();
                (ids, m.height)
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        out
    }

    /// Induced dendrogram on a subset of leaves: dropped leaves vanish and
    /// nodes left with a single child are contracted. Leaf order and merge
    /// heights are preserved.
    pub fn restrict(&self, keep: &[String]) -> Result<Dendrogram> {
        let n = self.n_leaves();
        let mut rep: Vec<Option<usize>> = Vec::with_capacity(2 * n - 1);
        let mut leaf_ids = Vec::new();
        for id in &self.leaf_ids {
            if keep.contains(id) {
                rep.push(Some(leaf_ids.len()));
                leaf_ids.push(id.clone());
            } else {
                rep.push(None);
            }
        }
        let kept = leaf_ids.len();
        let mut merges = Vec::new();
        for m in &self.merges {
            let r = match (rep[m.left], rep[m.right]) {
                (Some(a), Some(b)) => {
                    merges.push((a, b, m.height));
                    Some(kept + merges.len() - 1)
                }
                (Some(a), None) | (None, Some(a)) => Some(a),
                (None, None) => None,
            };
            rep.push(r);
        }
        Dendrogram::new(leaf_ids, merges, self.linkage)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dendrogram serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedDendrogram(e.to_string()))
    }
}

/// On-disk form: `merges` holds `[left, right, height]` triples using the
/// node numbering described at module level.
#[derive(Serialize, Deserialize)]
struct DendrogramJson {
    schema: u32,
    linkage: Linkage,
    leaf_ids: Vec<String>,
    merges: Vec<(usize, usize, f64)>,
}

impl From<Dendrogram> for DendrogramJson {
    fn from(d: Dendrogram) -> Self {
        DendrogramJson {
            schema: 1,
            linkage: d.linkage,
            merges: d.merges.iter().map(|m| (m.left, m.right, m.height)).collect(),
            leaf_ids: d.leaf_ids,
        }
    }
}

impl TryFrom<DendrogramJson> for Dendrogram {
    type Error = Error;

    fn try_from(j: DendrogramJson) -> Result<Self> {
        if j.schema != 1 {
            return Err(Error::MalformedDendrogram(format!("unsupported schema {}", j.schema)));
        }
        Dendrogram::new(j.leaf_ids, j.merges, j.linkage)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Naive O(n³) Lance–Williams agglomeration.
///
/// Ties between equal minimum dissimilarities go to the pair with the
/// lexicographically smallest (lower, higher) cluster slots, where a cluster
/// occupies the slot of its smallest original leaf index.
pub fn agglomerate(d: &DissimilarityMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = d.signal_ids.len();
    if n < 2 {
        return Err(Error::TooFew {
            what: "elements to cluster",
            needed: 2,
            got: n,
        });
    }
    if d.d.len() != n || d.d.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidParameter("dissimilarity matrix is not square".into()));
    }
    for i in 0..n {
        for j in 0..n {
            if !d.d[i][j].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }

    let mut dist: Vec<Vec<f64>> = d.d.clone();
    let mut active = vec![true; n];
    let mut node = (0..n).collect::<Vec<_>>();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if dist[i][j] < best.2 {
                    best = (i, j, dist[i][j]);
                }
            }
        }
        let (i, j, d_ij) = best;
        let (n_i, n_j) = (size[i] as f64, size[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let updated = linkage.update(dist[k][i], dist[k][j], d_ij, n_i, n_j, size[k] as f64);
            dist[k][i] = updated;
            dist[i][k] = updated;
        }
        merges.push((node[i], node[j], d_ij));
        active[j] = false;
        size[i] += size[j];
        node[i] = n + step;
    }

    Dendrogram::new(d.signal_ids.clone(), merges, linkage)
}
