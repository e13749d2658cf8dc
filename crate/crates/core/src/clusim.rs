//! Element-centric similarity between two dendrograms over the same
//! elements.
//!
//! Each element is linked to every cluster on its leaf-to-root path with a
//! weight that depends on the cluster's relative depth along that path.
//! Projecting the element–cluster graph onto elements gives a row-stochastic
//! transition matrix `W`; for each element `i` the stationary distribution of
//! a walk that follows `W` with probability `alpha` and restarts at `i`
//! otherwise describes how `i` sees the rest of the hierarchy. Two
//! dendrograms are compared element by element through these distributions.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Dendrogram;

pub const PPR_TOLERANCE: f64 = 1e-12;
pub const PPR_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyParams {
    /// Level emphasis: negative values favour clusters near the root,
    /// positive values favour clusters near the leaves.
    pub r: f64,
    /// Probability of continuing the walk instead of restarting.
    pub alpha: f64,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        HierarchyParams { r: -5.0, alpha: 0.9 }
    }
}

impl HierarchyParams {
    pub fn new(r: f64, alpha: f64) -> Result<Self> {
        let p = HierarchyParams { r, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.r.is_finite() {
            return Err(Error::InvalidParameter(format!("r must be finite, got {}", self.r)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// How to compare dendrograms whose leaf sets differ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    Strict,
    /// Compare the dendrograms induced on the shared elements.
    Intersect,
}

/// Weight of the edge between an element and one of its clusters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelWeight {
    pub node: usize,
    /// 0 at the root, 1 at the element's own singleton cluster.
    pub depth: f64,
    pub weight: f64,
}

/// Softmax of `r * depth` over the clusters on the element's path, ordered
/// from the singleton up to the root.
pub fn level_weights(dend: &Dendrogram, element: &str, r: f64) -> Result<Vec<LevelWeight>> {
    let leaf = dend
        .leaf_index(element)
        .ok_or_else(|| Error::UnknownElement(element.to_owned()))?;
    Ok(path_weights(&dend.ancestors(leaf), r))
}

fn path_weights(path: &[usize], r: f64) -> Vec<LevelWeight> {
    let hops = (path.len() - 1) as f64;
    let depths: Vec<f64> = (0..path.len()).map(|k| (hops - k as f64) / hops).collect();
    let peak = depths.iter().map(|d| r * d).fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = depths.iter().map(|d| (r * d - peak).exp()).collect();
    let total: f64 = raw.iter().sum();
    path.iter()
        .zip(depths)
        .zip(raw)
        .map(|((&node, depth), w)| LevelWeight {
            node,
            depth,
            weight: w / total,
        })
        .collect()
}

/// Element–cluster incidence with level weights, shared by the dense and
/// factored forms of the transition matrix.
struct Bipartite {
    /// Per element, in the dendrogram's leaf order: (cluster node, weight).
    edges: Vec<Vec<(usize, f64)>>,
    /// Leaf indices sorted by element id. Every reduction over elements runs
    /// in this order so results do not depend on leaf order.
    canonical: Vec<usize>,
    /// Per node: member leaves.
    members: Vec<Vec<usize>>,
}

impl Bipartite {
    fn new(dend: &Dendrogram, r: f64) -> Self {
        let parent = dend.parents();
        let edges = (0..dend.n_leaves())
            .map(|leaf| {
                let mut path = vec![leaf];
                let mut node = leaf;
                while parent[node] != node {
                    node = parent[node];
                    path.push(node);
                }
                path_weights(&path, r)
                    .into_iter()
                    .map(|lw| (lw.node, lw.weight))
                    .collect()
            })
            .collect();
        Bipartite {
            edges,
            canonical: canonical_order(dend.leaf_ids()),
            members: dend.node_members(),
        }
    }

    /// `p W` without materialising `W`: each cluster collects the weighted
    /// mass of its members and spreads it evenly over them again.
    fn step(&self, p: &[f64], cluster_mass: &mut [f64], out: &mut [f64]) {
        cluster_mass.iter_mut().for_each(|m| *m = 0.0);
        for &i in &self.canonical {
            if p[i] == 0.0 {
                continue;
            }
            for &(node, w) in &self.edges[i] {
                cluster_mass[node] += p[i] * w;
            }
        }
        for (j, edges) in self.edges.iter().enumerate() {
            out[j] = edges
                .iter()
                .map(|&(node, _)| cluster_mass[node] / self.members[node].len() as f64)
                .sum();
        }
    }
}

/// Dense row-stochastic transition matrix
/// `W[i][j] ∝ Σ_C w(i, C) · [j ∈ C] / |C|`, self-loops included.
pub fn transition_matrix(dend: &Dendrogram, r: f64) -> Vec<Vec<f64>> {
    let graph = Bipartite::new(dend, r);
    let n = dend.n_leaves();
    graph
        .edges
        .iter()
        .map(|edges| {
            let mut row = vec![0.0; n];
            for &(node, w) in edges {
                let share = w / graph.members[node].len() as f64;
                for &j in &graph.members[node] {
                    row[j] += share;
                }
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
            row
        })
        .collect()
}

/// Personalized stationary distributions, one row per element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementAffinity {
    pub element_ids: Vec<String>,
    pub p: Vec<Vec<f64>>,
    /// Largest final ℓ1 step over all rows.
    pub residual: f64,
    pub iterations: usize,
}

pub fn affinity(dend: &Dendrogram, params: &HierarchyParams) -> Result<ElementAffinity> {
    params.validate()?;
    let graph = Bipartite::new(dend, params.r);
    let n = dend.n_leaves();
    let n_nodes = 2 * n - 1;

    let rows: Vec<(Vec<f64>, f64, usize)> = (0..n)
        .into_par_iter()
        .map(|focus| {
            let mut p = vec![0.0; n];
            p[focus] = 1.0;
            let mut next = vec![0.0; n];
            let mut mass = vec![0.0; n_nodes];
            let mut residual = f64::INFINITY;
            for iteration in 1..=PPR_MAX_ITERATIONS {
                graph.step(&p, &mut mass, &mut next);
                next.iter_mut().for_each(|v| *v *= params.alpha);
                next[focus] += 1.0 - params.alpha;
                residual = graph.canonical.iter().map(|&k| (p[k] - next[k]).abs()).sum();
                std::mem::swap(&mut p, &mut next);
                if residual < PPR_TOLERANCE {
                    return Ok((p, residual, iteration));
                }
            }
            Err(Error::NoConvergence {
                iterations: PPR_MAX_ITERATIONS,
                residual,
            })
        })
        .collect::<Result<_>>()?;

    let residual = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let iterations = rows.iter().map(|r| r.2).max().unwrap_or(0);
    Ok(ElementAffinity {
        element_ids: dend.leaf_ids().to_vec(),
        p: rows.into_iter().map(|r| r.0).collect(),
        residual,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub per_element: Vec<(String, f64)>,
}

impl SimilarityScore {
    pub fn aligned_elements(&self) -> usize {
        self.per_element.len()
    }
}

/// Compares two affinities over identical element sets (in any order).
/// Per-element scores are reported in ascending id order.
///
/// The per-element score is `1 - ‖p_a - p_b‖₁ / (2 alpha)`; both
/// distributions keep at least `1 - alpha` on the focal element, so the
/// ℓ1 distance cannot exceed `2 alpha`.
pub fn similarity_from_affinity(a: &ElementAffinity, b: &ElementAffinity, alpha: f64) -> Result<SimilarityScore> {
    let b_index: Vec<usize> = a
        .element_ids
        .iter()
        .map(|id| b.element_ids.iter().position(|x| x == id))
        .collect::<Option<_>>()
        .filter(|_: &Vec<usize>| a.element_ids.len() == b.element_ids.len())
        .ok_or_else(|| mismatch(&a.element_ids, &b.element_ids))?;

    let order = canonical_order(&a.element_ids);
    let per_element: Vec<(String, f64)> = order
        .iter()
        .map(|&i| {
            let id = &a.element_ids[i];
            let pa = &a.p[i];
            let pb = &b.p[b_index[i]];
            let l1: f64 = order.iter().map(|&j| (pa[j] - pb[b_index[j]]).abs()).sum();
            let s = 1.0 - l1 / (2.0 * alpha);
            assert!(
                (-1e-9..=1.0 + 1e-9).contains(&s),
                "element score {s} for {id} outside [0, 1]"
            );
            (id.clone(), s.clamp(0.0, 1.0))
        })
        .collect();
    let value = per_element.iter().map(|(_, s)| s).sum::<f64>() / per_element.len() as f64;
    Ok(SimilarityScore { value, per_element })
}

fn canonical_order(ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    order
}

fn mismatch(a: &[String], b: &[String]) -> Error {
    let sa: BTreeSet<&String> = a.iter().collect();
    let sb: BTreeSet<&String> = b.iter().collect();
    Error::ElementMismatch {
        only_a: sa.difference(&sb).map(|s| s.to_string()).collect(),
        only_b: sb.difference(&sa).map(|s| s.to_string()).collect(),
    }
}

/// Shared elements of two dendrograms, in `a`'s leaf order.
pub fn shared_elements(a: &Dendrogram, b: &Dendrogram) -> Vec<String> {
    a.leaf_ids()
        .iter()
        .filter(|id| b.leaf_index(id).is_some())
        .cloned()
        .collect()
}

/// Brings two dendrograms onto a common element set according to `alignment`.
/// Returns `None` when no restriction is needed.
pub fn align(a: &Dendrogram, b: &Dendrogram, alignment: Alignment) -> Result<Option<(Dendrogram, Dendrogram)>> {
    let shared = shared_elements(a, b);
    if shared.len() == a.n_leaves() && shared.len() == b.n_leaves() {
        return Ok(None);
    }
    match alignment {
        Alignment::Strict => Err(mismatch(a.leaf_ids(), b.leaf_ids())),
        Alignment::Intersect => {
            if shared.len() < 2 {
                return Err(Error::TooFew {
                    what: "shared elements",
                    needed: 2,
                    got: shared.len(),
                });
            }
            log::info!(
                "intersecting element sets: {} of {} / {} shared",
                shared.len(),
                a.n_leaves(),
                b.n_leaves()
            );
            Ok(Some((a.restrict(&shared)?, b.restrict(&shared)?)))
        }
    }
}

pub fn similarity(
    a: &Dendrogram,
    b: &Dendrogram,
    params: &HierarchyParams,
    alignment: Alignment,
) -> Result<SimilarityScore> {
    match align(a, b, alignment)? {
        None => similarity_from_affinity(&affinity(a, params)?, &affinity(b, params)?, params.alpha),
        Some((ra, rb)) => similarity_from_affinity(&affinity(&ra, params)?, &affinity(&rb, params)?, params.alpha),
    }
}
