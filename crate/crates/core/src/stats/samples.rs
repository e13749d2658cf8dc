use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusim::{affinity, align, similarity_from_affinity, Alignment, ElementAffinity, HierarchyParams, SimilarityScore};
use crate::error::{Error, Result};
use crate::hierarchy::Dendrogram;

#[derive(Debug, Clone)]
pub struct CaptureDendrogram {
    pub capture_id: String,
    pub dendrogram: Dendrogram,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "group", rename_all = "snake_case")]
pub enum SampleGroup {
    BenignBenign,
    AttackBenign { kind: String },
}

impl fmt::Display for SampleGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleGroup::BenignBenign => f.write_str("benign"),
            SampleGroup::AttackBenign { kind } => write!(f, "attack_{kind}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySample {
    pub group: SampleGroup,
    pub values: Vec<f64>,
    pub pair_ids: Vec<(String, String)>,
    /// Number of elements compared for each pair.
    pub aligned_elements: Vec<usize>,
}

impl SimilaritySample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scores dendrogram pairs, computing each dendrogram's affinity once.
///
/// Pairs whose element sets differ are re-aligned (or rejected) per the
/// configured [`Alignment`] and scored from fresh affinities.
pub struct PairScorer<'a> {
    params: HierarchyParams,
    alignment: Alignment,
    entries: HashMap<&'a str, (&'a Dendrogram, ElementAffinity)>,
}

impl<'a> PairScorer<'a> {
    pub fn new<I>(dendrograms: I, params: HierarchyParams, alignment: Alignment) -> Result<Self>
    where
        I: IntoIterator<Item = &'a CaptureDendrogram>,
    {
        params.validate()?;
        let list: Vec<&CaptureDendrogram> = dendrograms.into_iter().collect();
        if let Some(first) = list.first() {
            let linkage = first.dendrogram.linkage();
            if let Some(other) = list.iter().find(|c| c.dendrogram.linkage() != linkage) {
                return Err(Error::InvalidParameter(format!(
                    "mixed linkages: {} uses {}, {} uses {}",
                    first.capture_id,
                    linkage,
                    other.capture_id,
                    other.dendrogram.linkage()
                )));
            }
        }
        let computed: Vec<(&'a str, (&'a Dendrogram, ElementAffinity))> = list
            .par_iter()
            .map(|c| {
                let aff = affinity(&c.dendrogram, &params).map_err(|e| e.context(format!("capture {}", c.capture_id)))?;
                Ok((c.capture_id.as_str(), (&c.dendrogram, aff)))
            })
            .collect::<Result<_>>()?;
        let mut entries = HashMap::with_capacity(computed.len());
        for (id, entry) in computed {
            if entries.insert(id, entry).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate capture id {id:?}")));
            }
        }
        Ok(PairScorer {
            params,
            alignment,
            entries,
        })
    }

    pub fn params(&self) -> &HierarchyParams {
        &self.params
    }

    pub fn affinity(&self, capture_id: &str) -> Option<&ElementAffinity> {
        self.entries.get(capture_id).map(|e| &e.1)
    }

    pub fn score(&self, a: &str, b: &str) -> Result<SimilarityScore> {
        let lookup = |id: &str| {
            self.entries
                .get(id)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown capture {id:?}")))
        };
        let (da, aa) = lookup(a)?;
        let (db, ab) = lookup(b)?;
        let result = match align(da, db, self.alignment) {
            Ok(None) => similarity_from_affinity(aa, ab, self.params.alpha),
            Ok(Some((ra, rb))) => affinity(&ra, &self.params).and_then(|fa| {
                affinity(&rb, &self.params).and_then(|fb| similarity_from_affinity(&fa, &fb, self.params.alpha))
            }),
            Err(e) => Err(e),
        };
        result.map_err(|e| e.context(format!("pair {a} / {b}")))
    }

    fn sample(&self, group: SampleGroup, pairs: Vec<(String, String)>) -> Result<SimilaritySample> {
        let scores: Vec<SimilarityScore> = pairs
            .par_iter()
            .map(|(a, b)| self.score(a, b))
            .collect::<Result<_>>()?;
        Ok(SimilaritySample {
            group,
            values: scores.iter().map(|s| s.value).collect(),
            aligned_elements: scores.iter().map(SimilarityScore::aligned_elements).collect(),
            pair_ids: pairs,
        })
    }

    /// Every unordered pair within `ids`, in index order.
    pub fn within(&self, group: SampleGroup, ids: &[&str]) -> Result<SimilaritySample> {
        let mut pairs = Vec::new();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                pairs.push((a.to_string(), b.to_string()));
            }
        }
        self.sample(group, pairs)
    }

    /// Every `(a, b)` with `a` from `left` and `b` from `right`.
    pub fn cross(&self, group: SampleGroup, left: &[&str], right: &[&str]) -> Result<SimilaritySample> {
        let pairs = left
            .iter()
            .flat_map(|a| right.iter().map(move |b| (a.to_string(), b.to_string())))
            .collect();
        self.sample(group, pairs)
    }
}

fn ids(list: &[CaptureDendrogram]) -> Vec<&str> {
    list.iter().map(|c| c.capture_id.as_str()).collect()
}

/// Similarities of all `k (k - 1) / 2` benign pairs.
pub fn benign_pairs(
    dendrograms: &[CaptureDendrogram],
    params: &HierarchyParams,
    alignment: Alignment,
) -> Result<SimilaritySample> {
    if dendrograms.len() < 2 {
        return Err(Error::TooFew {
            what: "benign dendrograms",
            needed: 2,
            got: dendrograms.len(),
        });
    }
    let scorer = PairScorer::new(dendrograms, *params, alignment)?;
    scorer.within(SampleGroup::BenignBenign, &ids(dendrograms))
}

/// Similarities of every attack dendrogram against every benign one.
pub fn attack_vs_benign(
    kind: &str,
    attack: &[CaptureDendrogram],
    benign: &[CaptureDendrogram],
    params: &HierarchyParams,
    alignment: Alignment,
) -> Result<SimilaritySample> {
    if attack.is_empty() || benign.is_empty() {
        return Err(Error::TooFew {
            what: "dendrograms on each side",
            needed: 1,
            got: 0,
        });
    }
    let scorer = PairScorer::new(attack.iter().chain(benign), *params, alignment)?;
    scorer.cross(
        SampleGroup::AttackBenign { kind: kind.to_owned() },
        &ids(attack),
        &ids(benign),
    )
}
