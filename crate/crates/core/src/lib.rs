//! Forensic detection of masquerade attacks in recorded CAN signal captures.
//!
//! Each capture is resampled onto a uniform grid, its signals are clustered
//! hierarchically from their pairwise correlations, and the resulting
//! dendrograms are compared with an element-centric similarity. Similarities
//! between benign captures form a reference distribution; a Mann–Whitney
//! test against attack-vs-benign similarities decides whether a group of
//! captures deviates from benign behaviour.

pub mod clusim;
pub mod correlation;
pub mod error;
pub mod goldens;
pub mod hierarchy;
pub mod ingest;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod synth;

pub use clusim::{affinity, similarity, Alignment, ElementAffinity, HierarchyParams, SimilarityScore};
pub use correlation::{pearson_matrix, to_dissimilarity, CorrelationMatrix, DissimilarityKind, DissimilarityMatrix};
pub use error::{Error, Result};
pub use hierarchy::{agglomerate, Dendrogram, Linkage, Merge, Partition};
pub use ingest::{parse_capture, resample, CaptureLabel, InputFormat, RawSignal, SignalCapture, SignalMatrix};
pub use pipeline::{execute, run, verdict, Inputs, OutputOptions, RunConfig, Summary, VerdictReport};
pub use stats::{mann_whitney, SimilaritySample, TestResult};
pub use synth::{generate, inject, AttackKind, AttackSpec, SynthPlan, SynthSpec};
