//! Similarity distributions and the tests run on them.

mod density;
mod mann_whitney;
mod samples;

pub use density::{density_export, scott_bandwidth, Bandwidth, DensityCurve, DENSITY_POINTS};
pub use mann_whitney::{
    exact_u_distribution, mann_whitney, u_statistic, Alternative, TestConfig, TestMethod, TestResult,
    EXACT_MAX_PRODUCT,
};
pub use samples::{attack_vs_benign, benign_pairs, CaptureDendrogram, PairScorer, SampleGroup, SimilaritySample};
