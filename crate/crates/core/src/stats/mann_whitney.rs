use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest `n1 * n2` for which the exact null distribution is used.
pub const EXACT_MAX_PRODUCT: usize = 10_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// First sample tends to be smaller.
    Less,
    /// First sample tends to be larger.
    Greater,
}

impl FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_sided" | "two-sided" => Ok(Alternative::TwoSided),
            "less" => Ok(Alternative::Less),
            "greater" => Ok(Alternative::Greater),
            other => Err(Error::InvalidParameter(format!("unknown alternative {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMethod::Exact => "exact",
            TestMethod::NormalApprox => "normal_approx",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alternative: Alternative,
    pub significance: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alternative: Alternative::TwoSided,
            significance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub u_statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub method: TestMethod,
    pub significant: bool,
}

/// `U = Σ_ij [x_i > y_j] + ½ [x_i = y_j]`, computed from midranks.
pub fn u_statistic(x: &[f64], y: &[f64]) -> f64 {
    let (rank_sum_x, _) = rank_sum(x, y);
    let n1 = x.len() as f64;
    rank_sum_x - n1 * (n1 + 1.0) / 2.0
}

/// Rank sum of `x` in the pooled sample (midranks for ties) and the tie
/// group sizes.
fn rank_sum(x: &[f64], y: &[f64]) -> (f64, Vec<usize>) {
    let mut pooled: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut sum = 0.0;
    let mut ties = Vec::new();
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        // ranks start+1 ..= end, averaged
        let midrank = (start + 1 + end) as f64 / 2.0;
        let from_x = pooled[start..end].iter().filter(|p| p.1).count();
        sum += midrank * from_x as f64;
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (sum, ties)
}

/// Null distribution of `U` for sample sizes `n1`, `n2` without ties:
/// `prob[u] = P(U = u)` for `u = 0..=n1*n2`.
///
/// Counts are the coefficients of the Gaussian binomial
/// `Π_{i=1..m} (1 - q^(n+i)) / (1 - q^i)` with `m = min(n1, n2)`,
/// `n = max(n1, n2)`.
pub fn exact_u_distribution(n1: usize, n2: usize) -> Vec<f64> {
    let (m, n) = (n1.min(n2), n1.max(n2));
    let mut c = vec![0.0f64; m * n + m + 1];
    c[0] = 1.0;
    for i in 1..=m {
        let shift = n + i;
        let top = i * n + i;
        for u in (shift..=top).rev() {
            c[u] -= c[u - shift];
        }
        for u in i..=top {
            c[u] += c[u - i];
        }
    }
    c.truncate(m * n + 1);
    let total: f64 = c.iter().sum();
    c.iter().map(|v| v / total).collect()
}

pub fn mann_whitney(x: &[f64], y: &[f64], config: &TestConfig) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::TooFew {
            what: "values in each sample",
            needed: 1,
            got: 0,
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("samples must be finite".into()));
    }
    let (n1, n2) = (x.len(), y.len());
    let (rank_sum_x, ties) = rank_sum(x, y);
    let u = rank_sum_x - (n1 * (n1 + 1)) as f64 / 2.0;
    let product = (n1 * n2) as f64;

    let (p_value, method) = if ties.is_empty() && n1 * n2 <= EXACT_MAX_PRODUCT {
        (exact_p(u, n1, n2, config.alternative), TestMethod::Exact)
    } else {
        (normal_p(u, n1, n2, &ties, config.alternative), TestMethod::NormalApprox)
    };
    let p_value = p_value.clamp(0.0, 1.0);
    debug_assert!((0.0..=product).contains(&u));

    Ok(TestResult {
        u_statistic: u,
        p_value,
        n1,
        n2,
        method,
        significant: p_value < config.significance,
    })
}

fn exact_p(u: f64, n1: usize, n2: usize, alternative: Alternative) -> f64 {
    let dist = exact_u_distribution(n1, n2);
    let k = u.round() as usize;
    let lower: f64 = dist[..=k].iter().sum();
    let upper: f64 = dist[k..].iter().sum();
    match alternative {
        Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
        Alternative::Less => lower,
        Alternative::Greater => upper,
    }
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
fn normal_p(u: f64, n1: usize, n2: usize, ties: &[usize], alternative: Alternative) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    let n = a + b;
    let mean = a * b / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let variance = a * b / 12.0 * ((n + 1.0) - tie_term);
    if variance <= 0.0 {
        return 1.0;
    }
    let sd = variance.sqrt();
    let upper_tail = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    match alternative {
        Alternative::TwoSided => {
            let z = ((u - mean).abs() - 0.5).max(0.0) / sd;
            (2.0 * upper_tail(z)).min(1.0)
        }
        Alternative::Less => 1.0 - upper_tail((u - mean + 0.5) / sd),
        Alternative::Greater => upper_tail((u - mean - 0.5) / sd),
    }
}
