//! Versioned golden fixtures.
//!
//! Each case reads its inputs from the fixture directory, recomputes a JSON
//! value and compares it with the stored expectation, numbers within the
//! case tolerance and everything else exactly. `regenerate` rewrites inputs
//! and expectations; running it twice yields identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::clusim::{affinity, similarity, transition_matrix, Alignment, HierarchyParams};
use crate::correlation::DissimilarityMatrix;
use crate::error::{Error, Result};
use crate::hierarchy::{agglomerate, Dendrogram, Linkage};
use crate::pipeline::{execute, Inputs, RunConfig};
use crate::stats::{mann_whitney, Alternative, TestConfig};
use crate::synth::{AttackKind, AttackPlan, SynthPlan, SynthSpec};

pub const FIXTURE_VERSION: &str = "v1";

/// Figure-transcribed targets get a loose band; formula-derived ones 1e-9.
const FIGURE_TOLERANCE: f64 = 0.05;
const FORMULA_TOLERANCE: f64 = 1e-9;
const EXACT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldenCase {
    pub name: String,
    pub inputs: Vec<PathBuf>,
    pub expected: PathBuf,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldenOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Copy)]
enum Kind {
    Fig1(Linkage),
    Fig2,
    MannWhitney3x3,
    Projection,
    SyntheticReport,
}

fn all_kinds() -> Vec<Kind> {
    let mut kinds: Vec<Kind> = Linkage::ALL.iter().map(|&l| Kind::Fig1(l)).collect();
    kinds.extend([Kind::Fig2, Kind::MannWhitney3x3, Kind::Projection, Kind::SyntheticReport]);
    kinds
}

impl Kind {
    fn name(self) -> String {
        match self {
            Kind::Fig1(l) => format!("fig1_dendrogram_{l}"),
            Kind::Fig2 => "fig2_similarity".into(),
            Kind::MannWhitney3x3 => "mann_whitney_exact_3x3".into(),
            Kind::Projection => "projection_affinity".into(),
            Kind::SyntheticReport => "synthetic_report".into(),
        }
    }

    fn inputs(self) -> Vec<&'static str> {
        match self {
            Kind::Fig1(_) => vec!["fig1_dissimilarity.json"],
            Kind::Fig2 => vec!["fig2_a.json", "fig2_b.json", "fig2_c.json"],
            Kind::MannWhitney3x3 => vec!["mann_whitney_3x3_input.json"],
            Kind::Projection => vec!["fig1_dendrogram_average.json"],
            Kind::SyntheticReport => vec!["synthetic_plan.json"],
        }
    }

    fn expected(self) -> String {
        match self {
            Kind::Fig1(l) => format!("fig1_dendrogram_{l}.json"),
            Kind::Fig2 => "fig2_similarity.json".into(),
            Kind::MannWhitney3x3 => "mann_whitney_3x3.json".into(),
            Kind::Projection => "projection_affinity.json".into(),
            Kind::SyntheticReport => "synthetic_report.json".into(),
        }
    }

    fn tolerance(self) -> f64 {
        match self {
            Kind::Fig1(_) | Kind::Projection | Kind::SyntheticReport => FORMULA_TOLERANCE,
            Kind::Fig2 => FIGURE_TOLERANCE,
            Kind::MannWhitney3x3 => EXACT_TOLERANCE,
        }
    }

    fn compute(self, dir: &Path) -> Result<Value> {
        match self {
            Kind::Fig1(linkage) => {
                let d: DissimilarityMatrix = read_json(&dir.join("fig1_dissimilarity.json"))?;
                Ok(to_value(&agglomerate(&d, linkage)?))
            }
            Kind::Fig2 => {
                let load = |name: &str| -> Result<Dendrogram> { read_json(&dir.join(name)) };
                let (a, b, c) = (load("fig2_a.json")?, load("fig2_b.json")?, load("fig2_c.json")?);
                let params = fig2_params();
                Ok(json!({
                    "r": params.r,
                    "alpha": params.alpha,
                    "sim_ab": similarity(&a, &b, &params, Alignment::Strict)?.value,
                    "sim_bc": similarity(&b, &c, &params, Alignment::Strict)?.value,
                }))
            }
            Kind::MannWhitney3x3 => {
                let input: Value = read_json(&dir.join("mann_whitney_3x3_input.json"))?;
                let (x, y) = mw_input(&input)?;
                let res = mann_whitney(&x, &y, &TestConfig::default())?;
                Ok(json!({ "u": res.u_statistic, "p_two_sided": res.p_value }))
            }
            Kind::Projection => {
                let dend: Dendrogram = read_json(&dir.join("fig1_dendrogram_average.json"))?;
                let params = HierarchyParams::default();
                let aff = affinity(&dend, &params)?;
                Ok(json!({
                    "r": params.r,
                    "alpha": params.alpha,
                    "element_ids": aff.element_ids,
                    "transition": transition_matrix(&dend, params.r),
                    "affinity": aff.p,
                }))
            }
            Kind::SyntheticReport => {
                let plan: SynthPlan = read_json(&dir.join("synthetic_plan.json"))?;
                Ok(to_value(&execute(&snapshot_config(plan))?.report))
            }
        }
    }

    /// Expected value written on regeneration. Figure targets and the
    /// Mann-Whitney case come from outside the implementation.
    fn expectation(self, dir: &Path) -> Result<Value> {
        match self {
            Kind::Fig2 => {
                let params = fig2_params();
                Ok(json!({ "r": params.r, "alpha": params.alpha, "sim_ab": 0.82, "sim_bc": 0.76 }))
            }
            Kind::MannWhitney3x3 => {
                let input: Value = read_json(&dir.join("mann_whitney_3x3_input.json"))?;
                let (x, y) = mw_input(&input)?;
                let (u, p) = enumerate_two_sided(&x, &y);
                Ok(json!({ "u": u, "p_two_sided": p }))
            }
            _ => self.compute(dir),
        }
    }
}

fn fig2_params() -> HierarchyParams {
    HierarchyParams { r: 5.0, alpha: 0.9 }
}

fn snapshot_config(plan: SynthPlan) -> RunConfig {
    RunConfig {
        linkages: vec![Linkage::Average, Linkage::Ward],
        alternative: Alternative::TwoSided,
        ..RunConfig::new(Inputs::Synthetic { plan })
    }
}

fn mw_input(v: &Value) -> Result<(Vec<f64>, Vec<f64>)> {
    let side = |key: &str| -> Result<Vec<f64>> {
        v[key]
            .as_array()
            .and_then(|a| a.iter().map(Value::as_f64).collect())
            .ok_or_else(|| Error::InvalidParameter(format!("mann-whitney fixture lacks numeric {key:?}")))
    };
    Ok((side("x")?, side("y")?))
}

/// Two-sided p by enumerating every split of the pooled ranks (tie-free).
fn enumerate_two_sided(x: &[f64], y: &[f64]) -> (f64, f64) {
    let u_of = |xs: &[f64], ys: &[f64]| -> f64 {
        xs.iter()
            .map(|a| ys.iter().filter(|b| a > *b).count() as f64)
            .sum()
    };
    let observed = u_of(x, y);
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let n = pooled.len();
    let (mut total, mut low, mut high) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != x.len() {
            continue;
        }
        let (a, b): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
            pooled.iter().copied().enumerate().partition(|(i, _)| mask & (1 << i) != 0);
        let a: Vec<f64> = a.into_iter().map(|p| p.1).collect();
        let b: Vec<f64> = b.into_iter().map(|p| p.1).collect();
        let u = u_of(&a, &b);
        total += 1;
        low += (u <= observed) as u64;
        high += (u >= observed) as u64;
    }
    let tail = low.min(high) as f64 / total as f64;
    (observed, (2.0 * tail).min(1.0))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("fixture value serializes")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("fixture serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cases(dir: &Path) -> Vec<GoldenCase> {
    all_kinds()
        .into_iter()
        .map(|k| GoldenCase {
            name: k.name(),
            inputs: k.inputs().into_iter().map(|f| dir.join(f)).collect(),
            expected: dir.join(k.expected()),
            tolerance: k.tolerance(),
        })
        .collect()
}

/// First difference between `actual` and `expected`, if any.
pub fn compare_json(actual: &Value, expected: &Value, tolerance: f64) -> Option<String> {
    fn walk(a: &Value, e: &Value, tol: f64, at: &mut String) -> Option<String> {
        match (a, e) {
            (Value::Number(x), Value::Number(y)) => {
                let (x, y) = (x.as_f64()?, y.as_f64()?);
                ((x - y).abs() > tol).then(|| format!("{at}: {x} vs expected {y} (tolerance {tol})"))
            }
            (Value::Array(xs), Value::Array(ys)) => {
                if xs.len() != ys.len() {
                    return Some(format!("{at}: length {} vs expected {}", xs.len(), ys.len()));
                }
                xs.iter().zip(ys).enumerate().find_map(|(i, (x, y))| {
                    let len = at.len();
                    at.push_str(&format!("[{i}]"));
                    let out = walk(x, y, tol, at);
                    at.truncate(len);
                    out
                })
            }
            (Value::Object(xs), Value::Object(ys)) => {
                if let Some(k) = ys.keys().find(|k| !xs.contains_key(*k)) {
                    return Some(format!("{at}: missing key {k:?}"));
                }
                if let Some(k) = xs.keys().find(|k| !ys.contains_key(*k)) {
                    return Some(format!("{at}: unexpected key {k:?}"));
                }
                ys.iter().find_map(|(k, y)| {
                    let len = at.len();
                    at.push('.');
                    at.push_str(k);
                    let out = walk(&xs[k], y, tol, at);
                    at.truncate(len);
                    out
                })
            }
            _ => (a != e).then(|| format!("{at}: {a} vs expected {e}")),
        }
    }
    walk(actual, expected, tolerance, &mut String::from("$"))
}

/// Recomputes every case; missing or unreadable fixtures are failures.
pub fn verify_goldens(dir: &Path) -> Vec<GoldenOutcome> {
    all_kinds()
        .into_iter()
        .map(|kind| {
            let name = kind.name();
            let expected_path = dir.join(kind.expected());
            let outcome = read_json::<Value>(&expected_path).and_then(|expected| {
                let actual = kind.compute(dir)?;
                Ok(compare_json(&actual, &expected, kind.tolerance()))
            });
            let (passed, detail) = match outcome {
                Ok(None) => (true, format!("within {:e}", kind.tolerance())),
                Ok(Some(diff)) => (false, diff),
                Err(e) => (false, e.to_string()),
            };
            GoldenOutcome { name, passed, detail }
        })
        .collect()
}

pub fn fig1_dissimilarity() -> DissimilarityMatrix {
    DissimilarityMatrix {
        signal_ids: ["X1", "X2", "X3", "X4"].map(String::from).to_vec(),
        d: vec![
            vec![0.0, 0.1, 0.4, 0.9],
            vec![0.1, 0.0, 0.5, 0.8],
            vec![0.4, 0.5, 0.0, 0.85],
            vec![0.9, 0.8, 0.85, 0.0],
        ],
    }
}

/// The three 4-leaf dendrograms of the similarity figure, as
/// reconstructed: (a) ((X1,X2),X4),X3; (b) ((X1,X2),X3),X4;
/// (c) (X1,X3),(X2,X4).
pub fn fig2_dendrograms() -> [Dendrogram; 3] {
    let ids = || ["X1", "X2", "X3", "X4"].map(String::from).to_vec();
    let make = |merges| Dendrogram::new(ids(), merges, Linkage::Average).expect("valid figure tree");
    [
        make(vec![(0, 1, 1.0), (4, 3, 2.0), (5, 2, 3.0)]),
        make(vec![(0, 1, 1.0), (4, 2, 2.0), (5, 3, 3.0)]),
        make(vec![(0, 2, 1.0), (1, 3, 2.0), (4, 5, 3.0)]),
    ]
}

pub fn snapshot_plan() -> SynthPlan {
    let capture = SynthSpec {
        n_groups: 3,
        signals_per_group: 3,
        duration_s: 30.0,
        rate_hz: 10.0,
        intra_group_rho: 0.9,
        noise_sigma: 1.0,
        seed: 2024,
        binary_per_group: 0,
        correlation_time_s: 2.0,
    };
    SynthPlan {
        attacks: vec![AttackPlan {
            label: "correlated_break".into(),
            count: 2,
            kind: AttackKind::CorrelatedBreak,
            target_signals: capture.group_signal_ids(0),
            start_s: None,
            end_s: None,
        }],
        capture,
        benign_count: 4,
    }
}

/// Writes every input and expectation into `dir`, returning the paths.
pub fn regenerate(dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, value: Value| -> Result<()> {
        let path = dir.join(name);
        write_json(&path, &value)?;
        written.push(path);
        Ok(())
    };
    put("fig1_dissimilarity.json", to_value(&fig1_dissimilarity()))?;
    for (name, dend) in ["fig2_a.json", "fig2_b.json", "fig2_c.json"].iter().zip(fig2_dendrograms()) {
        put(name, to_value(&dend))?;
    }
    put("mann_whitney_3x3_input.json", json!({ "x": [1.0, 2.0, 3.0], "y": [4.0, 5.0, 6.0] }))?;
    put("synthetic_plan.json", to_value(&snapshot_plan()))?;
    // Expectations after inputs: the projection case reads a Fig. 1 output.
    for kind in all_kinds() {
        let value = kind.expectation(dir)?;
        put(&kind.expected(), value)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regenerate_then_verify_passes_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let first = regenerate(dir.path()).unwrap();
        let bytes: Vec<Vec<u8>> = first.iter().map(|p| fs::read(p).unwrap()).collect();
        let second = regenerate(dir.path()).unwrap();
        assert_eq!(first, second);
        for (p, b) in second.iter().zip(&bytes) {
            assert_eq!(&fs::read(p).unwrap(), b, "{}", p.display());
        }
        for outcome in verify_goldens(dir.path()) {
            assert!(outcome.passed, "{}: {}", outcome.name, outcome.detail);
        }
    }

    #[test]
    fn missing_fixture_is_a_failure_not_a_panic() {
        let dir = tempfile::tempdir().unwrap();
        regenerate(dir.path()).unwrap();
        fs::remove_file(dir.path().join("fig2_b.json")).unwrap();
        let outcomes = verify_goldens(dir.path());
        let fig2 = outcomes.iter().find(|o| o.name == "fig2_similarity").unwrap();
        assert!(!fig2.passed);
        assert_eq!(outcomes.iter().filter(|o| !o.passed).count(), 1);
    }

    #[test]
    fn tampered_expectation_detected() {
        let dir = tempfile::tempdir().unwrap();
        regenerate(dir.path()).unwrap();
        let path = dir.path().join("mann_whitney_3x3.json");
        fs::write(&path, r#"{"u": 0.0, "p_two_sided": 0.2}"#).unwrap();
        let outcome = verify_goldens(dir.path()).into_iter().find(|o| o.name == "mann_whitney_exact_3x3").unwrap();
        assert!(!outcome.passed);
        assert!(outcome.detail.contains("p_two_sided"));
    }

    #[test]
    fn enumeration_gives_one_tenth() {
        assert_eq!(enumerate_two_sided(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), (0.0, 0.1));
    }

    #[test]
    fn compare_json_reports_path() {
        let a = json!({"x": [1.0, 2.0]});
        let b = json!({"x": [1.0, 2.5]});
        assert_eq!(compare_json(&a, &b, 0.1).unwrap(), "$.x[1]: 2 vs expected 2.5 (tolerance 0.1)");
        assert!(compare_json(&a, &b, 0.6).is_none());
    }
}
