//! End-to-end experiment: captures → signal matrices → dendrograms per
//! linkage → benign and attack similarity samples → rank tests → report.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusim::{Alignment, HierarchyParams};
use crate::correlation::{pearson_matrix, to_dissimilarity, write_matrix_csv, CorrelationMatrix, DissimilarityKind, DissimilarityMatrix};
use crate::error::{Error, Result};
use crate::hierarchy::{agglomerate, Dendrogram, Linkage};
use crate::ingest::{parse_capture, resample, CaptureLabel, InputFormat, SignalCapture, DEFAULT_FREQUENCY_HZ};
use crate::stats::{density_export, mann_whitney, Alternative, Bandwidth, CaptureDendrogram, PairScorer, SampleGroup, TestConfig, TestMethod};
use crate::synth::{Manifest, SynthPlan};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Inputs {
    Files {
        format: InputFormat,
        benign: Vec<PathBuf>,
        /// Attack kind → capture files.
        attacks: BTreeMap<String, Vec<PathBuf>>,
    },
    /// A `manifest.json` written by the synthesizer.
    Manifest { path: PathBuf },
    Synthetic { plan: SynthPlan },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub frequency_hz: f64,
    pub linkages: Vec<Linkage>,
    pub r: f64,
    pub alpha: f64,
    pub significance: f64,
    #[serde(default)]
    pub alternative: Alternative,
    #[serde(default)]
    pub dissimilarity: DissimilarityKind,
    #[serde(default)]
    pub alignment: Alignment,
}

impl RunConfig {
    /// Defaults: 10 Hz, all four linkages, r = -5, alpha = 0.9, level 0.05.
    pub fn new(inputs: Inputs) -> Self {
        let params = HierarchyParams::default();
        RunConfig {
            inputs,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
            linkages: Linkage::ALL.to_vec(),
            r: params.r,
            alpha: params.alpha,
            significance: 0.05,
            alternative: Alternative::TwoSided,
            dissimilarity: DissimilarityKind::OneMinusAbsRho,
            alignment: Alignment::Strict,
        }
    }

    pub fn params(&self) -> HierarchyParams {
        HierarchyParams {
            r: self.r,
            alpha: self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if self.linkages.is_empty() {
            return Err(Error::InvalidParameter("at least one linkage is required".into()));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "significance must lie in (0, 1), got {}",
                self.significance
            )));
        }
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "frequency must be positive, got {}",
                self.frequency_hz
            )));
        }
        let benign = match &self.inputs {
            Inputs::Files { benign, .. } => benign.len(),
            Inputs::Synthetic { plan } => plan.benign_count,
            Inputs::Manifest { .. } => return Ok(()),
        };
        check_benign_count(benign)
    }
}

fn check_benign_count(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::TooFew {
            what: "benign captures",
            needed: 2,
            got: n,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureDiagnostics {
    pub capture_id: String,
    #[serde(flatten)]
    pub label: CaptureLabel,
    pub source_path: String,
    pub n_raw_signals: usize,
    pub n_retained: usize,
    pub n_samples: usize,
    pub dropped_constant: Vec<String>,
}

/// One rank test: attack-vs-benign similarities (first sample) against
/// benign-vs-benign similarities (second sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub attack_kind: String,
    pub linkage: Linkage,
    pub r: f64,
    pub alpha: f64,
    pub n_benign_pairs: usize,
    pub n_attack_pairs: usize,
    pub u: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub linkage: Linkage,
    #[serde(flatten)]
    pub group: SampleGroup,
    pub values: Vec<f64>,
    pub pair_ids: Vec<(String, String)>,
    pub aligned_elements: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub schema: u32,
    pub config: RunConfig,
    pub captures: Vec<CaptureDiagnostics>,
    pub tests: Vec<TestRecord>,
    pub samples: Vec<SampleRecord>,
}

impl VerdictReport {
    pub fn test(&self, attack_kind: &str, linkage: Linkage) -> Option<&TestRecord> {
        self.tests
            .iter()
            .find(|t| t.attack_kind == attack_kind && t.linkage == linkage)
    }

    pub fn sample(&self, linkage: Linkage, group: &SampleGroup) -> Option<&SampleRecord> {
        self.samples
            .iter()
            .find(|s| s.linkage == linkage && &s.group == group)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything a run computed, including the per-capture intermediates that
/// are not part of the report.
#[derive(Debug)]
pub struct RunOutput {
    pub report: VerdictReport,
    pub correlations: BTreeMap<String, CorrelationMatrix>,
    pub dissimilarities: BTreeMap<String, DissimilarityMatrix>,
    /// Keyed by (linkage, capture id); each capture is clustered once per
    /// linkage.
    pub dendrograms: BTreeMap<(Linkage, String), Dendrogram>,
}

fn load_captures(inputs: &Inputs) -> Result<Vec<SignalCapture>> {
    match inputs {
        Inputs::Synthetic { plan } => plan.captures(),
        Inputs::Files {
            format,
            benign,
            attacks,
        } => {
            let mut jobs: Vec<(&PathBuf, CaptureLabel)> = benign.iter().map(|p| (p, CaptureLabel::Benign)).collect();
            for (kind, paths) in attacks {
                jobs.extend(paths.iter().map(|p| (p, CaptureLabel::Attack { kind: kind.clone() })));
            }
            jobs.par_iter()
                .map(|(path, label)| Ok(parse_capture(path, *format)?.with_label(label.clone())))
                .collect()
        }
        Inputs::Manifest { path } => {
            let manifest = Manifest::load(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            manifest
                .captures
                .par_iter()
                .map(|entry| {
                    let mut cap = parse_capture(&base.join(&entry.path), manifest.format)?;
                    cap.capture_id = entry.capture_id.clone();
                    Ok(cap.with_label(entry.label.clone()))
                })
                .collect()
        }
    }
}

struct Prepared {
    diagnostics: CaptureDiagnostics,
    correlation: CorrelationMatrix,
    dissimilarity: DissimilarityMatrix,
}

fn prepare(capture: &SignalCapture, config: &RunConfig) -> Result<Prepared> {
    let matrix = resample(capture, config.frequency_hz)?;
    let correlation = pearson_matrix(&matrix)?;
    let dissimilarity = to_dissimilarity(&correlation, config.dissimilarity);
    Ok(Prepared {
        diagnostics: CaptureDiagnostics {
            capture_id: capture.capture_id.clone(),
            label: capture.label.clone(),
            source_path: capture.source_path.clone(),
            n_raw_signals: capture.signals.len(),
            n_retained: matrix.n_signals(),
            n_samples: matrix.n_samples(),
            dropped_constant: matrix.dropped_constant,
        },
        correlation,
        dissimilarity,
    })
}

/// Runs the experiment without touching the filesystem beyond reading
/// inputs.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let captures = load_captures(&config.inputs)?;

    let mut seen = HashMap::new();
    for cap in &captures {
        if let Some(prev) = seen.insert(cap.capture_id.as_str(), cap.source_path.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "capture id {:?} used by both {prev} and {}",
                cap.capture_id, cap.source_path
            )));
        }
    }
    let benign_ids: Vec<&str> = captures
        .iter()
        .filter(|c| c.label == CaptureLabel::Benign)
        .map(|c| c.capture_id.as_str())
        .collect();
    check_benign_count(benign_ids.len())?;
    let mut attack_groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for cap in &captures {
        if let CaptureLabel::Attack { kind } = &cap.label {
            attack_groups.entry(kind).or_default().push(&cap.capture_id);
        }
    }

    let prepared: Vec<Prepared> = captures
        .par_iter()
        .map(|cap| prepare(cap, config).map_err(|e| e.context(format!("capture {} ({})", cap.capture_id, cap.source_path))))
        .collect::<Result<_>>()?;

    let params = config.params();
    let test_config = TestConfig {
        alternative: config.alternative,
        significance: config.significance,
    };
    let mut dendrograms = BTreeMap::new();
    let mut tests = Vec::new();
    let mut samples = Vec::new();

    for &linkage in &config.linkages {
        let clustered: Vec<CaptureDendrogram> = prepared
            .par_iter()
            .map(|p| {
                let id = &p.diagnostics.capture_id;
                agglomerate(&p.dissimilarity, linkage)
                    .map(|dendrogram| CaptureDendrogram {
                        capture_id: id.clone(),
                        dendrogram,
                    })
                    .map_err(|e| e.context(format!("capture {id}, {linkage} linkage")))
            })
            .collect::<Result<_>>()?;

        let scorer = PairScorer::new(&clustered, params, config.alignment)?;
        let benign = scorer.within(SampleGroup::BenignBenign, &benign_ids)?;
        for (kind, attack_ids) in &attack_groups {
            let attack = scorer.cross(
                SampleGroup::AttackBenign {
                    kind: kind.to_string(),
                },
                attack_ids,
                &benign_ids,
            )?;
            let result = mann_whitney(&attack.values, &benign.values, &test_config)?;
            tests.push(TestRecord {
                attack_kind: kind.to_string(),
                linkage,
                r: config.r,
                alpha: config.alpha,
                n_benign_pairs: benign.len(),
                n_attack_pairs: attack.len(),
                u: result.u_statistic,
                p_value: result.p_value,
                method: result.method,
                significant: result.significant,
            });
            samples.push(SampleRecord {
                linkage,
                group: attack.group,
                values: attack.values,
                pair_ids: attack.pair_ids,
                aligned_elements: attack.aligned_elements,
            });
        }
        samples.push(SampleRecord {
            linkage,
            group: benign.group,
            values: benign.values,
            pair_ids: benign.pair_ids,
            aligned_elements: benign.aligned_elements,
        });
        for c in clustered {
            dendrograms.insert((linkage, c.capture_id), c.dendrogram);
        }
    }

    let mut correlations = BTreeMap::new();
    let mut dissimilarities = BTreeMap::new();
    let mut diagnostics = Vec::with_capacity(prepared.len());
    for p in prepared {
        correlations.insert(p.diagnostics.capture_id.clone(), p.correlation);
        dissimilarities.insert(p.diagnostics.capture_id.clone(), p.dissimilarity);
        diagnostics.push(p.diagnostics);
    }

    Ok(RunOutput {
        report: VerdictReport {
            schema: REPORT_SCHEMA,
            config: config.clone(),
            captures: diagnostics,
            tests,
            samples,
        },
        correlations,
        dissimilarities,
        dendrograms,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OutputOptions {
    /// Also write correlation and dissimilarity matrices per capture.
    pub dump_matrices: bool,
    /// Also write every dendrogram as JSON.
    pub dump_dendrograms: bool,
}

/// Runs the experiment and writes `report.json`, `similarities.jsonl`,
/// `tests.jsonl` and `density/*.csv` into `out_dir`. Nothing is written if
/// any stage fails.
pub fn run(config: &RunConfig, out_dir: &Path, options: OutputOptions) -> Result<VerdictReport> {
    let output = execute(config)?;
    write_outputs(&output, out_dir, options)?;
    Ok(output.report)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_outputs(output: &RunOutput, out_dir: &Path, options: OutputOptions) -> Result<()> {
    let report = &output.report;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e: std::io::Error| Error::io(path, e)
    };

    let path = out_dir.join("report.json");
    let mut f = create(&path)?;
    writeln!(f, "{}", report.to_json()).map_err(io(&path))?;
    f.flush().map_err(io(&path))?;

    let path = out_dir.join("similarities.jsonl");
    let mut f = create(&path)?;
    for sample in &report.samples {
        for ((pair, value), aligned) in sample.pair_ids.iter().zip(&sample.values).zip(&sample.aligned_elements) {
            let record = serde_json::json!({
                "capture_a": pair.0,
                "capture_b": pair.1,
                "linkage": sample.linkage,
                "r": report.config.r,
                "alpha": report.config.alpha,
                "similarity": value,
                "aligned_elements": aligned,
            });
            writeln!(f, "{record}").map_err(io(&path))?;
        }
    }
    f.flush().map_err(io(&path))?;

    let path = out_dir.join("tests.jsonl");
    let mut f = create(&path)?;
    for test in &report.tests {
        writeln!(f, "{}", serde_json::to_string(test).expect("test serializes")).map_err(io(&path))?;
    }
    f.flush().map_err(io(&path))?;

    for sample in &report.samples {
        match density_export(&sample.values, Bandwidth::Scott) {
            Ok(curve) => {
                let path = out_dir.join("density").join(format!("{}_{}.csv", sample.linkage, sample.group));
                let mut f = create(&path)?;
                curve.write_csv(&mut f).map_err(io(&path))?;
            }
            Err(e) => log::warn!("no density for {} / {}: {e}", sample.linkage, sample.group),
        }
    }

    if options.dump_matrices {
        for (id, c) in &output.correlations {
            let path = out_dir.join("matrices").join(format!("{id}_rho.csv"));
            write_matrix_csv(&c.signal_ids, &c.rho, create(&path)?).map_err(io(&path))?;
        }
        for (id, d) in &output.dissimilarities {
            let path = out_dir.join("matrices").join(format!("{id}_d.csv"));
            write_matrix_csv(&d.signal_ids, &d.d, create(&path)?).map_err(io(&path))?;
        }
    }
    if options.dump_dendrograms {
        for ((linkage, id), dend) in &output.dendrograms {
            let path = out_dir.join("dendrograms").join(format!("{id}_{linkage}.json"));
            fs::create_dir_all(path.parent().expect("has parent")).map_err(io(&path))?;
            fs::write(&path, dend.to_json() + "\n").map_err(io(&path))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindVerdict {
    pub attack_kind: String,
    pub detected_by: Vec<Linkage>,
    pub p_values: Vec<(Linkage, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub significance: f64,
    pub linkages: Vec<Linkage>,
    pub kinds: Vec<KindVerdict>,
    /// Per linkage: attack kinds detected.
    pub tally: Vec<(Linkage, usize)>,
    pub n_benign: usize,
}

pub fn verdict(report: &VerdictReport) -> Summary {
    let linkages = report.config.linkages.clone();
    let mut kinds: Vec<KindVerdict> = Vec::new();
    for test in &report.tests {
        let entry = match kinds.iter_mut().find(|k| k.attack_kind == test.attack_kind) {
            Some(e) => e,
            None => {
                kinds.push(KindVerdict {
                    attack_kind: test.attack_kind.clone(),
                    detected_by: Vec::new(),
                    p_values: Vec::new(),
                });
                kinds.last_mut().expect("just pushed")
            }
        };
        entry.p_values.push((test.linkage, test.p_value));
        if test.p_value < report.config.significance {
            entry.detected_by.push(test.linkage);
        }
    }
    let tally = linkages
        .iter()
        .map(|&l| (l, kinds.iter().filter(|k| k.detected_by.contains(&l)).count()))
        .collect();
    Summary {
        significance: report.config.significance,
        linkages,
        kinds,
        tally,
        n_benign: report
            .captures
            .iter()
            .filter(|c| c.label == CaptureLabel::Benign)
            .count(),
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "benign captures: {}", self.n_benign)?;
        if self.kinds.is_empty() {
            return writeln!(f, "no attack groups: benign diagnostics only");
        }
        write!(f, "{:<20}", "attack")?;
        for l in &self.linkages {
            write!(f, " {:>10}", l.as_str())?;
        }
        writeln!(f)?;
        for kind in &self.kinds {
            write!(f, "{:<20}", kind.attack_kind)?;
            for l in &self.linkages {
                match kind.p_values.iter().find(|(pl, _)| pl == l) {
                    Some((_, p)) => {
                        let mark = if *p < self.significance { "*" } else { " " };
                        write!(f, " {:>9.3}{mark}", p)?;
                    }
                    None => write!(f, " {:>10}", "-")?,
                }
            }
            writeln!(f)?;
        }
        writeln!(f, "(* p < {})", self.significance)?;
        let total = self.kinds.len();
        for (l, detected) in &self.tally {
            writeln!(f, "{l} detected {detected} of {total}")?;
        }
        Ok(())
    }
}
