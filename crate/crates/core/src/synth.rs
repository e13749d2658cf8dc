//! Synthetic multi-signal captures with planted correlation groups, and
//! masquerade-style value tampering on top of them.
//!
//! Every group follows its own latent process: white noise passed twice
//! through a leaky integrator with time constant `correlation_time_s`,
//! then standardized. This gives smooth, drifting, stationary series, so
//! signals from different groups are only weakly correlated over a long
//! capture. A member signal is `a·L + b + ε` with `a > 0`; the noise `ε`
//! has standard deviation `noise_sigma · a · sqrt((1 - ρ) / ρ)`, which puts
//! the expected correlation between two members at `intra_group_rho` when
//! `noise_sigma = 1` and at exactly 1 when `noise_sigma = 0`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CaptureLabel, RawSignal, SignalCapture};
use crate::rng::{derive_seed, Stream};

fn default_correlation_time() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_groups: usize,
    pub signals_per_group: usize,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub intra_group_rho: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Trailing members of each group emitted as 0/1 indicators of their
    /// analog value crossing the group mean.
    #[serde(default)]
    pub binary_per_group: usize,
    #[serde(default = "default_correlation_time")]
    pub correlation_time_s: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_groups < 1 || self.signals_per_group < 1 {
            return bad("need at least one group with at least one signal".into());
        }
        if !(self.duration_s.is_finite() && self.rate_hz.is_finite() && self.duration_s * self.rate_hz >= 2.0) {
            return bad(format!(
                "duration {} s at {} Hz gives fewer than 2 samples",
                self.duration_s, self.rate_hz
            ));
        }
        if !(self.intra_group_rho > 0.0 && self.intra_group_rho <= 1.0) {
            return bad(format!("intra_group_rho must lie in (0, 1], got {}", self.intra_group_rho));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.binary_per_group > self.signals_per_group {
            return bad("binary_per_group exceeds signals_per_group".into());
        }
        if !(self.correlation_time_s > 0.0 && self.correlation_time_s.is_finite()) {
            return bad("correlation_time_s must be positive".into());
        }
        Ok(())
    }

    pub fn signal_id(group: usize, member: usize) -> String {
        format!("ID_{:03X}_sig_{}", 0x100 + 0x10 * group, member)
    }

    pub fn group_signal_ids(&self, group: usize) -> Vec<String> {
        (0..self.signals_per_group)
            .map(|m| Self::signal_id(group, m))
            .collect()
    }

    fn n_samples(&self) -> usize {
        (self.duration_s * self.rate_hz + 1e-9).floor() as usize
    }
}

fn latent(rng: &mut Stream, n: usize, smoothing: f64) -> Vec<f64> {
    let burn_in = (10.0 / (1.0 - smoothing)).ceil() as usize;
    let (mut velocity, mut level) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for k in 0..burn_in + n {
        velocity = smoothing * velocity + rng.normal();
        level = smoothing * level + velocity;
        if k >= burn_in {
            out.push(level);
        }
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    out.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    out
}

pub fn generate(spec: &SynthSpec) -> Result<SignalCapture> {
    spec.validate()?;
    let n = spec.n_samples();
    let timestamps: Vec<f64> = (0..n).map(|k| k as f64 / spec.rate_hz).collect();
    let smoothing = (-1.0 / (spec.rate_hz * spec.correlation_time_s)).exp();
    let noise_ratio = ((1.0 - spec.intra_group_rho) / spec.intra_group_rho).sqrt();

    let mut signals = Vec::with_capacity(spec.n_groups * spec.signals_per_group);
    for group in 0..spec.n_groups {
        let mut rng = Stream::new(derive_seed(spec.seed, group as u64));
        let level = latent(&mut rng, n, smoothing);
        for member in 0..spec.signals_per_group {
            let gain = 0.5 + 1.5 * rng.uniform();
            let offset = 100.0 * rng.uniform();
            let noise_sd = spec.noise_sigma * gain * noise_ratio;
            let binary = member >= spec.signals_per_group - spec.binary_per_group;
            let values = level
                .iter()
                .map(|&l| {
                    let analog = gain * l + noise_sd * rng.normal();
                    if binary {
                        f64::from(u8::from(analog > 0.0))
                    } else {
                        analog + offset
                    }
                })
                .collect();
            signals.push(RawSignal {
                signal_id: SynthSpec::signal_id(group, member),
                timestamps: timestamps.clone(),
                values,
            });
        }
    }

    Ok(SignalCapture {
        capture_id: format!("synth_{:016x}", spec.seed),
        signals,
        source_path: String::new(),
        label: CaptureLabel::Benign,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Targets replaced by independent noise with their own mean and variance.
    CorrelatedBreak,
    /// Targets pinned to their capture-wide maximum.
    MaxValue,
    /// 0/1 targets inverted.
    BinaryFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub target_signals: Vec<String>,
    pub start_s: f64,
    pub end_s: f64,
}

impl AttackSpec {
    /// Attack window spanning the whole capture.
    pub fn covering(kind: AttackKind, target_signals: Vec<String>, capture: &SignalCapture) -> Self {
        let (start, end) = time_span(capture);
        AttackSpec {
            kind,
            target_signals,
            start_s: start,
            end_s: end,
        }
    }
}

fn time_span(capture: &SignalCapture) -> (f64, f64) {
    capture.signals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.first_time()), hi.max(s.last_time()))
    })
}

/// Rewrites target values inside `[start_s, end_s]`; timestamps and all
/// other samples are left untouched.
pub fn inject(capture: &SignalCapture, attack: &AttackSpec, seed: u64) -> Result<SignalCapture> {
    let mut out = capture.clone();
    if attack.target_signals.is_empty() {
        return Ok(out);
    }
    let (first, last) = time_span(capture);
    if !(attack.start_s < attack.end_s && attack.start_s <= last && attack.end_s >= first) {
        return Err(Error::InvalidParameter(format!(
            "attack window [{}, {}] does not fit capture span [{first}, {last}]",
            attack.start_s, attack.end_s
        )));
    }
    let mut slots = Vec::with_capacity(attack.target_signals.len());
    for target in &attack.target_signals {
        let slot = out
            .signals
            .iter()
            .position(|s| &s.signal_id == target)
            .ok_or_else(|| Error::InvalidParameter(format!("attack target {target:?} not in capture")))?;
        slots.push(slot);
    }

    for (k, slot) in slots.into_iter().enumerate() {
        let signal = &mut out.signals[slot];
        let in_window: Vec<usize> = signal
            .timestamps
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= attack.start_s && t <= attack.end_s)
            .map(|(i, _)| i)
            .collect();
        match attack.kind {
            AttackKind::CorrelatedBreak => {
                let n = signal.values.len() as f64;
                let mean = signal.values.iter().sum::<f64>() / n;
                let sd = (signal.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                let mut rng = Stream::new(derive_seed(seed, k as u64));
                for i in in_window {
                    signal.values[i] = mean + sd * rng.normal();
                }
            }
            AttackKind::MaxValue => {
                let max = signal.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for i in in_window {
                    signal.values[i] = max;
                }
            }
            AttackKind::BinaryFlip => {
                if signal.values.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::NotBinary(signal.signal_id.clone()));
                }
                for i in in_window {
                    signal.values[i] = 1.0 - signal.values[i];
                }
            }
        }
    }
    Ok(out)
}

/// Attack injected into a batch of captures. Missing window bounds default
/// to the whole capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    /// Label used for the attack group in reports, e.g. `correlated`.
    pub label: String,
    pub count: usize,
    pub kind: AttackKind,
    pub target_signals: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_s: Option<f64>,
}

/// A batch of benign and attacked synthetic captures. `capture.seed` is the
/// base seed; capture `j` (benign first, then each attack group in order)
/// uses `derive_seed(base, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPlan {
    pub capture: SynthSpec,
    pub benign_count: usize,
    #[serde(default)]
    pub attacks: Vec<AttackPlan>,
}

const INJECTION_STREAM: u64 = 0xA77A_C4ED;

impl SynthPlan {
    pub fn captures(&self) -> Result<Vec<SignalCapture>> {
        self.capture.validate()?;
        let mut out = Vec::new();
        let mut index = 0u64;
        let next_spec = |index: &mut u64| {
            let mut spec = self.capture.clone();
            spec.seed = derive_seed(self.capture.seed, *index);
            *index += 1;
            spec
        };
        for b in 0..self.benign_count {
            let mut cap = generate(&next_spec(&mut index))?;
            cap.capture_id = format!("benign_{b:02}");
            out.push(cap);
        }
        for plan in &self.attacks {
            for c in 0..plan.count {
                let spec = next_spec(&mut index);
                let base = generate(&spec)?;
                let mut attack = AttackSpec::covering(plan.kind, plan.target_signals.clone(), &base);
                if let Some(s) = plan.start_s {
                    attack.start_s = s;
                }
                if let Some(e) = plan.end_s {
                    attack.end_s = e;
                }
                let mut cap = inject(&base, &attack, derive_seed(spec.seed, INJECTION_STREAM))?;
                cap.capture_id = format!("attack_{}_{c:02}", plan.label);
                cap.label = CaptureLabel::Attack {
                    kind: plan.label.clone(),
                };
                out.push(cap);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub capture_id: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    #[serde(flatten)]
    pub label: CaptureLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub format: crate::ingest::InputFormat,
    pub captures: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Writes each capture as a wide CSV plus `manifest.json` into `dir`.
pub fn write_captures(captures: &[SignalCapture], dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(captures.len());
    for cap in captures {
        let file = PathBuf::from(format!("{}.csv", cap.capture_id));
        let full = dir.join(&file);
        let handle = fs::File::create(&full).map_err(|e| Error::io(&full, e))?;
        cap.write_wide_csv(std::io::BufWriter::new(handle))
            .map_err(|e| Error::io(&full, e))?;
        entries.push(ManifestEntry {
            capture_id: cap.capture_id.clone(),
            path: file,
            label: cap.label.clone(),
        });
    }
    let manifest = Manifest {
        schema: 1,
        format: crate::ingest::InputFormat::WideCsv,
        captures: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::pearson_matrix;
    use crate::ingest::resample;

    fn spec(seed: u64) -> SynthSpec {
        SynthSpec {
            n_groups: 2,
            signals_per_group: 4,
            duration_s: 60.0,
            rate_hz: 10.0,
            intra_group_rho: 0.95,
            noise_sigma: 1.0,
            seed,
            binary_per_group: 0,
            correlation_time_s: 2.0,
        }
    }

    fn rho(cap: &SignalCapture) -> Vec<Vec<f64>> {
        pearson_matrix(&resample(cap, 10.0).unwrap()).unwrap().rho
    }

    #[test]
    fn noiseless_members_are_affine_copies() {
        let cap = generate(&SynthSpec {
            noise_sigma: 0.0,
            ..spec(3)
        })
        .unwrap();
        let r = rho(&cap);
        for i in 0..4 {
            for j in 0..4 {
                assert!((r[i][j] - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn intra_group_correlation_near_target() {
        let r = rho(&generate(&spec(11)).unwrap());
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!((r[i][j] - 0.95).abs() < 0.03, "{}", r[i][j]);
            }
        }
    }

    #[test]
    fn independent_groups_weakly_correlated() {
        let long = SynthSpec {
            duration_s: 500.0,
            ..spec(5)
        };
        assert!(long.n_samples() >= 5000);
        let r = rho(&generate(&long).unwrap());
        for i in 0..4 {
            for j in 4..8 {
                assert!(r[i][j].abs() < 0.3, "{}", r[i][j]);
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&spec(99)).unwrap();
        let b = generate(&spec(99)).unwrap();
        let (mut wa, mut wb) = (Vec::new(), Vec::new());
        a.write_wide_csv(&mut wa).unwrap();
        b.write_wide_csv(&mut wb).unwrap();
        assert_eq!(wa, wb);
        assert_ne!(generate(&spec(100)).unwrap(), a);
    }

    #[test]
    fn max_value_pins_window() {
        let cap = generate(&spec(1)).unwrap();
        let target = SynthSpec::signal_id(0, 1);
        let max = cap.signal(&target).unwrap().values.iter().copied().fold(f64::MIN, f64::max);
        let attack = AttackSpec {
            kind: AttackKind::MaxValue,
            target_signals: vec![target.clone()],
            start_s: 10.0,
            end_s: 20.0,
        };
        let out = inject(&cap, &attack, 0).unwrap();
        let before = cap.signal(&target).unwrap();
        let after = out.signal(&target).unwrap();
        for (k, &t) in after.timestamps.iter().enumerate() {
            if (10.0..=20.0).contains(&t) {
                assert_eq!(after.values[k], max);
            } else {
                assert_eq!(after.values[k].to_bits(), before.values[k].to_bits());
            }
        }
        for (a, b) in cap.signals.iter().zip(&out.signals) {
            assert_eq!(a.timestamps, b.timestamps);
            if a.signal_id != target {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn correlated_break_destroys_group() {
        let cap = generate(&spec(2)).unwrap();
        let attack = AttackSpec::covering(AttackKind::CorrelatedBreak, spec(2).group_signal_ids(0), &cap);
        let r = rho(&inject(&cap, &attack, 17).unwrap());
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!(r[i][j].abs() < 0.3, "{}", r[i][j]);
            }
        }
        // untouched group keeps its structure
        assert!(r[4][5] > 0.9);
    }

    #[test]
    fn binary_flip_inverts_and_checks_domain() {
        let cap = generate(&SynthSpec {
            binary_per_group: 1,
            ..spec(4)
        })
        .unwrap();
        let bit = SynthSpec::signal_id(0, 3);
        let attack = AttackSpec::covering(AttackKind::BinaryFlip, vec![bit.clone()], &cap);
        let out = inject(&cap, &attack, 0).unwrap();
        for (a, b) in cap.signal(&bit).unwrap().values.iter().zip(&out.signal(&bit).unwrap().values) {
            assert_eq!(a + b, 1.0);
        }
        let analog = AttackSpec::covering(AttackKind::BinaryFlip, vec![SynthSpec::signal_id(0, 0)], &cap);
        assert!(matches!(inject(&cap, &analog, 0), Err(Error::NotBinary(_))));
    }

    #[test]
    fn empty_targets_no_op_and_bad_targets_rejected() {
        let cap = generate(&spec(8)).unwrap();
        let noop = AttackSpec::covering(AttackKind::MaxValue, vec![], &cap);
        assert_eq!(inject(&cap, &noop, 1).unwrap(), cap);
        let missing = AttackSpec::covering(AttackKind::MaxValue, vec!["nope".into()], &cap);
        assert!(inject(&cap, &missing, 1).is_err());
        let backwards = AttackSpec {
            kind: AttackKind::MaxValue,
            target_signals: vec![SynthSpec::signal_id(0, 0)],
            start_s: 5.0,
            end_s: 1.0,
        };
        assert!(inject(&cap, &backwards, 1).is_err());
    }

    #[test]
    fn plan_labels_and_counts() {
        let plan = SynthPlan {
            capture: spec(1),
            benign_count: 3,
            attacks: vec![AttackPlan {
                label: "correlated".into(),
                count: 2,
                kind: AttackKind::CorrelatedBreak,
                target_signals: spec(1).group_signal_ids(1),
                start_s: None,
                end_s: None,
            }],
        };
        let caps = plan.captures().unwrap();
        assert_eq!(caps.len(), 5);
        assert_eq!(caps[0].capture_id, "benign_00");
        assert_eq!(caps[4].capture_id, "attack_correlated_01");
        assert_eq!(
            caps[4].label,
            CaptureLabel::Attack {
                kind: "correlated".into()
            }
        );
        assert_eq!(plan.captures().unwrap(), caps);

        let dir = tempfile::tempdir().unwrap();
        let manifest = write_captures(&caps, dir.path()).unwrap();
        assert_eq!(Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap(), manifest);
        assert!(dir.path().join("benign_02.csv").exists());
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec { n_groups: 0, ..spec(1) }).is_err());
        assert!(generate(&SynthSpec { duration_s: 0.1, ..spec(1) }).is_err());
        assert!(generate(&SynthSpec { intra_group_rho: 0.0, ..spec(1) }).is_err());
        assert!(generate(&SynthSpec { noise_sigma: -1.0, ..spec(1) }).is_err());
    }
}
