//! Rejection rates of the synthetic experiments per linkage and r.
//!
//! `cargo run --release -p dendroscan-bench --example power_study [replicates]`
//!
//! Scenarios: `null` splits 15 benign captures 12 + 3; `correlated_break`
//! decorrelates one 4-signal group in 3 attack captures; `max_value` pins
//! one signal to its maximum over the middle half of 3 attack captures.

use std::fs;

use dendroscan::rng::derive_seed;
use dendroscan::synth::{write_captures, AttackPlan};
use dendroscan::{execute, AttackKind, CaptureLabel, Inputs, Linkage, RunConfig, SynthPlan, SynthSpec};

const LEVEL: f64 = 0.05;

fn spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_groups: 4,
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

fn attack_plan(capture: SynthSpec, kind: AttackKind) -> SynthPlan {
    let (targets, start, end) = match kind {
        AttackKind::MaxValue => (
            vec![SynthSpec::signal_id(0, 0)],
            Some(0.25 * capture.duration_s),
            Some(0.75 * capture.duration_s),
        ),
        _ => (capture.group_signal_ids(0), None, None),
    };
    SynthPlan {
        attacks: vec![AttackPlan {
            label: "attack".into(),
            count: 3,
            kind,
            target_signals: targets,
            start_s: start,
            end_s: end,
        }],
        capture,
        benign_count: 12,
    }
}

fn null_inputs(capture: SynthSpec, scratch: &std::path::Path) -> Inputs {
    let plan = SynthPlan {
        capture,
        benign_count: 15,
        attacks: vec![],
    };
    let mut captures = plan.captures().expect("synthesize");
    for cap in captures.iter_mut().skip(12) {
        cap.label = CaptureLabel::Attack { kind: "attack".into() };
    }
    write_captures(&captures, scratch).expect("write captures");
    Inputs::Manifest {
        path: scratch.join("manifest.json"),
    }
}

fn main() {
    let replicates: u64 = std::env::args().nth(1).map_or(60, |s| s.parse().expect("replicate count"));
    let scratch = std::env::temp_dir().join(format!("dendroscan-power-{}", std::process::id()));
    println!("scenario          r    single complete average  ward   (of {replicates})");
    for (name, kind) in [
        ("null", None),
        ("correlated_break", Some(AttackKind::CorrelatedBreak)),
        ("max_value", Some(AttackKind::MaxValue)),
    ] {
        for r in [-5.0, 0.0, 5.0] {
            let mut hits = [0usize; 4];
            for rep in 0..replicates {
                let capture = spec(derive_seed(0x5EED, rep));
                let inputs = match kind {
                    None => null_inputs(capture, &scratch),
                    Some(kind) => Inputs::Synthetic {
                        plan: attack_plan(capture, kind),
                    },
                };
                let report = execute(&RunConfig { r, ..RunConfig::new(inputs) }).expect("run").report;
                for (slot, linkage) in hits.iter_mut().zip(Linkage::ALL) {
                    let test = report.test("attack", linkage).expect("test present");
                    *slot += usize::from(test.p_value < LEVEL);
                }
            }
            println!(
                "{name:<16} {r:>4} {:>7} {:>8} {:>7} {:>5}",
                hits[0], hits[1], hits[2], hits[3]
            );
        }
    }
    let _ = fs::remove_dir_all(&scratch);
}
