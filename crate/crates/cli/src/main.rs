use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use dendroscan::clusim::{similarity, Alignment, HierarchyParams};
use dendroscan::goldens::{regenerate, verify_goldens};
use dendroscan::pipeline::{run, verdict, Inputs, OutputOptions, RunConfig};
use dendroscan::stats::Alternative;
use dendroscan::synth::write_captures;
use dendroscan::{agglomerate, parse_capture, pearson_matrix, resample, to_dissimilarity};
use dendroscan::{DissimilarityKind, InputFormat, Linkage, SynthPlan};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "dendroscan", version, about = "Detect masquerade attacks in CAN signal captures by comparing correlation dendrograms")]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full benign-vs-attack experiment and write a report.
    Analyze(AnalyzeArgs),
    /// Generate synthetic captures and a manifest from a plan file.
    Synth {
        /// JSON synthesis plan.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Similarity between the dendrograms of two captures.
    Simtest(SimtestArgs),
    /// Check or rewrite the golden fixtures.
    Goldens {
        #[command(subcommand)]
        action: GoldenAction,
        #[arg(long, default_value = "fixtures/v1", global = true)]
        dir: PathBuf,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum GoldenAction {
    Verify,
    Regen,
}

#[derive(Args)]
struct ModelArgs {
    /// Resampling frequency in Hz.
    #[arg(long = "freq", default_value_t = 10.0)]
    frequency_hz: f64,
    /// Hierarchy scaling; negative values emphasize coarse levels.
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    r: f64,
    /// Diffusion continuation probability, in (0, 1).
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    /// `abs` for 1 - |rho|, `signed` for (1 - rho) / 2.
    #[arg(long, default_value = "abs")]
    dissimilarity: DissimilarityKind,
    /// Compare captures on their shared signals instead of requiring equal
    /// signal sets.
    #[arg(long)]
    allow_intersection: bool,
    /// Input layout: `wide` (time column plus one column per signal) or
    /// `long` (time, signal, value).
    #[arg(long, default_value = "wide")]
    format: InputFormat,
}

impl ModelArgs {
    fn alignment(&self) -> Alignment {
        if self.allow_intersection {
            Alignment::Intersect
        } else {
            Alignment::Strict
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Benign captures: a directory of CSV files or a glob. Repeatable.
    #[arg(long, required_unless_present = "manifest")]
    benign: Vec<String>,
    /// Attack captures as `kind=<dir|glob>`. Repeatable.
    #[arg(long, conflicts_with = "manifest")]
    attack: Vec<String>,
    /// Manifest written by `synth`, instead of --benign/--attack.
    #[arg(long, conflicts_with = "benign")]
    manifest: Option<PathBuf>,
    /// Comma-separated linkages.
    #[arg(long, value_delimiter = ',', default_value = "single,complete,average,ward")]
    linkage: Vec<Linkage>,
    #[arg(long, default_value_t = 0.05)]
    significance: f64,
    /// `two-sided`, `less` (attack similarities lower) or `greater`.
    #[arg(long, default_value = "two-sided")]
    alternative: Alternative,
    #[command(flatten)]
    model: ModelArgs,
    /// Also write correlation and dissimilarity matrices.
    #[arg(long)]
    dump_matrices: bool,
    /// Also write every dendrogram as JSON.
    #[arg(long)]
    dump_dendrograms: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimtestArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "ward")]
    linkage: Vec<Linkage>,
    #[command(flatten)]
    model: ModelArgs,
}

/// Bad invocation or inputs that cannot be located; exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(message: impl Into<String>) -> anyhow::Error {
    ConfigError(message.into()).into()
}

/// CSV files of a directory, or the matches of a glob, sorted.
fn expand(pattern: &str) -> Result<Vec<PathBuf>> {
    let path = Path::new(pattern);
    let mut files: Vec<PathBuf> = if path.is_dir() {
        fs::read_dir(path)
            .with_context(|| format!("reading {pattern}"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect()
    } else {
        glob::glob(pattern)
            .map_err(|e| config_error(format!("bad glob {pattern:?}: {e}")))?
            .filter_map(|p| p.ok())
            .filter(|p| p.is_file())
            .collect()
    };
    if files.is_empty() {
        return Err(config_error(format!("no capture files match {pattern:?}")));
    }
    files.sort();
    Ok(files)
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let inputs = match &args.manifest {
        Some(path) => Inputs::Manifest { path: path.clone() },
        None => {
            let mut benign = Vec::new();
            for pattern in &args.benign {
                benign.extend(expand(pattern)?);
            }
            let mut attacks: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
            for spec in &args.attack {
                let Some((kind, pattern)) = spec.split_once('=') else {
                    return Err(config_error(format!("--attack expects kind=<dir|glob>, got {spec:?}")));
                };
                if kind.is_empty() {
                    return Err(config_error(format!("--attack {spec:?} has an empty kind")));
                }
                attacks.entry(kind.to_owned()).or_default().extend(expand(pattern)?);
            }
            Inputs::Files {
                format: args.model.format,
                benign,
                attacks,
            }
        }
    };
    let config = RunConfig {
        frequency_hz: args.model.frequency_hz,
        linkages: args.linkage.clone(),
        r: args.model.r,
        alpha: args.model.alpha,
        significance: args.significance,
        alternative: args.alternative,
        dissimilarity: args.model.dissimilarity,
        alignment: args.model.alignment(),
        ..RunConfig::new(inputs)
    };
    let options = OutputOptions {
        dump_matrices: args.dump_matrices,
        dump_dendrograms: args.dump_dendrograms,
    };
    let report = run(&config, &args.out, options)?;
    for cap in report.captures.iter().filter(|c| !c.dropped_constant.is_empty()) {
        log::info!("{}: dropped constant signals {:?}", cap.capture_id, cap.dropped_constant);
    }
    print!("{}", verdict(&report));
    log::info!("report written to {}", args.out.display());
    Ok(())
}

fn synth(spec: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec).map_err(|e| config_error(format!("{}: {e}", spec.display())))?;
    let plan: SynthPlan =
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", spec.display())))?;
    let captures = plan.captures()?;
    let manifest = write_captures(&captures, out)?;
    println!("wrote {} captures and manifest.json to {}", manifest.captures.len(), out.display());
    Ok(())
}

fn simtest(args: SimtestArgs) -> Result<()> {
    let params = HierarchyParams::new(args.model.r, args.model.alpha)?;
    let mut dissimilarities = Vec::new();
    for path in [&args.a, &args.b] {
        let capture = parse_capture(path, args.model.format)?;
        let matrix = resample(&capture, args.model.frequency_hz)?;
        dissimilarities.push((capture.capture_id, to_dissimilarity(&pearson_matrix(&matrix)?, args.model.dissimilarity)));
    }
    for linkage in &args.linkage {
        let a = agglomerate(&dissimilarities[0].1, *linkage)?;
        let b = agglomerate(&dissimilarities[1].1, *linkage)?;
        let score = similarity(&a, &b, &params, args.model.alignment())?;
        let record = serde_json::json!({
            "capture_a": dissimilarities[0].0,
            "capture_b": dissimilarities[1].0,
            "linkage": linkage,
            "r": params.r,
            "alpha": params.alpha,
            "similarity": score.value,
            "aligned_elements": score.aligned_elements(),
            "per_element": score.per_element,
        });
        println!("{record}");
    }
    Ok(())
}

fn goldens(action: GoldenAction, dir: &Path) -> Result<bool> {
    match action {
        GoldenAction::Regen => {
            for path in regenerate(dir)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        GoldenAction::Verify => {
            let outcomes = verify_goldens(dir);
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<dendroscan::Error>() {
            return if e.is_config() { EXIT_CONFIG } else { EXIT_DATA };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Analyze(args) => analyze(args).map(|()| true),
        Command::Synth { spec, out } => synth(&spec, &out).map(|()| true),
        Command::Simtest(args) => simtest(args).map(|()| true),
        Command::Goldens { action, dir } => goldens(action, &dir),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_DATA),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
