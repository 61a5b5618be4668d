use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dolphin::experiment::{measure_to_file, parse_pair, report, run_experiment, write_summary, write_summary_csv, ExperimentSpec};
use dolphin::io::{read_dictionary, save_dictionary_atlas};
use dolphin::Result;

const EXIT_STALLED: u8 = 10;

#[derive(Parser)]
#[command(name = "dolphin", version, about = "Phase retrieval with online dictionary learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Simulate noisy measurements of an image and save them.
    Measure(MeasureArgs),
    /// Reconstruct images (or a saved measurement set) and write run artifacts.
    Solve(SolveArgs),
    /// Aggregate one or more runs.csv files into a summary.
    Report(ReportArgs),
    /// Render a saved dictionary as an image grid.
    Atlas(AtlasArgs),
}

#[derive(Args)]
struct MeasurementFlags {
    /// gx, gxg, gxh or cdp
    #[arg(long)]
    operator: Option<String>,
    #[arg(long)]
    masks: Option<String>,
    /// ternary or octanary
    #[arg(long)]
    alphabet: Option<String>,
    #[arg(long)]
    oversample: Option<String>,
    /// Target SNR in dB, or `none` for noiseless data.
    #[arg(long = "snr-db")]
    snr_db: Option<String>,
}

impl MeasurementFlags {
    fn pairs(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("operator", self.operator.as_ref()),
            ("masks", self.masks.as_ref()),
            ("alphabet", self.alphabet.as_ref()),
            ("oversample", self.oversample.as_ref()),
            ("snr-db", self.snr_db.as_ref()),
        ]
    }
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    measurement: MeasurementFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output measurement file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// `key = value` configuration file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated image paths.
    #[arg(long)]
    image: Option<String>,
    /// Reconstruct this saved measurement set instead of measuring `--image`.
    #[arg(long)]
    measurements: Option<String>,
    #[command(flatten)]
    measurement: MeasurementFlags,
    /// l1, l0, wf or prwf
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long = "mu-phase2")]
    mu_phase2: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long = "k1-sparsity")]
    k1_sparsity: Option<String>,
    #[arg(long = "k2-sparsity")]
    k2_sparsity: Option<String>,
    #[arg(long = "omp-eps")]
    omp_eps: Option<String>,
    #[arg(long = "iters-k1")]
    iters_k1: Option<String>,
    #[arg(long = "iters-k2")]
    iters_k2: Option<String>,
    /// Patch size, e.g. 8x8.
    #[arg(long)]
    patch: Option<String>,
    /// Patch stride, e.g. 8x8 (non-overlapping) or 1x1.
    #[arg(long)]
    stride: Option<String>,
    /// heuristic or armijo
    #[arg(long)]
    step: Option<String>,
    #[arg(long = "initial-lipschitz")]
    initial_lipschitz: Option<String>,
    #[arg(long = "wf-baseline")]
    wf_baseline: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// runs.csv files to aggregate.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Write the summary here instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AtlasArgs {
    #[arg(long)]
    dictionary: PathBuf,
    #[arg(long, default_value = "8x8")]
    patch: String,
    #[arg(long)]
    out: PathBuf,
}

fn measure(args: MeasureArgs) -> Result<u8> {
    let mut spec = ExperimentSpec::default();
    for (key, value) in args.measurement.pairs() {
        if let Some(v) = value {
            spec.set(key, v)?;
        }
    }
    let set = measure_to_file(&args.image, &spec.measurement, args.seed, &args.out)?;
    println!("wrote {} measurements to {}", set.len(), args.out.display());
    Ok(0)
}

fn solve(args: SolveArgs) -> Result<u8> {
    let mut spec = ExperimentSpec::default();
    if let Some(path) = &args.config {
        spec.apply_config_file(path)?;
    }
    let mut flags = args.measurement.pairs();
    flags.extend([
        ("image", args.image.as_ref()),
        ("measurements", args.measurements.as_ref()),
        ("variant", args.variant.as_ref()),
        ("mu", args.mu.as_ref()),
        ("mu-phase2", args.mu_phase2.as_ref()),
        ("lambda", args.lambda.as_ref()),
        ("k1-sparsity", args.k1_sparsity.as_ref()),
        ("k2-sparsity", args.k2_sparsity.as_ref()),
        ("omp-eps", args.omp_eps.as_ref()),
        ("iters-k1", args.iters_k1.as_ref()),
        ("iters-k2", args.iters_k2.as_ref()),
        ("patch", args.patch.as_ref()),
        ("stride", args.stride.as_ref()),
        ("step", args.step.as_ref()),
        ("initial-lipschitz", args.initial_lipschitz.as_ref()),
        ("wf-baseline", args.wf_baseline.as_ref()),
        ("seed", args.seed.as_ref()),
        ("replicates", args.replicates.as_ref()),
        ("out", args.out.as_ref()),
    ]);
    for (key, value) in flags {
        if let Some(v) = value {
            spec.set(key, v)?;
        }
    }
    let outcome = run_experiment(&spec)?;
    for r in &outcome.records {
        let fmt =
            |q: Option<dolphin::metrics::QualityReport>| q.map_or("-".to_string(), |q| format!("{:.2} dB / {:.4}", q.psnr_db, q.ssim));
        println!(
            "{} rep{} {}: X {}  P(R(DA)) {}  WF {}  ({} iterations, {:.1}s)",
            r.image,
            r.replicate,
            r.variant.name(),
            fmt(r.x),
            fmt(r.patch),
            fmt(r.wf),
            r.iterations,
            r.seconds
        );
    }
    for (label, err) in &outcome.failures {
        eprintln!("{label} failed: {err}");
    }
    println!("manifest: {}", outcome.manifest.display());
    Ok(if !outcome.failures.is_empty() {
        1
    } else if outcome.any_stalled() {
        EXIT_STALLED
    } else {
        0
    })
}

fn report_cmd(args: ReportArgs) -> Result<u8> {
    let summary = report(&args.runs)?;
    match &args.out {
        Some(path) => write_summary_csv(&summary, path)?,
        None => write_summary(&summary, std::io::stdout().lock()).map_err(|e| dolphin::Error::io("<stdout>", e))?,
    }
    Ok(0)
}

fn atlas(args: AtlasArgs) -> Result<u8> {
    let d = read_dictionary(&args.dictionary)?;
    save_dictionary_atlas(&d, parse_pair(&args.patch)?, &args.out)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Measure(a) => measure(a),
        Command::Solve(a) => solve(a),
        Command::Report(a) => report_cmd(a),
        Command::Atlas(a) => atlas(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
