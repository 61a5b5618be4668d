//! Experiment orchestration: configuration, replicate runs, CSV artifacts
//! and the per-experiment manifest.
//!
//! Replicate `r` of an experiment with base seed `s` uses seed `s + r` for
//! everything it draws; the operator, the noise, the starting image and the
//! dictionary resets each read their own stream of that seed (see
//! [`crate::rng::Stream`]).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::container::{load_measurements, save_measurements};
use crate::error::{Error, Result};
use crate::image_update::StepKind;
use crate::io::{load_image, save_dictionary_atlas, save_image, write_dictionary, BitDepth};
use crate::measurements::{measure, MaskAlphabet, MaskDistribution, MeasurementSet, Operator, OperatorSpec};
use crate::metrics::{mean_sparsity, QualityReport};
use crate::patches::PatchGeometry;
use crate::solver::{random_start, run_dolphin, run_wf_baseline, SolverConfig, SolverRun, Termination, Variant};
use crate::sparse_coding::CodeMatrix;

/// Measurement operator family as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorFamily {
    Gx,
    Gxg,
    Gxh,
    Cdp,
}

impl OperatorFamily {
    pub fn name(self) -> &'static str {
        match self {
            OperatorFamily::Gx => "gx",
            OperatorFamily::Gxg => "gxg",
            OperatorFamily::Gxh => "gxh",
            OperatorFamily::Cdp => "cdp",
        }
    }
}

impl FromStr for OperatorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gx" => Ok(OperatorFamily::Gx),
            "gxg" => Ok(OperatorFamily::Gxg),
            "gxh" => Ok(OperatorFamily::Gxh),
            "cdp" => Ok(OperatorFamily::Cdp),
            other => Err(Error::InvalidConfig(format!("unknown operator `{other}`"))),
        }
    }
}

/// How measurements are generated.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSettings {
    pub family: OperatorFamily,
    /// `M1 / N1` (and `M2 / N2`) for the Gaussian families.
    pub oversample: usize,
    /// Number of CDP masks.
    pub masks: usize,
    pub alphabet: MaskAlphabet,
    /// `None` for noiseless data.
    pub snr_db: Option<f64>,
}

impl Default for MeasurementSettings {
    fn default() -> Self {
        Self {
            family: OperatorFamily::Cdp,
            oversample: 4,
            masks: 2,
            alphabet: MaskAlphabet::Ternary,
            snr_db: Some(20.0),
        }
    }
}

impl MeasurementSettings {
    pub fn operator_spec(&self) -> OperatorSpec {
        match self.family {
            OperatorFamily::Gx => OperatorSpec::GaussianLeft {
                oversample: self.oversample,
            },
            OperatorFamily::Gxg => OperatorSpec::GaussianTwoSided {
                oversample: self.oversample,
            },
            OperatorFamily::Gxh => OperatorSpec::GaussianAsymmetric {
                oversample: self.oversample,
            },
            OperatorFamily::Cdp => OperatorSpec::Cdp {
                masks: self.masks,
                distribution: MaskDistribution::for_alphabet(self.alphabet),
                alphabet: self.alphabet,
            },
        }
    }

    /// Draws the operator and noisy measurements of `image` for `seed`.
    pub fn measure(&self, image: &Array2<f64>, seed: u64) -> Result<MeasurementSet> {
        let op = Operator::sample_seeded(&self.operator_spec(), image.dim(), seed)?;
        measure(op, image.view(), self.snr_db, seed)
    }
}

/// Solver options; unset values fall back to the defaults of the variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub variant: Variant,
    pub mu: Option<f64>,
    pub mu_phase2: Option<f64>,
    pub lambda: Option<f64>,
    pub k_phase1: Option<usize>,
    pub k_phase2: Option<usize>,
    pub omp_eps: Option<f64>,
    pub iters_k1: Option<usize>,
    pub iters_k2: Option<usize>,
    pub patch: (usize, usize),
    /// Defaults to the patch size (non-overlapping), or `1x1` for the ℓ0 variant.
    pub stride: Option<(usize, usize)>,
    pub step: StepKind,
    pub initial_lipschitz: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            variant: Variant::L1,
            mu: None,
            mu_phase2: None,
            lambda: None,
            k_phase1: None,
            k_phase2: None,
            omp_eps: None,
            iters_k1: None,
            iters_k2: None,
            patch: (8, 8),
            stride: None,
            step: StepKind::Heuristic,
            initial_lipschitz: None,
        }
    }
}

impl SolverSettings {
    /// Resolves the settings for an image of `shape`.
    pub fn config(&self, shape: (usize, usize), seed: u64) -> Result<SolverConfig> {
        let stride = self.stride.unwrap_or(if self.variant == Variant::L0 { (1, 1) } else { self.patch });
        let geometry = PatchGeometry::new(self.patch, stride, shape)?;
        let l1 = SolverConfig::l1(geometry);
        let (k1, k2) = (self.iters_k1.unwrap_or(l1.k1), self.iters_k2.unwrap_or(l1.k2));
        let mut config = match self.variant {
            Variant::L1 => SolverConfig { k1, k2, ..l1 },
            Variant::L0 => {
                let base = SolverConfig::l0(geometry);
                let mu = self.mu.unwrap_or(base.mu);
                SolverConfig {
                    mu,
                    mu_phase2: self.mu_phase2.unwrap_or(1.68 * mu),
                    k1: self.iters_k1.unwrap_or(base.k1),
                    k2: self.iters_k2.unwrap_or(base.k2),
                    ..base
                }
            }
            Variant::Wf => SolverConfig::wf(geometry, k1 + k2),
            Variant::PatchRegularizedWf => SolverConfig {
                k1: k1 + k2,
                ..SolverConfig::patch_regularized_wf(geometry)
            },
        };
        if matches!(self.variant, Variant::L1 | Variant::PatchRegularizedWf) {
            config.mu = self.mu.unwrap_or(config.mu);
            config.lambda = self.lambda.unwrap_or(config.lambda);
        }
        config.k_phase1 = self.k_phase1.unwrap_or(config.k_phase1);
        config.k_phase2 = self.k_phase2.unwrap_or(config.k_phase2);
        config.omp_eps = self.omp_eps.unwrap_or(config.omp_eps);
        config.initial_lipschitz = self.initial_lipschitz.unwrap_or(config.initial_lipschitz);
        config.step = self.step;
        config.seed = seed;
        config.validate()?;
        Ok(config)
    }
}

/// Everything one experiment needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Ground-truth images; RGB inputs are split into channels.
    pub images: Vec<PathBuf>,
    /// A persisted measurement set to reconstruct instead of measuring
    /// `images`; the (single) image, if given, is then only the reference
    /// for quality metrics.
    pub measurements: Option<PathBuf>,
    pub measurement: MeasurementSettings,
    pub solver: SolverSettings,
    pub seed: u64,
    pub replicates: usize,
    /// Also run plain Wirtinger flow from the same start for the same
    /// number of iterations.
    pub wf_baseline: bool,
    pub out: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            images: Vec::new(),
            measurements: None,
            measurement: MeasurementSettings::default(),
            solver: SolverSettings::default(),
            seed: 0,
            replicates: 1,
            wf_baseline: true,
            out: PathBuf::from("dolphin-out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid value `{value}` for `{key}`")))
}

/// Parses `AxB` into `(A, B)`.
pub fn parse_pair(value: &str) -> Result<(usize, usize)> {
    let (a, b) = value
        .split_once('x')
        .ok_or_else(|| Error::InvalidConfig(format!("expected AxB, got `{value}`")))?;
    Ok((parse("size", a.trim())?, parse("size", b.trim())?))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn opt_string<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "default".to_string(), |v| v.to_string())
}

/// Configuration keys by section.
const KEYS: &[(&str, &[&str])] = &[
    ("experiment", &["image", "measurements", "seed", "replicates", "out", "wf-baseline"]),
    ("measurements", &["operator", "masks", "alphabet", "oversample", "snr-db"]),
    (
        "solver",
        &[
            "variant",
            "mu",
            "mu-phase2",
            "lambda",
            "k1-sparsity",
            "k2-sparsity",
            "omp-eps",
            "iters-k1",
            "iters-k2",
            "patch",
            "stride",
            "step",
            "initial-lipschitz",
        ],
    ),
];

impl ExperimentSpec {
    /// Sets one option by its canonical (command-line) name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let m = &mut self.measurement;
        let s = &mut self.solver;
        match key {
            "image" => {
                self.images = value
                    .split(',')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "measurements" => self.measurements = Some(PathBuf::from(value)),
            "seed" => self.seed = parse(key, value)?,
            "replicates" => self.replicates = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "wf-baseline" => self.wf_baseline = parse_bool(key, value)?,
            "operator" => m.family = value.parse()?,
            "masks" => m.masks = parse(key, value)?,
            "alphabet" => m.alphabet = value.parse()?,
            "oversample" => m.oversample = parse(key, value)?,
            "snr-db" => {
                m.snr_db = match value {
                    "none" | "inf" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "variant" => s.variant = value.parse()?,
            "mu" => s.mu = Some(parse(key, value)?),
            "mu-phase2" => s.mu_phase2 = Some(parse(key, value)?),
            "lambda" => s.lambda = Some(parse(key, value)?),
            "k1-sparsity" => s.k_phase1 = Some(parse(key, value)?),
            "k2-sparsity" => s.k_phase2 = Some(parse(key, value)?),
            "omp-eps" => s.omp_eps = Some(parse(key, value)?),
            "iters-k1" => s.iters_k1 = Some(parse(key, value)?),
            "iters-k2" => s.iters_k2 = Some(parse(key, value)?),
            "patch" => s.patch = parse_pair(value)?,
            "stride" => s.stride = Some(parse_pair(value)?),
            "step" => s.step = value.parse()?,
            "initial-lipschitz" => s.initial_lipschitz = Some(parse(key, value)?),
            other => return Err(Error::InvalidConfig(format!("unknown option `{other}`"))),
        }
        Ok(())
    }

    /// Applies a configuration file of `key = value` lines grouped under
    /// `[experiment]`, `[measurements]` and `[solver]`. `#` and `;` start
    /// comments.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !KEYS.iter().any(|(s, _)| *s == section) {
                    return Err(Error::InvalidConfig(format!("line {}: unknown section [{section}]", lineno + 1)));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().replace('_', "-");
            let allowed = KEYS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "line {}: `{key}` is not an option of section [{section}]",
                    lineno + 1
                )));
            }
            self.set(&key, value)?;
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_config_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be >= 1".into()));
        }
        if self.images.is_empty() && self.measurements.is_none() {
            return Err(Error::InvalidConfig("no input image or measurement set given".into()));
        }
        if self.measurements.is_some() && self.images.len() > 1 {
            return Err(Error::InvalidConfig("a measurement set takes at most one reference image".into()));
        }
        for p in self.images.iter().chain(&self.measurements) {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!("input `{}` does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` echo of every setting except the output
    /// directory, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let m = &self.measurement;
        let s = &self.solver;
        let images: Vec<String> = self.images.iter().map(|p| p.display().to_string()).collect();
        vec![
            ("image".into(), images.join(",")),
            ("measurements".into(), opt_string(&self.measurements.as_ref().map(|p| p.display()))),
            ("seed".into(), self.seed.to_string()),
            ("replicates".into(), self.replicates.to_string()),
            ("wf-baseline".into(), self.wf_baseline.to_string()),
            ("operator".into(), m.family.name().into()),
            ("masks".into(), m.masks.to_string()),
            ("alphabet".into(), m.alphabet.name().into()),
            ("oversample".into(), m.oversample.to_string()),
            ("snr-db".into(), m.snr_db.map_or("none".into(), |v| v.to_string())),
            ("variant".into(), s.variant.name().into()),
            ("mu".into(), opt_string(&s.mu)),
            ("mu-phase2".into(), opt_string(&s.mu_phase2)),
            ("lambda".into(), opt_string(&s.lambda)),
            ("k1-sparsity".into(), opt_string(&s.k_phase1)),
            ("k2-sparsity".into(), opt_string(&s.k_phase2)),
            ("omp-eps".into(), opt_string(&s.omp_eps)),
            ("iters-k1".into(), opt_string(&s.iters_k1)),
            ("iters-k2".into(), opt_string(&s.iters_k2)),
            ("patch".into(), format!("{}x{}", s.patch.0, s.patch.1)),
            ("stride".into(), opt_string(&s.stride.map(|(a, b)| format!("{a}x{b}")))),
            ("step".into(), s.step.name().into()),
            ("initial-lipschitz".into(), opt_string(&s.initial_lipschitz)),
        ]
    }

    /// First 16 hex digits of the SHA-256 of [`ExperimentSpec::echo`].
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.echo() {
            hasher.update(format!("{k}={v}\n").as_bytes());
        }
        hasher.finalize().iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Outcome of one replicate on one image channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Image stem, with `-r`, `-g`, `-b` for RGB channels.
    pub image: String,
    pub replicate: usize,
    pub seed: u64,
    pub variant: Variant,
    pub operator: OperatorFamily,
    pub shape: (usize, usize),
    pub config_hash: String,
    pub termination: Termination,
    pub iterations: usize,
    /// Quality of `X`; absent when no reference image is known.
    pub x: Option<QualityReport>,
    /// Quality of `P(R(DA))`.
    pub patch: Option<QualityReport>,
    /// Quality of the Wirtinger-flow baseline.
    pub wf: Option<QualityReport>,
    pub mean_l0: Option<f64>,
    pub seconds: f64,
    pub wf_seconds: Option<f64>,
    /// Files written for this run, relative to the output directory.
    pub files: Vec<PathBuf>,
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    /// `(run label, error)` for replicates that failed.
    pub failures: Vec<(String, String)>,
    pub manifest: PathBuf,
}

impl ExperimentOutcome {
    pub fn any_stalled(&self) -> bool {
        self.records.iter().any(|r| r.termination == Termination::Stalled)
    }
}

struct Job {
    label: String,
    truth: Option<Array2<f64>>,
    persisted: Option<MeasurementSet>,
    replicate: usize,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

fn jobs(spec: &ExperimentSpec) -> Result<Vec<Job>> {
    let mut inputs: Vec<(String, Option<Array2<f64>>, Option<MeasurementSet>)> = Vec::new();
    if let Some(path) = &spec.measurements {
        let set = load_measurements(path)?;
        let truth = match spec.images.first() {
            Some(p) => {
                let img = crate::io::load_gray(p)?;
                crate::error::check_dims(set.operator.input_shape(), img.dim())?;
                Some(img)
            }
            None => None,
        };
        inputs.push((stem(path), truth, Some(set)));
    } else {
        for path in &spec.images {
            let channels = load_image(path)?.into_channels();
            let name = stem(path);
            if channels.len() == 1 {
                inputs.push((name, channels.into_iter().next(), None));
            } else {
                for (c, img) in ["r", "g", "b"].iter().zip(channels) {
                    inputs.push((format!("{name}-{c}"), Some(img), None));
                }
            }
        }
    }
    let mut out = Vec::new();
    for (label, truth, persisted) in inputs {
        for replicate in 0..spec.replicates {
            out.push(Job {
                label: label.clone(),
                truth: truth.clone(),
                persisted: persisted.clone(),
                replicate,
            });
        }
    }
    Ok(out)
}

fn quality(truth: Option<&Array2<f64>>, estimate: &Array2<f64>, codes: Option<&CodeMatrix>, seconds: f64) -> Result<Option<QualityReport>> {
    truth
        .map(|t| QualityReport::measure(t.view(), estimate.view(), codes.map_or(0.0, |c| mean_sparsity(c, 0.0)), seconds))
        .transpose()
}

fn run_job(spec: &ExperimentSpec, job: &Job, hash: &str) -> Result<RunRecord> {
    let seed = spec.seed + job.replicate as u64;
    let dir_rel = PathBuf::from(&job.label).join(format!("rep{}", job.replicate));
    let dir = spec.out.join(&dir_rel);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let measurements = match (&job.persisted, &job.truth) {
        (Some(m), _) => m.clone(),
        (None, Some(truth)) => spec.measurement.measure(truth, seed)?,
        (None, None) => unreachable!("every job has an image or a measurement set"),
    };
    let shape = measurements.operator.input_shape();
    let config = spec.solver.config(shape, seed)?;

    let start = Instant::now();
    let SolverRun { state, reconstruction } = run_dolphin(&measurements, &config)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut files = Vec::new();
    let mut emit = |name: &str| {
        files.push(dir_rel.join(name));
        dir.join(name)
    };
    save_image(reconstruction.x_estimate.view(), emit("x.pgm"), BitDepth::Sixteen)?;
    write_trace_csv(&state.trace, emit("trace.csv"))?;
    let uses_patches = config.variant.uses_patches();
    if let Some(p) = &reconstruction.patch_estimate {
        save_image(p.view(), emit("patch.pgm"), BitDepth::Sixteen)?;
    }
    if uses_patches {
        write_codes_csv(&state.codes, emit("codes.csv"))?;
        write_dictionary(&state.dictionary, emit("dictionary.bin"))?;
        save_dictionary_atlas(&state.dictionary, config.geometry.patch_shape(), emit("atlas.png"))?;
    }

    let codes = uses_patches.then_some(&state.codes);
    let truth = job.truth.as_ref();
    let x = quality(truth, &reconstruction.x_estimate, codes, seconds)?;
    let patch = match &reconstruction.patch_estimate {
        Some(p) => quality(truth, p, codes, seconds)?,
        None => None,
    };

    let (wf, wf_seconds) = if spec.wf_baseline && config.variant != Variant::Wf {
        let start = Instant::now();
        let x0 = random_start(shape, seed);
        let wf_x = run_wf_baseline(&measurements, config.iterations(), config.step, x0.view())?;
        let secs = start.elapsed().as_secs_f64();
        save_image(wf_x.view(), emit("wf.pgm"), BitDepth::Sixteen)?;
        (quality(truth, &wf_x, None, secs)?, Some(secs))
    } else {
        (None, None)
    };

    Ok(RunRecord {
        image: job.label.clone(),
        replicate: job.replicate,
        seed,
        variant: config.variant,
        operator: spec.measurement.family,
        shape,
        config_hash: hash.to_string(),
        termination: state.termination,
        iterations: state.iteration,
        x,
        patch,
        wf,
        mean_l0: uses_patches.then(|| mean_sparsity(&state.codes, 0.0)),
        seconds,
        wf_seconds,
        files,
    })
}

/// Runs every replicate of every input (in parallel), writes per-run
/// artifacts under `spec.out/<image>/rep<r>/`, then `runs.csv`,
/// `summary.csv`, `timing.csv` and `manifest.txt` at the top level.
/// A failing replicate is recorded and the others continue.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    fs::create_dir_all(&spec.out).map_err(|e| Error::io(&spec.out, e))?;
    let hash = spec.config_hash();
    let jobs = jobs(spec)?;
    let results: Vec<Result<RunRecord>> = jobs.par_iter().map(|job| run_job(spec, job, &hash)).collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(r) => records.push(r),
            Err(e) => failures.push((format!("{}/rep{}", job.label, job.replicate), e.to_string())),
        }
    }

    let runs_path = spec.out.join("runs.csv");
    write_runs_csv(&records, &runs_path)?;
    let summary = summarize(&read_runs_csv(&runs_path)?);
    write_summary_csv(&summary, spec.out.join("summary.csv"))?;
    write_timing_csv(&records, spec.out.join("timing.csv"))?;

    let mut files: Vec<PathBuf> = vec!["runs.csv".into(), "summary.csv".into(), "timing.csv".into()];
    for r in &records {
        files.extend(r.files.iter().cloned());
    }
    let manifest = spec.out.join("manifest.txt");
    write_manifest(spec, &hash, &files, &failures, &manifest)?;
    Ok(ExperimentOutcome {
        records,
        failures,
        manifest,
    })
}

fn write_manifest(spec: &ExperimentSpec, hash: &str, files: &[PathBuf], failures: &[(String, String)], path: &Path) -> Result<()> {
    let mut text = String::from("# dolphin-manifest v1\n");
    let _ = writeln!(text, "config_hash = {hash}");
    for (k, v) in spec.echo() {
        let _ = writeln!(text, "config.{k} = {v}");
    }
    for f in files {
        let _ = writeln!(text, "file = {}", f.display());
    }
    for (label, err) in failures {
        let _ = writeln!(text, "failed = {label}: {}", err.replace('\n', " "));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a manifest into its `key = value` entries, in order.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| l.split_once(" = ").map(|(k, v)| (k.to_string(), v.to_string())))
        .collect())
}

fn csv_writer(path: &Path, version_line: &str) -> Result<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    std::io::Write::write_all(&mut file, format!("{version_line}\n").as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Corrupt(format!("{}: {e}", path.display()))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file))
}

fn fmt(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt)
}

/// Per-iteration trace: `iteration, data_fit, patch_fit, sparsity, total,
/// gamma_x, mean_l0`.
pub fn write_trace_csv(trace: &[crate::solver::TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path, "# dolphin-trace v1")?;
    let header = ["iteration", "data_fit", "patch_fit", "sparsity", "total", "gamma_x", "mean_l0"];
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in trace {
        let o = &r.objective;
        w.write_record([
            r.iteration.to_string(),
            fmt(o.data_fit),
            fmt(o.patch_fit),
            fmt(o.sparsity),
            fmt(o.total),
            fmt(r.gamma_x),
            fmt(r.mean_l0),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Nonzero code entries as `column, row, value` triplets, column by column.
pub fn write_codes_csv(codes: &CodeMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(
        path,
        &format!("# dolphin-codes v1 atoms={} patches={}", codes.atoms(), codes.patches()),
    )?;
    w.write_record(["column", "row", "value"]).map_err(|e| csv_error(path, e))?;
    for (col, column) in codes.entries.columns().into_iter().enumerate() {
        for (row, v) in column.iter().enumerate() {
            if *v != 0.0 {
                w.write_record([col.to_string(), row.to_string(), v.to_string()])
                    .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads [`write_codes_csv`] output back into an `atoms x patches` matrix.
pub fn read_codes_csv(path: impl AsRef<Path>, atoms: usize, patches: usize) -> Result<CodeMatrix> {
    let path = path.as_ref();
    let mut codes = CodeMatrix::zeros(atoms, patches);
    for rec in csv_reader(path)?.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let (col, row): (usize, usize) = (parse("column", field(0))?, parse("row", field(1))?);
        if col >= patches || row >= atoms {
            return Err(Error::Corrupt(format!("{}: entry ({row}, {col}) out of range", path.display())));
        }
        codes.entries[[row, col]] = parse("value", field(2))?;
    }
    Ok(codes)
}

const RUN_COLUMNS: [&str; 17] = [
    "image",
    "replicate",
    "seed",
    "variant",
    "operator",
    "rows",
    "cols",
    "config_hash",
    "termination",
    "iterations",
    "x_psnr",
    "x_ssim",
    "patch_psnr",
    "patch_ssim",
    "mean_l0",
    "wf_psnr",
    "wf_ssim",
];

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Running => "running",
        Termination::BudgetExhausted => "budget",
        Termination::Stalled => "stalled",
    }
}

/// One row per run with the quality numbers; wall-clock times are kept
/// out of this file (see `timing.csv`) so that it is reproducible.
pub fn write_runs_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path, "# dolphin-runs v1")?;
    w.write_record(RUN_COLUMNS).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.write_record([
            r.image.clone(),
            r.replicate.to_string(),
            r.seed.to_string(),
            r.variant.name().into(),
            r.operator.name().into(),
            r.shape.0.to_string(),
            r.shape.1.to_string(),
            r.config_hash.clone(),
            termination_name(r.termination).into(),
            r.iterations.to_string(),
            fmt_opt(r.x.map(|q| q.psnr_db)),
            fmt_opt(r.x.map(|q| q.ssim)),
            fmt_opt(r.patch.map(|q| q.psnr_db)),
            fmt_opt(r.patch.map(|q| q.ssim)),
            fmt_opt(r.mean_l0),
            fmt_opt(r.wf.map(|q| q.psnr_db)),
            fmt_opt(r.wf.map(|q| q.ssim)),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A row of `runs.csv` as read back.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub image: String,
    pub variant: String,
    pub operator: String,
    pub shape: (usize, usize),
    /// `x_psnr, x_ssim, patch_psnr, patch_ssim, mean_l0, wf_psnr, wf_ssim`.
    pub values: [Option<f64>; 7],
}

const VALUE_COLUMNS: [&str; 7] = ["x_psnr", "x_ssim", "patch_psnr", "patch_ssim", "mean_l0", "wf_psnr", "wf_ssim"];

pub fn read_runs_csv(path: impl AsRef<Path>) -> Result<Vec<RunRow>> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Corrupt(format!("{}: missing column {name}", path.display())))
    };
    let (ci, cv, co, cr, cc) = (col("image")?, col("variant")?, col("operator")?, col("rows")?, col("cols")?);
    let value_cols = VALUE_COLUMNS.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let mut values = [None; 7];
        for (slot, &c) in values.iter_mut().zip(&value_cols) {
            let v = get(c);
            if !v.is_empty() {
                *slot = Some(parse(VALUE_COLUMNS[0], v)?);
            }
        }
        rows.push(RunRow {
            image: get(ci).into(),
            variant: get(cv).into(),
            operator: get(co).into(),
            shape: (parse("rows", get(cr))?, parse("cols", get(cc))?),
            values,
        });
    }
    Ok(rows)
}

/// Arithmetic means of the run values per (variant, operator, size) group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub operator: String,
    pub shape: (usize, usize),
    pub runs: usize,
    /// Means in the order of `x_psnr, x_ssim, patch_psnr, patch_ssim,
    /// mean_l0, wf_psnr, wf_ssim`; `None` when no run reported the value.
    pub means: [Option<f64>; 7],
}

pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    type GroupKey = (String, String, (usize, usize));
    let mut groups: BTreeMap<GroupKey, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.variant.clone(), r.operator.clone(), r.shape)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((variant, operator, shape), members)| {
            let mut means = [None; 7];
            for (i, slot) in means.iter_mut().enumerate() {
                let vals: Vec<f64> = members.iter().filter_map(|r| r.values[i]).collect();
                if !vals.is_empty() {
                    *slot = Some(vals.iter().sum::<f64>() / vals.len() as f64);
                }
            }
            SummaryRow {
                variant,
                operator,
                shape,
                runs: members.len(),
                means,
            }
        })
        .collect()
}

pub fn write_summary_csv(summary: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_summary(summary, file).map_err(|e| Error::io(path, e))
}

/// Writes the summary table (with its version line) to any writer.
pub fn write_summary<W: std::io::Write>(summary: &[SummaryRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "# dolphin-summary v1")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["variant", "operator", "rows", "cols", "runs"];
    header.extend(VALUE_COLUMNS);
    w.write_record(&header)?;
    for s in summary {
        let mut row = vec![
            s.variant.clone(),
            s.operator.clone(),
            s.shape.0.to_string(),
            s.shape.1.to_string(),
            s.runs.to_string(),
        ];
        row.extend(s.means.iter().map(|m| fmt_opt(*m)));
        w.write_record(&row)?;
    }
    w.flush()
}

/// Geometric mean of positive values.
pub fn geometric_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// Wall-clock seconds per run, followed by one `geomean` row per
/// (variant, operator) group.
pub fn write_timing_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path, "# dolphin-timing v1")?;
    w.write_record(["image", "replicate", "variant", "operator", "seconds", "wf_seconds"])
        .map_err(|e| csv_error(path, e))?;
    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        w.write_record([
            r.image.clone(),
            r.replicate.to_string(),
            r.variant.name().into(),
            r.operator.name().into(),
            fmt(r.seconds),
            fmt_opt(r.wf_seconds),
        ])
        .map_err(|e| csv_error(path, e))?;
        let g = groups.entry((r.variant.name().into(), r.operator.name().into())).or_default();
        g.0.push(r.seconds);
        g.1.extend(r.wf_seconds);
    }
    for ((variant, operator), (secs, wf)) in groups {
        w.write_record([
            "geomean".to_string(),
            String::new(),
            variant,
            operator,
            fmt_opt(geometric_mean(&secs)),
            fmt_opt(geometric_mean(&wf)),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Aggregates one or more `runs.csv` files into a summary.
pub fn report(run_files: &[PathBuf]) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for f in run_files {
        rows.extend(read_runs_csv(f)?);
    }
    Ok(summarize(&rows))
}

/// Measures the grayscale image at `image` and writes the measurement set.
pub fn measure_to_file(image: &Path, settings: &MeasurementSettings, seed: u64, out: &Path) -> Result<MeasurementSet> {
    let truth = crate::io::load_gray(image)?;
    let set = settings.measure(&truth, seed)?;
    save_measurements(&set, out)?;
    Ok(set)
}
