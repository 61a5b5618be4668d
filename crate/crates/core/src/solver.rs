//! The outer alternating loop: code update, image update, dictionary update.

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;

use crate::dictionary::{bcd_pass, init_dictionary, Dictionary};
use crate::error::{Error, Result};
use crate::image_update::{data_fit, project_box, ObjectiveValue, PatchTerm, SmoothObjective, StepKind, StepPolicy, XStep};
use crate::linalg::least_squares;
use crate::measurements::MeasurementSet;
use crate::patches::{extract, reassemble, PatchGeometry, PatchMatrix};
use crate::rng::{stream_rng, SolverRng, Stream};
use crate::sparse_coding::{update_codes_l0, update_codes_l1, CodeMatrix, IstaStepConfig};

/// Relative slack allowed in the per-iteration descent check.
pub const DESCENT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// ℓ1-penalized codes updated by ISTA.
    L1,
    /// Codes with an explicit sparsity bound, computed by OMP.
    L0,
    /// Plain box-constrained Wirtinger flow; no patches.
    Wf,
    /// ℓ1 variant with the dictionary frozen at its initialization.
    PatchRegularizedWf,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::L1 => "l1",
            Variant::L0 => "l0",
            Variant::Wf => "wf",
            Variant::PatchRegularizedWf => "prwf",
        }
    }

    pub fn uses_patches(self) -> bool {
        self != Variant::Wf
    }

    pub fn learns_dictionary(self) -> bool {
        matches!(self, Variant::L1 | Variant::L0)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Variant::L1),
            "l0" => Ok(Variant::L0),
            "wf" => Ok(Variant::Wf),
            "prwf" => Ok(Variant::PatchRegularizedWf),
            other => Err(Error::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

/// Solver parameters. `mu`, `mu_phase2` and `lambda` are multiples of the
/// number of measurements `m_Y`; the absolute penalties are formed at run time.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Patch-fit weight (first phase for the ℓ0 variant).
    pub mu: f64,
    /// Patch-fit weight from iteration `k1` on (ℓ0 variant only).
    pub mu_phase2: f64,
    /// ℓ1 weight (ℓ1 variants only).
    pub lambda: f64,
    pub k_phase1: usize,
    pub k_phase2: usize,
    pub omp_eps: f64,
    /// Iterations with a fixed dictionary.
    pub k1: usize,
    /// Iterations with dictionary updates.
    pub k2: usize,
    pub geometry: PatchGeometry,
    pub step: StepKind,
    pub seed: u64,
    /// Code updates per outer iteration.
    pub a_updates: usize,
    /// Image updates per outer iteration; only 1 is supported.
    pub x_updates: usize,
    /// Dictionary passes per outer iteration.
    pub d_updates: usize,
    /// Starting Lipschitz guess for the per-column code steps. Backtracking
    /// only ever raises it, so a small value lets each column settle near its
    /// local constant.
    pub initial_lipschitz: f64,
}

impl SolverConfig {
    /// ℓ1 defaults: `K1 = 25`, `K2 = 50`, `(μ, λ) = (0.05, 0.003)·m_Y`.
    pub fn l1(geometry: PatchGeometry) -> Self {
        Self {
            variant: Variant::L1,
            mu: 0.05,
            mu_phase2: 0.05,
            lambda: 0.003,
            k_phase1: 4,
            k_phase2: 8,
            omp_eps: 0.1,
            k1: 25,
            k2: 50,
            geometry,
            step: StepKind::Heuristic,
            seed: 0,
            a_updates: 1,
            x_updates: 1,
            d_updates: 1,
            initial_lipschitz: 0.1,
        }
    }

    /// ℓ0 defaults: `K1 = K2 = 25`, `k = 4` then `8`, `μ = 0.005·m_Y` then `1.68μ`.
    pub fn l0(geometry: PatchGeometry) -> Self {
        Self {
            variant: Variant::L0,
            mu: 0.005,
            mu_phase2: 1.68 * 0.005,
            lambda: 0.0,
            k1: 25,
            k2: 25,
            ..Self::l1(geometry)
        }
    }

    /// Wirtinger flow for `iterations` steps.
    pub fn wf(geometry: PatchGeometry, iterations: usize) -> Self {
        Self {
            variant: Variant::Wf,
            mu: 0.0,
            mu_phase2: 0.0,
            lambda: 0.0,
            k1: iterations,
            k2: 0,
            ..Self::l1(geometry)
        }
    }

    /// ℓ1 penalties with a frozen dictionary for all `K1 + K2` iterations of the
    /// ℓ1 defaults.
    pub fn patch_regularized_wf(geometry: PatchGeometry) -> Self {
        let base = Self::l1(geometry);
        Self {
            variant: Variant::PatchRegularizedWf,
            k1: base.k1 + base.k2,
            k2: 0,
            ..base
        }
    }

    pub fn for_variant(variant: Variant, geometry: PatchGeometry) -> Self {
        match variant {
            Variant::L1 => Self::l1(geometry),
            Variant::L0 => Self::l0(geometry),
            Variant::Wf => Self::wf(geometry, 75),
            Variant::PatchRegularizedWf => Self::patch_regularized_wf(geometry),
        }
    }

    pub fn iterations(&self) -> usize {
        self.k1 + self.k2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.mu >= 0.0 && self.mu_phase2 >= 0.0 && self.lambda >= 0.0) {
            return bad(format!(
                "mu, mu_phase2 and lambda must be >= 0 (got {}, {}, {})",
                self.mu, self.mu_phase2, self.lambda
            ));
        }
        if self.x_updates != 1 {
            return bad(format!(
                "exactly one image update per iteration is supported, got {}",
                self.x_updates
            ));
        }
        if !(self.initial_lipschitz > 0.0) {
            return bad(format!("initial_lipschitz must be > 0, got {}", self.initial_lipschitz));
        }
        if self.a_updates == 0 || self.d_updates == 0 {
            return bad("code and dictionary update counts must be >= 1".into());
        }
        match self.variant {
            Variant::L1 | Variant::PatchRegularizedWf => {
                if !(self.mu > 0.0) {
                    return bad("the l1 variants need mu > 0".into());
                }
            }
            Variant::L0 => {
                if self.k_phase1 == 0 || self.k_phase2 == 0 || !(self.omp_eps >= 0.0) {
                    return bad("the l0 variant needs sparsity bounds >= 1 and omp_eps >= 0".into());
                }
                if self.k_phase1 > self.k_phase2 {
                    return bad("the phase-2 sparsity bound must not be below the phase-1 bound".into());
                }
                if !(self.mu > 0.0 && self.mu_phase2 > 0.0) {
                    return bad("the l0 variant needs mu > 0 in both phases".into());
                }
            }
            Variant::Wf => {}
        }
        if self.variant == Variant::PatchRegularizedWf && self.k2 != 0 {
            return bad("patch-regularized WF runs with k2 = 0".into());
        }
        Ok(())
    }

    /// Absolute patch-fit weight in effect at `iteration`.
    pub fn mu_at(&self, iteration: usize, measurements: usize) -> f64 {
        let m = measurements as f64;
        match self.variant {
            Variant::Wf => 0.0,
            Variant::L0 if iteration >= self.k1 => self.mu_phase2 * m,
            _ => self.mu * m,
        }
    }

    /// Absolute ℓ1 weight.
    pub fn lambda_abs(&self, measurements: usize) -> f64 {
        match self.variant {
            Variant::L1 | Variant::PatchRegularizedWf => self.lambda * measurements as f64,
            _ => 0.0,
        }
    }

    /// Sparsity bound in effect at `iteration` (ℓ0 variant).
    pub fn k_at(&self, iteration: usize) -> usize {
        if iteration >= self.k1 {
            self.k_phase2
        } else {
            self.k_phase1
        }
    }
}

/// Which sub-updates made no progress in an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StallFlags {
    pub codes: bool,
    pub image: bool,
    pub dictionary: bool,
}

impl StallFlags {
    pub fn all(&self) -> bool {
        self.codes && self.image && self.dictionary
    }
}

/// One line of the objective trace. Row 0 describes the starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: ObjectiveValue,
    /// Accepted image step, `0` when the image step stalled.
    pub gamma_x: f64,
    pub mean_l0: f64,
    pub stalls: StallFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Running,
    BudgetExhausted,
    /// Every sub-update stalled in the last iteration.
    Stalled,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Array2<f64>,
    pub dictionary: Dictionary,
    pub codes: CodeMatrix,
    /// Number of completed outer iterations.
    pub iteration: usize,
    pub trace: Vec<TraceRow>,
    pub step: StepPolicy,
    /// Warm-start Lipschitz estimate per code column.
    pub lipschitz: Vec<f64>,
    /// Source of replacement atoms.
    pub rng: SolverRng,
    pub termination: Termination,
}

impl SolverState {
    pub fn objective_totals(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.objective.total).collect()
    }

    pub fn step_trace(&self) -> Vec<f64> {
        self.trace.iter().skip(1).map(|r| r.gamma_x).collect()
    }
}

/// The image variable and the box-projected patch reassembly.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionPair {
    pub x_estimate: Array2<f64>,
    /// `P(R(DA))`; absent for plain Wirtinger flow.
    pub patch_estimate: Option<Array2<f64>>,
}

/// A finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverRun {
    pub state: SolverState,
    pub reconstruction: ReconstructionPair,
}

/// Mean number of nonzeros per code column.
pub fn mean_l0(codes: &CodeMatrix) -> f64 {
    let p = codes.patches();
    if p == 0 {
        return 0.0;
    }
    codes.nonzeros_per_column().iter().sum::<usize>() as f64 / p as f64
}

/// The objective at `(X, D, A)` with the penalties in effect at `state.iteration`.
pub fn evaluate_objective(state: &SolverState, measurements: &MeasurementSet, config: &SolverConfig) -> Result<ObjectiveValue> {
    objective_at(&state.x, &state.dictionary, &state.codes, measurements, config, state.iteration)
}

fn objective_at(
    x: &Array2<f64>,
    dictionary: &Dictionary,
    codes: &CodeMatrix,
    measurements: &MeasurementSet,
    config: &SolverConfig,
    iteration: usize,
) -> Result<ObjectiveValue> {
    let phi = data_fit(x.view(), measurements)?;
    if !config.variant.uses_patches() {
        return Ok(ObjectiveValue::new(phi, 0.0, 0.0));
    }
    let mu = config.mu_at(iteration, measurements.len());
    let target = dictionary.entries.dot(&codes.entries);
    let psi = PatchTerm::new(mu, &config.geometry, target.view())?.value(x.view())?;
    let sparsity = config.lambda_abs(measurements.len()) * codes.l1_norm();
    Ok(ObjectiveValue::new(phi, psi, sparsity))
}

/// Uniform random starting image from the init stream of `seed`.
pub fn random_start(shape: (usize, usize), seed: u64) -> Array2<f64> {
    let mut rng = stream_rng(seed, Stream::Init);
    Array2::from_shape_simple_fn(shape, || rng.random::<f64>())
}

/// `γ₀ = 10⁴ / f₀`, with `f₀` the objective at `X₀`, `D₀` and least-squares codes.
fn initial_gamma(f0: f64) -> f64 {
    if f0 > 0.0 {
        1e4 / f0
    } else {
        1.0
    }
}

/// State at iteration 0 from the random start of `config.seed`.
pub fn initial_state(measurements: &MeasurementSet, config: &SolverConfig) -> Result<SolverState> {
    let x0 = random_start(measurements.operator.input_shape(), config.seed);
    initial_state_from(measurements, config, x0)
}

/// State at iteration 0 from a given starting image.
pub fn initial_state_from(measurements: &MeasurementSet, config: &SolverConfig, x0: Array2<f64>) -> Result<SolverState> {
    config.validate()?;
    crate::error::check_dims(measurements.operator.input_shape(), x0.dim())?;
    if config.variant.uses_patches() {
        crate::error::check_dims(config.geometry.image_shape(), x0.dim())?;
    }
    let (rows, cols) = config.geometry.patch_shape();
    let dictionary = if config.variant.uses_patches() {
        init_dictionary(rows, cols)
    } else {
        Dictionary {
            entries: Array2::zeros((0, 0)),
        }
    };
    let x0 = project_box(x0.view());

    let (codes, objective, gamma0) = if config.variant.uses_patches() {
        let patches = extract(x0.view(), &config.geometry)?;
        let ls = CodeMatrix {
            entries: least_squares(dictionary.view(), patches.entries.view()),
        };
        let f0 = objective_at(&x0, &dictionary, &ls, measurements, config, 0)?;
        let codes = match config.variant {
            Variant::L0 => update_codes_l0(patches.entries.view(), dictionary.view(), config.k_at(0), config.omp_eps)?,
            _ => ls,
        };
        let objective = objective_at(&x0, &dictionary, &codes, measurements, config, 0)?;
        (codes, objective, initial_gamma(f0.total))
    } else {
        let phi = data_fit(x0.view(), measurements)?;
        (CodeMatrix::zeros(0, 0), ObjectiveValue::new(phi, 0.0, 0.0), initial_gamma(phi))
    };

    let lipschitz = vec![config.initial_lipschitz; codes.patches()];
    Ok(SolverState {
        trace: vec![TraceRow {
            iteration: 0,
            objective,
            gamma_x: 0.0,
            mean_l0: mean_l0(&codes),
            stalls: StallFlags::default(),
        }],
        x: x0,
        dictionary,
        codes,
        iteration: 0,
        step: StepPolicy::start(config.step, gamma0),
        lipschitz,
        rng: stream_rng(config.seed, Stream::Dictionary),
        termination: if config.iterations() == 0 {
            Termination::BudgetExhausted
        } else {
            Termination::Running
        },
    })
}

/// ℓ0 code update that keeps a column's previous code whenever OMP does not
/// improve its fit and the previous code already satisfies the bound `k`.
fn update_codes_l0_monotone(codes: &CodeMatrix, patches: &PatchMatrix, dictionary: &Dictionary, k: usize, eps: f64) -> Result<CodeMatrix> {
    let mut fresh = update_codes_l0(patches.entries.view(), dictionary.view(), k, eps)?;
    let d = dictionary.view();
    let column_fit = |a: ndarray::ArrayView1<f64>, x: ndarray::ArrayView1<f64>| {
        let r = d.dot(&a) - x;
        r.dot(&r)
    };
    let old_counts = codes.nonzeros_per_column();
    for (i, &count) in old_counts.iter().enumerate() {
        if count > k {
            continue;
        }
        let x = patches.entries.column(i);
        if column_fit(fresh.entries.column(i), x) > column_fit(codes.entries.column(i), x) {
            fresh.entries.column_mut(i).assign(&codes.entries.column(i));
        }
    }
    Ok(fresh)
}

/// Runs one outer iteration and appends its trace row.
///
/// Returns an error if the objective increases by more than
/// [`DESCENT_SLACK`] relative to its value before the iteration.
pub fn iterate(state: &mut SolverState, measurements: &MeasurementSet, config: &SolverConfig) -> Result<()> {
    if state.termination != Termination::Running {
        return Ok(());
    }
    let l = state.iteration;
    let mut stalls = StallFlags {
        codes: true,
        image: true,
        dictionary: true,
    };
    let before = if l > 0 && config.variant == Variant::L0 && l == config.k1 {
        objective_at(&state.x, &state.dictionary, &state.codes, measurements, config, l)?.total
    } else {
        state.trace.last().expect("trace starts with the initial row").objective.total
    };

    if config.variant.uses_patches() {
        let patches = extract(state.x.view(), &config.geometry)?;
        let m = measurements.len();
        for _ in 0..config.a_updates {
            let updated = match config.variant {
                Variant::L0 => update_codes_l0_monotone(&state.codes, &patches, &state.dictionary, config.k_at(l), config.omp_eps)?,
                _ => {
                    let mu = config.mu_at(l, m);
                    let cfg = IstaStepConfig::new(config.lambda_abs(m) / mu, state.lipschitz[0]);
                    let up = update_codes_l1(
                        &state.codes,
                        patches.entries.view(),
                        state.dictionary.view(),
                        &cfg,
                        &state.lipschitz,
                    )?;
                    for (lip, g) in state.lipschitz.iter_mut().zip(&up.gammas) {
                        if *g > 0.0 {
                            *lip = 1.0 / g;
                        }
                    }
                    up.codes
                }
            };
            if updated != state.codes {
                stalls.codes = false;
            }
            state.codes = updated;
        }
    }

    let step = image_step(state, measurements, config)?;
    stalls.image = step.stalled;
    let gamma_x = step.gamma;
    state.x = step.x;

    if config.variant.learns_dictionary() && l >= config.k1 {
        let patches = extract(state.x.view(), &config.geometry)?;
        for _ in 0..config.d_updates {
            let up = bcd_pass(&state.dictionary, &state.codes, patches.entries.view(), &mut state.rng)?;
            if up.dictionary != state.dictionary {
                stalls.dictionary = false;
            }
            state.dictionary = up.dictionary;
        }
    }

    state.iteration = l + 1;
    let objective = objective_at(&state.x, &state.dictionary, &state.codes, measurements, config, l)?;
    if objective.total > before + DESCENT_SLACK * before.abs() {
        return Err(Error::DescentViolation {
            iteration: l,
            before,
            after: objective.total,
        });
    }
    state.trace.push(TraceRow {
        iteration: l + 1,
        objective,
        gamma_x,
        mean_l0: mean_l0(&state.codes),
        stalls,
    });
    state.termination = if stalls.all() {
        Termination::Stalled
    } else if state.iteration >= config.iterations() {
        Termination::BudgetExhausted
    } else {
        Termination::Running
    };
    Ok(())
}

fn image_step(state: &mut SolverState, measurements: &MeasurementSet, config: &SolverConfig) -> Result<XStep> {
    let target;
    let patch = if config.variant.uses_patches() {
        target = state.dictionary.entries.dot(&state.codes.entries);
        let mu = config.mu_at(state.iteration, measurements.len());
        Some(PatchTerm::new(mu, &config.geometry, target.view())?)
    } else {
        None
    };
    let smooth = SmoothObjective { measurements, patch };
    let (value, grad) = smooth.value_and_gradient(state.x.view())?;
    state.step.step(state.x.view(), value, grad.view(), |cand| smooth.value(cand))
}

/// Runs `state` until its budget is used up or it stalls.
pub fn run_from(mut state: SolverState, measurements: &MeasurementSet, config: &SolverConfig) -> Result<SolverRun> {
    while state.termination == Termination::Running {
        iterate(&mut state, measurements, config)?;
    }
    let reconstruction = reconstruct(&state, config);
    Ok(SolverRun { state, reconstruction })
}

/// Full run from the random start of `config.seed`.
pub fn run_dolphin(measurements: &MeasurementSet, config: &SolverConfig) -> Result<SolverRun> {
    run_from(initial_state(measurements, config)?, measurements, config)
}

/// Dictionary frozen at `D₀`, no dictionary phase.
pub fn run_patch_regularized_wf(measurements: &MeasurementSet, config: &SolverConfig) -> Result<SolverRun> {
    let config = SolverConfig {
        variant: Variant::PatchRegularizedWf,
        k1: config.iterations(),
        k2: 0,
        ..config.clone()
    };
    run_dolphin(measurements, &config)
}

/// `X` and `P(R(DA))` from a state.
pub fn reconstruct(state: &SolverState, config: &SolverConfig) -> ReconstructionPair {
    let patch_estimate = config.variant.uses_patches().then(|| {
        let da = PatchMatrix {
            entries: state.dictionary.entries.dot(&state.codes.entries),
            geometry: config.geometry,
        };
        project_box(reassemble(&da).view())
    });
    ReconstructionPair {
        x_estimate: state.x.clone(),
        patch_estimate,
    }
}

/// Projected gradient descent on `¼‖Y − |F(X)|²‖²` over `[0, 1]`, starting
/// at `x0` with the step rule `step` and `γ₀ = 10⁴ / φ(X₀)`.
pub fn run_wf_baseline(measurements: &MeasurementSet, iters: usize, step: StepKind, x0: ArrayView2<f64>) -> Result<Array2<f64>> {
    let smooth = SmoothObjective { measurements, patch: None };
    let mut x = project_box(x0);
    let mut policy = StepPolicy::start(step, initial_gamma(data_fit(x.view(), measurements)?));
    for _ in 0..iters {
        let (value, grad) = smooth.value_and_gradient(x.view())?;
        let s = policy.step(x.view(), value, grad.view(), |cand| smooth.value(cand))?;
        if s.stalled {
            break;
        }
        x = s.x;
    }
    Ok(x)
}

/// `‖X − Y‖_F`.
pub fn frobenius_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    Zip::from(&a).and(&b).fold(0.0, |acc, x, y| acc + (x - y) * (x - y)).sqrt()
}
