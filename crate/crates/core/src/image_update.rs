//! The image update: gradients of the smooth objective part, the box
//! projection, and the two step-size rules for the projected gradient step.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{check_dims, Error, Result};
use crate::measurements::MeasurementSet;
use crate::patches::{extract, extract_adjoint, PatchGeometry, PatchMatrix};

/// Objective terms `¼‖Y − |F(X)|²‖²`, `(μ/2)‖E(X) − DA‖²` and `λΣ‖aⁱ‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub data_fit: f64,
    pub patch_fit: f64,
    pub sparsity: f64,
    pub total: f64,
}

impl ObjectiveValue {
    pub fn new(data_fit: f64, patch_fit: f64, sparsity: f64) -> Self {
        Self {
            data_fit,
            patch_fit,
            sparsity,
            total: data_fit + patch_fit + sparsity,
        }
    }
}

/// Entrywise clamp to `[0, 1]`.
pub fn project_box(z: ArrayView2<f64>) -> Array2<f64> {
    z.mapv(|v| v.clamp(0.0, 1.0))
}

/// `¼‖Y − |F(X)|²‖²_F`.
pub fn data_fit(x: ArrayView2<f64>, m: &MeasurementSet) -> Result<f64> {
    let fx = m.operator.forward_real(x)?;
    Ok(0.25
        * Zip::from(&fx).and(&m.y).fold(0.0, |acc, f, y| {
            let r = f.norm_sqr() - y;
            acc + r * r
        }))
}

/// `∇φ(X) = Re(F*(F(X) ⊙ (|F(X)|² − Y)))`, returned with `φ(X)`.
pub fn data_fit_and_gradient(x: ArrayView2<f64>, m: &MeasurementSet) -> Result<(f64, Array2<f64>)> {
    let mut fx = m.operator.forward_real(x)?;
    let mut value = 0.0;
    Zip::from(&mut fx).and(&m.y).for_each(|f, y| {
        let r = f.norm_sqr() - y;
        value += r * r;
        *f *= r;
    });
    Ok((0.25 * value, m.operator.adjoint_real_part(fx.view())?))
}

pub fn grad_data_fit(x: ArrayView2<f64>, m: &MeasurementSet) -> Result<Array2<f64>> {
    Ok(data_fit_and_gradient(x, m)?.1)
}

/// `∇ψ(X) = μ E*(E(X) − DA)`.
pub fn grad_patch_fit(
    x: ArrayView2<f64>,
    d: ArrayView2<f64>,
    a: ArrayView2<f64>,
    mu: f64,
    geometry: &PatchGeometry,
) -> Result<Array2<f64>> {
    check_dims((geometry.patch_len(), geometry.patch_count()), (d.nrows(), a.ncols()))?;
    let target = d.dot(&a);
    PatchTerm::new(mu, geometry, target.view())?.value_and_gradient(x).map(|(_, g)| g)
}

/// The patch-fit term `(μ/2)‖E(X) − T‖²` for a fixed target `T = DA`.
#[derive(Debug, Clone, Copy)]
pub struct PatchTerm<'a> {
    mu: f64,
    geometry: &'a PatchGeometry,
    target: ArrayView2<'a, f64>,
}

impl<'a> PatchTerm<'a> {
    pub fn new(mu: f64, geometry: &'a PatchGeometry, target: ArrayView2<'a, f64>) -> Result<Self> {
        check_dims((geometry.patch_len(), geometry.patch_count()), target.dim())?;
        Ok(Self { mu, geometry, target })
    }

    pub fn value(&self, x: ArrayView2<f64>) -> Result<f64> {
        let e = extract(x, self.geometry)?;
        Ok(0.5
            * self.mu
            * Zip::from(&e.entries)
                .and(&self.target)
                .fold(0.0, |acc, e, t| acc + (e - t) * (e - t)))
    }

    pub fn value_and_gradient(&self, x: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
        let mut e = extract(x, self.geometry)?;
        let mut value = 0.0;
        Zip::from(&mut e.entries).and(&self.target).for_each(|e, t| {
            *e -= t;
            value += *e * *e;
        });
        let mut grad = extract_adjoint(&PatchMatrix {
            entries: e.entries,
            geometry: *self.geometry,
        });
        grad *= self.mu;
        Ok((0.5 * self.mu * value, grad))
    }
}

/// `φ + ψ`, the part of the objective the image update sees.
#[derive(Debug, Clone, Copy)]
pub struct SmoothObjective<'a> {
    pub measurements: &'a MeasurementSet,
    pub patch: Option<PatchTerm<'a>>,
}

impl SmoothObjective<'_> {
    /// `(φ(X), ψ(X))`.
    pub fn parts(&self, x: ArrayView2<f64>) -> Result<(f64, f64)> {
        let phi = data_fit(x, self.measurements)?;
        let psi = match &self.patch {
            Some(p) => p.value(x)?,
            None => 0.0,
        };
        Ok((phi, psi))
    }

    pub fn value(&self, x: ArrayView2<f64>) -> Result<f64> {
        let (phi, psi) = self.parts(x)?;
        Ok(phi + psi)
    }

    pub fn value_and_gradient(&self, x: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
        let (phi, mut grad) = data_fit_and_gradient(x, self.measurements)?;
        let mut value = phi;
        if let Some(p) = &self.patch {
            let (psi, g) = p.value_and_gradient(x)?;
            value += psi;
            grad += &g;
        }
        Ok((value, grad))
    }
}

/// Halve-until-decrease rule with regrowth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicStep {
    /// Step tried first in the next call.
    pub gamma: f64,
    pub grow: f64,
    pub max_trials: usize,
}

impl HeuristicStep {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            grow: 1.68,
            max_trials: 100,
        }
    }
}

/// Armijo rule: the largest `γ ∈ {η̄ ηᵏ}` with
/// `f(P(X − γΓ)) − f(X) ≤ −‖P(X − γΓ) − X‖² / (2γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoStep {
    pub eta: f64,
    /// First trial step `η̄` of the next call.
    pub eta_bar: f64,
    /// After acceptance the next `η̄` is `reach` times the accepted step.
    pub reach: f64,
    pub max_trials: usize,
}

impl ArmijoStep {
    pub fn new(eta_bar: f64) -> Self {
        Self {
            eta: 0.5,
            eta_bar,
            reach: 2.0,
            max_trials: 10_000,
        }
    }
}

/// Step-size rule for the image update, carrying its adaptive state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    Heuristic(HeuristicStep),
    Armijo(ArmijoStep),
}

/// Which rule to build at solver start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Heuristic,
    Armijo,
}

impl StepKind {
    pub fn name(self) -> &'static str {
        match self {
            StepKind::Heuristic => "heuristic",
            StepKind::Armijo => "armijo",
        }
    }
}

impl std::str::FromStr for StepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(StepKind::Heuristic),
            "armijo" => Ok(StepKind::Armijo),
            other => Err(Error::InvalidConfig(format!("unknown step policy `{other}`"))),
        }
    }
}

impl StepPolicy {
    /// Policy of `kind` whose first trial step is `gamma`.
    pub fn start(kind: StepKind, gamma: f64) -> Self {
        match kind {
            StepKind::Heuristic => StepPolicy::Heuristic(HeuristicStep::new(gamma)),
            StepKind::Armijo => StepPolicy::Armijo(ArmijoStep::new(gamma)),
        }
    }

    pub fn kind(&self) -> StepKind {
        match self {
            StepPolicy::Heuristic(_) => StepKind::Heuristic,
            StepPolicy::Armijo(_) => StepKind::Armijo,
        }
    }

    /// The step the next call will try first.
    pub fn next_gamma(&self) -> f64 {
        match self {
            StepPolicy::Heuristic(h) => h.gamma,
            StepPolicy::Armijo(a) => a.eta_bar,
        }
    }

    /// Dispatches to [`x_step_heuristic`] or [`x_step_armijo`].
    pub fn step(
        &mut self,
        x: ArrayView2<f64>,
        value: f64,
        grad: ArrayView2<f64>,
        evaluate: impl FnMut(ArrayView2<f64>) -> Result<f64>,
    ) -> Result<XStep> {
        match self {
            StepPolicy::Heuristic(h) => x_step_heuristic(x, value, grad, h, evaluate),
            StepPolicy::Armijo(a) => x_step_armijo(x, value, grad, a, evaluate),
        }
    }
}

/// Outcome of one projected gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct XStep {
    pub x: Array2<f64>,
    /// Objective at `x`.
    pub value: f64,
    /// Accepted step, `0` if no trial was accepted.
    pub gamma: f64,
    pub trials: usize,
    pub stalled: bool,
}

fn candidate(x: ArrayView2<f64>, grad: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    Zip::from(&x).and(&grad).map_collect(|&x, &g| (x - gamma * g).clamp(0.0, 1.0))
}

/// Tries `γ, γ/2, γ/4, …` (at most `max_trials`) and accepts the first
/// projected step that strictly lowers the objective. The next call starts at
/// `grow` times the accepted step, or times the last tried step on a stall.
pub fn x_step_heuristic(
    x: ArrayView2<f64>,
    value: f64,
    grad: ArrayView2<f64>,
    policy: &mut HeuristicStep,
    mut evaluate: impl FnMut(ArrayView2<f64>) -> Result<f64>,
) -> Result<XStep> {
    if grad.iter().all(|g| *g == 0.0) {
        policy.gamma *= policy.grow;
        return Ok(XStep {
            x: x.to_owned(),
            value,
            gamma: 0.0,
            trials: 0,
            stalled: true,
        });
    }
    let mut gamma = policy.gamma;
    for trial in 1..=policy.max_trials {
        let cand = candidate(x, grad, gamma);
        let v = evaluate(cand.view())?;
        if v < value {
            policy.gamma = policy.grow * gamma;
            return Ok(XStep {
                x: cand,
                value: v,
                gamma,
                trials: trial,
                stalled: false,
            });
        }
        if trial < policy.max_trials {
            gamma *= 0.5;
        }
    }
    policy.gamma = policy.grow * gamma;
    Ok(XStep {
        x: x.to_owned(),
        value,
        gamma: 0.0,
        trials: policy.max_trials,
        stalled: true,
    })
}

/// Armijo backtracking over `{η̄ ηᵏ}`; the accepted step satisfies the
/// sufficient-decrease inequality exactly as evaluated.
pub fn x_step_armijo(
    x: ArrayView2<f64>,
    value: f64,
    grad: ArrayView2<f64>,
    policy: &mut ArmijoStep,
    mut evaluate: impl FnMut(ArrayView2<f64>) -> Result<f64>,
) -> Result<XStep> {
    let mut gamma = policy.eta_bar;
    for trial in 1..=policy.max_trials {
        if !(gamma > 0.0) {
            break;
        }
        let cand = candidate(x, grad, gamma);
        let moved = Zip::from(&cand).and(&x).fold(0.0, |acc, c, x| acc + (c - x) * (c - x));
        let v = if moved == 0.0 { value } else { evaluate(cand.view())? };
        if armijo_holds(value, v, moved, gamma) {
            policy.eta_bar = policy.reach * gamma;
            return Ok(XStep {
                x: cand,
                value: v,
                gamma,
                trials: trial,
                stalled: false,
            });
        }
        gamma *= policy.eta;
    }
    Ok(XStep {
        x: x.to_owned(),
        value,
        gamma: 0.0,
        trials: policy.max_trials,
        stalled: true,
    })
}

/// `f_new − f_old ≤ −moved / (2γ)` where `moved = ‖X_new − X_old‖²`.
pub fn armijo_holds(f_old: f64, f_new: f64, moved: f64, gamma: f64) -> bool {
    f_new - f_old <= -moved / (2.0 * gamma)
}
