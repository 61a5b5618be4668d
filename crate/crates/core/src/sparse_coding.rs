//! Sparse coding of patches: one backtracked ISTA step per column for the
//! ℓ1-penalized model, and orthogonal matching pursuit for the ℓ0-constrained
//! model.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Dimension, Zip};
use rayon::prelude::*;

use crate::error::{check_dims, Error, Result};
use crate::linalg::cholesky_solve;

/// Coefficient matrix `A` (`n x p`), one code per patch column.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix {
    pub entries: Array2<f64>,
}

impl CodeMatrix {
    pub fn zeros(atoms: usize, patches: usize) -> Self {
        Self {
            entries: Array2::zeros((atoms, patches)),
        }
    }

    pub fn atoms(&self) -> usize {
        self.entries.nrows()
    }

    pub fn patches(&self) -> usize {
        self.entries.ncols()
    }

    /// Exact nonzero count of every column.
    pub fn nonzeros_per_column(&self) -> Vec<usize> {
        self.entries
            .axis_iter(Axis(1))
            .map(|c| c.iter().filter(|v| **v != 0.0).count())
            .collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|v| v.abs()).sum()
    }
}

/// `max(0, |v| - tau) * sign(v)`.
#[inline]
pub fn shrink(v: f64, tau: f64) -> f64 {
    let m = v.abs() - tau;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

/// Entrywise soft-thresholding `S_tau`.
pub fn soft_threshold<D: Dimension>(z: ndarray::ArrayView<f64, D>, tau: f64) -> ndarray::Array<f64, D> {
    assert!(tau >= 0.0, "threshold must be non-negative");
    z.mapv(|v| shrink(v, tau))
}

/// Parameters of one backtracked ISTA step on
/// `F(a) = ½‖x − Da‖² + (λ/μ)‖a‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IstaStepConfig {
    pub lambda_over_mu: f64,
    pub backtrack_growth: f64,
    /// Starting estimate of the local Lipschitz constant (inverse step).
    pub initial_lipschitz: f64,
    pub max_backtracks: usize,
}

impl IstaStepConfig {
    pub fn new(lambda_over_mu: f64, initial_lipschitz: f64) -> Self {
        Self {
            lambda_over_mu,
            backtrack_growth: 2.0,
            initial_lipschitz,
            max_backtracks: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_over_mu >= 0.0) || !(self.backtrack_growth > 1.0) || !(self.initial_lipschitz > 0.0) || self.max_backtracks == 0 {
            return Err(Error::InvalidConfig(format!("invalid ISTA step configuration {self:?}")));
        }
        Ok(())
    }
}

/// Composite ISTA objective `½‖x − Da‖² + (λ/μ)‖a‖₁` of one column.
pub fn column_objective(a: ArrayView1<f64>, x: ArrayView1<f64>, d: ArrayView2<f64>, lambda_over_mu: f64) -> f64 {
    let r = d.dot(&a) - x;
    0.5 * r.dot(&r) + lambda_over_mu * a.iter().map(|v| v.abs()).sum::<f64>()
}

/// Outcome of [`ista_column_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct IstaStep {
    pub code: Array1<f64>,
    /// Accepted step `1/L`, or `0` when backtracking ran out.
    pub gamma: f64,
}

/// One proximal-gradient step `a ← S_{γλ/μ}(a − γDᵀ(Da − x))` with
/// Beck–Teboulle backtracking on `L = 1/γ`, starting at `cfg.initial_lipschitz`.
///
/// The accepted point satisfies `F(a_new) ≤ F(a) − (1/2γ)‖a_new − a‖²`.
pub fn ista_column_step(a: ArrayView1<f64>, x: ArrayView1<f64>, d: ArrayView2<f64>, cfg: &IstaStepConfig) -> IstaStep {
    let residual = d.dot(&a) - x;
    let grad = d.t().dot(&residual);
    let smooth = 0.5 * residual.dot(&residual);
    let slack = 1e-13 * smooth.max(f64::MIN_POSITIVE);

    let mut lipschitz = cfg.initial_lipschitz;
    for _ in 0..cfg.max_backtracks {
        let step = 1.0 / lipschitz;
        let tau = step * cfg.lambda_over_mu;
        let candidate = Zip::from(&a).and(&grad).map_collect(|&a, &g| shrink(a - step * g, tau));
        let delta = &candidate - &a;
        let r = d.dot(&candidate) - x;
        let model = smooth + grad.dot(&delta) + 0.5 * lipschitz * delta.dot(&delta);
        if 0.5 * r.dot(&r) <= model + slack {
            return IstaStep {
                code: candidate,
                gamma: step,
            };
        }
        lipschitz *= cfg.backtrack_growth;
    }
    IstaStep {
        code: a.to_owned(),
        gamma: 0.0,
    }
}

/// `‖D‖₁ ‖D‖_∞`, an upper bound on `‖DᵀD‖₂`.
pub fn lipschitz_bound(d: ArrayView2<f64>) -> f64 {
    let max_col = d
        .axis_iter(Axis(1))
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let max_row = d
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    max_col * max_row
}

/// Result of a full ℓ1 code update.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeUpdate {
    pub codes: CodeMatrix,
    /// Accepted per-column step sizes (`0` marks a stalled column).
    pub gammas: Vec<f64>,
}

impl CodeUpdate {
    pub fn stalled_columns(&self) -> usize {
        self.gammas.iter().filter(|g| **g == 0.0).count()
    }
}

/// One ISTA step on every column, each with its own backtracking started at
/// `lipschitz[i]` (warm start); columns are processed in parallel.
pub fn update_codes_l1(
    codes: &CodeMatrix,
    patches: ArrayView2<f64>,
    d: ArrayView2<f64>,
    cfg: &IstaStepConfig,
    lipschitz: &[f64],
) -> Result<CodeUpdate> {
    cfg.validate()?;
    check_dims((d.ncols(), patches.ncols()), codes.entries.dim())?;
    check_dims((d.nrows(), patches.ncols()), patches.dim())?;
    if lipschitz.len() != patches.ncols() {
        return Err(Error::InvalidConfig("one Lipschitz estimate per column is required".into()));
    }
    let steps: Vec<IstaStep> = (0..patches.ncols())
        .into_par_iter()
        .map(|i| {
            let column_cfg = IstaStepConfig {
                initial_lipschitz: lipschitz[i],
                ..*cfg
            };
            ista_column_step(codes.entries.column(i), patches.column(i), d, &column_cfg)
        })
        .collect();
    let mut entries = Array2::zeros(codes.entries.dim());
    let mut gammas = Vec::with_capacity(steps.len());
    for (i, step) in steps.into_iter().enumerate() {
        entries.column_mut(i).assign(&step.code);
        gammas.push(step.gamma);
    }
    Ok(CodeUpdate {
        codes: CodeMatrix { entries },
        gammas,
    })
}

/// Orthogonal matching pursuit: greedily adds the atom most correlated with
/// the residual (ties to the lowest index), refits on the active set by least
/// squares, and stops at `k` atoms or once `‖x − Da‖₂ ≤ eps`. A rank-deficient
/// active set ends the pursuit with the previous fit.
pub fn omp_encode(x: ArrayView1<f64>, d: ArrayView2<f64>, k: usize, eps: f64) -> Array1<f64> {
    omp_trace(x, d, k, eps).0
}

/// [`omp_encode`] plus the residual norm after every round (index 0 is `‖x‖`).
pub fn omp_trace(x: ArrayView1<f64>, d: ArrayView2<f64>, k: usize, eps: f64) -> (Array1<f64>, Vec<f64>) {
    let n = d.ncols();
    let mut code = Array1::zeros(n);
    let mut residual = x.to_owned();
    let mut norms = vec![residual.dot(&residual).sqrt()];
    let mut support: Vec<usize> = Vec::with_capacity(k);
    while support.len() < k.min(n) && *norms.last().unwrap() > eps {
        let correlations = d.t().dot(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in correlations.iter().enumerate() {
            if support.contains(&j) {
                continue;
            }
            if best.is_none_or(|(_, b)| c.abs() > b) {
                best = Some((j, c.abs()));
            }
        }
        let Some((atom, corr)) = best else { break };
        if corr == 0.0 {
            break;
        }
        support.push(atom);
        let sub = d.select(Axis(1), &support);
        let gram = sub.t().dot(&sub);
        let rhs = sub.t().dot(&x);
        let Some(coefs) = cholesky_solve(&gram, &rhs, 1e-12) else {
            support.pop();
            break;
        };
        let fit = sub.dot(&coefs);
        let new_residual = &x - &fit;
        let norm = new_residual.dot(&new_residual).sqrt();
        if norm >= *norms.last().unwrap() {
            support.pop();
            break;
        }
        code.fill(0.0);
        for (&j, &c) in support.iter().zip(coefs.iter()) {
            code[j] = c;
        }
        residual = new_residual;
        norms.push(norm);
    }
    (code, norms)
}

/// OMP on every patch column, in parallel.
pub fn update_codes_l0(patches: ArrayView2<f64>, d: ArrayView2<f64>, k: usize, eps: f64) -> Result<CodeMatrix> {
    if k == 0 || !(eps >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "OMP needs k >= 1 and eps >= 0 (got k = {k}, eps = {eps})"
        )));
    }
    check_dims((d.nrows(), patches.ncols()), patches.dim())?;
    let columns: Vec<Array1<f64>> = (0..patches.ncols())
        .into_par_iter()
        .map(|i| omp_encode(patches.column(i), d, k, eps))
        .collect();
    let mut entries = Array2::zeros((d.ncols(), patches.ncols()));
    for (i, c) in columns.into_iter().enumerate() {
        entries.column_mut(i).assign(&c);
    }
    Ok(CodeMatrix { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn(shape, || StandardNormal.sample(rng))
    }

    fn unit_columns(mut d: Array2<f64>) -> Array2<f64> {
        for mut c in d.axis_iter_mut(Axis(1)) {
            let n = c.dot(&c).sqrt();
            c /= n;
        }
        d
    }

    #[test]
    fn soft_threshold_formula() {
        let z = array![1.0, -0.2, 0.7];
        let s = soft_threshold(z.view(), 0.5);
        for (a, b) in s.iter().zip([0.5, 0.0, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(soft_threshold(z.view(), 0.0), z);
    }

    #[test]
    fn soft_threshold_sparsity_monotone_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = gaussian((6, 7), &mut rng);
        let mut last = usize::MAX;
        for t in 0..=10 {
            let nnz = soft_threshold(z.view(), t as f64 * 0.1).iter().filter(|v| **v != 0.0).count();
            assert!(nnz <= last);
            last = nnz;
        }
    }

    #[test]
    fn soft_threshold_is_scalar_prox() {
        // grid search on ½(u − z)² + τ|u|
        for &(z, tau) in &[(1.3, 0.4), (-0.7, 0.2), (0.1, 0.5), (-2.0, 1.5)] {
            let objective = |u: f64| 0.5 * (u - z) * (u - z) + tau * u.abs();
            let best = (-40000..=40000)
                .map(|i| i as f64 * 1e-4)
                .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
                .unwrap();
            assert!((shrink(z, tau) - best).abs() <= 1e-4);
        }
    }

    #[test]
    fn ista_identity_closed_form() {
        let d = Array2::eye(2);
        let cfg = IstaStepConfig::new(0.1, 1.0);
        let step = ista_column_step(array![0.0, 0.0].view(), array![1.0, 0.0].view(), d.view(), &cfg);
        assert_eq!(step.gamma, 1.0);
        assert!((step.code[0] - 0.9).abs() < 1e-15 && step.code[1] == 0.0);
    }

    #[test]
    fn ista_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = gaussian((4, 6), &mut rng);
        let a = Array1::from_shape_simple_fn(6, || rng.random::<f64>());
        let x = d.dot(&a);
        let cfg = IstaStepConfig::new(0.0, lipschitz_bound(d.view()));
        let step = ista_column_step(a.view(), x.view(), d.view(), &cfg);
        for (u, v) in step.code.iter().zip(a.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn ista_descent_over_seeds() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = unit_columns(gaussian((8, 16), &mut rng));
            let x = Array1::from_shape_simple_fn(8, || StandardNormal.sample(&mut rng));
            let a = Array1::from_shape_simple_fn(16, || rng.random::<f64>() - 0.5);
            // deliberately small Lipschitz guess to exercise backtracking
            let cfg = IstaStepConfig::new(0.05, 0.1);
            let step = ista_column_step(a.view(), x.view(), d.view(), &cfg);
            assert!(step.gamma > 0.0);
            let before = column_objective(a.view(), x.view(), d.view(), 0.05);
            let after = column_objective(step.code.view(), x.view(), d.view(), 0.05);
            let moved = (&step.code - &a).mapv(|v| v * v).sum();
            assert!(after - before <= -moved / (2.0 * step.gamma) + 1e-10 * before.abs());
            assert!(moved == 0.0 || after < before);
        }
    }

    #[test]
    fn ista_stall_returns_input() {
        let d = Array2::eye(2) * 10.0;
        let cfg = IstaStepConfig {
            max_backtracks: 1,
            ..IstaStepConfig::new(0.0, 1.0)
        };
        let a = array![0.0, 0.0];
        let step = ista_column_step(a.view(), array![1.0, 1.0].view(), d.view(), &cfg);
        assert_eq!(step.gamma, 0.0);
        assert_eq!(step.code, a);
    }

    #[test]
    fn lipschitz_bound_dominates_spectral_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = gaussian((5, 9), &mut rng);
        // power iteration for ‖DᵀD‖₂
        let g = d.t().dot(&d);
        let mut v = Array1::ones(9);
        for _ in 0..500 {
            let w = g.dot(&v);
            v = &w / w.dot(&w).sqrt();
        }
        let top = v.dot(&g.dot(&v));
        assert!(lipschitz_bound(d.view()) >= top);
    }

    #[test]
    fn l1_update_matches_single_column_and_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = unit_columns(gaussian((8, 12), &mut rng));
        let patches = gaussian((8, 5), &mut rng);
        let codes = CodeMatrix {
            entries: gaussian((12, 5), &mut rng),
        };
        let cfg = IstaStepConfig::new(0.1, 1.0);
        let update = update_codes_l1(&codes, patches.view(), d.view(), &cfg, &[1.0; 5]).unwrap();
        let total = |c: &CodeMatrix| -> f64 {
            (0..5)
                .map(|i| column_objective(c.entries.column(i), patches.column(i), d.view(), 0.1))
                .sum()
        };
        assert!(total(&update.codes) <= total(&codes));
        for i in 0..5 {
            let single = ista_column_step(codes.entries.column(i), patches.column(i), d.view(), &cfg);
            assert_eq!(single.code, update.codes.entries.column(i));
            assert_eq!(single.gamma, update.gammas[i]);
        }
        assert!(update_codes_l1(&codes, patches.view(), d.view(), &cfg, &[1.0; 4]).is_err());
    }

    #[test]
    fn omp_identity_picks_largest() {
        let d = Array2::eye(3);
        let a = omp_encode(array![0.9, 0.1, 0.0].view(), d.view(), 1, 0.0);
        assert_eq!(a, array![0.9, 0.0, 0.0]);
    }

    #[test]
    fn omp_full_rank_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = gaussian((4, 4), &mut rng);
        let x = Array1::from_shape_simple_fn(4, || StandardNormal.sample(&mut rng));
        let a = omp_encode(x.view(), d.view(), 4, 0.0);
        let fit = d.dot(&a);
        for (u, v) in fit.iter().zip(x.iter()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn omp_ties_break_to_lowest_index() {
        let d = Array2::eye(3);
        let a = omp_encode(array![0.5, 0.5, 0.5].view(), d.view(), 1, 0.0);
        assert_eq!(a, array![0.5, 0.0, 0.0]);
    }

    #[test]
    fn omp_residuals_strictly_decrease() {
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = unit_columns(gaussian((8, 16), &mut rng));
            let x = Array1::from_shape_simple_fn(8, || StandardNormal.sample(&mut rng));
            let (a, norms) = omp_trace(x.view(), d.view(), 6, 0.0);
            assert!(norms.windows(2).all(|w| w[1] < w[0]));
            assert!(a.iter().filter(|v| **v != 0.0).count() <= 6);
        }
    }

    #[test]
    fn omp_stops_at_tolerance() {
        let d = Array2::eye(3);
        let a = omp_encode(array![1.0, 0.05, 0.0].view(), d.view(), 3, 0.1);
        assert_eq!(a, array![1.0, 0.0, 0.0]);
        assert_eq!(omp_encode(array![0.01, 0.0, 0.0].view(), d.view(), 3, 0.1), Array1::zeros(3));
    }

    #[test]
    fn omp_rank_deficient_stops_early() {
        // two identical atoms: after picking one the residual is orthogonal to both
        let d = array![[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let a = omp_encode(array![1.0, 0.0].view(), d.view(), 3, 0.0);
        assert_eq!(a, array![1.0, 0.0, 0.0]);
    }

    #[test]
    fn l0_update_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = unit_columns(gaussian((8, 16), &mut rng));
        let patches = gaussian((8, 40), &mut rng);
        let codes = update_codes_l0(patches.view(), d.view(), 3, 0.0).unwrap();
        let counts = codes.nonzeros_per_column();
        assert!(counts.iter().all(|&c| c <= 3));
        let recount: usize = codes.entries.iter().filter(|v| **v != 0.0).count();
        assert_eq!(counts.iter().sum::<usize>(), recount);
        let zero = update_codes_l0(Array2::zeros((8, 4)).view(), d.view(), 3, 0.1).unwrap();
        assert_eq!(zero.entries, Array2::zeros((16, 4)));
        assert!(update_codes_l0(patches.view(), d.view(), 0, 0.1).is_err());
    }
}
