//! Small dense solvers for symmetric positive (semi)definite systems.

use ndarray::{Array1, Array2, ArrayView2};

/// Lower Cholesky factor of `m`, or `None` when a pivot falls below
/// `rel_tol * max(diag(m))`.
pub fn cholesky(m: &Array2<f64>, rel_tol: f64) -> Option<Array2<f64>> {
    let n = m.nrows();
    let scale = m.diag().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let floor = rel_tol * scale.max(f64::MIN_POSITIVE);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut pivot = m[[j, j]];
        for k in 0..j {
            pivot -= l[[j, k]] * l[[j, k]];
        }
        if !(pivot > floor) {
            return None;
        }
        let pivot = pivot.sqrt();
        l[[j, j]] = pivot;
        for i in j + 1..n {
            let mut v = m[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / pivot;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` column by column.
fn solve_factored(l: &Array2<f64>, b: &mut Array2<f64>) {
    let n = l.nrows();
    for mut col in b.columns_mut() {
        for i in 0..n {
            let mut v = col[i];
            for k in 0..i {
                v -= l[[i, k]] * col[k];
            }
            col[i] = v / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut v = col[i];
            for k in i + 1..n {
                v -= l[[k, i]] * col[k];
            }
            col[i] = v / l[[i, i]];
        }
    }
}

/// Solves `m x = rhs` for symmetric positive definite `m`; `None` if `m` is
/// numerically singular at relative tolerance `rel_tol`.
pub fn cholesky_solve(m: &Array2<f64>, rhs: &Array1<f64>, rel_tol: f64) -> Option<Array1<f64>> {
    let l = cholesky(m, rel_tol)?;
    let mut b = rhs.clone().insert_axis(ndarray::Axis(1));
    solve_factored(&l, &mut b);
    Some(b.remove_axis(ndarray::Axis(1)))
}

/// Solves `m X = rhs`, adding `1e-12 * max(diag(m))` to the diagonal if the
/// plain factorization breaks down.
pub fn spd_solve_regularized(m: &Array2<f64>, rhs: &Array2<f64>) -> Array2<f64> {
    let l = cholesky(m, 0.0).unwrap_or_else(|| {
        let scale = m.diag().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
        let mut shifted = m.clone();
        shifted.diag_mut().mapv_inplace(|v| v + 1e-12 * scale);
        cholesky(&shifted, 0.0).expect("regularized system is positive definite")
    });
    let mut x = rhs.clone();
    solve_factored(&l, &mut x);
    x
}

/// A minimizer of `‖E − D A‖_F` (the minimum-norm one when `D` is wide).
pub fn least_squares(d: ArrayView2<f64>, e: ArrayView2<f64>) -> Array2<f64> {
    if d.ncols() >= d.nrows() {
        let ddt = d.dot(&d.t());
        d.t().dot(&spd_solve_regularized(&ddt, &e.to_owned()))
    } else {
        let dtd = d.t().dot(&d);
        spd_solve_regularized(&dtd, &d.t().dot(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let m = array![[4.0, 1.0], [1.0, 3.0]];
        let x = cholesky_solve(&m, &array![1.0, 2.0], 1e-12).unwrap();
        let back = m.dot(&x);
        assert!((back[0] - 1.0).abs() < 1e-14 && (back[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn detects_singularity() {
        let m = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(cholesky_solve(&m, &array![1.0, 1.0], 1e-12).is_none());
        let x = spd_solve_regularized(&m, &array![[1.0], [1.0]]);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn least_squares_wide_is_exact() {
        let d = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let e = array![[1.0, 2.0], [3.0, -1.0]];
        let a = least_squares(d.view(), e.view());
        let fit = d.dot(&a);
        for (u, v) in fit.iter().zip(e.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn least_squares_tall_is_projection() {
        let d = array![[1.0], [1.0]];
        let e = array![[1.0], [3.0]];
        let a = least_squares(d.view(), e.view());
        assert!((a[[0, 0]] - 2.0).abs() < 1e-12);
    }
}
