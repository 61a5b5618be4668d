//! Unitary two-dimensional DFT on row-major complex matrices.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Cached plans for a fixed `rows x cols` transform, scaled by `1/sqrt(rows*cols)`
/// in both directions so that the inverse is the adjoint.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("rows", &self.rows).field("cols", &self.cols).finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
            scale: 1.0 / ((rows * cols) as f64).sqrt(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.apply(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.apply(data, &self.row_inv, &self.col_inv);
    }

    fn apply(&self, data: &mut Array2<Complex64>, along_rows: &Arc<dyn Fft<f64>>, along_cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.dim(), (self.rows, self.cols), "FFT shape mismatch");
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        along_rows.process(data.as_slice_mut().expect("standard layout"));
        let mut transposed = data.t().as_standard_layout().into_owned();
        along_cols.process(transposed.as_slice_mut().expect("standard layout"));
        data.assign(&transposed.t());
        let scale = self.scale;
        data.map_inplace(|v| *v *= scale);
    }
}

/// Frobenius norm of a complex matrix.
pub fn complex_norm(data: &Array2<Complex64>) -> f64 {
    data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn stack_rows(blocks: &[Array2<Complex64>]) -> Array2<Complex64> {
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("blocks share a column count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let fft = Fft2::new(4, 6);
        let mut x = Array2::zeros((4, 6));
        x[[0, 0]] = Complex64::new(1.0, 0.0);
        fft.forward(&mut x);
        for v in x.iter() {
            assert!((v.norm() - 1.0 / 24f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_naive_dft() {
        let (n1, n2) = (3, 5);
        let x = random(n1, n2, 1);
        let mut y = x.clone();
        Fft2::new(n1, n2).forward(&mut y);
        for k in 0..n1 {
            for l in 0..n2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n1 {
                    for j in 0..n2 {
                        let angle = -2.0 * std::f64::consts::PI * ((k * i) as f64 / n1 as f64 + (l * j) as f64 / n2 as f64);
                        acc += x[[i, j]] * Complex64::from_polar(1.0, angle);
                    }
                }
                acc /= ((n1 * n2) as f64).sqrt();
                assert!((acc - y[[k, l]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn unitary_and_invertible() {
        let x = random(8, 16, 2);
        let fft = Fft2::new(8, 16);
        let mut y = x.clone();
        fft.forward(&mut y);
        assert!((complex_norm(&y) - complex_norm(&x)).abs() < 1e-12);
        fft.inverse(&mut y);
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
