//! Reconstruction quality measures.

use ndarray::{Array1, Array2, ArrayView2, Zip};

use crate::error::{check_dims, Error, Result};
use crate::sparse_coding::CodeMatrix;

/// Side length of the SSIM window.
pub const SSIM_WINDOW: usize = 11;
/// Standard deviation of the Gaussian SSIM window.
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Quality of one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub psnr_db: f64,
    /// Raw mean SSIM, not clamped.
    pub ssim: f64,
    pub mean_code_sparsity: f64,
    pub runtime_seconds: f64,
}

impl QualityReport {
    pub fn measure(reference: ArrayView2<f64>, estimate: ArrayView2<f64>, mean_code_sparsity: f64, runtime_seconds: f64) -> Result<Self> {
        Ok(Self {
            psnr_db: psnr(reference, estimate)?,
            ssim: ssim(reference, estimate)?,
            mean_code_sparsity,
            runtime_seconds,
        })
    }
}

/// `10 log10(1 / MSE)` for images with peak value 1; `+∞` when they agree.
pub fn psnr(reference: ArrayView2<f64>, estimate: ArrayView2<f64>) -> Result<f64> {
    check_dims(reference.dim(), estimate.dim())?;
    let sse = Zip::from(&reference).and(&estimate).fold(0.0, |acc, a, b| acc + (a - b) * (a - b));
    let mse = sse / reference.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

fn gaussian_window() -> Array1<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w = Array1::from_shape_fn(SSIM_WINDOW, |i| {
        let t = i as f64 - half;
        (-t * t / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let total = w.sum();
    w / total
}

/// Separable "valid" filtering with the Gaussian window.
fn filter_valid(img: &Array2<f64>, w: &Array1<f64>) -> Array2<f64> {
    let (rows, cols) = img.dim();
    let k = w.len();
    let (out_r, out_c) = (rows - k + 1, cols - k + 1);
    let horizontal = Array2::from_shape_fn((rows, out_c), |(r, c)| (0..k).map(|j| w[j] * img[[r, c + j]]).sum::<f64>());
    Array2::from_shape_fn((out_r, out_c), |(r, c)| (0..k).map(|i| w[i] * horizontal[[r + i, c]]).sum::<f64>())
}

/// Mean structural similarity over all fully contained 11x11 Gaussian
/// windows (σ = 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1).
pub fn ssim(reference: ArrayView2<f64>, estimate: ArrayView2<f64>) -> Result<f64> {
    check_dims(reference.dim(), estimate.dim())?;
    let (rows, cols) = reference.dim();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            rows,
            cols,
            window: SSIM_WINDOW,
        });
    }
    let w = gaussian_window();
    let x = reference.to_owned();
    let y = estimate.to_owned();
    let mx = filter_valid(&x, &w);
    let my = filter_valid(&y, &w);
    let sxx = filter_valid(&(&x * &x), &w);
    let syy = filter_valid(&(&y * &y), &w);
    let sxy = filter_valid(&(&x * &y), &w);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    Zip::from(&mx)
        .and(&my)
        .and(&sxx)
        .and(&syy)
        .and(&sxy)
        .for_each(|&mx, &my, &sxx, &syy, &sxy| {
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        });
    Ok(total / mx.len() as f64)
}

/// Mean over columns of the number of entries with `|a| > zero_tol`.
pub fn mean_sparsity(codes: &CodeMatrix, zero_tol: f64) -> f64 {
    let p = codes.patches();
    if p == 0 {
        return 0.0;
    }
    let count = codes.entries.iter().filter(|v| v.abs() > zero_tol).count();
    count as f64 / p as f64
}
