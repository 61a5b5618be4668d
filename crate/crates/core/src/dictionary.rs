//! Dictionary initialization and the block-coordinate dictionary update.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dims, Error, Result};
use crate::sparse_coding::CodeMatrix;

/// Coefficients `C_jj` at or below this are treated as an unused atom.
pub const UNUSED_ATOM_THRESHOLD: f64 = 1e-12;

/// `s x n` dictionary whose columns lie in the unit Euclidean ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub entries: Array2<f64>,
}

impl Dictionary {
    /// Wraps `entries` after checking every column norm is at most `1 + 1e-12`.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        for (j, c) in entries.axis_iter(Axis(1)).enumerate() {
            let norm = c.dot(&c).sqrt();
            if !(norm <= 1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!("dictionary column {j} has norm {norm} > 1")));
            }
        }
        Ok(Self { entries })
    }

    pub fn patch_len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.entries.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }
}

/// `d / max(1, ‖d‖₂)`.
pub fn project_unit_ball(d: ArrayView1<f64>) -> Array1<f64> {
    let norm = d.dot(&d).sqrt();
    if norm > 1.0 {
        d.mapv(|v| v / norm)
    } else {
        d.to_owned()
    }
}

/// Orthonormal separable 2-D DCT-II basis for `rows x cols` patches.
///
/// Atom `u + v * rows` is the outer product of the `u`-th row-direction and
/// `v`-th column-direction cosines, vectorized column-major like the patches.
pub fn dct_basis(rows: usize, cols: usize) -> Array2<f64> {
    let cosine = |n: usize| {
        Array2::from_shape_fn((n, n), |(x, u)| {
            let alpha = if u == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            alpha * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2 * n) as f64).cos()
        })
    };
    let (cr, cc) = (cosine(rows), cosine(cols));
    let s = rows * cols;
    Array2::from_shape_fn((s, s), |(k, atom)| {
        let (r, c) = (k % rows, k / rows);
        let (u, v) = (atom % rows, atom / rows);
        cr[[r, u]] * cc[[c, v]]
    })
}

/// `D₀ = (I, F_D)`: the identity followed by the 2-D DCT basis, `s x 2s`.
pub fn init_dictionary(patch_rows: usize, patch_cols: usize) -> Dictionary {
    let s = patch_rows * patch_cols;
    let mut entries = Array2::zeros((s, 2 * s));
    entries.slice_mut(ndarray::s![.., ..s]).assign(&Array2::eye(s));
    entries.slice_mut(ndarray::s![.., s..]).assign(&dct_basis(patch_rows, patch_cols));
    for mut c in entries.axis_iter_mut(Axis(1)) {
        let projected = project_unit_ball(c.view());
        c.assign(&projected);
    }
    Dictionary { entries }
}

/// `½‖E − DA‖²_F`.
pub fn dictionary_fit(d: ArrayView2<f64>, codes: &CodeMatrix, patches: ArrayView2<f64>) -> f64 {
    let r = d.dot(&codes.entries) - patches;
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Outcome of one [`bcd_pass`].
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryUpdate {
    pub dictionary: Dictionary,
    /// Indices of atoms that were unused and replaced by random vectors.
    pub reset_atoms: Vec<usize>,
}

/// One Gauss–Seidel sweep over the columns of `D` minimizing
/// `½‖E − DA‖²_F` over the unit-ball-constrained columns.
///
/// With `B = EAᵀ` and `C = AAᵀ`, column `j` becomes
/// `P((B_j − D C_j) / C_jj + d_j)` using the already-updated columns; an
/// unused atom (`C_jj ≈ 0`) is replaced by a normalized Gaussian vector.
pub fn bcd_pass<R: Rng + ?Sized>(
    dictionary: &Dictionary,
    codes: &CodeMatrix,
    patches: ArrayView2<f64>,
    rng: &mut R,
) -> Result<DictionaryUpdate> {
    let (s, n) = dictionary.entries.dim();
    check_dims((n, patches.ncols()), codes.entries.dim())?;
    check_dims((s, codes.patches()), patches.dim())?;
    let b = patches.dot(&codes.entries.t());
    let c = codes.entries.dot(&codes.entries.t());
    let mut d = dictionary.entries.clone();
    let mut reset_atoms = Vec::new();
    for j in 0..n {
        let cjj = c[[j, j]];
        let updated = if cjj > UNUSED_ATOM_THRESHOLD {
            let dc = d.dot(&c.column(j));
            (&b.column(j) - &dc) / cjj + d.column(j)
        } else {
            reset_atoms.push(j);
            Array1::from_shape_simple_fn(s, || StandardNormal.sample(rng))
        };
        d.column_mut(j).assign(&project_unit_ball(updated.view()));
    }
    Ok(DictionaryUpdate {
        dictionary: Dictionary { entries: d },
        reset_atoms,
    })
}
