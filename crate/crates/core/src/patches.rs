//! Patch extraction and reassembly.
//!
//! Patches are enumerated column-major over the grid of top-left corners and
//! each patch is vectorized column-major, so patch `i` at grid position
//! `(gr, gc)` has index `gr + gc * grid_rows` and pixel `(r, c)` of that patch
//! lands in row `r + c * patch_rows` of the patch matrix.

use ndarray::{Array2, ArrayView2};

use crate::error::{check_dims, Error, Result};

/// Shape of the patch grid laid over an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchGeometry {
    patch_rows: usize,
    patch_cols: usize,
    stride_rows: usize,
    stride_cols: usize,
    image_rows: usize,
    image_cols: usize,
}

impl PatchGeometry {
    pub fn new(
        (patch_rows, patch_cols): (usize, usize),
        (stride_rows, stride_cols): (usize, usize),
        (image_rows, image_cols): (usize, usize),
    ) -> Result<Self> {
        if patch_rows == 0 || patch_cols == 0 {
            return Err(Error::InvalidGeometry("patch dimensions must be positive".into()));
        }
        if stride_rows == 0 || stride_rows > patch_rows || stride_cols == 0 || stride_cols > patch_cols {
            return Err(Error::InvalidGeometry(format!(
                "stride {stride_rows}x{stride_cols} must lie in [1, patch size {patch_rows}x{patch_cols}]"
            )));
        }
        if image_rows < patch_rows || image_cols < patch_cols {
            return Err(Error::InvalidGeometry(format!(
                "image {image_rows}x{image_cols} is smaller than patch {patch_rows}x{patch_cols}"
            )));
        }
        if (image_rows - patch_rows) % stride_rows != 0 || (image_cols - patch_cols) % stride_cols != 0 {
            return Err(Error::InvalidGeometry(format!(
                "patch grid {patch_rows}x{patch_cols} / stride {stride_rows}x{stride_cols} does not tile a {image_rows}x{image_cols} image"
            )));
        }
        Ok(Self {
            patch_rows,
            patch_cols,
            stride_rows,
            stride_cols,
            image_rows,
            image_cols,
        })
    }

    /// Nonoverlapping patches (stride equal to the patch size).
    pub fn nonoverlapping(patch: (usize, usize), image: (usize, usize)) -> Result<Self> {
        Self::new(patch, patch, image)
    }

    pub fn patch_shape(&self) -> (usize, usize) {
        (self.patch_rows, self.patch_cols)
    }

    pub fn stride(&self) -> (usize, usize) {
        (self.stride_rows, self.stride_cols)
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.image_rows, self.image_cols)
    }

    /// Number of pixels per patch, `s`.
    pub fn patch_len(&self) -> usize {
        self.patch_rows * self.patch_cols
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (
            (self.image_rows - self.patch_rows) / self.stride_rows + 1,
            (self.image_cols - self.patch_cols) / self.stride_cols + 1,
        )
    }

    /// Number of patches, `p`.
    pub fn patch_count(&self) -> usize {
        let (gr, gc) = self.grid_shape();
        gr * gc
    }

    pub fn is_nonoverlapping(&self) -> bool {
        self.stride_rows == self.patch_rows && self.stride_cols == self.patch_cols
    }

    /// Top-left pixel of patch `index`.
    pub fn origin(&self, index: usize) -> (usize, usize) {
        let grid_rows = self.grid_shape().0;
        ((index % grid_rows) * self.stride_rows, (index / grid_rows) * self.stride_cols)
    }

    /// Calls `f(patch_index, within_patch_row, image_row, image_col)` for every
    /// pixel of every patch in enumeration order.
    fn for_each_pixel(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        for i in 0..self.patch_count() {
            let (r0, c0) = self.origin(i);
            for c in 0..self.patch_cols {
                for r in 0..self.patch_rows {
                    f(i, r + c * self.patch_rows, r0 + r, c0 + c);
                }
            }
        }
    }
}

/// Vectorized patches as the columns of an `s x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    pub entries: Array2<f64>,
    pub geometry: PatchGeometry,
}

impl PatchMatrix {
    pub fn new(entries: Array2<f64>, geometry: PatchGeometry) -> Result<Self> {
        check_dims((geometry.patch_len(), geometry.patch_count()), entries.dim())?;
        Ok(Self { entries, geometry })
    }

    pub fn zeros(geometry: PatchGeometry) -> Self {
        Self {
            entries: Array2::zeros((geometry.patch_len(), geometry.patch_count())),
            geometry,
        }
    }
}

/// The patch extraction operator `E`.
pub fn extract(image: ArrayView2<f64>, geometry: &PatchGeometry) -> Result<PatchMatrix> {
    check_dims(geometry.image_shape(), image.dim())?;
    let mut entries = Array2::zeros((geometry.patch_len(), geometry.patch_count()));
    geometry.for_each_pixel(|i, k, r, c| entries[[k, i]] = image[[r, c]]);
    Ok(PatchMatrix {
        entries,
        geometry: *geometry,
    })
}

/// The reassembly operator `R`: every pixel becomes the average of all patch
/// entries covering it.
///
/// The average is accumulated as a running mean, so identical contributions
/// reproduce their common value bit-exactly and `reassemble(extract(x)) == x`.
pub fn reassemble(patches: &PatchMatrix) -> Array2<f64> {
    let geometry = &patches.geometry;
    let mut image = Array2::<f64>::zeros(geometry.image_shape());
    let mut seen = Array2::<u32>::zeros(geometry.image_shape());
    geometry.for_each_pixel(|i, k, r, c| {
        let n = &mut seen[[r, c]];
        *n += 1;
        let mean = &mut image[[r, c]];
        *mean += (patches.entries[[k, i]] - *mean) / f64::from(*n);
    });
    image
}

/// Per-pixel count of covering patches (the matrix `R` of the image gradient).
pub fn multiplicity(geometry: &PatchGeometry) -> Array2<f64> {
    let mut counts = Array2::<f64>::zeros(geometry.image_shape());
    geometry.for_each_pixel(|_, _, r, c| counts[[r, c]] += 1.0);
    counts
}

/// The adjoint `E*` of [`extract`]: patch contributions summed without averaging.
pub fn extract_adjoint(patches: &PatchMatrix) -> Array2<f64> {
    let geometry = &patches.geometry;
    let mut image = Array2::<f64>::zeros(geometry.image_shape());
    geometry.for_each_pixel(|i, k, r, c| image[[r, c]] += patches.entries[[k, i]]);
    image
}
