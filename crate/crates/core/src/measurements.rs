//! Measurement operators `F`, their adjoints, and noisy squared-magnitude data.
//!
//! Four families are supported: `GX`, `GXG*`, `GXH*` with complex Gaussian
//! `G`, `H`, and stacked coded diffraction patterns `F(conj(M_j) .* X)` with
//! the unitary 2-D DFT `F`. Inner products are conjugate-linear in the first
//! argument, `<U, V> = sum(conj(U) .* V)`.

use ndarray::{s, Array2, ArrayView2, Zip};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dims, Error, Result};
use crate::fft::{stack_rows, Fft2};
use crate::rng::{stream_rng, Stream};

/// Value set of random CDP masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskAlphabet {
    /// Entries in `{0, +1, -1}`.
    Ternary,
    /// Entries in `{±√2/2, ±i√2/2, ±√3, ±i√3}`.
    Octanary,
}

impl MaskAlphabet {
    pub fn name(self) -> &'static str {
        match self {
            MaskAlphabet::Ternary => "ternary",
            MaskAlphabet::Octanary => "octanary",
        }
    }
}

impl std::str::FromStr for MaskAlphabet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ternary" => Ok(MaskAlphabet::Ternary),
            "octanary" => Ok(MaskAlphabet::Octanary),
            other => Err(Error::InvalidConfig(format!("unknown mask alphabet `{other}`"))),
        }
    }
}

/// Discrete distribution mask entries are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskDistribution {
    values: Vec<Complex64>,
    probabilities: Vec<f64>,
}

impl MaskDistribution {
    pub fn new(values: Vec<Complex64>, probabilities: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probabilities.len() {
            return Err(Error::InvalidConfig(
                "mask values and probabilities must be non-empty and paired".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "mask probabilities must be non-negative and sum to 1 (got {total})"
            )));
        }
        Ok(Self { values, probabilities })
    }

    /// `0` with probability 1/2, `±1` with probability 1/4 each.
    pub fn ternary() -> Self {
        Self::ternary_with(0.5).expect("valid default")
    }

    /// Ternary masks with a custom probability of zero; the signs share the rest.
    pub fn ternary_with(zero_probability: f64) -> Result<Self> {
        let side = (1.0 - zero_probability) / 2.0;
        Self::new(
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            vec![zero_probability, side, side],
        )
    }

    /// A uniformly random unit phase in `{1, -1, i, -i}` times an amplitude
    /// `√2/2` (probability 4/5) or `√3` (probability 1/5).
    pub fn octanary() -> Self {
        let small = std::f64::consts::FRAC_1_SQRT_2;
        let large = 3f64.sqrt();
        let phases = [
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ];
        let mut values = Vec::with_capacity(8);
        let mut probabilities = Vec::with_capacity(8);
        for (amplitude, weight) in [(small, 0.2), (large, 0.05)] {
            for phase in phases {
                values.push(phase * amplitude);
                probabilities.push(weight);
            }
        }
        Self::new(values, probabilities).expect("valid default")
    }

    pub fn for_alphabet(alphabet: MaskAlphabet) -> Self {
        match alphabet {
            MaskAlphabet::Ternary => Self::ternary(),
            MaskAlphabet::Octanary => Self::octanary(),
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (value, p) in self.values.iter().zip(&self.probabilities) {
            acc += p;
            if u < acc {
                return *value;
            }
        }
        *self.values.last().expect("non-empty")
    }
}

/// Complex Gaussian matrix with i.i.d. `N(0, 1/2) + i N(0, 1/2)` entries, drawn
/// row-major, real part first.
pub fn sample_gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    Array2::from_shape_simple_fn((rows, cols), || {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * scale, im * scale)
    })
}

/// `count` masks of shape `rows x cols`, each drawn row-major.
pub fn sample_cdp_masks<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    count: usize,
    distribution: &MaskDistribution,
    rng: &mut R,
) -> Vec<Array2<Complex64>> {
    (0..count)
        .map(|_| Array2::from_shape_simple_fn((rows, cols), || distribution.sample(rng)))
        .collect()
}

/// Recipe for drawing a measurement operator.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    /// `GX` with `G` of size `(oversample * N1) x N1`.
    GaussianLeft { oversample: usize },
    /// `GXG*`; requires a square image.
    GaussianTwoSided { oversample: usize },
    /// `GXH*` with `H` of size `(oversample * N2) x N2`.
    GaussianAsymmetric { oversample: usize },
    /// `masks` coded diffraction patterns.
    Cdp {
        masks: usize,
        distribution: MaskDistribution,
        alphabet: MaskAlphabet,
    },
}

impl OperatorSpec {
    pub fn cdp(masks: usize, alphabet: MaskAlphabet) -> Self {
        OperatorSpec::Cdp {
            masks,
            distribution: MaskDistribution::for_alphabet(alphabet),
            alphabet,
        }
    }
}

/// A realized operator family together with its random data.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    GaussianLeft {
        g: Array2<Complex64>,
    },
    GaussianTwoSided {
        g: Array2<Complex64>,
    },
    GaussianAsymmetric {
        g: Array2<Complex64>,
        h: Array2<Complex64>,
    },
    Cdp {
        alphabet: MaskAlphabet,
        masks: Vec<Array2<Complex64>>,
    },
}

impl OperatorKind {
    pub fn tag(&self) -> &'static str {
        match self {
            OperatorKind::GaussianLeft { .. } => "gx",
            OperatorKind::GaussianTwoSided { .. } => "gxg",
            OperatorKind::GaussianAsymmetric { .. } => "gxh",
            OperatorKind::Cdp { .. } => "cdp",
        }
    }
}

/// Linear operator `F` acting on `N1 x N2` matrices, with cached FFT plans
/// and real/imaginary splits of the Gaussian factors.
#[derive(Debug, Clone)]
pub struct Operator {
    kind: OperatorKind,
    input_shape: (usize, usize),
    output_shape: (usize, usize),
    fft: Option<Fft2>,
    g_split: Option<(Array2<f64>, Array2<f64>)>,
}

impl PartialEq for Operator {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.input_shape == other.input_shape
    }
}

impl Operator {
    pub fn new(kind: OperatorKind, input_shape: (usize, usize)) -> Result<Self> {
        let (n1, n2) = input_shape;
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidConfig("operator input must be non-empty".into()));
        }
        let mut fft = None;
        let mut g_split = None;
        let output_shape = match &kind {
            OperatorKind::GaussianLeft { g } => {
                check_gaussian(g, n1)?;
                g_split = Some(split(g));
                (g.nrows(), n2)
            }
            OperatorKind::GaussianTwoSided { g } => {
                if n1 != n2 {
                    return Err(Error::InvalidConfig(format!("GXG* needs a square image, got {n1}x{n2}")));
                }
                check_gaussian(g, n1)?;
                g_split = Some(split(g));
                (g.nrows(), g.nrows())
            }
            OperatorKind::GaussianAsymmetric { g, h } => {
                check_gaussian(g, n1)?;
                check_gaussian(h, n2)?;
                g_split = Some(split(g));
                (g.nrows(), h.nrows())
            }
            OperatorKind::Cdp { masks, .. } => {
                if masks.is_empty() {
                    return Err(Error::InvalidConfig("CDP needs at least one mask".into()));
                }
                for m in masks {
                    check_dims(input_shape, m.dim())?;
                }
                fft = Some(Fft2::new(n1, n2));
                (masks.len() * n1, n2)
            }
        };
        Ok(Self {
            kind,
            input_shape,
            output_shape,
            fft,
            g_split,
        })
    }

    /// Draws the random data of `spec` from `rng`.
    pub fn sample<R: Rng + ?Sized>(spec: &OperatorSpec, input_shape: (usize, usize), rng: &mut R) -> Result<Self> {
        let (n1, n2) = input_shape;
        let positive = |r: usize| {
            if r == 0 {
                Err(Error::InvalidConfig("oversampling factor must be at least 1".into()))
            } else {
                Ok(r)
            }
        };
        let kind = match spec {
            OperatorSpec::GaussianLeft { oversample } => OperatorKind::GaussianLeft {
                g: sample_gaussian_matrix(positive(*oversample)? * n1, n1, rng),
            },
            OperatorSpec::GaussianTwoSided { oversample } => OperatorKind::GaussianTwoSided {
                g: sample_gaussian_matrix(positive(*oversample)? * n1, n1, rng),
            },
            OperatorSpec::GaussianAsymmetric { oversample } => {
                let r = positive(*oversample)?;
                let g = sample_gaussian_matrix(r * n1, n1, rng);
                let h = sample_gaussian_matrix(r * n2, n2, rng);
                OperatorKind::GaussianAsymmetric { g, h }
            }
            OperatorSpec::Cdp {
                masks,
                distribution,
                alphabet,
            } => OperatorKind::Cdp {
                alphabet: *alphabet,
                masks: sample_cdp_masks(n1, n2, *masks, distribution, rng),
            },
        };
        Self::new(kind, input_shape)
    }

    /// Samples with the operator stream of `seed`.
    pub fn sample_seeded(spec: &OperatorSpec, input_shape: (usize, usize), seed: u64) -> Result<Self> {
        Self::sample(spec, input_shape, &mut stream_rng(seed, Stream::Operator))
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input_shape
    }

    pub fn output_shape(&self) -> (usize, usize) {
        self.output_shape
    }

    pub fn forward(&self, x: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        check_dims(self.input_shape, x.dim())?;
        Ok(match &self.kind {
            OperatorKind::GaussianLeft { g } => g.dot(&x),
            OperatorKind::GaussianTwoSided { g } => g.dot(&x).dot(&conj_t(g)),
            OperatorKind::GaussianAsymmetric { g, h } => g.dot(&x).dot(&conj_t(h)),
            OperatorKind::Cdp { masks, .. } => {
                let fft = self.fft.as_ref().expect("cdp plan");
                let blocks: Vec<_> = masks
                    .iter()
                    .map(|m| {
                        let mut block = Zip::from(m).and(&x).map_collect(|m, x| m.conj() * x);
                        fft.forward(&mut block);
                        block
                    })
                    .collect();
                stack_rows(&blocks)
            }
        })
    }

    /// `F(X)` for a real `X`.
    pub fn forward_real(&self, x: ArrayView2<f64>) -> Result<Array2<Complex64>> {
        check_dims(self.input_shape, x.dim())?;
        Ok(match &self.kind {
            OperatorKind::Cdp { masks, .. } => {
                let fft = self.fft.as_ref().expect("cdp plan");
                let blocks: Vec<_> = masks
                    .iter()
                    .map(|m| {
                        let mut block = Zip::from(m).and(&x).map_collect(|m, &x| m.conj() * x);
                        fft.forward(&mut block);
                        block
                    })
                    .collect();
                stack_rows(&blocks)
            }
            kind => {
                let (g_re, g_im) = self.g_split.as_ref().expect("gaussian split");
                let gx = combine(g_re.dot(&x), g_im.dot(&x));
                match kind {
                    OperatorKind::GaussianLeft { .. } => gx,
                    OperatorKind::GaussianTwoSided { g } => gx.dot(&conj_t(g)),
                    OperatorKind::GaussianAsymmetric { h, .. } => gx.dot(&conj_t(h)),
                    OperatorKind::Cdp { .. } => unreachable!(),
                }
            }
        })
    }

    pub fn adjoint(&self, z: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        check_dims(self.output_shape, z.dim())?;
        Ok(match &self.kind {
            OperatorKind::GaussianLeft { g } => conj_t(g).dot(&z),
            OperatorKind::GaussianTwoSided { g } => conj_t(g).dot(&z).dot(g),
            OperatorKind::GaussianAsymmetric { g, h } => conj_t(g).dot(&z).dot(h),
            OperatorKind::Cdp { masks, .. } => {
                let fft = self.fft.as_ref().expect("cdp plan");
                let (n1, _) = self.input_shape;
                let mut acc = Array2::<Complex64>::zeros(self.input_shape);
                for (j, m) in masks.iter().enumerate() {
                    let mut block = z.slice(s![j * n1..(j + 1) * n1, ..]).to_owned();
                    fft.inverse(&mut block);
                    Zip::from(&mut acc).and(m).and(&block).for_each(|a, m, b| *a += m * b);
                }
                acc
            }
        })
    }

    /// `Re(F*(Z))`, the only part the real-valued image gradient needs.
    pub fn adjoint_real_part(&self, z: ArrayView2<Complex64>) -> Result<Array2<f64>> {
        match &self.kind {
            OperatorKind::GaussianLeft { .. } => {
                check_dims(self.output_shape, z.dim())?;
                let (g_re, g_im) = self.g_split.as_ref().expect("gaussian split");
                let z_re = z.mapv(|v| v.re);
                let z_im = z.mapv(|v| v.im);
                Ok(g_re.t().dot(&z_re) + g_im.t().dot(&z_im))
            }
            _ => Ok(self.adjoint(z)?.mapv(|v| v.re)),
        }
    }
}

fn check_gaussian(g: &Array2<Complex64>, cols: usize) -> Result<()> {
    if g.nrows() == 0 {
        return Err(Error::InvalidConfig("Gaussian factor needs at least one row".into()));
    }
    check_dims((g.nrows(), cols), g.dim())
}

fn split(g: &Array2<Complex64>) -> (Array2<f64>, Array2<f64>) {
    (g.mapv(|v| v.re), g.mapv(|v| v.im))
}

fn combine(re: Array2<f64>, im: Array2<f64>) -> Array2<Complex64> {
    Zip::from(&re).and(&im).map_collect(|&r, &i| Complex64::new(r, i))
}

fn conj_t(m: &Array2<Complex64>) -> Array2<Complex64> {
    m.t().mapv(|v| v.conj())
}

/// Conjugate-linear-in-the-first-slot Frobenius inner product.
pub fn inner(u: ArrayView2<Complex64>, v: ArrayView2<Complex64>) -> Complex64 {
    Zip::from(&u).and(&v).fold(Complex64::new(0.0, 0.0), |acc, a, b| acc + a.conj() * b)
}

/// Squared magnitudes `|F(X)|^2`.
pub fn intensities(op: &Operator, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(op.forward_real(x)?.mapv(|v| v.norm_sqr()))
}

/// Noisy phaseless data `Y = |F(X)|^2 + N` plus the operator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub y: Array2<f64>,
    pub operator: Operator,
    /// Target noise level; `None` for noiseless data.
    pub noise_snr_db: Option<f64>,
    pub seed: u64,
}

impl MeasurementSet {
    /// Number of measurements `m_Y`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `10 log10(||clean||^2 / ||noisy - clean||^2)`.
pub fn realized_snr_db(clean: &Array2<f64>, noisy: &Array2<f64>) -> f64 {
    let signal: f64 = clean.iter().map(|v| v * v).sum();
    let noise: f64 = Zip::from(clean).and(noisy).fold(0.0, |acc, c, n| acc + (n - c) * (n - c));
    10.0 * (signal / noise).log10()
}

/// Measures `x_true` through `op` and adds white Gaussian noise rescaled so the
/// realized SNR equals `snr_db` exactly. Noise comes from the noise stream of `seed`.
pub fn measure(op: Operator, x_true: ArrayView2<f64>, snr_db: Option<f64>, seed: u64) -> Result<MeasurementSet> {
    let clean = intensities(&op, x_true)?;
    let y = match snr_db {
        None => clean,
        Some(snr) => {
            if !snr.is_finite() {
                return Err(Error::InvalidConfig(format!("noise SNR must be finite, got {snr}")));
            }
            let mut rng = stream_rng(seed, Stream::Noise);
            let noise = Array2::<f64>::from_shape_simple_fn(clean.dim(), || StandardNormal.sample(&mut rng));
            let signal_norm = clean.iter().map(|v| v * v).sum::<f64>().sqrt();
            let noise_norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
            if signal_norm == 0.0 || noise_norm == 0.0 {
                clean
            } else {
                let scale = signal_norm * 10f64.powf(-snr / 20.0) / noise_norm;
                clean + noise * scale
            }
        }
    };
    Ok(MeasurementSet {
        y,
        operator: op,
        noise_snr_db: snr_db,
        seed,
    })
}
