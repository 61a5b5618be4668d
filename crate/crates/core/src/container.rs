//! Binary containers for measurement sets and solver snapshots.
//!
//! Every file starts with the 8-byte magic `DOLPHIN\0`, a 4-byte ASCII kind
//! (`MSET` or `SNAP`) and a little-endian `u32` format version. All integers
//! that follow are little-endian `u64`, reals little-endian IEEE `f64`, and
//! matrices are `rows, cols` followed by the entries in row-major order
//! (complex entries as `re, im` pairs).
//!
//! `MSET` payload: seed, SNR flag (`u8`) and value, input rows and cols,
//! operator tag (`u8`: 0 = GX, 1 = GXG*, 2 = GXH*, 3 = CDP), operator data
//! (`G`; `G, H`; or alphabet `u8`, mask count and masks), then `Y`.
//!
//! `SNAP` payload: iteration, termination (`u8`), `X`, `D`, `A`, per-column
//! Lipschitz estimates, step policy (`u8` kind then its parameters), trace
//! rows (iteration, four objective terms, γ, mean ℓ0, stall bits `u8`), and
//! the dictionary-reset generator as 32 seed bytes, stream and 128-bit word
//! position.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::image_update::{ArmijoStep, HeuristicStep, ObjectiveValue, StepPolicy};
use crate::measurements::{MaskAlphabet, MeasurementSet, Operator, OperatorKind};
use crate::solver::{SolverState, StallFlags, Termination, TraceRow};
use crate::sparse_coding::CodeMatrix;

const MAGIC: &[u8; 8] = b"DOLPHIN\0";
/// Current measurement-set format version.
pub const MEASUREMENT_VERSION: u32 = 1;
/// Current snapshot format version.
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Default)]
struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn header(kind: &[u8; 4], version: u32) -> Self {
        let mut e = Self::default();
        e.buf.extend_from_slice(MAGIC);
        e.buf.extend_from_slice(kind);
        e.buf.extend_from_slice(&version.to_le_bytes());
        e
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn reals(&mut self, m: &Array2<f64>) {
        self.usize(m.nrows());
        self.usize(m.ncols());
        for v in m.iter() {
            self.f64(*v);
        }
    }

    fn complexes(&mut self, m: &Array2<Complex64>) {
        self.usize(m.nrows());
        self.usize(m.ncols());
        for v in m.iter() {
            self.f64(v.re);
            self.f64(v.im);
        }
    }

    fn vector(&mut self, v: &[f64]) {
        self.usize(v.len());
        for x in v {
            self.f64(*x);
        }
    }
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn open(bytes: &'a [u8], kind: &[u8; 4], expected: u32) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Corrupt("missing container magic".into()));
        }
        if &bytes[8..12] != kind {
            return Err(Error::Corrupt(format!(
                "expected a {} container, found {}",
                String::from_utf8_lossy(kind),
                String::from_utf8_lossy(&bytes[8..12])
            )));
        }
        let found = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        if found != expected {
            return Err(Error::VersionMismatch { found, expected });
        }
        Ok(Self { bytes, pos: 16 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corrupt(format!("truncated container at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Corrupt("length does not fit in memory".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn shape(&mut self, entry_bytes: usize) -> Result<(usize, usize)> {
        let (r, c) = (self.usize()?, self.usize()?);
        let needed = r.checked_mul(c).and_then(|n| n.checked_mul(entry_bytes));
        match needed {
            Some(n) if n <= self.bytes.len() - self.pos => Ok((r, c)),
            _ => Err(Error::Corrupt(format!("matrix of {r}x{c} exceeds the container"))),
        }
    }

    fn reals(&mut self) -> Result<Array2<f64>> {
        let shape = self.shape(8)?;
        let data = self.take(shape.0 * shape.1 * 8)?;
        let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Array2::from_shape_vec(shape, values).expect("checked shape"))
    }

    fn complexes(&mut self) -> Result<Array2<Complex64>> {
        let shape = self.shape(16)?;
        let data = self.take(shape.0 * shape.1 * 16)?;
        let values = data
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Ok(Array2::from_shape_vec(shape, values).expect("checked shape"))
    }

    fn vector(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n.checked_mul(8).is_none_or(|b| b > self.bytes.len() - self.pos) {
            return Err(Error::Corrupt("vector exceeds the container".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn finish(self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Corrupt(format!("{} trailing bytes", self.bytes.len() - self.pos)))
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_measurements(m: &MeasurementSet) -> Vec<u8> {
    let mut e = Encoder::header(b"MSET", MEASUREMENT_VERSION);
    e.u64(m.seed);
    match m.noise_snr_db {
        Some(v) => {
            e.u8(1);
            e.f64(v);
        }
        None => {
            e.u8(0);
            e.f64(0.0);
        }
    }
    let (n1, n2) = m.operator.input_shape();
    e.usize(n1);
    e.usize(n2);
    match m.operator.kind() {
        OperatorKind::GaussianLeft { g } => {
            e.u8(0);
            e.complexes(g);
        }
        OperatorKind::GaussianTwoSided { g } => {
            e.u8(1);
            e.complexes(g);
        }
        OperatorKind::GaussianAsymmetric { g, h } => {
            e.u8(2);
            e.complexes(g);
            e.complexes(h);
        }
        OperatorKind::Cdp { alphabet, masks } => {
            e.u8(3);
            e.u8(match alphabet {
                MaskAlphabet::Ternary => 0,
                MaskAlphabet::Octanary => 1,
            });
            e.usize(masks.len());
            for mask in masks {
                e.complexes(mask);
            }
        }
    }
    e.reals(&m.y);
    e.buf
}

pub fn decode_measurements(bytes: &[u8]) -> Result<MeasurementSet> {
    let mut d = Decoder::open(bytes, b"MSET", MEASUREMENT_VERSION)?;
    let seed = d.u64()?;
    let has_noise = d.u8()?;
    let snr = d.f64()?;
    let input_shape = (d.usize()?, d.usize()?);
    let kind = match d.u8()? {
        0 => OperatorKind::GaussianLeft { g: d.complexes()? },
        1 => OperatorKind::GaussianTwoSided { g: d.complexes()? },
        2 => OperatorKind::GaussianAsymmetric {
            g: d.complexes()?,
            h: d.complexes()?,
        },
        3 => {
            let alphabet = match d.u8()? {
                0 => MaskAlphabet::Ternary,
                1 => MaskAlphabet::Octanary,
                t => return Err(Error::Corrupt(format!("unknown mask alphabet tag {t}"))),
            };
            let count = d.usize()?;
            let masks = (0..count).map(|_| d.complexes()).collect::<Result<Vec<_>>>()?;
            OperatorKind::Cdp { alphabet, masks }
        }
        t => return Err(Error::Corrupt(format!("unknown operator tag {t}"))),
    };
    let y = d.reals()?;
    d.finish()?;
    let operator = Operator::new(kind, input_shape).map_err(|e| Error::Corrupt(format!("invalid operator: {e}")))?;
    if operator.output_shape() != y.dim() {
        return Err(Error::Corrupt("measurement shape does not match the operator".into()));
    }
    Ok(MeasurementSet {
        y,
        operator,
        noise_snr_db: (has_noise == 1).then_some(snr),
        seed,
    })
}

pub fn save_measurements(m: &MeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_measurements(m))
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    decode_measurements(&read_file(path.as_ref())?)
}

pub fn encode_snapshot(state: &SolverState) -> Vec<u8> {
    let mut e = Encoder::header(b"SNAP", SNAPSHOT_VERSION);
    e.usize(state.iteration);
    e.u8(match state.termination {
        Termination::Running => 0,
        Termination::BudgetExhausted => 1,
        Termination::Stalled => 2,
    });
    e.reals(&state.x);
    e.reals(&state.dictionary.entries);
    e.reals(&state.codes.entries);
    e.vector(&state.lipschitz);
    match state.step {
        StepPolicy::Heuristic(h) => {
            e.u8(0);
            e.f64(h.gamma);
            e.f64(h.grow);
            e.usize(h.max_trials);
        }
        StepPolicy::Armijo(a) => {
            e.u8(1);
            e.f64(a.eta);
            e.f64(a.eta_bar);
            e.f64(a.reach);
            e.usize(a.max_trials);
        }
    }
    e.usize(state.trace.len());
    for row in &state.trace {
        e.usize(row.iteration);
        e.f64(row.objective.data_fit);
        e.f64(row.objective.patch_fit);
        e.f64(row.objective.sparsity);
        e.f64(row.objective.total);
        e.f64(row.gamma_x);
        e.f64(row.mean_l0);
        e.u8(row.stalls.codes as u8 | (row.stalls.image as u8) << 1 | (row.stalls.dictionary as u8) << 2);
    }
    e.buf.extend_from_slice(&state.rng.get_seed());
    e.u64(state.rng.get_stream());
    e.buf.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    e.buf
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<SolverState> {
    let mut d = Decoder::open(bytes, b"SNAP", SNAPSHOT_VERSION)?;
    let iteration = d.usize()?;
    let termination = match d.u8()? {
        0 => Termination::Running,
        1 => Termination::BudgetExhausted,
        2 => Termination::Stalled,
        t => return Err(Error::Corrupt(format!("unknown termination tag {t}"))),
    };
    let x = d.reals()?;
    let dictionary = Dictionary { entries: d.reals()? };
    let codes = CodeMatrix { entries: d.reals()? };
    let lipschitz = d.vector()?;
    let step = match d.u8()? {
        0 => StepPolicy::Heuristic(HeuristicStep {
            gamma: d.f64()?,
            grow: d.f64()?,
            max_trials: d.usize()?,
        }),
        1 => StepPolicy::Armijo(ArmijoStep {
            eta: d.f64()?,
            eta_bar: d.f64()?,
            reach: d.f64()?,
            max_trials: d.usize()?,
        }),
        t => return Err(Error::Corrupt(format!("unknown step policy tag {t}"))),
    };
    let rows = d.usize()?;
    if rows.checked_mul(65).is_none_or(|b| b > bytes.len()) {
        return Err(Error::Corrupt("trace length exceeds the container".into()));
    }
    let mut trace = Vec::with_capacity(rows);
    for _ in 0..rows {
        let iteration = d.usize()?;
        let (data_fit, patch_fit, sparsity, total) = (d.f64()?, d.f64()?, d.f64()?, d.f64()?);
        let (gamma_x, mean_l0) = (d.f64()?, d.f64()?);
        let bits = d.u8()?;
        trace.push(TraceRow {
            iteration,
            objective: ObjectiveValue {
                data_fit,
                patch_fit,
                sparsity,
                total,
            },
            gamma_x,
            mean_l0,
            stalls: StallFlags {
                codes: bits & 1 != 0,
                image: bits & 2 != 0,
                dictionary: bits & 4 != 0,
            },
        });
    }
    let seed: [u8; 32] = d.take(32)?.try_into().unwrap();
    let stream = d.u64()?;
    let word_pos = u128::from_le_bytes(d.take(16)?.try_into().unwrap());
    d.finish()?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(SolverState {
        x,
        dictionary,
        codes,
        iteration,
        trace,
        step,
        lipschitz,
        rng,
        termination,
    })
}

/// Writes a lossless snapshot of `state`.
pub fn snapshot(state: &SolverState, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_snapshot(state))
}

/// Reads a snapshot written by [`snapshot`].
pub fn restore(path: impl AsRef<Path>) -> Result<SolverState> {
    decode_snapshot(&read_file(path.as_ref())?)
}
