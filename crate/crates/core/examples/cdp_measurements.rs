//! Draws coded diffraction patterns, checks the adjoint and persists the set.

use dolphin::container::{load_measurements, save_measurements};
use dolphin::io::load_gray;
use dolphin::measurements::{inner, intensities, measure, realized_snr_db, MaskAlphabet, Operator, OperatorSpec};
use ndarray::Array2;
use num_complex::Complex64;

fn main() -> dolphin::Result<()> {
    let truth = load_gray(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cameraman_64.pgm"))?;
    let op = Operator::sample_seeded(&OperatorSpec::cdp(2, MaskAlphabet::Ternary), truth.dim(), 1)?;
    println!(
        "operator {} maps {:?} to {:?}",
        op.kind().tag(),
        op.input_shape(),
        op.output_shape()
    );

    let x = truth.mapv(|v| Complex64::new(v, 0.5 - v));
    let z = Array2::from_shape_fn(op.output_shape(), |(i, j)| Complex64::new((i as f64).sin(), (j as f64).cos()));
    let lhs = inner(op.forward(x.view())?.view(), z.view());
    let rhs = inner(x.view(), op.adjoint(z.view())?.view());
    println!("<F X, Z> = {lhs:.6}, <X, F* Z> = {rhs:.6}");

    let clean = intensities(&op, truth.view())?;
    let set = measure(op, truth.view(), Some(20.0), 1)?;
    println!("{} measurements, realized SNR {:.3} dB", set.len(), realized_snr_db(&clean, &set.y));

    let path = std::env::temp_dir().join("cdp_example.mset");
    save_measurements(&set, &path)?;
    let back = load_measurements(&path)?;
    println!("reloaded from {}: identical = {}", path.display(), back == set);
    Ok(())
}
