//! The sparsity-constrained variant: OMP codes with a hard bound that
//! doubles at the start of the dictionary phase.

use dolphin::experiment::{MeasurementSettings, SolverSettings};
use dolphin::io::load_gray;
use dolphin::measurements::MaskAlphabet;
use dolphin::metrics::psnr;
use dolphin::solver::{initial_state, iterate, reconstruct, Termination, Variant};

fn main() -> dolphin::Result<()> {
    let truth = load_gray(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cameraman_64.pgm"))?;
    let settings = MeasurementSettings {
        alphabet: MaskAlphabet::Octanary,
        ..MeasurementSettings::default()
    };
    let m = settings.measure(&truth, 2)?;
    let solver = SolverSettings {
        variant: Variant::L0,
        stride: Some((4, 4)),
        ..SolverSettings::default()
    };
    let config = solver.config(truth.dim(), 2)?;

    let mut state = initial_state(&m, &config)?;
    while state.termination == Termination::Running {
        let bound = config.k_at(state.iteration);
        iterate(&mut state, &m, &config)?;
        let widest = state.codes.nonzeros_per_column().into_iter().max().unwrap_or(0);
        if state.iteration % 5 == 0 || state.iteration == config.k1 + 1 {
            println!(
                "iter {:>2}: k = {bound}, widest code {widest}, total {:.6e}",
                state.iteration,
                state.trace.last().unwrap().objective.total
            );
        }
    }
    let pair = reconstruct(&state, &config);
    println!("X {:.2} dB", psnr(truth.view(), pair.x_estimate.view())?);
    if let Some(p) = &pair.patch_estimate {
        println!("P(R(DA)) {:.2} dB", psnr(truth.view(), p.view())?);
    }
    Ok(())
}
