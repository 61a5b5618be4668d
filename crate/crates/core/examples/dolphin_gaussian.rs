//! Full reconstruction with dictionary learning from noisy Gaussian
//! measurements, compared with plain Wirtinger flow from the same start.

use dolphin::experiment::{MeasurementSettings, OperatorFamily, SolverSettings};
use dolphin::io::{load_gray, save_image, BitDepth};
use dolphin::metrics::psnr;
use dolphin::solver::{random_start, run_dolphin, run_wf_baseline};

fn main() -> dolphin::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cameraman_64.pgm").into());
    let truth = load_gray(&path)?;
    let measurements = MeasurementSettings {
        family: OperatorFamily::Gx,
        snr_db: Some(10.0),
        ..MeasurementSettings::default()
    };
    let solver = SolverSettings {
        mu: Some(0.5),
        lambda: Some(0.105),
        ..SolverSettings::default()
    };

    let m = measurements.measure(&truth, 0)?;
    let config = solver.config(truth.dim(), 0)?;
    let run = run_dolphin(&m, &config)?;
    let wf = run_wf_baseline(&m, config.iterations(), config.step, random_start(truth.dim(), 0).view())?;

    let patch = run.reconstruction.patch_estimate.as_ref().expect("patch-based variant");
    println!("X          {:.2} dB", psnr(truth.view(), run.reconstruction.x_estimate.view())?);
    println!("P(R(DA))   {:.2} dB", psnr(truth.view(), patch.view())?);
    println!("WF         {:.2} dB", psnr(truth.view(), wf.view())?);
    println!("mean |a|_0 {:.2}", dolphin::solver::mean_l0(&run.state.codes));
    for row in run.state.trace.iter().step_by(15) {
        println!(
            "  iter {:>3}: total {:.6e}, gamma {:.3e}",
            row.iteration, row.objective.total, row.gamma_x
        );
    }

    let out = std::env::temp_dir();
    save_image(run.reconstruction.x_estimate.view(), out.join("dolphin_x.pgm"), BitDepth::Sixteen)?;
    save_image(wf.view(), out.join("dolphin_wf.pgm"), BitDepth::Sixteen)?;
    println!("images written to {}", out.display());
    Ok(())
}
