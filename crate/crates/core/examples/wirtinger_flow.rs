//! Box-constrained Wirtinger flow on Gaussian and CDP measurements.

use dolphin::experiment::{MeasurementSettings, OperatorFamily};
use dolphin::image_update::StepKind;
use dolphin::io::load_gray;
use dolphin::metrics::{psnr, ssim};
use dolphin::solver::{random_start, run_wf_baseline};

fn main() -> dolphin::Result<()> {
    let truth = load_gray(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cameraman_64.pgm"))?;
    for family in [OperatorFamily::Gx, OperatorFamily::Cdp] {
        let settings = MeasurementSettings {
            family,
            ..MeasurementSettings::default()
        };
        let m = settings.measure(&truth, 0)?;
        for step in [StepKind::Heuristic, StepKind::Armijo] {
            let x = run_wf_baseline(&m, 75, step, random_start(truth.dim(), 0).view())?;
            println!(
                "{} / {}: PSNR {:.2} dB, SSIM {:.4}",
                family.name(),
                step.name(),
                psnr(truth.view(), x.view())?,
                ssim(truth.view(), x.view())?
            );
        }
    }
    Ok(())
}
