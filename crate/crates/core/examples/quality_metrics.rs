//! PSNR and SSIM of a few simple degradations.

use dolphin::io::load_gray;
use dolphin::metrics::{psnr, ssim};
use dolphin::patches::{extract, reassemble, PatchGeometry};

fn main() -> dolphin::Result<()> {
    let truth = load_gray(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cameraman_256.pgm"))?;
    let offset = truth.mapv(|v| (v + 0.05).min(1.0));
    let inverted = truth.mapv(|v| 1.0 - v);
    // blockwise means: every 8x8 patch replaced by its average
    let geometry = PatchGeometry::nonoverlapping((8, 8), truth.dim())?;
    let mut patches = extract(truth.view(), &geometry)?;
    for mut col in patches.entries.columns_mut() {
        let mean = col.mean().unwrap_or(0.0);
        col.fill(mean);
    }
    let blocky = reassemble(&patches);

    for (name, est) in [
        ("identical", &truth),
        ("offset", &offset),
        ("blocky", &blocky),
        ("inverted", &inverted),
    ] {
        println!(
            "{name:>10}: PSNR {:>7.2} dB  SSIM {:.4}",
            psnr(truth.view(), est.view())?,
            ssim(truth.view(), est.view())?
        );
    }
    Ok(())
}
