//! Patch extraction, reassembly and per-pixel multiplicity.

use dolphin::io::load_gray;
use dolphin::patches::{extract, multiplicity, reassemble, PatchGeometry};

fn main() -> dolphin::Result<()> {
    let image = load_gray(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cameraman_64.pgm"))?;
    for stride in [(8, 8), (4, 4), (1, 1)] {
        let geometry = PatchGeometry::new((8, 8), stride, image.dim())?;
        let patches = extract(image.view(), &geometry)?;
        let back = reassemble(&patches);
        let counts = multiplicity(&geometry);
        println!(
            "stride {:?}: {} patches of {} pixels, max multiplicity {}, exact round-trip {}",
            stride,
            geometry.patch_count(),
            geometry.patch_len(),
            counts.iter().cloned().fold(0.0, f64::max),
            back == image
        );
    }
    Ok(())
}
