//! A small replicate sweep written to disk, then summarized.

use dolphin::experiment::{report, run_experiment, ExperimentSpec};

fn main() -> dolphin::Result<()> {
    let mut spec = ExperimentSpec::default();
    spec.apply_config_text(
        "[measurements]\noperator = gx\nsnr-db = 10\n\n[solver]\nmu = 0.5\nlambda = 0.105\n\n[experiment]\nreplicates = 3\n",
    )?;
    spec.set("image", concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cameraman_64.pgm"))?;
    spec.out = std::env::temp_dir().join("dolphin_sweep");

    let outcome = run_experiment(&spec)?;
    println!("config hash {}, manifest {}", spec.config_hash(), outcome.manifest.display());
    for s in report(&[spec.out.join("runs.csv")])? {
        println!(
            "{} / {} ({} runs): X {:.2} dB, WF {:.2} dB",
            s.variant,
            s.operator,
            s.runs,
            s.means[0].unwrap_or(f64::NAN),
            s.means[5].unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
