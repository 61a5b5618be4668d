//! Stops a run halfway, snapshots it, and resumes from the file.

use dolphin::container::{restore, snapshot};
use dolphin::experiment::{MeasurementSettings, SolverSettings};
use dolphin::io::load_gray;
use dolphin::solver::{initial_state, iterate, run_dolphin, run_from};

fn main() -> dolphin::Result<()> {
    let truth = load_gray(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cameraman_64.pgm"))?;
    let m = MeasurementSettings::default().measure(&truth, 3)?;
    let config = SolverSettings::default().config(truth.dim(), 3)?;

    let mut state = initial_state(&m, &config)?;
    while state.iteration < 40 {
        iterate(&mut state, &m, &config)?;
    }
    let path = std::env::temp_dir().join("dolphin_example.snap");
    snapshot(&state, &path)?;
    println!("snapshot after {} iterations: {}", state.iteration, path.display());

    let resumed = run_from(restore(&path)?, &m, &config)?;
    let uninterrupted = run_dolphin(&m, &config)?;
    println!(
        "resumed run identical to uninterrupted run: {}",
        resumed.state == uninterrupted.state
    );
    Ok(())
}
