//! Learns a dictionary and writes it, and the initial one, as atlases.

use dolphin::dictionary::init_dictionary;
use dolphin::experiment::{MeasurementSettings, OperatorFamily, SolverSettings};
use dolphin::io::{load_gray, read_dictionary, save_dictionary_atlas, write_dictionary};
use dolphin::solver::run_dolphin;

fn main() -> dolphin::Result<()> {
    let truth = load_gray(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cameraman_64.pgm"))?;
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
    let run = run_dolphin(&m, &solver.config(truth.dim(), 0)?)?;

    let out = std::env::temp_dir();
    save_dictionary_atlas(&init_dictionary(8, 8), (8, 8), out.join("atlas_initial.png"))?;
    save_dictionary_atlas(&run.state.dictionary, (8, 8), out.join("atlas_learned.png"))?;
    write_dictionary(&run.state.dictionary, out.join("learned.dict"))?;
    let back = read_dictionary(out.join("learned.dict"))?;
    println!(
        "atlases in {}; dictionary round-trip exact: {}",
        out.display(),
        back == run.state.dictionary
    );
    Ok(())
}
