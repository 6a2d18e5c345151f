//! From worker-transition counts to a thresholded skill-relatedness network.
//!
//! A small planted economy is generated in memory, written out as the
//! three input CSVs, read back, and turned into the network.
//!
//! ```bash
//! cargo run --release --example build_network
//! ```

use skillbasin::ingest::{build_flow_tensor, load_employment, load_sectors, load_transitions, InputPaths};
use skillbasin::relatedness::{compute_relatedness, threshold, RelatednessConfig};
use skillbasin::synth::{generate, SynthConfig};

pub fn run() -> skillbasin::Result<()> {
    let dir = std::env::temp_dir().join("skillbasin-build-network");
    generate(&SynthConfig::default())?.write_to_dir(&dir)?;

    let paths = InputPaths::in_dir(&dir);
    let transitions = load_transitions(&paths.transitions)?;
    let employment = load_employment(&paths.employment)?;
    let sectors = load_sectors(&paths.sectors)?;
    println!(
        "{} transition rows over years {:?}; {} employment rows; {} sectors",
        transitions.len(),
        transitions.years(),
        employment.len(),
        sectors.sectors().len()
    );

    let tensor = build_flow_tensor(&transitions, &transitions.years())?;
    let rel = compute_relatedness(&tensor, &RelatednessConfig::default())?;
    println!("{} industries, {} defined pairs", rel.n(), rel.values.defined_count() / 2);

    for gamma in [0.0, 0.2, 0.5] {
        let net = threshold(&rel, gamma)?;
        println!("gamma {gamma:>4}: {:>4} edges", net.edge_count());
    }

    let net = threshold(&rel, 0.0)?;
    let out = dir.join("network.csv");
    net.write_edge_csv(std::fs::File::create(&out).map_err(|e| skillbasin::Error::Computation(e.to_string()))?)?;
    println!("edge list written to {}", out.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> skillbasin::Result<()> {
    run()
}
