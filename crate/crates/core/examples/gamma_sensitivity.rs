//! Rebuilds network, sweep and scan at several edge thresholds and checks
//! whether the ΔR² peak moves.
//!
//! ```bash
//! cargo run --release --example gamma_sensitivity
//! ```

use skillbasin::growth::{argmax_delta, gamma_sensitivity, FitOptions, ScanSettings, Subset};
use skillbasin::relatedness::{relatedness_from_tables, RelatednessConfig};
use skillbasin::synth::{generate, SynthConfig};

pub fn run() -> skillbasin::Result<()> {
    let cfg = SynthConfig {
        seed: 2,
        ..SynthConfig::three_level()
    };
    let h = generate(&cfg)?;
    let rel = relatedness_from_tables(&h.transitions, Some(&h.employment), None, &cfg.network_years(), &RelatednessConfig::default())?;
    let settings = ScanSettings {
        grid: (1..=15).collect(),
        runs: 20,
        seed: 0,
        t0: cfg.t0(),
        t1: cfg.t1(),
        subset: Subset::All,
        options: FitOptions::default(),
        references: vec![1],
    };
    let scans = gamma_sensitivity(&rel, &[0.0, 0.1, 0.2, 0.4], &h.employment, None, &settings)?;
    println!("gamma  edges  argmax ΔR² vs tau 1  communities per tau");
    for g in &scans {
        let counts: Vec<usize> = g.sweep.results.iter().map(|r| r.num_communities).collect();
        let peak = argmax_delta(&g.fixed_obs).map_or("-".to_string(), |t| t.to_string());
        println!("{:>5}  {:>5}  {peak:>19}  {counts:?}", g.gamma, g.edges);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> skillbasin::Result<()> {
    run()
}
