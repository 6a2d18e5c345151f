//! Node statistics, the edge-rewiring null model, assortativity, sector
//! edge shares and the heaviest edges of a network.
//!
//! ```bash
//! cargo run --release --example network_diagnostics
//! ```

use skillbasin::graph::{assortativity, node_stats, rewire_null, sector_edge_share, top_edges};
use skillbasin::relatedness::{relatedness_from_tables, threshold, RelatednessConfig};
use skillbasin::synth::{generate, SynthConfig};

pub fn run() -> skillbasin::Result<()> {
    let cfg = SynthConfig::default();
    let h = generate(&cfg)?;
    let rel = relatedness_from_tables(
        &h.transitions,
        Some(&h.employment),
        Some(&h.sectors),
        &cfg.network_years(),
        &RelatednessConfig::default(),
    )?;
    let net = threshold(&rel, 0.0)?;

    let stats = node_stats(&net)?;
    let max_degree = stats.degree.iter().max().copied().unwrap_or(0);
    let total: f64 = stats.strength.iter().sum();
    println!(
        "{} nodes, {} edges, max degree {max_degree}, total strength {total:.3}, leading eigenvalue {:.3}",
        net.n(),
        net.edge_count(),
        stats.eigenvalue
    );

    let a = assortativity(&net, &stats);
    println!(
        "assortativity: degree {:?}, strength {:?}, centrality {:?}",
        a.degree_coefficient, a.strength_coefficient, a.centrality_coefficient
    );

    let null = rewire_null(&net, 200, 7, 10)?;
    println!("strength histogram (observed vs rewired mean):");
    for k in 0..null.strength_observed.counts.len() {
        println!(
            "  [{:6.3}, {:6.3})  {:5.1}  {:6.2}",
            null.strength_observed.edges[k],
            null.strength_observed.edges[k + 1],
            null.strength_observed.counts[k],
            null.strength_null.counts[k]
        );
    }

    let share = sector_edge_share(&net, &h.sectors)?;
    let k = share.sectors.len();
    println!("edge share by sector pair:");
    for p in 0..k {
        let row: Vec<String> = (0..k)
            .map(|q| share.get(p, q).map_or("  -  ".into(), |v| format!("{v:.3}")))
            .collect();
        println!("  {:>3}  {}", share.sectors[p], row.join("  "));
    }

    for (rank, e) in top_edges(&net, 5).iter().enumerate() {
        println!("#{} {} - {}  {:.4}", rank + 1, e.source, e.target, e.weight);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> skillbasin::Result<()> {
    run()
}
