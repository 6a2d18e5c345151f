//! Majority-rule dendrogram over a sweep, cluster employment trajectories
//! and sector × cluster crosstabs.
//!
//! ```bash
//! cargo run --release --example cluster_hierarchy
//! ```

use skillbasin::graph::WalkOperators;
use skillbasin::multiscale::{clusters_per_sector, majority_link, sector_cluster_crosstab, trajectory};
use skillbasin::relatedness::{relatedness_from_tables, threshold, RelatednessConfig};
use skillbasin::stability::sweep;
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
    let walk = WalkOperators::new(net.graph())?;
    let sw = sweep(&walk, &[1, 3, 6, 10, 15], 20, 3)?;

    let tree = majority_link(&sw)?;
    println!("newick: {}", tree.to_newick());
    for m in tree.merges.iter().take(8) {
        println!("{m:?}");
    }

    let tr = trajectory(&sw, &h.employment, cfg.t0(), 1, &net.index)?;
    for t in tr.iter().take(4) {
        let sizes: Vec<String> = t.mean_size.iter().map(|s| format!("{s:.0}")).collect();
        println!("cluster {:>2} ({} members): {}", t.anchor_cluster, t.members.len(), sizes.join(" → "));
    }

    let coarse = &sw.at(15).expect("in grid").partition;
    let ct = sector_cluster_crosstab(coarse, &h.sectors, &net.index)?;
    println!("sector × cluster at tau 15:");
    for (s, name) in ct.sectors.iter().enumerate() {
        let row: Vec<String> = (0..ct.clusters).map(|c| format!("{:>3}", ct.get(s, c))).collect();
        println!("  {name:>3} {}", row.join(""));
    }

    let presence = clusters_per_sector(&sw, &h.sectors, &net.index)?;
    let mut buf = Vec::new();
    presence.write_csv(&mut buf)?;
    print!("{}", String::from_utf8_lossy(&buf));
    Ok(())
}

#[allow(dead_code)]
fn main() -> skillbasin::Result<()> {
    run()
}
