//! Structure across Markov times: majority-rule dendrograms, cluster
//! employment sizes and their trajectories, and sector crosstabs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EmploymentTable, IndustryIndex, SectorMap};
use crate::stability::{Partition, ScaleSweep};

/// A merge seen between consecutive levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeEvent {
    /// Markov time of the level where the merged community lives.
    pub tau: u32,
    pub children: Vec<usize>,
    pub parent: usize,
}

/// Links communities at each level to one community at the next level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub levels: Vec<u32>,
    /// Community sizes per level.
    pub sizes: Vec<Vec<usize>>,
    /// `parents[k][c]` is the level-`k+1` parent of community `c` at level `k`.
    pub parents: Vec<Vec<usize>>,
    pub merges: Vec<MergeEvent>,
    pub tie_break: String,
}

pub const MAJORITY_TIE_BREAK: &str =
    "plurality of members; ties go to the larger parent, then the lower parent id";

/// Parent of each community of `child` within `parent` by plurality.
pub fn majority_parents(child: &Partition, parent: &Partition) -> Result<Vec<usize>> {
    if child.n() != parent.n() {
        return Err(Error::Argument(format!(
            "partitions differ in size: {} vs {}",
            child.n(),
            parent.n()
        )));
    }
    let (mc, mp) = (child.communities(), parent.communities());
    let psize = parent.sizes();
    let mut overlap = vec![0usize; mc * mp];
    for i in 0..child.n() {
        overlap[child.community_of(i) * mp + parent.community_of(i)] += 1;
    }
    Ok((0..mc)
        .map(|c| {
            let row = &overlap[c * mp..(c + 1) * mp];
            (0..mp)
                .max_by(|&a, &b| {
                    row[a]
                        .cmp(&row[b])
                        .then(psize[a].cmp(&psize[b]))
                        .then(b.cmp(&a))
                })
                .expect("parent level has a community")
        })
        .collect())
}

impl Dendrogram {
    pub fn from_levels(levels: &[(u32, &Partition)]) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::Argument("a dendrogram needs at least two levels".into()));
        }
        let mut parents = Vec::new();
        let mut merges = Vec::new();
        for pair in levels.windows(2) {
            let map = majority_parents(pair[0].1, pair[1].1)?;
            let mut children = vec![Vec::new(); pair[1].1.communities()];
            for (c, &p) in map.iter().enumerate() {
                children[p].push(c);
            }
            for (p, ch) in children.into_iter().enumerate() {
                if ch.len() > 1 {
                    merges.push(MergeEvent {
                        tau: pair[1].0,
                        children: ch,
                        parent: p,
                    });
                }
            }
            parents.push(map);
        }
        Ok(Dendrogram {
            levels: levels.iter().map(|l| l.0).collect(),
            sizes: levels.iter().map(|l| l.1.sizes()).collect(),
            parents,
            merges,
            tie_break: MAJORITY_TIE_BREAK.to_string(),
        })
    }

    /// Chain of community ids from `community` at `level` to the top level.
    pub fn ancestry(&self, level: usize, community: usize) -> Vec<usize> {
        let mut out = vec![community];
        let mut c = community;
        for map in &self.parents[level..] {
            c = map[c];
            out.push(c);
        }
        out
    }

    /// Composite map from `from` level communities to `to` level communities.
    pub fn compose(&self, from: usize, to: usize) -> Vec<usize> {
        assert!(from <= to && to < self.levels.len());
        (0..self.sizes[from].len())
            .map(|c| self.ancestry(from, c)[to - from])
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Newick tree: leaves are the finest-level communities `t{τ}c{id}`,
    /// internal nodes carry the same labels for their own level. Several
    /// top-level communities hang from an unlabelled root.
    pub fn to_newick(&self) -> String {
        let top = self.levels.len() - 1;
        let roots: Vec<String> = (0..self.sizes[top].len())
            .map(|c| self.newick_node(top, c))
            .collect();
        if roots.len() == 1 {
            format!("{};", roots[0])
        } else {
            format!("({});", roots.join(","))
        }
    }

    fn newick_node(&self, level: usize, c: usize) -> String {
        let label = format!("t{}c{}", self.levels[level], c);
        if level == 0 {
            return label;
        }
        let kids: Vec<String> = self.parents[level - 1]
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p == c)
            .map(|(k, _)| self.newick_node(level - 1, k))
            .collect();
        if kids.is_empty() {
            label
        } else {
            format!("({}){}", kids.join(","), label)
        }
    }
}

/// Majority-rule dendrogram over all levels of a sweep.
pub fn majority_link(sweep: &ScaleSweep) -> Result<Dendrogram> {
    let levels: Vec<(u32, &Partition)> = sweep
        .results
        .iter()
        .map(|r| (r.tau, &r.partition))
        .collect();
    Dendrogram::from_levels(&levels)
}

/// `W_i`: total employment of the community containing `i` (including `i`).
/// Industries without employment in `year` count as 0 and are reported.
pub fn cluster_employment_size(
    p: &Partition,
    e: &EmploymentTable,
    year: i32,
    index: &IndustryIndex,
) -> Result<(Vec<f64>, Vec<String>)> {
    if !e.has_year(year) {
        return Err(Error::Argument(format!("no employment for year {year}")));
    }
    if p.n() != index.len() {
        return Err(Error::Argument("partition and industry index differ in size".into()));
    }
    let emp = e.vector(year, index);
    let mut warnings = Vec::new();
    let mut total = vec![0.0; p.communities()];
    for (i, v) in emp.iter().enumerate() {
        match v {
            Some(x) => total[p.community_of(i)] += *x as f64,
            None => warnings.push(format!(
                "industry {} has no employment in {year}; counted as 0",
                index.name(i)
            )),
        }
    }
    Ok(((0..p.n()).map(|i| total[p.community_of(i)]).collect(), warnings))
}

/// Mean cluster employment size of one anchor cluster across Markov times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterTrajectory {
    pub anchor_tau: u32,
    pub anchor_cluster: usize,
    pub members: Vec<String>,
    pub taus: Vec<u32>,
    pub mean_size: Vec<f64>,
    /// Markov times at which the mean fell relative to the previous one.
    pub decreases: Vec<u32>,
}

pub const DEFAULT_ANCHOR_TAU: u32 = 3;

pub fn trajectory(
    sweep: &ScaleSweep,
    e: &EmploymentTable,
    year: i32,
    anchor_tau: u32,
    index: &IndustryIndex,
) -> Result<Vec<ClusterTrajectory>> {
    let anchor = sweep
        .at(anchor_tau)
        .ok_or_else(|| Error::Argument(format!("anchor Markov time {anchor_tau} not in grid")))?;
    let later: Vec<_> = sweep.results.iter().filter(|r| r.tau >= anchor_tau).collect();
    let sizes: Vec<Vec<f64>> = later
        .iter()
        .map(|r| cluster_employment_size(&r.partition, e, year, index).map(|w| w.0))
        .collect::<Result<_>>()?;
    Ok(anchor
        .partition
        .members()
        .into_iter()
        .enumerate()
        .map(|(c, members)| {
            let mean_size: Vec<f64> = sizes
                .iter()
                .map(|w| members.iter().map(|&i| w[i]).sum::<f64>() / members.len() as f64)
                .collect();
            let decreases = mean_size
                .windows(2)
                .zip(&later[1..])
                .filter(|(w, _)| w[1] < w[0])
                .map(|(_, r)| r.tau)
                .collect();
            ClusterTrajectory {
                anchor_tau,
                anchor_cluster: c,
                members: members.iter().map(|&i| index.name(i).to_string()).collect(),
                taus: later.iter().map(|r| r.tau).collect(),
                mean_size,
                decreases,
            }
        })
        .collect())
}

/// Industry counts by sector (rows) and cluster (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crosstab {
    pub sectors: Vec<String>,
    pub clusters: usize,
    pub counts: Vec<usize>,
}

impl Crosstab {
    pub fn get(&self, sector: usize, cluster: usize) -> usize {
        self.counts[sector * self.clusters + cluster]
    }

    /// `sector,cluster,count` including zero cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Computation(format!("writing crosstab: {e}"));
        w.write_record(["sector", "cluster", "count"]).map_err(err)?;
        for (s, name) in self.sectors.iter().enumerate() {
            for c in 0..self.clusters {
                w.write_record([name.clone(), c.to_string(), self.get(s, c).to_string()])
                    .map_err(err)?;
            }
        }
        w.flush()
            .map_err(|e| Error::Computation(format!("writing crosstab: {e}")))
    }
}

fn sector_positions(s: &SectorMap, index: &IndustryIndex) -> Result<(Vec<String>, Vec<usize>)> {
    s.check_covers(index)?;
    let sectors = s.sectors();
    let of = index
        .ids()
        .iter()
        .map(|id| {
            let name = s.sector_of(id).expect("covered");
            sectors.iter().position(|x| x == name).expect("listed")
        })
        .collect();
    Ok((sectors, of))
}

pub fn sector_cluster_crosstab(p: &Partition, s: &SectorMap, index: &IndustryIndex) -> Result<Crosstab> {
    let (sectors, of) = sector_positions(s, index)?;
    let m = p.communities();
    let mut counts = vec![0; sectors.len() * m];
    for (i, &sec) in of.iter().enumerate() {
        counts[sec * m + p.community_of(i)] += 1;
    }
    Ok(Crosstab {
        sectors,
        clusters: m,
        counts,
    })
}

/// Number of clusters each sector appears in, per Markov time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorPresence {
    pub sectors: Vec<String>,
    pub taus: Vec<u32>,
    /// `counts[k][s]` for Markov time `taus[k]` and sector `s`.
    pub counts: Vec<Vec<usize>>,
}

impl SectorPresence {
    /// `tau,sector,clusters`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Computation(format!("writing sector presence: {e}"));
        w.write_record(["tau", "sector", "clusters"]).map_err(err)?;
        for (k, tau) in self.taus.iter().enumerate() {
            for (s, name) in self.sectors.iter().enumerate() {
                w.write_record([tau.to_string(), name.clone(), self.counts[k][s].to_string()])
                    .map_err(err)?;
            }
        }
        w.flush()
            .map_err(|e| Error::Computation(format!("writing sector presence: {e}")))
    }
}

pub fn clusters_per_sector(sweep: &ScaleSweep, s: &SectorMap, index: &IndustryIndex) -> Result<SectorPresence> {
    let mut sectors = Vec::new();
    let mut counts = Vec::new();
    for r in &sweep.results {
        let tab = sector_cluster_crosstab(&r.partition, s, index)?;
        counts.push(
            (0..tab.sectors.len())
                .map(|sec| (0..tab.clusters).filter(|&c| tab.get(sec, c) > 0).count())
                .collect(),
        );
        sectors = tab.sectors;
    }
    Ok(SectorPresence {
        sectors,
        taus: sweep.taus(),
        counts,
    })
}
