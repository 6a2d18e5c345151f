//! Discrete-time Markov stability, a Louvain-style optimiser for it,
//! variation of information, and multi-run sweeps over Markov time.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WalkOperators;
use crate::ingest::IndustryIndex;
use crate::util::derive_seed;

/// Node-to-community assignment with contiguous ids `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    assignment: Vec<usize>,
    communities: usize,
}

impl Partition {
    /// Wraps an assignment whose ids are already contiguous from 0.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let communities = assignment.iter().max().map_or(0, |&m| m + 1);
        let mut seen = vec![false; communities];
        for &c in &assignment {
            seen[c] = true;
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(Error::Argument(format!(
                "community ids must be contiguous from 0; id {gap} is unused"
            )));
        }
        Ok(Partition {
            assignment,
            communities,
        })
    }

    /// Relabels arbitrary labels by order of first appearance.
    pub fn canonical<T: Eq + std::hash::Hash + Clone>(labels: &[T]) -> Self {
        let mut ids: HashMap<T, usize> = HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(l.clone()).or_insert(next)
            })
            .collect();
        Partition {
            assignment,
            communities: ids.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            assignment: (0..n).collect(),
            communities: n,
        }
    }

    pub fn single(n: usize) -> Self {
        Partition {
            assignment: vec![0; n],
            communities: usize::from(n > 0),
        }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn communities(&self) -> usize {
        self.communities
    }

    pub fn community_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Members of each community in ascending node order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.communities];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.communities];
        for &c in &self.assignment {
            out[c] += 1;
        }
        out
    }

    pub fn to_canonical(&self) -> Self {
        Self::canonical(&self.assignment)
    }
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Partition::new(v)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.assignment
    }
}

fn check_partition(w: &WalkOperators, h: &Partition) -> Result<()> {
    if h.n() != w.n() {
        return Err(Error::Argument(format!(
            "partition covers {} nodes, graph has {}",
            h.n(),
            w.n()
        )));
    }
    Ok(())
}

/// `R(τ, H) = Hᵀ[Π Mᵗ − πᵀπ]H` as a row-major `m × m` matrix.
///
/// `Mᵗ H` is built by `τ` sparse products against the indicator columns.
/// Zero-degree nodes carry no stationary mass and contribute nothing.
pub fn clustered_autocovariance(w: &WalkOperators, h: &Partition, tau: u32) -> Result<Vec<f64>> {
    check_partition(w, h)?;
    let (n, m) = (w.n(), h.communities());
    let mut x = vec![0.0; n * m];
    for i in 0..n {
        x[i * m + h.community_of(i)] = 1.0;
    }
    for _ in 0..tau {
        x = w.apply(&x, m);
    }
    let pi = w.stationary();
    let mut mass = vec![0.0; m];
    let mut r = vec![0.0; m * m];
    for i in 0..n {
        let c = h.community_of(i);
        mass[c] += pi[i];
        for d in 0..m {
            r[c * m + d] += pi[i] * x[i * m + d];
        }
    }
    for c in 0..m {
        for d in 0..m {
            r[c * m + d] -= mass[c] * mass[d];
        }
    }
    Ok(r)
}

/// `r(τ, H) = Trace R(τ, H)`.
pub fn stability(w: &WalkOperators, h: &Partition, tau: u32) -> Result<f64> {
    let r = clustered_autocovariance(w, h, tau)?;
    let m = h.communities();
    Ok((0..m).map(|c| r[c * m + c]).sum())
}

/// Dense symmetric flow kernel `Π Mᵗ`, row-major `n × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowKernel {
    pub tau: u32,
    n: usize,
    weights: Vec<f64>,
    mass: Vec<f64>,
}

impl FlowKernel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Stability of `h` evaluated pairwise: `Σ_{i,j same community}
    /// (πᵢ Mᵗᵢⱼ − πᵢπⱼ)`.
    pub fn quality(&self, h: &Partition) -> f64 {
        let members = h.members();
        let mut total = 0.0;
        for group in &members {
            let mut within = 0.0;
            let mut p = 0.0;
            for &i in group {
                p += self.mass[i];
                for &j in group {
                    within += self.get(i, j);
                }
            }
            total += within - p * p;
        }
        total
    }
}

/// Incrementally advances `Mᵗ` along an increasing grid of Markov times.
pub struct KernelStepper<'a> {
    walk: &'a WalkOperators,
    power: Vec<f64>,
    tau: u32,
}

impl<'a> KernelStepper<'a> {
    pub fn new(walk: &'a WalkOperators) -> Self {
        let n = walk.n();
        let mut power = vec![0.0; n * n];
        for i in 0..n {
            power[i * n + i] = 1.0;
        }
        KernelStepper {
            walk,
            power,
            tau: 0,
        }
    }

    /// Kernel at `tau`, which must not be below the last requested value.
    pub fn advance_to(&mut self, tau: u32) -> Result<FlowKernel> {
        if tau < self.tau {
            return Err(Error::Argument(format!(
                "Markov times must increase; got {tau} after {}",
                self.tau
            )));
        }
        let n = self.walk.n();
        while self.tau < tau {
            self.power = self.walk.apply(&self.power, n);
            self.tau += 1;
        }
        let pi = self.walk.stationary();
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * (pi[i] * self.power[i * n + j] + pi[j] * self.power[j * n + i]);
                weights[i * n + j] = v;
                weights[j * n + i] = v;
            }
        }
        Ok(FlowKernel {
            tau,
            n,
            weights,
            mass: pi.to_vec(),
        })
    }
}

pub fn flow_kernel(w: &WalkOperators, tau: u32) -> Result<FlowKernel> {
    KernelStepper::new(w).advance_to(tau)
}

/// Gain threshold below which a move is not taken.
pub const MOVE_TOLERANCE: f64 = 1e-12;

/// Dense generalised-modularity instance: weights `w` (with self-weights on
/// the diagonal) and null-model masses `p`.
struct Level {
    n: usize,
    w: Vec<f64>,
    p: Vec<f64>,
}

impl Level {
    /// Greedy local moves until a full pass makes none. Returns the
    /// community of each node and whether anything moved.
    fn local_moves(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.n;
        let mut comm: Vec<usize> = (0..n).collect();
        let mut mass = self.p.clone();
        let mut count = vec![1usize; n];
        let mut order: Vec<usize> = (0..n).collect();
        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::with_capacity(n);
        let mut moved_any = false;
        loop {
            order.shuffle(rng);
            let mut moved = false;
            for &i in &order {
                let a = comm[i];
                let pi = self.p[i];
                let row = &self.w[i * n..(i + 1) * n];
                for (j, &wij) in row.iter().enumerate() {
                    if j == i || wij == 0.0 {
                        continue;
                    }
                    let c = comm[j];
                    if link[c] == 0.0 {
                        touched.push(c);
                    }
                    link[c] += wij;
                }
                let stay = 2.0 * link[a] - 2.0 * pi * (mass[a] - pi);
                let mut best = a;
                let mut best_gain = 0.0;
                for &b in &touched {
                    if b == a {
                        continue;
                    }
                    let gain = 2.0 * link[b] - 2.0 * pi * mass[b] - stay;
                    if gain > best_gain + MOVE_TOLERANCE
                        || (gain > MOVE_TOLERANCE && gain == best_gain && b < best)
                    {
                        best = b;
                        best_gain = gain;
                    }
                }
                // Moving into an empty community gains exactly `-stay`.
                if count[a] > 1 && -stay > best_gain + MOVE_TOLERANCE {
                    if let Some(empty) = count.iter().position(|&k| k == 0) {
                        best = empty;
                    }
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
                link[a] = 0.0;
                touched.clear();
                if best != a {
                    mass[a] -= pi;
                    count[a] -= 1;
                    mass[best] += pi;
                    count[best] += 1;
                    comm[i] = best;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        (comm, moved_any)
    }

    fn aggregate(&self, comm: &[usize]) -> (Level, Vec<usize>) {
        let relabel = Partition::canonical(comm);
        let k = relabel.communities();
        let mut w = vec![0.0; k * k];
        let mut p = vec![0.0; k];
        for i in 0..self.n {
            let a = relabel.community_of(i);
            p[a] += self.p[i];
            for j in 0..self.n {
                let v = self.w[i * self.n + j];
                if v != 0.0 {
                    w[a * k + relabel.community_of(j)] += v;
                }
            }
        }
        (Level { n: k, w, p }, relabel.assignment)
    }
}

/// Louvain optimisation of `r(τ, ·)` on a precomputed kernel.
///
/// Each connected component of the walk domain is optimised separately
/// (with global stationary masses); zero-degree nodes stay singletons.
/// The result is canonically labelled.
pub fn louvain_on_kernel(w: &WalkOperators, kernel: &FlowKernel, seed: u64) -> Partition {
    let n = w.n();
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for (ci, comp) in w.components().iter().enumerate() {
        let k = comp.len();
        let mut sub = vec![0.0; k * k];
        for (a, &i) in comp.iter().enumerate() {
            for (b, &j) in comp.iter().enumerate() {
                sub[a * k + b] = kernel.get(i, j);
            }
        }
        let p = comp.iter().map(|&i| kernel.mass()[i]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[ci as u64]));
        let local = louvain_dense(Level { n: k, w: sub, p }, &mut rng);
        let groups = local.iter().max().map_or(0, |m| m + 1);
        for (a, &i) in comp.iter().enumerate() {
            labels[i] = next + local[a];
        }
        next += groups;
    }
    for l in labels.iter_mut().filter(|l| **l == usize::MAX) {
        *l = next;
        next += 1;
    }
    Partition::canonical(&labels)
}

fn louvain_dense(mut level: Level, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut node_of: Vec<usize> = (0..level.n).collect();
    loop {
        let (comm, moved) = level.local_moves(rng);
        if !moved {
            return Partition::canonical(&node_of).assignment;
        }
        let (next, relabel) = level.aggregate(&comm);
        for c in node_of.iter_mut() {
            *c = relabel[*c];
        }
        level = next;
    }
}

/// Single Louvain run at Markov time `tau`.
pub fn louvain_stability(w: &WalkOperators, tau: u32, seed: u64) -> Result<Partition> {
    let kernel = flow_kernel(w, tau)?;
    Ok(louvain_on_kernel(w, &kernel, seed))
}

/// Summed over sorted counts, so equal multisets give bit-equal results.
fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    let mut counts: Vec<usize> = counts.collect();
    counts.sort_unstable();
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn run_lengths(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let j = i + v[i..].iter().take_while(|&&x| x == v[i]).count();
        out.push(j - i);
        i = j;
    }
    out
}

/// `VI = 2H(c₁,c₂) − H(c₁) − H(c₂)` in nats.
pub fn variation_of_information(a: &Partition, b: &Partition) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::Argument(format!(
            "partitions differ in size: {} vs {}",
            a.n(),
            b.n()
        )));
    }
    let n = a.n();
    if n == 0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let m2 = b.communities().max(1);
    let joint: Vec<usize> = (0..n)
        .map(|i| a.community_of(i) * m2 + b.community_of(i))
        .collect();
    let h_joint = entropy(run_lengths(joint).into_iter(), nf);
    let h_a = entropy(a.sizes().into_iter(), nf);
    let h_b = entropy(b.sizes().into_iter(), nf);
    Ok((2.0 * h_joint - (h_a + h_b)).max(0.0))
}

/// Outcome of the multi-run search at one Markov time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub tau: u32,
    pub partition: Partition,
    pub stability: f64,
    /// Mean VI over all unordered pairs of runs.
    pub mean_vi: f64,
    pub runs: usize,
    pub num_communities: usize,
}

/// Rule used to pick the best partition among equally stable runs.
pub const TIE_BREAK_RULE: &str = "max stability; ties within 1e-12 go to fewer communities, then lexicographically smallest canonical assignment";

pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_TAU_MAX: u32 = 15;

fn select(w: &WalkOperators, kernel: &FlowKernel, runs: usize, seed: u64) -> Result<StabilityResult> {
    if runs < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 runs per Markov time, got {runs}"
        )));
    }
    let tau = kernel.tau;
    let found: Vec<(Partition, f64)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let p = louvain_on_kernel(w, kernel, derive_seed(seed, &[tau as u64, r as u64]));
            let q = kernel.quality(&p);
            (p, q)
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..runs)
        .flat_map(|i| ((i + 1)..runs).map(move |j| (i, j)))
        .collect();
    let vis: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| variation_of_information(&found[i].0, &found[j].0))
        .collect::<Result<_>>()?;
    let mean_vi = vis.iter().sum::<f64>() / pairs.len() as f64;

    let top = found.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
    let best = found
        .iter()
        .filter(|f| f.1 >= top - MOVE_TOLERANCE)
        .min_by(|x, y| {
            x.0.communities()
                .cmp(&y.0.communities())
                .then_with(|| x.0.assignment().cmp(y.0.assignment()))
        })
        .expect("at least one run")
        .0
        .clone();
    let stability = stability(w, &best, tau)?;
    Ok(StabilityResult {
        tau,
        num_communities: best.communities(),
        partition: best,
        stability,
        mean_vi,
        runs,
    })
}

/// `runs` seeded Louvain searches at Markov time `tau`.
pub fn detect_at_scale(w: &WalkOperators, tau: u32, runs: usize, seed: u64) -> Result<StabilityResult> {
    let kernel = flow_kernel(w, tau)?;
    select(w, &kernel, runs, seed)
}

/// Results over an increasing grid of Markov times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSweep {
    pub results: Vec<StabilityResult>,
}

impl ScaleSweep {
    pub fn taus(&self) -> Vec<u32> {
        self.results.iter().map(|r| r.tau).collect()
    }

    pub fn at(&self, tau: u32) -> Option<&StabilityResult> {
        self.results.iter().find(|r| r.tau == tau)
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    /// Sweep built from partitions alone; stability and VI are NaN.
    pub fn from_partitions(parts: Vec<(u32, Partition)>) -> Result<Self> {
        let results = parts
            .into_iter()
            .map(|(tau, partition)| StabilityResult {
                tau,
                num_communities: partition.communities(),
                partition,
                stability: f64::NAN,
                mean_vi: f64::NAN,
                runs: 0,
            })
            .collect();
        let sweep = ScaleSweep { results };
        check_grid(&sweep.taus())?;
        Ok(sweep)
    }

    /// `tau,industry,community`, one row per node per Markov time.
    pub fn write_partitions_csv<W: Write>(&self, index: &IndustryIndex, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Computation(format!("writing partitions: {e}"));
        w.write_record(["tau", "industry", "community"]).map_err(io)?;
        for r in &self.results {
            for (i, &c) in r.partition.assignment().iter().enumerate() {
                w.write_record([r.tau.to_string(), index.name(i).to_string(), c.to_string()])
                    .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Computation(format!("writing partitions: {e}")))?;
        Ok(())
    }

    /// `tau,num_communities,stability,mean_vi`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Computation(format!("writing sweep summary: {e}"));
        w.write_record(["tau", "num_communities", "stability", "mean_vi"])
            .map_err(io)?;
        for r in &self.results {
            w.write_record([
                r.tau.to_string(),
                r.num_communities.to_string(),
                r.stability.to_string(),
                r.mean_vi.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Computation(format!("writing sweep summary: {e}")))?;
        Ok(())
    }
}

/// Parses a `tau,industry,community` file against a known industry index.
pub fn read_partitions_csv<R: Read>(
    reader: R,
    label: impl AsRef<Path>,
    index: &IndustryIndex,
) -> Result<ScaleSweep> {
    let path = label.as_ref().to_path_buf();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let parse = |line: u64, message: String| Error::Parse {
        path: path.clone(),
        line,
        message,
    };
    let header = rdr.headers().map_err(|e| parse(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["tau", "industry", "community"] {
        return Err(parse(1, "expected header tau,industry,community".into()));
    }
    let mut by_tau: BTreeMap<u32, Vec<Option<usize>>> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| parse(line, e.to_string()))?;
        let tau: u32 = rec[0]
            .parse()
            .map_err(|_| parse(line, format!("bad tau {:?}", &rec[0])))?;
        let i = index
            .position(&rec[1])
            .ok_or_else(|| parse(line, format!("unknown industry {:?}", &rec[1])))?;
        let c: usize = rec[2]
            .parse()
            .map_err(|_| parse(line, format!("bad community {:?}", &rec[2])))?;
        let row = by_tau.entry(tau).or_insert_with(|| vec![None; index.len()]);
        if row[i].replace(c).is_some() {
            return Err(parse(line, format!("industry {} repeated at tau {tau}", &rec[1])));
        }
    }
    let mut parts = Vec::new();
    for (tau, row) in by_tau {
        let labels: Vec<usize> = row
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                c.ok_or_else(|| parse(0, format!("industry {} missing at tau {tau}", index.name(i))))
            })
            .collect::<Result<_>>()?;
        parts.push((tau, Partition::canonical(&labels)));
    }
    ScaleSweep::from_partitions(parts)
}

fn check_grid(grid: &[u32]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument("Markov time grid is empty".into()));
    }
    if grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Argument("Markov time grid must be strictly increasing".into()));
    }
    if grid[0] == 0 {
        return Err(Error::Argument("Markov times must be positive".into()));
    }
    Ok(())
}

pub fn default_grid() -> Vec<u32> {
    (1..=DEFAULT_TAU_MAX).collect()
}

/// Multi-run detection at every Markov time of `grid`.
pub fn sweep(w: &WalkOperators, grid: &[u32], runs: usize, seed: u64) -> Result<ScaleSweep> {
    check_grid(grid)?;
    if runs < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 runs per Markov time, got {runs}"
        )));
    }
    let mut stepper = KernelStepper::new(w);
    let mut results = Vec::with_capacity(grid.len());
    for &tau in grid {
        let kernel = stepper.advance_to(tau)?;
        results.push(select(w, &kernel, runs, seed)?);
        log::debug!(
            "tau {tau}: {} communities, mean VI {:.4}",
            results.last().unwrap().num_communities,
            results.last().unwrap().mean_vi
        );
    }
    Ok(ScaleSweep { results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn walk(n: usize, edges: &[(usize, usize, f64)]) -> WalkOperators {
        WalkOperators::new(&WeightedGraph::from_edges(n, edges)).unwrap()
    }

    fn part(v: &[usize]) -> Partition {
        Partition::canonical(v)
    }

    /// Newman modularity from the adjacency list definition.
    fn modularity(n: usize, edges: &[(usize, usize, f64)], c: &[usize]) -> f64 {
        let g = WeightedGraph::from_edges(n, edges);
        let two_m: f64 = g.strengths().iter().sum();
        let k = c.iter().max().unwrap() + 1;
        let (mut inside, mut deg) = (vec![0.0; k], vec![0.0; k]);
        for i in 0..n {
            deg[c[i]] += g.strength(i);
            for &(j, w) in g.neighbors(i) {
                if c[i] == c[j] {
                    inside[c[i]] += w;
                }
            }
        }
        (0..k)
            .map(|a| inside[a] / two_m - (deg[a] / two_m).powi(2))
            .sum()
    }

    /// Stability via dense matrix powers and the within-pair sum.
    fn dense_stability(n: usize, edges: &[(usize, usize, f64)], c: &[usize], tau: u32) -> f64 {
        let g = WeightedGraph::from_edges(n, edges);
        let a = DMatrix::from_row_slice(n, n, &g.to_dense());
        let d: Vec<f64> = g.strengths();
        let two_m: f64 = d.iter().sum();
        let mut m = a.clone();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = if d[i] > 0.0 { a[(i, j)] / d[i] } else { 0.0 };
            }
        }
        let mt = m.pow(tau);
        let mut r = 0.0;
        for i in 0..n {
            for j in 0..n {
                if c[i] == c[j] {
                    let (pi, pj) = (d[i] / two_m, d[j] / two_m);
                    r += pi * mt[(i, j)] - pi * pj;
                }
            }
        }
        r
    }

    fn two_cliques() -> Vec<(usize, usize, f64)> {
        let mut e = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    e.push((base + i, base + j, 1.0));
                }
            }
        }
        e.push((3, 4, 0.1));
        e
    }

    #[test]
    fn partition_construction() {
        assert!(Partition::new(vec![0, 2]).is_err());
        let p = Partition::new(vec![1, 0, 1]).unwrap();
        assert_eq!(p.communities(), 2);
        assert_eq!(p.to_canonical().assignment(), &[0, 1, 0]);
        assert_eq!(part(&[7, 7, 3]).assignment(), &[0, 0, 1]);
        assert_eq!(p.members(), vec![vec![1], vec![0, 2]]);
    }

    #[test]
    fn single_community_has_zero_autocovariance() {
        let w = walk(4, &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (0, 3, 1.0)]);
        for tau in 0..10 {
            let r = clustered_autocovariance(&w, &Partition::single(4), tau).unwrap();
            assert_eq!(r.len(), 1);
            assert!(r[0].abs() < 1e-12);
        }
    }

    #[test]
    fn tau_zero_singletons_is_pi_minus_outer() {
        let w = walk(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let r = clustered_autocovariance(&w, &Partition::singletons(3), 0).unwrap();
        let pi = w.stationary();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { pi[i] } else { 0.0 } - pi[i] * pi[j];
                assert_abs_diff_eq!(r[i * 3 + j], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn triangle_split_hand_computation() {
        // Triangle, H = {0,1},{2}, τ = 1: π = 1/3, M has 1/2 off-diagonal.
        // R_00 = Σ_{i,j∈{0,1}} (1/3)(M_ij) - (2/3)² = (1/3)(1) - 4/9 = -1/9
        // R_01 = (1/3)(1/2 + 1/2) - (2/3)(1/3) = 1/9
        // R_11 = 0 - 1/9 = -1/9
        let w = walk(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let r = clustered_autocovariance(&w, &part(&[0, 0, 1]), 1).unwrap();
        let want = [-1.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, -1.0 / 9.0];
        for (a, b) in r.iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn stability_at_one_is_modularity() {
        let e = two_cliques();
        let w = walk(8, &e);
        let c = [0, 0, 0, 0, 1, 1, 1, 1];
        let r = stability(&w, &part(&c), 1).unwrap();
        assert_abs_diff_eq!(r, modularity(8, &e, &c), epsilon = 1e-12);
    }

    #[test]
    fn long_time_stability_vanishes() {
        let e = vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (2, 3, 1.0)];
        let w = walk(4, &e);
        let r = stability(&w, &part(&[0, 0, 1, 1]), 400).unwrap();
        assert!(r.abs() < 1e-10);
    }

    #[test]
    fn two_cliques_recovered() {
        let w = walk(8, &two_cliques());
        let truth = part(&[0, 0, 0, 0, 1, 1, 1, 1]);
        let hits = (0..100)
            .filter(|&s| louvain_stability(&w, 1, s).unwrap() == truth)
            .count();
        assert!(hits >= 99, "{hits}/100");
    }

    /// All set partitions of `0..n` as restricted growth strings.
    fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = vec![0; n];
        fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if i == cur.len() {
                out.push(cur.clone());
                return;
            }
            for c in 0..=max + 1 {
                cur[i] = c;
                rec(i + 1, max.max(c), cur, out);
            }
        }
        cur[0] = 0;
        rec(1, 0, &mut cur, &mut out);
        out
    }

    #[test]
    fn two_clique_optimum_by_exhaustive_search() {
        let e = two_cliques();
        let w = walk(8, &e);
        let all = all_partitions(8);
        assert_eq!(all.len(), 4140);
        let best = all
            .iter()
            .max_by(|a, b| modularity(8, &e, a).total_cmp(&modularity(8, &e, b)))
            .unwrap();
        assert_eq!(best, &vec![0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(louvain_stability(&w, 1, 5).unwrap().assignment(), &best[..]);
    }

    fn complete(n: usize) -> WalkOperators {
        let mut e = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                e.push((i, j, 1.0));
            }
        }
        walk(n, &e)
    }

    // On K_n, Mᵗ = J/n + (-1/(n-1))ᵗ (I - J/n), so πᵢMᵗᵢⱼ - πᵢπⱼ has the sign
    // of (-1)ᵗ off the diagonal: odd times favour one block, even times
    // favour singletons.
    #[test]
    fn complete_graph_alternates_with_parity() {
        let w = complete(6);
        for tau in [1, 3, 9] {
            assert_eq!(detect_at_scale(&w, tau, 5, 1).unwrap().num_communities, 1);
        }
        for tau in [2, 4] {
            assert_eq!(detect_at_scale(&w, tau, 5, 1).unwrap().num_communities, 6);
        }
        let k = flow_kernel(&w, 3).unwrap();
        let want = (1.0 / 6.0) * (1.0 / 6.0 + (-0.2f64).powi(3) * (-1.0 / 6.0));
        assert_abs_diff_eq!(k.get(0, 1), want, epsilon = 1e-15);
    }

    #[test]
    fn louvain_beats_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut e = Vec::new();
        for i in 0..20 {
            for j in (i + 1)..20 {
                if rng.random::<f64>() < 0.2 {
                    e.push((i, j, rng.random_range(0.1..1.0)));
                }
            }
        }
        let w = walk(20, &e);
        for tau in [1, 3, 6] {
            let p = louvain_stability(&w, tau, 4).unwrap();
            let r = stability(&w, &p, tau).unwrap();
            let r0 = stability(&w, &Partition::singletons(20), tau).unwrap();
            assert!(r >= r0 - 1e-12);
            assert_eq!(p, louvain_stability(&w, tau, 4).unwrap());
        }
    }

    #[test]
    fn disconnected_graph_with_isolated_node() {
        let w = walk(7, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)]);
        let p = louvain_stability(&w, 1, 0).unwrap();
        assert_eq!(p.assignment(), &[0, 0, 0, 1, 1, 1, 2]);
    }

    #[test]
    fn vi_examples() {
        let a = part(&[0, 0, 1, 1]);
        let b = part(&[0, 1, 0, 1]);
        assert_abs_diff_eq!(
            variation_of_information(&a, &b).unwrap(),
            2.0 * 2f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(variation_of_information(&a, &a).unwrap(), 0.0);
        assert!(variation_of_information(&a, &part(&[0, 0, 1])).is_err());
    }

    #[test]
    fn detect_requires_two_runs() {
        let w = walk(8, &two_cliques());
        assert!(detect_at_scale(&w, 1, 1, 0).is_err());
        let res = detect_at_scale(&w, 1, 20, 0).unwrap();
        assert_eq!(res.mean_vi, 0.0);
        assert_eq!(res.num_communities, 2);
    }

    #[test]
    fn random_weights_report_positive_vi() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut e = Vec::new();
        for i in 0..30 {
            for j in (i + 1)..30 {
                e.push((i, j, rng.random_range(0.0..1.0)));
            }
        }
        let w = walk(30, &e);
        let res = detect_at_scale(&w, 1, 20, 3).unwrap();
        assert!(res.mean_vi >= 0.0);
    }

    #[test]
    fn sweep_grid_validation_and_shape() {
        let w = walk(8, &two_cliques());
        assert!(sweep(&w, &[], 5, 0).is_err());
        assert!(sweep(&w, &[2, 2], 5, 0).is_err());
        assert!(sweep(&w, &[0, 1], 5, 0).is_err());
        let s = sweep(&w, &[1], 5, 0).unwrap();
        assert_eq!(s.len(), 1);
        let s = sweep(&w, &[1, 2, 5], 5, 0).unwrap();
        assert_eq!(s.taus(), vec![1, 2, 5]);
        let direct = detect_at_scale(&w, 5, 5, 0).unwrap();
        assert_eq!(s.at(5).unwrap(), &direct);
    }

    #[test]
    fn clique_sweep_is_one_community_at_odd_times() {
        let s = sweep(&complete(5), &[1, 3, 5], 4, 0).unwrap();
        assert!(s.results.iter().all(|r| r.num_communities == 1));
    }

    #[test]
    fn partitions_csv_round_trip() {
        let w = walk(8, &two_cliques());
        let s = sweep(&w, &[1, 4], 3, 0).unwrap();
        let index = IndustryIndex::new((0..8).map(|i| format!("i{i}")));
        let mut buf = Vec::new();
        s.write_partitions_csv(&index, &mut buf).unwrap();
        let back = read_partitions_csv(buf.as_slice(), "p.csv", &index).unwrap();
        assert_eq!(back.taus(), vec![1, 4]);
        for (a, b) in back.results.iter().zip(&s.results) {
            assert_eq!(a.partition, b.partition);
        }
        let bad = "tau,industry,community\n1,i0,0\n1,i0,1\n";
        assert!(read_partitions_csv(bad.as_bytes(), "p.csv", &index).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
        (3usize..16).prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec((0..n, 0..n, 0.05f64..3.0), n..3 * n),
            )
        })
    }

    proptest! {
        #[test]
        fn trace_matches_pair_sum((n, e) in arb_graph(), labels in prop::collection::vec(0usize..4, 16), tau in 1u32..8) {
            let g = WeightedGraph::from_edges(n, &e);
            prop_assume!(g.edge_count() > 0);
            let w = WalkOperators::new(&g).unwrap();
            let c = Partition::canonical(&labels[..n]);
            let r = stability(&w, &c, tau).unwrap();
            let dense = dense_stability(n, &e, c.assignment(), tau);
            prop_assert!((r - dense).abs() < 1e-12, "{r} vs {dense}");
            let k = flow_kernel(&w, tau).unwrap().quality(&c);
            prop_assert!((r - k).abs() < 1e-12);
        }

        #[test]
        fn modularity_correspondence((n, e) in arb_graph(), labels in prop::collection::vec(0usize..5, 16)) {
            let g = WeightedGraph::from_edges(n, &e);
            prop_assume!(g.edge_count() > 0);
            let w = WalkOperators::new(&g).unwrap();
            let c = Partition::canonical(&labels[..n]);
            let r = stability(&w, &c, 1).unwrap();
            prop_assert!((r - modularity(n, &e, c.assignment())).abs() < 1e-10);
        }

        #[test]
        fn vi_axioms(a in prop::collection::vec(0usize..5, 1..40), seed in any::<u64>()) {
            let n = a.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let (pa, pb) = (Partition::canonical(&a), Partition::canonical(&b));
            let ab = variation_of_information(&pa, &pb).unwrap();
            let ba = variation_of_information(&pb, &pa).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert!(ab <= (n as f64).ln() + 1e-12);
            prop_assert_eq!(variation_of_information(&pa, &pa).unwrap(), 0.0);
            let relabelled: Vec<usize> = a.iter().map(|x| 10 - x).collect();
            let pr = Partition::canonical(&relabelled);
            prop_assert!((variation_of_information(&pr, &pb).unwrap() - ab).abs() < 1e-12);
        }
    }
}
