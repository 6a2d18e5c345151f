//! Weighted undirected graph machinery.
//!
//! Degrees and strengths, eigenvector centrality, random-walk operators,
//! the edge-rewiring null model, assortativity and sector aggregates.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::SectorMap;
use crate::relatedness::LabourNetwork;
use crate::util::derive_seed;

/// Symmetric weighted graph without self-loops, stored as sorted adjacency
/// lists. Weights are finite and nonzero; negative weights only arise from
/// thresholds below zero and are rejected by the random-walk operators.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn empty(n: usize) -> Self {
        WeightedGraph {
            adj: vec![Vec::new(); n],
        }
    }

    /// Builds from undirected edges `(i, j, w)`. Zero weights and self-loops
    /// are dropped; repeated pairs keep the last weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(i, j, w) in edges {
            assert!(i < n && j < n, "edge ({i}, {j}) out of range");
            assert!(w.is_finite(), "edge weight must be finite");
            if i == j || w == 0.0 {
                continue;
            }
            rows[i].insert(j, w);
            rows[j].insert(i, w);
        }
        WeightedGraph {
            adj: rows.into_iter().map(|r| r.into_iter().collect()).collect(),
        }
    }

    /// Builds from a dense symmetric row-major matrix (diagonal ignored).
    pub fn from_dense(n: usize, a: &[f64]) -> Self {
        assert_eq!(a.len(), n * n);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if a[i * n + j] != 0.0 {
                    edges.push((i, j, a[i * n + j]));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.adj[i].binary_search_by_key(&j, |&(k, _)| k) {
            Ok(pos) => self.adj[i][pos].1,
            Err(_) => 0.0,
        }
    }

    /// Undirected edges with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn strength(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn strengths(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.strength(i)).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut a = vec![0.0; n * n];
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, w) in row {
                a[i * n + j] = w;
            }
        }
        a
    }

    /// Connected components as sorted node lists, ordered by smallest member.
    /// Isolated nodes form their own components.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut comp = vec![s];
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }
}

/// Per-node degree, strength and eigenvector centrality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeStats {
    pub degree: Vec<usize>,
    pub strength: Vec<f64>,
    /// Unit Euclidean norm on the largest component, zero elsewhere.
    pub eigencentrality: Vec<f64>,
    /// Leading eigenvalue (Rayleigh quotient) on the largest component.
    pub eigenvalue: f64,
    pub converged: bool,
}

pub const CENTRALITY_TOL: f64 = 1e-10;
pub const CENTRALITY_MAX_ITER: usize = 10_000;

pub fn node_stats(g: &LabourNetwork) -> Result<NodeStats> {
    graph_stats(g.graph())
}

pub fn graph_stats(g: &WeightedGraph) -> Result<NodeStats> {
    let n = g.n();
    if n == 0 {
        return Err(Error::Argument("empty graph".into()));
    }
    let degree = (0..n).map(|i| g.degree(i)).collect();
    let strength = g.strengths();
    let (eigencentrality, eigenvalue, converged) = eigencentrality(g);
    Ok(NodeStats {
        degree,
        strength,
        eigencentrality,
        eigenvalue,
        converged,
    })
}

/// Power iteration on `A + I` restricted to the largest component (ties go
/// to the component with the smallest node). The shift leaves eigenvectors
/// unchanged and removes the ±λ oscillation on bipartite components.
fn eigencentrality(g: &WeightedGraph) -> (Vec<f64>, f64, bool) {
    let n = g.n();
    let mut x = vec![0.0; n];
    if g.edge_count() == 0 {
        return (x, 0.0, true);
    }
    let comps = g.components();
    let largest = comps
        .iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .expect("nonempty");
    let init = 1.0 / (largest.len() as f64).sqrt();
    for &i in largest {
        x[i] = init;
    }
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..CENTRALITY_MAX_ITER {
        for &i in largest {
            next[i] = x[i] + g.neighbors(i).iter().map(|&(j, w)| w * x[j]).sum::<f64>();
        }
        let norm = largest.iter().map(|&i| next[i] * next[i]).sum::<f64>().sqrt();
        let mut diff = 0.0;
        for &i in largest {
            let v = next[i] / norm;
            diff += (v - x[i]) * (v - x[i]);
            x[i] = v;
        }
        if diff.sqrt() < CENTRALITY_TOL {
            converged = true;
            break;
        }
    }
    let lambda: f64 = largest
        .iter()
        .map(|&i| x[i] * g.neighbors(i).iter().map(|&(j, w)| w * x[j]).sum::<f64>())
        .sum();
    (x, lambda, converged)
}

/// Random-walk operators of a weighted graph.
///
/// `M = D⁻¹A` is kept row-sparse; `π = d / 2m` with `d` the weighted degree.
/// Zero-degree nodes have empty rows and `π = 0` and are listed in
/// [`WalkOperators::isolated`].
#[derive(Debug, Clone, PartialEq)]
pub struct WalkOperators {
    transition: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
    stationary: Vec<f64>,
    two_m: f64,
    isolated: Vec<usize>,
    components: Vec<Vec<usize>>,
}

pub fn walk_operators(g: &LabourNetwork) -> Result<WalkOperators> {
    WalkOperators::new(g.graph())
}

impl WalkOperators {
    pub fn new(g: &WeightedGraph) -> Result<Self> {
        if g.edges().any(|(_, _, w)| w < 0.0) {
            return Err(Error::Argument(
                "random walk needs nonnegative edge weights; use a threshold >= 0".into(),
            ));
        }
        let degree = g.strengths();
        let two_m: f64 = degree.iter().sum();
        if !(two_m > 0.0) {
            return Err(Error::Argument(
                "random walk needs at least one positive-weight edge".into(),
            ));
        }
        let transition = (0..g.n())
            .map(|i| {
                g.neighbors(i)
                    .iter()
                    .map(|&(j, w)| (j, w / degree[i]))
                    .collect()
            })
            .collect();
        let stationary = degree.iter().map(|d| d / two_m).collect();
        let isolated = (0..g.n()).filter(|&i| degree[i] == 0.0).collect();
        let components = g
            .components()
            .into_iter()
            .filter(|c| !(c.len() == 1 && degree[c[0]] == 0.0))
            .collect();
        Ok(WalkOperators {
            transition,
            degree,
            stationary,
            two_m,
            isolated,
            components,
        })
    }

    pub fn n(&self) -> usize {
        self.degree.len()
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn two_m(&self) -> f64 {
        self.two_m
    }

    /// Zero-degree nodes, outside the walk's domain.
    pub fn isolated(&self) -> &[usize] {
        &self.isolated
    }

    /// Connected components of the walk domain.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn transition_row(&self, i: usize) -> &[(usize, f64)] {
        &self.transition[i]
    }

    /// `y = M x` for a dense block `x` of `cols` columns stored row-major.
    pub fn apply(&self, x: &[f64], cols: usize) -> Vec<f64> {
        let n = self.n();
        debug_assert_eq!(x.len(), n * cols);
        let mut y = vec![0.0; n * cols];
        for (i, row) in self.transition.iter().enumerate() {
            let yi = &mut y[i * cols..(i + 1) * cols];
            for &(j, p) in row {
                let xj = &x[j * cols..(j + 1) * cols];
                for (a, &b) in yi.iter_mut().zip(xj) {
                    *a += p * b;
                }
            }
        }
        y
    }

    /// `πM` as a dense vector.
    pub fn stationary_step(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (i, row) in self.transition.iter().enumerate() {
            for &(j, p) in row {
                out[j] += self.stationary[i] * p;
            }
        }
        out
    }
}

/// Histogram with per-bin node counts and per-bin strength mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Histogram {
    fn zeros(edges: Vec<f64>) -> Self {
        let bins = edges.len() - 1;
        Histogram {
            edges,
            counts: vec![0.0; bins],
        }
    }

    fn bin(&self, v: f64) -> usize {
        let bins = self.counts.len();
        let lo = self.edges[0];
        let hi = self.edges[bins];
        if v <= lo {
            return 0;
        }
        if v >= hi {
            return bins - 1;
        }
        let k = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
        k.min(bins - 1)
    }

    fn add(&mut self, v: f64, amount: f64) {
        let k = self.bin(v);
        self.counts[k] += amount;
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

fn equal_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|k| lo + (hi - lo) * k as f64 / bins as f64)
        .collect()
}

/// Distribution summaries of the observed graph and the rewired ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullSummary {
    pub reps: usize,
    pub seed: u64,
    /// Integer degree bins `0..n`.
    pub degree_observed: Histogram,
    pub degree_null: Histogram,
    pub strength_observed: Histogram,
    pub strength_null: Histogram,
    /// Edge weight per strength bin, each edge split evenly between its
    /// endpoints; totals equal the graph's total weight.
    pub strength_mass_observed: Histogram,
    pub strength_mass_null: Histogram,
    pub centrality_observed: Histogram,
    pub centrality_null: Histogram,
    /// Per replicate: edge count and total weight (summed in sorted order).
    pub replicate_edges: Vec<usize>,
    pub replicate_weight: Vec<f64>,
}

pub const DEFAULT_NULL_REPS: usize = 10_000;
pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

/// Sorted-order sum, so that equal multisets give bit-equal totals.
fn multiset_sum(weights: &[f64]) -> f64 {
    let mut w = weights.to_vec();
    w.sort_by(f64::total_cmp);
    w.iter().sum()
}

/// One rewiring: the weighted edges are placed on distinct node pairs drawn
/// uniformly without replacement (no self-loops, no multi-edges), weights
/// shuffled over the chosen pairs.
pub fn rewire_once(g: &WeightedGraph, rng: &mut ChaCha8Rng) -> Result<WeightedGraph> {
    let n = g.n();
    let pairs = n * n.saturating_sub(1) / 2;
    let mut weights: Vec<f64> = g.edges().map(|(_, _, w)| w).collect();
    if weights.len() > pairs {
        return Err(Error::Argument(format!(
            "{} edges cannot fit in {pairs} node pairs",
            weights.len()
        )));
    }
    let mut chosen = index::sample(rng, pairs, weights.len()).into_vec();
    chosen.sort_unstable();
    weights.shuffle(rng);
    let edges: Vec<(usize, usize, f64)> = chosen
        .into_iter()
        .zip(weights)
        .map(|(p, w)| {
            let (i, j) = pair_from_index(p, n);
            (i, j, w)
        })
        .collect();
    Ok(WeightedGraph::from_edges(n, &edges))
}

/// Maps `0..n(n-1)/2` onto unordered pairs `i < j` in row order.
fn pair_from_index(mut p: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
        i += 1;
    }
}

/// Averaged degree, strength and centrality histograms over `reps` rewired
/// replicates. Replicate `r` uses a seed derived from `(seed, r)`, so the
/// result does not depend on thread scheduling.
pub fn rewire_null(g: &LabourNetwork, reps: usize, seed: u64, bins: usize) -> Result<NullSummary> {
    let graph = g.graph();
    if reps == 0 {
        return Err(Error::Argument("null model needs at least one replicate".into()));
    }
    if bins == 0 {
        return Err(Error::Argument("histograms need at least one bin".into()));
    }
    let n = graph.n();
    let observed = graph_stats(graph)?;
    let replicate = |r: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
        rewire_once(graph, &mut rng)
    };
    let max_strength = |g: &WeightedGraph| g.strengths().into_iter().fold(0.0, f64::max);
    // Strength bins span the largest strength seen in any replicate.
    let strength_hi = (0..reps)
        .into_par_iter()
        .map(|r| replicate(r).map(|h| max_strength(&h)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(max_strength(graph), f64::max);
    let strength_hi = if strength_hi > 0.0 { strength_hi } else { 1.0 };
    let degree_edges: Vec<f64> = (0..=n).map(|k| k as f64 - 0.5).collect();
    let strength_edges = equal_edges(0.0, strength_hi, bins);
    let centrality_edges = equal_edges(0.0, 1.0, bins);

    let fill = |stats: &NodeStats| {
        let mut deg = Histogram::zeros(degree_edges.clone());
        let mut st = Histogram::zeros(strength_edges.clone());
        let mut mass = Histogram::zeros(strength_edges.clone());
        let mut ce = Histogram::zeros(centrality_edges.clone());
        for i in 0..n {
            deg.add(stats.degree[i] as f64, 1.0);
            st.add(stats.strength[i], 1.0);
            mass.add(stats.strength[i], 0.5 * stats.strength[i]);
            ce.add(stats.eigencentrality[i], 1.0);
        }
        (deg, st, mass, ce)
    };

    let per_rep: Vec<_> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let h = replicate(r)?;
            let stats = graph_stats(&h)?;
            let weights: Vec<f64> = h.edges().map(|(_, _, w)| w).collect();
            Ok((fill(&stats), h.edge_count(), multiset_sum(&weights)))
        })
        .collect::<Result<Vec<_>>>()?;

    let (deg_o, st_o, mass_o, ce_o) = fill(&observed);
    let mut deg_n = Histogram::zeros(degree_edges.clone());
    let mut st_n = Histogram::zeros(strength_edges.clone());
    let mut mass_n = Histogram::zeros(strength_edges.clone());
    let mut ce_n = Histogram::zeros(centrality_edges.clone());
    let mut replicate_edges = Vec::with_capacity(reps);
    let mut replicate_weight = Vec::with_capacity(reps);
    let inv = 1.0 / reps as f64;
    for ((d, s, m, c), e, w) in &per_rep {
        for (acc, h) in [(&mut deg_n, d), (&mut st_n, s), (&mut mass_n, m), (&mut ce_n, c)] {
            for (a, b) in acc.counts.iter_mut().zip(&h.counts) {
                *a += b * inv;
            }
        }
        replicate_edges.push(*e);
        replicate_weight.push(*w);
    }
    Ok(NullSummary {
        reps,
        seed,
        degree_observed: deg_o,
        degree_null: deg_n,
        strength_observed: st_o,
        strength_null: st_n,
        strength_mass_observed: mass_o,
        strength_mass_null: mass_n,
        centrality_observed: ce_o,
        centrality_null: ce_n,
        replicate_edges,
        replicate_weight,
    })
}

/// Node-level neighbour means and graph-level assortativity coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assortativity {
    /// Unweighted mean strength of each node's neighbours; `None` if isolated.
    pub mean_neighbor_strength: Vec<Option<f64>>,
    pub mean_neighbor_centrality: Vec<Option<f64>>,
    /// Pearson correlation of endpoint strengths over both edge directions;
    /// `None` when either side has zero variance.
    pub strength_coefficient: Option<f64>,
    pub degree_coefficient: Option<f64>,
    pub centrality_coefficient: Option<f64>,
}

pub fn assortativity(g: &LabourNetwork, stats: &NodeStats) -> Assortativity {
    let graph = g.graph();
    let n = graph.n();
    let neighbor_mean = |values: &[f64]| -> Vec<Option<f64>> {
        (0..n)
            .map(|i| {
                let nb = graph.neighbors(i);
                (!nb.is_empty())
                    .then(|| nb.iter().map(|&(j, _)| values[j]).sum::<f64>() / nb.len() as f64)
            })
            .collect()
    };
    let degrees: Vec<f64> = stats.degree.iter().map(|&d| d as f64).collect();
    Assortativity {
        mean_neighbor_strength: neighbor_mean(&stats.strength),
        mean_neighbor_centrality: neighbor_mean(&stats.eigencentrality),
        strength_coefficient: endpoint_correlation(graph, &stats.strength),
        degree_coefficient: endpoint_correlation(graph, &degrees),
        centrality_coefficient: endpoint_correlation(graph, &stats.eigencentrality),
    }
}

/// Pearson correlation of `(x_i, x_j)` over every edge in both directions.
pub fn endpoint_correlation(g: &WeightedGraph, x: &[f64]) -> Option<f64> {
    let mut count = 0.0;
    let mut mean = 0.0;
    for (i, j, _) in g.edges() {
        mean += x[i] + x[j];
        count += 2.0;
    }
    if count == 0.0 {
        return None;
    }
    mean /= count;
    // Both directions make the two marginal variances equal.
    let (mut cov, mut var) = (0.0, 0.0);
    for (i, j, _) in g.edges() {
        let (a, b) = (x[i] - mean, x[j] - mean);
        cov += 2.0 * a * b;
        var += a * a + b * b;
    }
    if var <= f64::EPSILON * mean.abs().max(1.0) * count {
        return None;
    }
    Some(cov / var)
}

/// Realised over possible edge counts for each sector pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorEdgeShare {
    pub sectors: Vec<String>,
    pub sizes: Vec<usize>,
    /// Row-major `sectors × sectors`; `None` where no pair is possible.
    pub share: Vec<Option<f64>>,
    pub edges: Vec<usize>,
}

impl SectorEdgeShare {
    pub fn get(&self, p: usize, q: usize) -> Option<f64> {
        self.share[p * self.sectors.len() + q]
    }
}

pub fn sector_edge_share(g: &LabourNetwork, s: &SectorMap) -> Result<SectorEdgeShare> {
    s.check_covers(&g.index)?;
    let sectors = s.sectors();
    let k = sectors.len();
    let pos: BTreeMap<&str, usize> = sectors
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let of: Vec<usize> = g
        .index
        .ids()
        .iter()
        .map(|id| pos[s.sector_of(id).expect("covered")])
        .collect();
    let mut sizes = vec![0usize; k];
    for &p in &of {
        sizes[p] += 1;
    }
    let mut edges = vec![0usize; k * k];
    for (i, j, _) in g.graph().edges() {
        let (p, q) = (of[i], of[j]);
        edges[p * k + q] += 1;
        if p != q {
            edges[q * k + p] += 1;
        }
    }
    let share = (0..k * k)
        .map(|c| {
            let (p, q) = (c / k, c % k);
            let possible = if p == q {
                sizes[p] * sizes[p].saturating_sub(1) / 2
            } else {
                sizes[p] * sizes[q]
            };
            (possible > 0).then(|| edges[c] as f64 / possible as f64)
        })
        .collect();
    Ok(SectorEdgeShare {
        sectors,
        sizes,
        share,
        edges,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEdge {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

/// The `k` heaviest edges; ties in weight go to the lexicographically
/// smaller `(source, target)` id pair.
pub fn top_edges(g: &LabourNetwork, k: usize) -> Vec<RankedEdge> {
    let mut all: Vec<RankedEdge> = g
        .graph()
        .edges()
        .map(|(i, j, w)| {
            let (a, b) = (g.index.name(i), g.index.name(j));
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            RankedEdge {
                source: a.to_string(),
                target: b.to_string(),
                weight: w,
            }
        })
        .collect();
    all.sort_by(|x, y| {
        y.weight
            .total_cmp(&x.weight)
            .then_with(|| (&x.source, &x.target).cmp(&(&y.source, &y.target)))
    });
    all.truncate(k);
    all
}
