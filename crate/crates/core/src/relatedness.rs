//! Skill relatedness from labour flows, and the thresholded labour network.
//!
//! For each year the observed flow `F_ij` is compared with the flow expected
//! from the industries' flow totals alone, `SR_ij = F_ij F / (F_i F_j)`. The
//! ratio is mapped onto `[-1, 1)` by `(SR - 1) / (SR + 1)`, averaged over
//! years, symmetrised, and thresholded at `γ` to give the adjacency matrix.
//!
//! Pairs whose industries have no flow at all in a year are *undefined* for
//! that year (`None`), never silently zero.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::ingest::{
    build_flow_tensor_over, EmploymentTable, FlowTensor, IndustryIndex, SectorMap, TransitionTable,
};

/// Which flow totals enter the expected-flow denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalConvention {
    /// Out-flow of the origin times in-flow of the destination.
    #[default]
    OutIn,
    /// Total flow touching each industry (in + out) on both sides.
    Total,
}

/// How years in which a pair is undefined enter the multi-year mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingYears {
    /// Average over the years where the pair is defined.
    #[default]
    Skip,
    /// Count undefined years as `-1` (no flow) and divide by every year.
    FixedDivisor,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RelatednessConfig {
    pub marginals: MarginalConvention,
    pub missing_years: MissingYears,
    /// Keep the yearly and averaged matrices for auditing.
    pub keep_intermediates: bool,
}

/// Square matrix of optional values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrix {
    n: usize,
    values: Vec<Option<f64>>,
}

impl PairMatrix {
    pub fn undefined(n: usize) -> Self {
        PairMatrix {
            n,
            values: vec![None; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        PairMatrix {
            n,
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Option<f64>) {
        self.values[i * self.n + j] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        PairMatrix {
            n: self.n,
            values: self.values.iter().map(|v| v.map(&f)).collect(),
        }
    }

    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Raw yearly skill relatedness `SR_ij`.
///
/// Undefined where either marginal is zero and on the diagonal.
pub fn skill_relatedness_year(
    f: &FlowTensor,
    year: i32,
    marginals: MarginalConvention,
) -> Result<PairMatrix> {
    let n = f.n();
    let m = f
        .year_matrix(year)
        .ok_or_else(|| Error::Argument(format!("year {year} not in flow tensor")))?;
    let total: u64 = m.iter().sum();
    if total == 0 {
        return Err(Error::Argument(format!("no flows recorded in {year}")));
    }
    let out = f.out_flows(year).expect("year present");
    let inn = f.in_flows(year).expect("year present");
    let (row_marg, col_marg): (Vec<f64>, Vec<f64>) = match marginals {
        MarginalConvention::OutIn => (
            out.iter().map(|&x| x as f64).collect(),
            inn.iter().map(|&x| x as f64).collect(),
        ),
        MarginalConvention::Total => {
            let t: Vec<f64> = out.iter().zip(&inn).map(|(&a, &b)| (a + b) as f64).collect();
            (t.clone(), t)
        }
    };
    let total = total as f64;
    let mut sr = PairMatrix::undefined(n);
    for i in 0..n {
        if row_marg[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if i == j || col_marg[j] == 0.0 {
                continue;
            }
            let expected = row_marg[i] * col_marg[j] / total;
            sr.set(i, j, Some(m[i * n + j] as f64 / expected));
        }
    }
    Ok(sr)
}

/// Maps `[0, ∞)` onto `[-1, 1)`: `0 ↦ -1`, `1 ↦ 0`.
pub fn transform_value(sr: f64) -> f64 {
    (sr - 1.0) / (sr + 1.0)
}

pub fn transform_sr(sr: &PairMatrix) -> PairMatrix {
    sr.map(transform_value)
}

/// Entrywise multi-year mean of transformed yearly matrices.
pub fn mean_sr(yearly: &[PairMatrix], missing: MissingYears) -> Result<PairMatrix> {
    let first = yearly
        .first()
        .ok_or_else(|| Error::Argument("no yearly matrices to average".into()))?;
    let n = first.n();
    if yearly.iter().any(|m| m.n() != n) {
        return Err(Error::Argument("yearly matrices differ in size".into()));
    }
    let years = yearly.len() as f64;
    let mut out = PairMatrix::undefined(n);
    for i in 0..n {
        for j in 0..n {
            let mut sum = 0.0;
            let mut defined = 0usize;
            for m in yearly {
                if let Some(v) = m.get(i, j) {
                    sum += v;
                    defined += 1;
                }
            }
            if defined == 0 {
                continue;
            }
            let v = match missing {
                MissingYears::Skip => sum / defined as f64,
                MissingYears::FixedDivisor => (sum - (yearly.len() - defined) as f64) / years,
            };
            out.set(i, j, Some(v));
        }
    }
    Ok(out)
}

/// `(m_ij + m_ji) / 2`; a pair defined in one direction only keeps that
/// direction's value.
pub fn symmetrize(m: &PairMatrix) -> PairMatrix {
    let n = m.n();
    let mut out = PairMatrix::undefined(n);
    for i in 0..n {
        for j in 0..n {
            let v = match (m.get(i, j), m.get(j, i)) {
                (Some(a), Some(b)) => Some((a + b) / 2.0),
                (Some(a), None) | (None, Some(a)) => Some(a),
                (None, None) => None,
            };
            out.set(i, j, v);
        }
    }
    out
}

/// Intermediate matrices kept for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct RelatednessAudit {
    pub yearly_sr: Vec<PairMatrix>,
    pub yearly_transformed: Vec<PairMatrix>,
    pub mean: PairMatrix,
}

/// Symmetric transformed relatedness over an industry index.
#[derive(Debug, Clone, PartialEq)]
pub struct RelatednessMatrix {
    pub index: IndustryIndex,
    /// Years that entered the mean.
    pub years: Vec<i32>,
    pub values: PairMatrix,
    pub audit: Option<RelatednessAudit>,
}

impl RelatednessMatrix {
    pub fn n(&self) -> usize {
        self.index.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(i, j)
    }
}

/// Full relatedness computation over every year of the tensor. Years with
/// no recorded flows are skipped with a warning.
pub fn compute_relatedness(f: &FlowTensor, cfg: &RelatednessConfig) -> Result<RelatednessMatrix> {
    let years: Vec<i32> = f
        .years()
        .iter()
        .copied()
        .filter(|&y| {
            let keep = f.total(y).unwrap_or(0) > 0;
            if !keep {
                log::warn!("{y}: no flows recorded, year skipped");
            }
            keep
        })
        .collect();
    if years.is_empty() {
        return Err(Error::Argument("no year with recorded flows".into()));
    }
    let yearly_sr = years
        .par_iter()
        .map(|&y| skill_relatedness_year(f, y, cfg.marginals))
        .collect::<Result<Vec<_>>>()?;
    let yearly_transformed: Vec<PairMatrix> = yearly_sr.iter().map(transform_sr).collect();
    let mean = mean_sr(&yearly_transformed, cfg.missing_years)?;
    let values = symmetrize(&mean);
    let audit = cfg.keep_intermediates.then_some(RelatednessAudit {
        yearly_sr,
        yearly_transformed,
        mean,
    });
    Ok(RelatednessMatrix {
        index: f.index().clone(),
        years,
        values,
        audit,
    })
}

/// Relatedness over the union of industries named in any table, so that
/// industries without recorded flows stay in the index with undefined
/// relatedness.
pub fn relatedness_from_tables(
    t: &TransitionTable,
    e: Option<&EmploymentTable>,
    s: Option<&SectorMap>,
    years: &[i32],
    cfg: &RelatednessConfig,
) -> Result<RelatednessMatrix> {
    let index = IndustryIndex::union_of(t, e, s);
    let f = build_flow_tensor_over(t, years, &index)?;
    compute_relatedness(&f, cfg)
}

/// Thresholded, symmetric, nonnegative industry network `A^γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabourNetwork {
    pub index: IndustryIndex,
    pub gamma: f64,
    pub years: Vec<i32>,
    graph: WeightedGraph,
}

/// Keeps `s_ij` where `s_ij > γ`; everything else (undefined pairs, the
/// diagonal) becomes 0.
pub fn threshold(s: &RelatednessMatrix, gamma: f64) -> Result<LabourNetwork> {
    if !(gamma >= -1.0) {
        return Err(Error::Argument(format!("gamma must be >= -1, got {gamma}")));
    }
    let n = s.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if let Some(v) = s.get(i, j) {
                if v > gamma {
                    edges.push((i, j, v));
                }
            }
        }
    }
    Ok(LabourNetwork {
        index: s.index.clone(),
        gamma,
        years: s.years.clone(),
        graph: WeightedGraph::from_edges(n, &edges),
    })
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    industries: Vec<String>,
    gamma: f64,
    years: Vec<i32>,
    edges: Vec<EdgeDoc>,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    source: String,
    target: String,
    weight: f64,
}

impl LabourNetwork {
    pub fn new(index: IndustryIndex, gamma: f64, years: Vec<i32>, graph: WeightedGraph) -> Self {
        assert_eq!(index.len(), graph.n(), "index and graph sizes differ");
        LabourNetwork {
            index,
            gamma,
            years,
            graph,
        }
    }

    /// Network over anonymous industries `0..n`, for tests and examples.
    pub fn from_graph(graph: WeightedGraph) -> Self {
        let index = IndustryIndex::new((0..graph.n()).map(|i| format!("{i:04}")));
        LabourNetwork::new(index, 0.0, Vec::new(), graph)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn write_edge_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Computation(format!("csv write: {e}"));
        w.write_record(["source", "target", "weight"]).map_err(err)?;
        for (i, j, v) in self.graph.edges() {
            w.write_record([self.index.name(i), self.index.name(j), &v.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = NetworkDoc {
            industries: self.index.ids().to_vec(),
            gamma: self.gamma,
            years: self.years.clone(),
            edges: self
                .graph
                .edges()
                .map(|(i, j, w)| EdgeDoc {
                    source: self.index.name(i).to_string(),
                    target: self.index.name(j).to_string(),
                    weight: w,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_str(s)?;
        let index = IndustryIndex::new(doc.industries.iter().cloned());
        if index.len() != doc.industries.len() {
            return Err(Error::Argument("duplicate industries in network document".into()));
        }
        let mut edges = Vec::with_capacity(doc.edges.len());
        for e in &doc.edges {
            let (Some(i), Some(j)) = (index.position(&e.source), index.position(&e.target)) else {
                return Err(Error::Argument(format!(
                    "edge {} - {} names an unknown industry",
                    e.source, e.target
                )));
            };
            edges.push((i, j, e.weight));
        }
        let graph = WeightedGraph::from_edges(index.len(), &edges);
        Ok(LabourNetwork::new(index, doc.gamma, doc.years, graph))
    }

    pub fn read_json_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_flow_tensor, TransitionRow, TransitionTable};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tensor(rows: &[(i32, &str, &str, u64)]) -> FlowTensor {
        let t = TransitionTable::from_rows(rows.iter().map(|&(year, o, d, count)| TransitionRow {
            year,
            origin: o.into(),
            destination: d.into(),
            count,
        }));
        let years = t.years();
        build_flow_tensor(&t, &years).unwrap()
    }

    /// Four industries A..D, year 2005, with out(A)=10, in(B)=20, total=100
    /// and F_AB set by the caller.
    fn hand_case(f_ab: u64) -> FlowTensor {
        // Remaining flows fill the marginals: A sends 10 in total, B
        // receives 20 in total, the grand total is 100.
        tensor(&[
            (2005, "A", "B", f_ab),
            (2005, "A", "C", 10 - f_ab),
            (2005, "C", "B", 20 - f_ab),
            (2005, "C", "D", 70 + f_ab),
        ])
    }

    #[test]
    fn hand_arithmetic_sr() {
        for (f_ab, expect) in [(2, 1.0), (4, 2.0)] {
            let f = hand_case(f_ab);
            assert_eq!(f.total(2005), Some(100));
            let sr = skill_relatedness_year(&f, 2005, MarginalConvention::OutIn).unwrap();
            assert_abs_diff_eq!(sr.get(0, 1).unwrap(), expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn expected_flows_give_unit_sr() {
        // F_ij = a_i b_j / F with zero diagonal impossible exactly, so use a
        // bipartite origin/destination split where the diagonal is empty.
        let a = [3u64, 1, 2];
        let b = [5u64, 1, 4];
        let mut rows = Vec::new();
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate() {
                rows.push((2005, ["o0", "o1", "o2"][i], ["d0", "d1", "d2"][j], ai * bj));
            }
        }
        let f = tensor(&rows);
        let sr = skill_relatedness_year(&f, 2005, MarginalConvention::OutIn).unwrap();
        let mut defined = 0;
        for i in 0..6 {
            for j in 0..6 {
                if let Some(v) = sr.get(i, j) {
                    let o = f.get(2005, i, j).unwrap();
                    if o > 0 {
                        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
                        defined += 1;
                    }
                }
            }
        }
        assert_eq!(defined, 9);
    }

    #[test]
    fn zero_marginals_are_undefined() {
        let f = tensor(&[(2005, "A", "B", 3)]);
        let sr = skill_relatedness_year(&f, 2005, MarginalConvention::OutIn).unwrap();
        assert!(sr.get(0, 1).is_some());
        // B sends nothing and A receives nothing.
        assert!(sr.get(1, 0).is_none());
        assert!(sr.get(0, 0).is_none());
        assert!(skill_relatedness_year(&f, 2010, MarginalConvention::OutIn).is_err());
    }

    #[test]
    fn total_convention_uses_in_plus_out() {
        let f = tensor(&[(2005, "A", "B", 2), (2005, "B", "C", 2)]);
        let sr = skill_relatedness_year(&f, 2005, MarginalConvention::Total).unwrap();
        // T = (2, 4, 2), F = 4: SR_AB = 2 * 4 / (2 * 4) = 1.
        assert_abs_diff_eq!(sr.get(0, 1).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sr.get(0, 2).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn transform_endpoints() {
        assert_eq!(transform_value(1.0), 0.0);
        assert_eq!(transform_value(0.0), -1.0);
        assert_eq!(transform_value(3.0), 0.5);
        assert!(transform_value(1e12) < 1.0);
        let m = PairMatrix::from_rows(&[vec![None, Some(3.0)], vec![Some(1.0), None]]);
        let t = transform_sr(&m);
        assert_eq!(t.get(0, 0), None);
        assert_eq!(t.get(0, 1), Some(0.5));
    }

    #[test]
    fn mean_over_defined_years() {
        let mk = |v: Option<f64>| PairMatrix::from_rows(&[vec![None, v], vec![v, None]]);
        let same: Vec<PairMatrix> = (0..9).map(|_| mk(Some(0.25))).collect();
        assert_eq!(mean_sr(&same, MissingYears::Skip).unwrap(), mk(Some(0.25)));

        let mut partial: Vec<PairMatrix> = (0..9).map(|_| mk(None)).collect();
        partial[2] = mk(Some(0.2));
        partial[6] = mk(Some(0.4));
        let m = mean_sr(&partial, MissingYears::Skip).unwrap();
        assert_abs_diff_eq!(m.get(0, 1).unwrap(), 0.3, epsilon = 1e-15);

        let fixed = mean_sr(&partial, MissingYears::FixedDivisor).unwrap();
        assert_abs_diff_eq!(fixed.get(0, 1).unwrap(), (0.6 - 7.0) / 9.0, epsilon = 1e-15);

        let none: Vec<PairMatrix> = (0..9).map(|_| mk(None)).collect();
        assert_eq!(mean_sr(&none, MissingYears::Skip).unwrap().get(0, 1), None);
        assert!(mean_sr(&[], MissingYears::Skip).is_err());
    }

    #[test]
    fn symmetrize_cases() {
        let m = PairMatrix::from_rows(&[vec![None, Some(0.5)], vec![Some(0.1), None]]);
        let s = symmetrize(&m);
        assert_abs_diff_eq!(s.get(0, 1).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(s.get(0, 1), s.get(1, 0));

        let one_sided = PairMatrix::from_rows(&[vec![None, Some(0.5)], vec![None, None]]);
        let s = symmetrize(&one_sided);
        assert_eq!(s.get(1, 0), Some(0.5));

        let sym = PairMatrix::from_rows(&[vec![None, Some(0.2)], vec![Some(0.2), None]]);
        assert_eq!(symmetrize(&sym), sym);
    }

    fn rel(rows: &[Vec<Option<f64>>]) -> RelatednessMatrix {
        let values = PairMatrix::from_rows(rows);
        RelatednessMatrix {
            index: IndustryIndex::new((0..values.n()).map(|i| format!("i{i}"))),
            years: vec![],
            values,
            audit: None,
        }
    }

    #[test]
    fn threshold_keeps_strictly_above_gamma() {
        let s = rel(&[
            vec![None, Some(-0.5), Some(0.0), Some(0.2)],
            vec![Some(-0.5), None, None, None],
            vec![Some(0.0), None, None, None],
            vec![Some(0.2), None, None, None],
        ]);
        let g = threshold(&s, 0.0).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.graph().weight(0, 3), 0.2);
        assert!(threshold(&s, 0.5).unwrap().edge_count() <= g.edge_count());
        // γ = -1 keeps every defined pair with a nonzero value.
        let all = threshold(&s, -1.0).unwrap();
        assert_eq!(all.edge_count(), 2);
        assert_eq!(all.graph().weight(0, 1), -0.5);
        assert!(threshold(&s, -1.5).is_err());
    }

    #[test]
    fn network_json_round_trip() {
        let s = rel(&[
            vec![None, Some(0.4), Some(0.1)],
            vec![Some(0.4), None, Some(0.7)],
            vec![Some(0.1), Some(0.7), None],
        ]);
        let g = threshold(&s, 0.0).unwrap();
        let back = LabourNetwork::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
        let mut csv = Vec::new();
        g.write_edge_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("source,target,weight\n"));
        assert_eq!(text.lines().count(), 4);
    }

    fn arb_flows() -> impl Strategy<Value = Vec<(usize, usize, u64)>> {
        prop::collection::vec((0usize..5, 0usize..5, 0u64..50), 4..30)
    }

    fn tensor_from(flows: &[(usize, usize, u64)], scale: u64) -> FlowTensor {
        let names = ["a", "b", "c", "d", "e"];
        let rows: Vec<_> = flows
            .iter()
            .map(|&(i, j, c)| TransitionRow {
                year: 2005,
                origin: names[i].into(),
                destination: names[j].into(),
                count: c * scale,
            })
            .collect();
        let t = TransitionTable::from_rows(rows);
        let idx = IndustryIndex::new(names);
        crate::ingest::build_flow_tensor_over(&t, &[2005], &idx).unwrap()
    }

    proptest! {
        #[test]
        fn sr_is_scale_free(flows in arb_flows(), c in 2u64..9) {
            let f1 = tensor_from(&flows, 1);
            prop_assume!(f1.total(2005).unwrap() > 0);
            let fc = tensor_from(&flows, c);
            for conv in [MarginalConvention::OutIn, MarginalConvention::Total] {
                let a = skill_relatedness_year(&f1, 2005, conv).unwrap();
                let b = skill_relatedness_year(&fc, 2005, conv).unwrap();
                for i in 0..5 {
                    for j in 0..5 {
                        match (a.get(i, j), b.get(i, j)) {
                            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0)),
                            (None, None) => {}
                            _ => prop_assert!(false, "definedness changed"),
                        }
                    }
                }
            }
        }

        #[test]
        fn transform_range_and_monotone(x in 0.0f64..1e6, y in 0.0f64..1e6) {
            let (tx, ty) = (transform_value(x), transform_value(y));
            prop_assert!((-1.0..1.0).contains(&tx));
            if x < y { prop_assert!(tx < ty); }
        }

        #[test]
        fn symmetrize_idempotent(vals in prop::collection::vec(prop::option::of(-1.0f64..1.0), 16)) {
            let rows: Vec<Vec<Option<f64>>> = vals.chunks(4).map(|c| c.to_vec()).collect();
            let m = PairMatrix::from_rows(&rows);
            let once = symmetrize(&m);
            prop_assert_eq!(symmetrize(&once), once);
        }

        #[test]
        fn threshold_is_monotone(vals in prop::collection::vec(prop::option::of(-1.0f64..1.0), 25),
                                 g1 in -1.0f64..1.0, dg in 0.0f64..1.0) {
            let rows: Vec<Vec<Option<f64>>> = vals.chunks(5).map(|c| c.to_vec()).collect();
            let s = rel(&rows);
            let s = RelatednessMatrix { values: symmetrize(&s.values), ..s };
            let lo = threshold(&s, g1).unwrap();
            let hi = threshold(&s, g1 + dg).unwrap();
            for (i, j, _) in hi.graph().edges() {
                prop_assert!(lo.graph().weight(i, j) != 0.0);
            }
        }
    }
}
