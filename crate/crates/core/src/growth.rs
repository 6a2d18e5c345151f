//! Employment growth against related and cluster employment.
//!
//! Builds the per-industry regression sample, fits `G ~ 1 + ln E⁰ + ln X`
//! by least squares for `X` = related employment or cluster employment at
//! each Markov time, and compares fits across scales on common
//! observation sets.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EmploymentTable, IndustryIndex, SectorClass, SectorMap};
use crate::relatedness::{threshold, LabourNetwork, RelatednessMatrix};
use crate::graph::WalkOperators;
use crate::stability::{sweep, Partition, ScaleSweep};
use crate::util::fmt_opt;

/// `G_i = ln E¹ᵢ − ln E⁰ᵢ`; undefined when either count is missing or 0.
pub fn growth(e: &EmploymentTable, t0: i32, t1: i32, index: &IndustryIndex) -> Result<Vec<Option<f64>>> {
    for year in [t0, t1] {
        if !e.has_year(year) {
            return Err(Error::Argument(format!("no employment for year {year}")));
        }
    }
    let (a, b) = (e.vector(t0, index), e.vector(t1, index));
    Ok(a.into_iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) if x > 0 && y > 0 => Some((y as f64).ln() - (x as f64).ln()),
            _ => None,
        })
        .collect())
}

/// Weighted mean of neighbour employment over the neighbours that pass
/// `keep`; undefined when their weights sum to zero.
fn neighbour_mean(g: &LabourNetwork, e0: &[f64], i: usize, keep: impl Fn(usize) -> bool) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for &(j, w) in g.graph().neighbors(i) {
        if keep(j) {
            num += w * e0[j];
            den += w;
        }
    }
    (den != 0.0).then(|| num / den)
}

/// `REᵢ = Σ_{j≠i} Aᵢⱼ E⁰ⱼ / Σ_{k≠i} Aᵢₖ`.
pub fn related_employment(g: &LabourNetwork, e0: &[f64]) -> Vec<Option<f64>> {
    assert_eq!(e0.len(), g.n());
    (0..g.n()).map(|i| neighbour_mean(g, e0, i, |_| true)).collect()
}

/// Related employment restricted to the industry's own community;
/// undefined for singletons and for zero within-community weight.
pub fn cluster_employment(g: &LabourNetwork, p: &Partition, e0: &[f64]) -> Vec<Option<f64>> {
    assert_eq!(e0.len(), g.n());
    assert_eq!(p.n(), g.n());
    let sizes = p.sizes();
    (0..g.n())
        .map(|i| {
            let c = p.community_of(i);
            if sizes[c] < 2 {
                return None;
            }
            neighbour_mean(g, e0, i, |j| p.community_of(j) == c)
        })
        .collect()
}

/// Industry subset a regression runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    #[default]
    All,
    Services,
    Manufacturing,
}

impl Subset {
    fn admits(self, class: Option<SectorClass>) -> bool {
        match self {
            Subset::All => true,
            Subset::Services => class == Some(SectorClass::Services),
            Subset::Manufacturing => class == Some(SectorClass::Manufacturing),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::All => "all",
            Subset::Services => "services",
            Subset::Manufacturing => "manufacturing",
        })
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Subset::All),
            "services" => Ok(Subset::Services),
            "manufacturing" => Ok(Subset::Manufacturing),
            _ => Err(Error::Argument(format!(
                "unknown subset {s:?}; expected all, services or manufacturing"
            ))),
        }
    }
}

/// How the pooled-employment regressor enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorScale {
    #[default]
    Log,
    Level,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeType {
    #[default]
    Classical,
    /// White heteroskedasticity-robust with the `n/(n−k)` correction.
    Hc1,
}

/// Least-squares fit with inference statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    /// `1 − SSR/SST`; NaN when the response is constant.
    pub r2: f64,
    pub n: usize,
    pub ssr: f64,
}

/// Relative size of `R_kk` below which column `k` counts as a linear
/// combination of the earlier columns.
const RANK_TOL: f64 = 1e-10;

/// OLS of `y` on the columns of `x` (an intercept must be supplied as a
/// column if wanted).
pub fn ols(y: &[f64], x: &DMatrix<f64>, names: &[String], se_type: SeType) -> Result<OlsFit> {
    let (n, k) = x.shape();
    assert_eq!(y.len(), n);
    assert_eq!(names.len(), k);
    if n < k + 1 {
        return Err(Error::InsufficientObservations { needed: k + 1, got: n });
    }
    // Unit-norm columns so the rank test is scale-free.
    let norms: Vec<f64> = (0..k).map(|c| x.column(c).norm()).collect();
    let mut xs = x.clone();
    for c in 0..k {
        if norms[c] > 0.0 {
            xs.column_mut(c).scale_mut(1.0 / norms[c]);
        }
    }
    let qr = xs.clone().qr();
    let r = qr.r();
    for c in 0..k {
        if norms[c] == 0.0 || r[(c, c)].abs() < RANK_TOL {
            return Err(Error::RankDeficient {
                columns: collinear_group(&r, c, names),
            });
        }
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta_s = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Computation("triangular solve failed".into()))?;
    let coef: Vec<f64> = (0..k).map(|c| beta_s[c] / norms[c]).collect();
    let beta = DVector::from_column_slice(&coef);
    let resid = &yv - x * &beta;
    let ssr = resid.norm_squared();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN };

    // (XᵀX)⁻¹ for the scaled design is R⁻¹R⁻ᵀ.
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Computation("triangular inverse failed".into()))?;
    let bread = &rinv * rinv.transpose();
    let cov_s = match se_type {
        SeType::Classical => bread * (ssr / (n - k) as f64),
        SeType::Hc1 => {
            let mut meat = DMatrix::zeros(k, k);
            for i in 0..n {
                let row = xs.row(i);
                meat += row.transpose() * row * resid[i].powi(2);
            }
            (&bread * meat * &bread) * (n as f64 / (n - k) as f64)
        }
    };
    let se: Vec<f64> = (0..k).map(|c| cov_s[(c, c)].max(0.0).sqrt() / norms[c]).collect();
    let t = coef.iter().zip(&se).map(|(b, s)| b / s).collect();
    Ok(OlsFit {
        names: names.to_vec(),
        coef,
        se,
        t,
        r2,
        n,
        ssr,
    })
}

/// Column `c` together with the earlier columns it is built from.
fn collinear_group(r: &DMatrix<f64>, c: usize, names: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    if c > 0 {
        let head = r.view((0, 0), (c, c)).clone_owned();
        let rhs = r.view((0, c), (c, 1)).clone_owned();
        if let Some(b) = head.solve_upper_triangular(&rhs) {
            for j in 0..c {
                if b[j].abs() > 1e-8 {
                    out.push(names[j].clone());
                }
            }
        }
    }
    out.push(names[c].clone());
    out
}

/// Everything the growth regressions need, one entry per industry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthSample {
    pub ids: Vec<String>,
    pub t0: i32,
    pub t1: i32,
    pub growth: Vec<Option<f64>>,
    /// Base-year employment; missing counts as 0.
    pub e0: Vec<f64>,
    pub re: Vec<Option<f64>>,
    pub taus: Vec<u32>,
    /// `ce[k][i]`: cluster employment of industry `i` at Markov time `taus[k]`.
    pub ce: Vec<Vec<Option<f64>>>,
    pub class: Vec<Option<SectorClass>>,
}

impl GrowthSample {
    pub fn build(
        g: &LabourNetwork,
        sweep: &ScaleSweep,
        e: &EmploymentTable,
        sectors: Option<&SectorMap>,
        t0: i32,
        t1: i32,
    ) -> Result<Self> {
        let growth = growth(e, t0, t1, &g.index)?;
        let e0: Vec<f64> = e
            .vector(t0, &g.index)
            .into_iter()
            .map(|v| v.unwrap_or(0) as f64)
            .collect();
        let re = related_employment(g, &e0);
        let ce = sweep
            .results
            .iter()
            .map(|r| cluster_employment(g, &r.partition, &e0))
            .collect();
        let class = g
            .index
            .ids()
            .iter()
            .map(|id| sectors.and_then(|s| s.class_of(id)))
            .collect();
        Ok(GrowthSample {
            ids: g.index.ids().to_vec(),
            t0,
            t1,
            growth,
            e0,
            re,
            taus: sweep.taus(),
            ce,
            class,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    fn column(&self, reg: Regressor) -> Result<&[Option<f64>]> {
        match reg {
            Regressor::Re => Ok(&self.re),
            Regressor::Ce(tau) => self
                .taus
                .iter()
                .position(|&t| t == tau)
                .map(|k| self.ce[k].as_slice())
                .ok_or_else(|| Error::Argument(format!("Markov time {tau} not in the sweep"))),
        }
    }

    /// Rows with defined growth, positive base employment, a usable
    /// regressor value and membership in `subset`.
    pub fn usable_rows(&self, reg: Regressor, subset: Subset, scale: RegressorScale) -> Result<Vec<usize>> {
        let col = self.column(reg)?;
        Ok((0..self.n())
            .filter(|&i| {
                self.growth[i].is_some()
                    && self.e0[i] > 0.0
                    && subset.admits(self.class[i])
                    && match (col[i], scale) {
                        (Some(v), RegressorScale::Log) => v > 0.0,
                        (Some(_), RegressorScale::Level) => true,
                        (None, _) => false,
                    }
            })
            .collect())
    }

    /// Fits the model on the given rows.
    pub fn fit_rows(&self, reg: Regressor, rows: &[usize], opts: &FitOptions) -> Result<RegressionResult> {
        let col = self.column(reg)?;
        let x = DMatrix::from_fn(rows.len(), 3, |r, c| {
            let i = rows[r];
            match c {
                0 => 1.0,
                1 => self.e0[i].ln(),
                _ => {
                    let v = col[i].expect("usable row");
                    match opts.scale {
                        RegressorScale::Log => v.ln(),
                        RegressorScale::Level => v,
                    }
                }
            }
        });
        let y: Vec<f64> = rows.iter().map(|&i| self.growth[i].expect("usable row")).collect();
        let names = vec![
            "intercept".to_string(),
            "log_e0".to_string(),
            reg.column_name(opts.scale),
        ];
        let fit = ols(&y, &x, &names, opts.se)?;
        Ok(RegressionResult {
            regressor: reg.to_string(),
            coef: fit.coef[2],
            se: fit.se[2],
            t: fit.t[2],
            r2: fit.r2,
            n: fit.n,
            fit,
        })
    }

    pub fn fit(&self, reg: Regressor, subset: Subset, opts: &FitOptions) -> Result<RegressionResult> {
        let rows = self.usable_rows(reg, subset, opts.scale)?;
        self.fit_rows(reg, &rows, opts)
    }
}

/// Pooled-employment regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regressor {
    Re,
    Ce(u32),
}

impl Regressor {
    fn column_name(self, scale: RegressorScale) -> String {
        let prefix = match scale {
            RegressorScale::Log => "log_",
            RegressorScale::Level => "",
        };
        format!("{prefix}{self}")
    }
}

impl fmt::Display for Regressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regressor::Re => f.write_str("re"),
            Regressor::Ce(t) => write!(f, "ce_tau{t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    pub scale: RegressorScale,
    pub se: SeType,
}

/// One fitted growth regression, with the pooled-employment coefficient
/// pulled out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub regressor: String,
    pub coef: f64,
    pub se: f64,
    pub t: f64,
    pub r2: f64,
    pub n: usize,
    pub fit: OlsFit,
}

/// Per-Markov-time fit, or the reason none was made.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub tau: u32,
    pub n_usable: usize,
    pub result: Option<RegressionResult>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub subset: Subset,
    pub options: FitOptions,
    pub rows: Vec<ScanRow>,
}

fn fit_or_flag(s: &GrowthSample, reg: Regressor, rows: &[usize], opts: &FitOptions) -> (Option<RegressionResult>, Option<String>) {
    match s.fit_rows(reg, rows, opts) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Fits the cluster-employment model at every Markov time of the sample.
pub fn scan_scales(s: &GrowthSample, subset: Subset, opts: &FitOptions) -> Result<ScanResult> {
    let rows = s
        .taus
        .par_iter()
        .map(|&tau| -> Result<ScanRow> {
            let reg = Regressor::Ce(tau);
            let usable = s.usable_rows(reg, subset, opts.scale)?;
            let (result, flag) = fit_or_flag(s, reg, &usable, opts);
            Ok(ScanRow {
                tau,
                n_usable: usable.len(),
                result,
                flag,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ScanResult {
        subset,
        options: *opts,
        rows,
    })
}

impl ScanResult {
    /// `tau,coef,se,t,r2,n`; unfitted rows carry NaN statistics.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Computation(format!("writing scan: {e}"));
        w.write_record(["tau", "coef", "se", "t", "r2", "n"]).map_err(err)?;
        for row in &self.rows {
            let r = row.result.as_ref();
            w.write_record([
                row.tau.to_string(),
                fmt_opt(r.map(|r| r.coef)),
                fmt_opt(r.map(|r| r.se)),
                fmt_opt(r.map(|r| r.t)),
                fmt_opt(r.map(|r| r.r2)),
                row.n_usable.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Computation(format!("writing scan: {e}")))
    }
}

/// `R²(a) − R²(b)` with both models refitted on their common rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub tau: u32,
    /// Reference label: a Markov time, or `re`.
    pub reference: String,
    pub delta_r2: Option<f64>,
    pub n_common: usize,
    pub flag: Option<String>,
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Difference in R² between two regressors fitted on their common rows.
pub fn common_delta(
    s: &GrowthSample,
    a: Regressor,
    b: Regressor,
    subset: Subset,
    opts: &FitOptions,
) -> Result<(Option<f64>, usize, Option<String>)> {
    let common = intersect(
        &s.usable_rows(a, subset, opts.scale)?,
        &s.usable_rows(b, subset, opts.scale)?,
    );
    if a == b {
        return Ok((Some(0.0), common.len(), None));
    }
    let fa = s.fit_rows(a, &common, opts);
    let fb = s.fit_rows(b, &common, opts);
    Ok(match (fa, fb) {
        (Ok(x), Ok(y)) => (Some(x.r2 - y.r2), common.len(), None),
        (Err(e), _) | (_, Err(e)) => (None, common.len(), Some(e.to_string())),
    })
}

/// Fixed-observation ΔR² of every Markov time against `tau_ref`.
pub fn fixed_obs_delta_r2(s: &GrowthSample, tau_ref: u32, subset: Subset, opts: &FitOptions) -> Result<Vec<DeltaRow>> {
    if !s.taus.contains(&tau_ref) {
        return Err(Error::Argument(format!("reference Markov time {tau_ref} not in the sweep")));
    }
    s.taus
        .par_iter()
        .map(|&tau| {
            let (delta_r2, n_common, flag) =
                common_delta(s, Regressor::Ce(tau), Regressor::Ce(tau_ref), subset, opts)?;
            Ok(DeltaRow {
                tau,
                reference: tau_ref.to_string(),
                delta_r2,
                n_common,
                flag,
            })
        })
        .collect()
}

/// Markov time with the largest ΔR²; ties go to the smallest time.
pub fn argmax_delta(rows: &[DeltaRow]) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for r in rows {
        if let Some(d) = r.delta_r2 {
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((r.tau, d));
            }
        }
    }
    best.map(|b| b.0)
}

pub fn write_delta_csv<W: Write>(rows: &[DeltaRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Computation(format!("writing delta table: {e}"));
    w.write_record(["tau", "tau_ref", "delta_r2", "n_common"]).map_err(err)?;
    for r in rows {
        w.write_record([
            r.tau.to_string(),
            r.reference.clone(),
            fmt_opt(r.delta_r2),
            r.n_common.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::Computation(format!("writing delta table: {e}")))
}

/// `|ΔR²|` for every ordered pair of Markov times on common rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseDelta {
    pub taus: Vec<u32>,
    /// Row-major `taus × taus`.
    pub abs_delta_r2: Vec<Option<f64>>,
    pub n_common: Vec<usize>,
}

impl PairwiseDelta {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.abs_delta_r2[a * self.taus.len() + b]
    }

    /// `tau_a,tau_b,abs_delta_r2,n_common`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Computation(format!("writing pairwise table: {e}"));
        w.write_record(["tau_a", "tau_b", "abs_delta_r2", "n_common"]).map_err(err)?;
        let k = self.taus.len();
        for a in 0..k {
            for b in 0..k {
                w.write_record([
                    self.taus[a].to_string(),
                    self.taus[b].to_string(),
                    fmt_opt(self.get(a, b)),
                    self.n_common[a * k + b].to_string(),
                ])
                .map_err(err)?;
            }
        }
        w.flush()
            .map_err(|e| Error::Computation(format!("writing pairwise table: {e}")))
    }
}

pub fn pairwise_delta_r2(s: &GrowthSample, subset: Subset, opts: &FitOptions) -> Result<PairwiseDelta> {
    let k = s.taus.len();
    let cells: Vec<(Option<f64>, usize)> = (0..k * k)
        .into_par_iter()
        .map(|c| {
            let (a, b) = (c / k, c % k);
            if a == b {
                let n = s.usable_rows(Regressor::Ce(s.taus[a]), subset, opts.scale)?.len();
                return Ok((Some(0.0), n));
            }
            // Compute each unordered pair once in a fixed orientation.
            let (lo, hi) = (a.min(b), a.max(b));
            let (d, n, _) = common_delta(
                s,
                Regressor::Ce(s.taus[lo]),
                Regressor::Ce(s.taus[hi]),
                subset,
                opts,
            )?;
            Ok((d.map(f64::abs), n))
        })
        .collect::<Result<_>>()?;
    Ok(PairwiseDelta {
        taus: s.taus.clone(),
        abs_delta_r2: cells.iter().map(|c| c.0).collect(),
        n_common: cells.iter().map(|c| c.1).collect(),
    })
}

/// Cluster employment against related employment at one Markov time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CeReRow {
    pub tau: u32,
    pub r2_ce: Option<f64>,
    /// Related-employment fit on the rows shared with `CE^τ`.
    pub r2_re_common: Option<f64>,
    pub delta_r2: Option<f64>,
    pub n_common: usize,
    /// Related-employment fit on all of its own usable rows.
    pub r2_re_all: Option<f64>,
    pub n_re_all: usize,
}

pub fn compare_ce_re(s: &GrowthSample, subset: Subset, opts: &FitOptions) -> Result<Vec<CeReRow>> {
    let re_rows = s.usable_rows(Regressor::Re, subset, opts.scale)?;
    let re_all = s.fit_rows(Regressor::Re, &re_rows, opts).ok();
    s.taus
        .par_iter()
        .map(|&tau| {
            let reg = Regressor::Ce(tau);
            let common = intersect(&s.usable_rows(reg, subset, opts.scale)?, &re_rows);
            let ce = s.fit_rows(reg, &common, opts).ok();
            let re = s.fit_rows(Regressor::Re, &common, opts).ok();
            let delta_r2 = match (&ce, &re) {
                (Some(a), Some(b)) => Some(a.r2 - b.r2),
                _ => None,
            };
            Ok(CeReRow {
                tau,
                r2_ce: ce.map(|r| r.r2),
                r2_re_common: re.map(|r| r.r2),
                delta_r2,
                n_common: common.len(),
                r2_re_all: re_all.as_ref().map(|r| r.r2),
                n_re_all: re_rows.len(),
            })
        })
        .collect()
}

pub fn write_ce_re_csv<W: Write>(rows: &[CeReRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Computation(format!("writing CE/RE table: {e}"));
    w.write_record([
        "tau",
        "r2_ce",
        "r2_re_common",
        "delta_r2",
        "n_common",
        "r2_re_all",
        "n_re_all",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.tau.to_string(),
            fmt_opt(r.r2_ce),
            fmt_opt(r.r2_re_common),
            fmt_opt(r.delta_r2),
            r.n_common.to_string(),
            fmt_opt(r.r2_re_all),
            r.n_re_all.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::Computation(format!("writing CE/RE table: {e}")))
}

/// Rejects growth windows that overlap the years the network was built from.
pub fn check_out_of_sample(network_years: &[i32], t0: i32, t1: i32, allow_overlap: bool) -> Result<()> {
    if t1 <= t0 {
        return Err(Error::Config(format!("growth window must have t1 > t0, got {t0}..{t1}")));
    }
    if let Some(&last) = network_years.iter().max() {
        if t0 < last && !allow_overlap {
            return Err(Error::Config(format!(
                "growth base year {t0} precedes the last network year {last}; \
                 pass --allow-overlap to accept in-sample growth"
            )));
        }
    }
    Ok(())
}

/// Settings for one detection-plus-scan run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub grid: Vec<u32>,
    pub runs: usize,
    pub seed: u64,
    pub t0: i32,
    pub t1: i32,
    pub subset: Subset,
    pub options: FitOptions,
    pub references: Vec<u32>,
}

/// Scan outputs at one edge threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaScan {
    pub gamma: f64,
    pub edges: usize,
    pub sweep: ScaleSweep,
    pub scan: ScanResult,
    pub fixed_obs: Vec<DeltaRow>,
    pub pairwise: PairwiseDelta,
    pub vs_re: Vec<CeReRow>,
}

/// Threshold, sweep and scan at one γ.
pub fn scan_at_gamma(
    s: &RelatednessMatrix,
    gamma: f64,
    e: &EmploymentTable,
    sectors: Option<&SectorMap>,
    settings: &ScanSettings,
) -> Result<GammaScan> {
    let net = threshold(s, gamma)?;
    let walk = WalkOperators::new(net.graph())?;
    let sw = sweep(&walk, &settings.grid, settings.runs, settings.seed)?;
    let sample = GrowthSample::build(&net, &sw, e, sectors, settings.t0, settings.t1)?;
    let scan = scan_scales(&sample, settings.subset, &settings.options)?;
    let mut fixed_obs = Vec::new();
    for &r in &settings.references {
        if sample.taus.contains(&r) {
            fixed_obs.extend(fixed_obs_delta_r2(&sample, r, settings.subset, &settings.options)?);
        }
    }
    let pairwise = pairwise_delta_r2(&sample, settings.subset, &settings.options)?;
    let vs_re = compare_ce_re(&sample, settings.subset, &settings.options)?;
    Ok(GammaScan {
        gamma,
        edges: net.edge_count(),
        sweep: sw,
        scan,
        fixed_obs,
        pairwise,
        vs_re,
    })
}

/// Full rebuild per γ (ascending, each ≥ −1).
pub fn gamma_sensitivity(
    s: &RelatednessMatrix,
    gammas: &[f64],
    e: &EmploymentTable,
    sectors: Option<&SectorMap>,
    settings: &ScanSettings,
) -> Result<Vec<GammaScan>> {
    if gammas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("gamma values must be strictly ascending".into()));
    }
    gammas
        .iter()
        .map(|&g| scan_at_gamma(s, g, e, sectors, settings))
        .collect()
}
