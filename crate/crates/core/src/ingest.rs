//! Input tables and the yearly flow tensor.
//!
//! Three CSV files feed the pipeline, each with an exact header:
//!
//! * `transitions.csv`: `year,origin,destination,count`
//! * `employment.csv`: `year,industry,employment`
//! * `sectors.csv`: `industry,sector`
//!
//! Industry ids are opaque strings. Duplicate transition rows are summed;
//! duplicate employment rows are rejected.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRANSITIONS_HEADER: [&str; 4] = ["year", "origin", "destination", "count"];
pub const EMPLOYMENT_HEADER: [&str; 3] = ["year", "industry", "employment"];
pub const SECTORS_HEADER: [&str; 2] = ["industry", "sector"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionRow {
    pub year: i32,
    pub origin: String,
    pub destination: String,
    pub count: u64,
}

/// Aggregated worker transitions, unique per `(year, origin, destination)`
/// and sorted by that key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransitionTable {
    rows: Vec<TransitionRow>,
}

impl TransitionTable {
    /// Builds a table, summing counts of repeated keys.
    pub fn from_rows(rows: impl IntoIterator<Item = TransitionRow>) -> Self {
        let mut agg: BTreeMap<(i32, String, String), u64> = BTreeMap::new();
        for r in rows {
            *agg.entry((r.year, r.origin, r.destination)).or_default() += r.count;
        }
        let rows = agg
            .into_iter()
            .map(|((year, origin, destination), count)| TransitionRow {
                year,
                origin,
                destination,
                count,
            })
            .collect();
        TransitionTable { rows }
    }

    pub fn rows(&self) -> &[TransitionRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn years(&self) -> Vec<i32> {
        let set: BTreeSet<i32> = self.rows.iter().map(|r| r.year).collect();
        set.into_iter().collect()
    }

    pub fn industries(&self) -> BTreeSet<&str> {
        self.rows
            .iter()
            .flat_map(|r| [r.origin.as_str(), r.destination.as_str()])
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRANSITIONS_HEADER).map_err(csv_write_err)?;
        for r in &self.rows {
            w.write_record([
                r.year.to_string(),
                r.origin.clone(),
                r.destination.clone(),
                r.count.to_string(),
            ])
            .map_err(csv_write_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Employment per `(year, industry)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmploymentTable {
    rows: BTreeMap<(i32, String), u64>,
}

impl EmploymentTable {
    /// Builds a table; a repeated `(year, industry)` key is an error.
    pub fn from_rows(rows: impl IntoIterator<Item = (i32, String, u64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (year, industry, employment) in rows {
            if map.insert((year, industry.clone()), employment).is_some() {
                return Err(Error::Argument(format!(
                    "duplicate employment row for ({year}, {industry})"
                )));
            }
        }
        Ok(EmploymentTable { rows: map })
    }

    pub fn get(&self, year: i32, industry: &str) -> Option<u64> {
        self.rows.get(&(year, industry.to_string())).copied()
    }

    pub fn has_year(&self, year: i32) -> bool {
        self.rows.keys().any(|(y, _)| *y == year)
    }

    pub fn years(&self) -> Vec<i32> {
        let set: BTreeSet<i32> = self.rows.keys().map(|(y, _)| *y).collect();
        set.into_iter().collect()
    }

    pub fn industries(&self) -> BTreeSet<&str> {
        self.rows.keys().map(|(_, i)| i.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Employment of every indexed industry in `year`, `None` where absent.
    pub fn vector(&self, year: i32, index: &IndustryIndex) -> Vec<Option<u64>> {
        index.ids().iter().map(|id| self.get(year, id)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, &str, u64)> {
        self.rows.iter().map(|((y, i), e)| (*y, i.as_str(), *e))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(EMPLOYMENT_HEADER).map_err(csv_write_err)?;
        for ((year, industry), e) in &self.rows {
            w.write_record([year.to_string(), industry.clone(), e.to_string()])
                .map_err(csv_write_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Coarse class of a sector, used to select regression subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectorClass {
    Services,
    Manufacturing,
    Other,
}

/// Industry → sector label, plus optional sector → class metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SectorMap {
    sectors: BTreeMap<String, String>,
    classes: BTreeMap<String, SectorClass>,
}

impl SectorMap {
    /// Builds a map; an industry listed twice with different sectors is an
    /// error, an exact repeat is ignored.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut sectors = BTreeMap::new();
        for (industry, sector) in pairs {
            if let Some(prev) = sectors.get(&industry) {
                if prev != &sector {
                    return Err(Error::Argument(format!(
                        "industry {industry} mapped to both {prev} and {sector}"
                    )));
                }
            }
            sectors.insert(industry, sector);
        }
        Ok(SectorMap {
            sectors,
            classes: BTreeMap::new(),
        })
    }

    pub fn sector_of(&self, industry: &str) -> Option<&str> {
        self.sectors.get(industry).map(String::as_str)
    }

    /// Distinct sector labels in sorted order.
    pub fn sectors(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.sectors.values().collect();
        set.into_iter().cloned().collect()
    }

    pub fn industries(&self) -> impl Iterator<Item = &str> {
        self.sectors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    pub fn set_class(&mut self, sector: impl Into<String>, class: SectorClass) {
        self.classes.insert(sector.into(), class);
    }

    pub fn classes(&self) -> &BTreeMap<String, SectorClass> {
        &self.classes
    }

    /// Class of an industry through its sector; unclassified sectors are
    /// `Other`.
    pub fn class_of(&self, industry: &str) -> Option<SectorClass> {
        let sector = self.sectors.get(industry)?;
        Some(self.classes.get(sector).copied().unwrap_or(SectorClass::Other))
    }

    /// Rejects a map that misses any industry of the index.
    pub fn check_covers(&self, index: &IndustryIndex) -> Result<()> {
        let missing: Vec<&str> = index
            .ids()
            .iter()
            .filter(|id| !self.sectors.contains_key(*id))
            .map(String::as_str)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "industries without a sector: {}",
                missing.join(", ")
            )))
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SECTORS_HEADER).map_err(csv_write_err)?;
        for (industry, sector) in &self.sectors {
            w.write_record([industry, sector]).map_err(csv_write_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Ordered industry universe; position in the index is the node id used by
/// every matrix in the crate.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndustryIndex {
    ids: Vec<String>,
    #[serde(skip)]
    lookup: HashMap<String, usize>,
}

impl IndustryIndex {
    /// Sorted, deduplicated index over the given ids.
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = ids.into_iter().map(Into::into).collect();
        let ids: Vec<String> = set.into_iter().collect();
        let lookup = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        IndustryIndex { ids, lookup }
    }

    /// Union of every industry named in any of the tables.
    pub fn union_of(
        transitions: &TransitionTable,
        employment: Option<&EmploymentTable>,
        sectors: Option<&SectorMap>,
    ) -> Self {
        let mut all: BTreeSet<String> =
            transitions.industries().into_iter().map(String::from).collect();
        if let Some(e) = employment {
            all.extend(e.industries().into_iter().map(String::from));
        }
        if let Some(s) = sectors {
            all.extend(s.industries().map(String::from));
        }
        IndustryIndex::new(all)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        if self.lookup.is_empty() && !self.ids.is_empty() {
            return self.ids.iter().position(|s| s == id);
        }
        self.lookup.get(id).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.ids[i]
    }
}

/// Yearly directed worker-transition counts between indexed industries.
///
/// Each year holds a dense `n × n` row-major matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTensor {
    index: IndustryIndex,
    years: Vec<i32>,
    counts: Vec<Vec<u64>>,
    warnings: Vec<String>,
}

impl FlowTensor {
    pub fn index(&self) -> &IndustryIndex {
        &self.index
    }

    pub fn n(&self) -> usize {
        self.index.len()
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    /// Non-fatal notes raised while building (e.g. dropped diagonal flows).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn year_matrix(&self, year: i32) -> Option<&[u64]> {
        let k = self.years.iter().position(|&y| y == year)?;
        Some(&self.counts[k])
    }

    pub fn get(&self, year: i32, origin: usize, destination: usize) -> Option<u64> {
        let n = self.n();
        self.year_matrix(year).map(|m| m[origin * n + destination])
    }

    pub fn total(&self, year: i32) -> Option<u64> {
        self.year_matrix(year).map(|m| m.iter().sum())
    }

    /// Row sums (out-flow) of a year.
    pub fn out_flows(&self, year: i32) -> Option<Vec<u64>> {
        let n = self.n();
        let m = self.year_matrix(year)?;
        Some((0..n).map(|i| m[i * n..(i + 1) * n].iter().sum()).collect())
    }

    /// Column sums (in-flow) of a year.
    pub fn in_flows(&self, year: i32) -> Option<Vec<u64>> {
        let n = self.n();
        let m = self.year_matrix(year)?;
        let mut col = vec![0u64; n];
        for i in 0..n {
            for (j, c) in col.iter_mut().enumerate() {
                *c += m[i * n + j];
            }
        }
        Some(col)
    }

    /// Exports the nonzero entries in the transitions schema.
    pub fn to_transitions(&self) -> TransitionTable {
        let n = self.n();
        let mut rows = Vec::new();
        for (k, &year) in self.years.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let c = self.counts[k][i * n + j];
                    if c > 0 {
                        rows.push(TransitionRow {
                            year,
                            origin: self.index.name(i).to_string(),
                            destination: self.index.name(j).to_string(),
                            count: c,
                        });
                    }
                }
            }
        }
        TransitionTable::from_rows(rows)
    }
}

/// Assembles the flow tensor over the industries appearing in `t`.
pub fn build_flow_tensor(t: &TransitionTable, years: &[i32]) -> Result<FlowTensor> {
    let index = IndustryIndex::new(t.industries());
    build_flow_tensor_over(t, years, &index)
}

/// Assembles the flow tensor over a caller-supplied industry universe.
///
/// Rows for years outside `years` are ignored. Same-industry rows are
/// dropped with a warning. Every industry in the selected rows must be in
/// `index`.
pub fn build_flow_tensor_over(
    t: &TransitionTable,
    years: &[i32],
    index: &IndustryIndex,
) -> Result<FlowTensor> {
    let years: Vec<i32> = years.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if years.is_empty() {
        return Err(Error::Argument("empty year range".into()));
    }
    let n = index.len();
    let mut counts = vec![vec![0u64; n * n]; years.len()];
    let mut warnings = Vec::new();
    for r in t.rows() {
        let Ok(k) = years.binary_search(&r.year) else {
            continue;
        };
        let (Some(i), Some(j)) = (index.position(&r.origin), index.position(&r.destination)) else {
            return Err(Error::Argument(format!(
                "transition {} -> {} in {} names an industry outside the index",
                r.origin, r.destination, r.year
            )));
        };
        if i == j {
            if r.count > 0 {
                let msg = format!(
                    "{}: dropped {} same-industry transitions for {}",
                    r.year, r.count, r.origin
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
            continue;
        }
        counts[k][i * n + j] += r.count;
    }
    Ok(FlowTensor {
        index: index.clone(),
        years,
        counts,
        warnings,
    })
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::Computation(format!("csv write: {e}"))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads a headered CSV, checks the header against `expected` and hands each
/// record with its 1-based line number to `row`.
fn read_table<R, F>(reader: R, label: &Path, expected: &[&str], mut row: F) -> Result<()>
where
    R: Read,
    F: FnMut(u64, &csv::StringRecord) -> Result<()>,
{
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: label.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            path: label.to_path_buf(),
            line: 1,
            message: format!("header must be `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: label.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != expected.len() {
            return Err(Error::Parse {
                path: label.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        row(line, &rec)?;
    }
    Ok(())
}

fn parse_year(label: &Path, line: u64, s: &str) -> Result<i32> {
    s.parse().map_err(|_| Error::Parse {
        path: label.to_path_buf(),
        line,
        message: format!("year `{s}` is not an integer"),
    })
}

fn parse_count(label: &Path, line: u64, field: &str, s: &str) -> Result<u64> {
    let v: i64 = s.parse().map_err(|_| Error::Parse {
        path: label.to_path_buf(),
        line,
        message: format!("{field} `{s}` is not an integer"),
    })?;
    if v < 0 {
        return Err(Error::Validation {
            path: label.to_path_buf(),
            line,
            message: format!("{field} must be nonnegative, found {v}"),
        });
    }
    Ok(v as u64)
}

fn parse_id(label: &Path, line: u64, field: &str, s: &str) -> Result<String> {
    if s.is_empty() {
        return Err(Error::Validation {
            path: label.to_path_buf(),
            line,
            message: format!("empty {field}"),
        });
    }
    Ok(s.to_string())
}

pub fn read_transitions<R: Read>(reader: R, label: impl AsRef<Path>) -> Result<TransitionTable> {
    let label = label.as_ref();
    let mut rows = Vec::new();
    read_table(reader, label, &TRANSITIONS_HEADER, |line, rec| {
        rows.push(TransitionRow {
            year: parse_year(label, line, &rec[0])?,
            origin: parse_id(label, line, "origin", &rec[1])?,
            destination: parse_id(label, line, "destination", &rec[2])?,
            count: parse_count(label, line, "count", &rec[3])?,
        });
        Ok(())
    })?;
    Ok(TransitionTable::from_rows(rows))
}

pub fn load_transitions(path: impl AsRef<Path>) -> Result<TransitionTable> {
    let path = path.as_ref();
    read_transitions(open(path)?, path)
}

pub fn read_employment<R: Read>(reader: R, label: impl AsRef<Path>) -> Result<EmploymentTable> {
    let label = label.as_ref();
    let mut rows: BTreeMap<(i32, String), u64> = BTreeMap::new();
    read_table(reader, label, &EMPLOYMENT_HEADER, |line, rec| {
        let year = parse_year(label, line, &rec[0])?;
        let industry = parse_id(label, line, "industry", &rec[1])?;
        let e = parse_count(label, line, "employment", &rec[2])?;
        if rows.insert((year, industry.clone()), e).is_some() {
            return Err(Error::Validation {
                path: label.to_path_buf(),
                line,
                message: format!("duplicate row for ({year}, {industry})"),
            });
        }
        Ok(())
    })?;
    Ok(EmploymentTable { rows })
}

pub fn load_employment(path: impl AsRef<Path>) -> Result<EmploymentTable> {
    let path = path.as_ref();
    read_employment(open(path)?, path)
}

pub fn read_sectors<R: Read>(reader: R, label: impl AsRef<Path>) -> Result<SectorMap> {
    let label = label.as_ref();
    let mut sectors: BTreeMap<String, String> = BTreeMap::new();
    read_table(reader, label, &SECTORS_HEADER, |line, rec| {
        let industry = parse_id(label, line, "industry", &rec[0])?;
        let sector = parse_id(label, line, "sector", &rec[1])?;
        if let Some(prev) = sectors.get(&industry) {
            if prev != &sector {
                return Err(Error::Validation {
                    path: label.to_path_buf(),
                    line,
                    message: format!("industry {industry} already mapped to {prev}"),
                });
            }
        }
        sectors.insert(industry, sector);
        Ok(())
    })?;
    Ok(SectorMap {
        sectors,
        classes: BTreeMap::new(),
    })
}

pub fn load_sectors(path: impl AsRef<Path>) -> Result<SectorMap> {
    let path = path.as_ref();
    read_sectors(open(path)?, path)
}

/// Paths of the three input tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPaths {
    pub transitions: PathBuf,
    pub employment: PathBuf,
    pub sectors: PathBuf,
}

impl InputPaths {
    /// The conventional file names inside one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        InputPaths {
            transitions: dir.join("transitions.csv"),
            employment: dir.join("employment.csv"),
            sectors: dir.join("sectors.csv"),
        }
    }
}
