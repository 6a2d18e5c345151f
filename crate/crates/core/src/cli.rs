//! Command-line front end: `build`, `diagnose`, `detect`, `scan`, `synth`.
//!
//! Every option can also be given in a `key = value` file passed with
//! `--config` (keys are the long flag names, `#` starts a comment); flags
//! on the command line override the file. One file can serve several
//! commands: keys a command does not use are ignored, unknown keys are
//! rejected. Each command writes its outputs
//! and a `manifest.json` holding the resolved configuration, its SHA-256,
//! the seed, and digests of every input and output file.
//!
//! Exit codes: 0 success, 1 computation error, 2 input or configuration
//! error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{
    assortativity, node_stats, rewire_null, sector_edge_share, top_edges, Histogram, WalkOperators,
    DEFAULT_HISTOGRAM_BINS, DEFAULT_NULL_REPS,
};
use crate::growth::{
    argmax_delta, check_out_of_sample, gamma_sensitivity, write_ce_re_csv, write_delta_csv,
    FitOptions, GammaScan, RegressorScale, ScanSettings, SeType, Subset,
};
use crate::ingest::{
    read_employment, read_sectors, read_transitions, EmploymentTable, SectorClass, SectorMap,
    TransitionTable,
};
use crate::multiscale::{
    clusters_per_sector, majority_link, sector_cluster_crosstab, trajectory, DEFAULT_ANCHOR_TAU,
    MAJORITY_TIE_BREAK,
};
use crate::relatedness::{
    relatedness_from_tables, threshold, LabourNetwork, MarginalConvention, MissingYears,
    RelatednessConfig, RelatednessMatrix,
};
use crate::stability::{sweep, ScaleSweep, DEFAULT_RUNS, DEFAULT_TAU_MAX, TIE_BREAK_RULE};
use crate::synth::{evaluate_recovery, generate, SynthConfig};
use crate::util::{fmt_opt, sha256_hex};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Synthetic benchmark shapes available to `synth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 16 blocks of 4 nested in 4 blocks of 16.
    #[default]
    TwoLevel,
    /// 16 blocks of 8 in 4 of 32 in 2 of 64, growth planted on the middle.
    ThreeLevel,
}

impl Preset {
    pub fn config(self) -> SynthConfig {
        match self {
            Preset::TwoLevel => SynthConfig::default(),
            Preset::ThreeLevel => SynthConfig::three_level(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Build,
    Diagnose,
    Detect,
    Scan,
    Synth,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Build => "build",
            CommandKind::Diagnose => "diagnose",
            CommandKind::Detect => "detect",
            CommandKind::Scan => "scan",
            CommandKind::Synth => "synth",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [
            CommandKind::Build,
            CommandKind::Diagnose,
            CommandKind::Detect,
            CommandKind::Scan,
            CommandKind::Synth,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }

    fn about(self) -> &'static str {
        match self {
            CommandKind::Build => "Build the relatedness network from the input tables",
            CommandKind::Diagnose => "Degree, strength and centrality reports with a rewiring null model",
            CommandKind::Detect => "Multi-scale community detection, dendrogram and crosstabs",
            CommandKind::Scan => "Growth-regression scan over Markov times and thresholds",
            CommandKind::Synth => "Generate a planted hierarchy, run the scan and score recovery",
        }
    }

    /// Options the command accepts besides `config`, `out` and `seed`.
    fn keys(self) -> &'static [&'static str] {
        match self {
            CommandKind::Build => &[
                "input", "transitions", "employment", "sectors", "years", "marginals",
                "missing-years", "gamma",
            ],
            CommandKind::Diagnose => &[
                "input", "transitions", "employment", "sectors", "network", "years",
                "marginals", "missing-years", "gamma", "null-reps", "bins", "top-k",
            ],
            CommandKind::Detect => &[
                "input", "transitions", "employment", "sectors", "network", "years",
                "marginals", "missing-years", "gamma", "tau-min", "tau-max", "runs",
                "anchor-tau", "t0",
            ],
            CommandKind::Scan => &[
                "input", "transitions", "employment", "sectors", "years", "marginals",
                "missing-years", "gamma", "gammas", "tau-min", "tau-max", "runs", "t0", "t1",
                "subset", "se", "scale", "references", "allow-overlap", "services",
                "manufacturing",
            ],
            CommandKind::Synth => &[
                "preset", "isolated", "marginals", "gamma", "gammas", "tau-min", "tau-max",
                "runs", "subset", "se", "scale", "references",
            ],
        }
    }
}

fn help_for(key: &str) -> &'static str {
    match key {
        "input" => "Directory holding transitions.csv, employment.csv and sectors.csv",
        "transitions" => "Transitions table (year,origin,destination,count)",
        "employment" => "Employment table (year,industry,employment)",
        "sectors" => "Sector table (industry,sector)",
        "network" => "Network JSON written by `build`, used instead of rebuilding",
        "years" => "Network years: `2005-2014` or a comma list [default: all, or up to t0]",
        "marginals" => "Expected-flow marginals: out-in or total [default: out-in]",
        "missing-years" => "Undefined years in the mean: skip or fixed-divisor [default: skip]",
        "gamma" => "Edge threshold: keep relatedness strictly above it [default: 0]",
        "gammas" => "Comma list of thresholds to scan, ascending [default: gamma]",
        "tau-min" => "Smallest Markov time [default: 1]",
        "tau-max" => "Largest Markov time [default: 15]",
        "runs" => "Louvain runs per Markov time [default: 100]",
        "anchor-tau" => "Markov time whose clusters anchor trajectories and crosstabs [default: 3]",
        "t0" => "Growth base year",
        "t1" => "Growth end year",
        "subset" => "Regression subset: all, services or manufacturing [default: all]",
        "se" => "Standard errors: classical or hc1 [default: classical]",
        "scale" => "Pooled-employment regressor: log or level [default: log]",
        "references" => "Reference Markov times for fixed-observation ΔR² [default: tau-min,tau-max]",
        "allow-overlap" => "Allow the growth window to start before the last network year",
        "services" => "Comma list of sector labels classed as services",
        "manufacturing" => "Comma list of sector labels classed as manufacturing",
        "null-reps" => "Rewiring replicates [default: 10000]",
        "bins" => "Histogram bins [default: 20]",
        "top-k" => "Number of heaviest edges to list [default: 20]",
        "preset" => "Synthetic benchmark: two-level or three-level [default: two-level]",
        "isolated" => "Extra industries with employment but no flows [default: 0]",
        _ => "",
    }
}

/// Resolved options of one run. Every field has a `key = value` spelling
/// equal to its long flag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Not part of the manifest: reruns into another directory must hash
    /// identically.
    #[serde(skip)]
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub transitions: Option<PathBuf>,
    pub employment: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub years: Option<Vec<i32>>,
    pub marginals: MarginalConvention,
    pub missing_years: MissingYears,
    pub gamma: f64,
    pub gammas: Option<Vec<f64>>,
    pub tau_min: u32,
    pub tau_max: u32,
    pub runs: usize,
    pub seed: u64,
    pub t0: Option<i32>,
    pub t1: Option<i32>,
    pub subset: Subset,
    pub se: SeType,
    pub scale: RegressorScale,
    pub references: Option<Vec<u32>>,
    pub allow_overlap: bool,
    pub services: Vec<String>,
    pub manufacturing: Vec<String>,
    pub null_reps: usize,
    pub bins: usize,
    pub top_k: usize,
    pub anchor_tau: u32,
    pub preset: Preset,
    pub isolated: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: PathBuf::from("out"),
            input: None,
            transitions: None,
            employment: None,
            sectors: None,
            network: None,
            years: None,
            marginals: MarginalConvention::default(),
            missing_years: MissingYears::default(),
            gamma: 0.0,
            gammas: None,
            tau_min: 1,
            tau_max: DEFAULT_TAU_MAX,
            runs: DEFAULT_RUNS,
            seed: 0,
            t0: None,
            t1: None,
            subset: Subset::All,
            se: SeType::Classical,
            scale: RegressorScale::Log,
            references: None,
            allow_overlap: false,
            services: Vec::new(),
            manufacturing: Vec::new(),
            null_reps: DEFAULT_NULL_REPS,
            bins: DEFAULT_HISTOGRAM_BINS,
            top_k: 20,
            anchor_tau: DEFAULT_ANCHOR_TAU,
            preset: Preset::TwoLevel,
            isolated: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_years(v: &str) -> Result<Vec<i32>> {
    let v = v.trim();
    if let Some((a, b)) = v.split_once('-').filter(|(a, _)| !a.is_empty()) {
        let (a, b): (i32, i32) = (parse_num("years", a)?, parse_num("years", b)?);
        if b < a {
            return Err(Error::Config(format!("years: empty range {v}")));
        }
        return Ok((a..=b).collect());
    }
    let mut ys: Vec<i32> = parse_list("years", v)?;
    ys.sort_unstable();
    ys.dedup();
    Ok(ys)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_labels(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl RunConfig {
    /// Sets one option from its textual form. Keys use the long-flag
    /// spelling; underscores are accepted in place of dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        let bad = |what: &str| Error::Config(format!("{key}: expected {what}, got {v:?}"));
        match key.as_str() {
            "out" => self.out = PathBuf::from(v),
            "input" => self.input = Some(PathBuf::from(v)),
            "transitions" => self.transitions = Some(PathBuf::from(v)),
            "employment" => self.employment = Some(PathBuf::from(v)),
            "sectors" => self.sectors = Some(PathBuf::from(v)),
            "network" => self.network = Some(PathBuf::from(v)),
            "years" => self.years = Some(parse_years(v)?),
            "marginals" => {
                self.marginals = match v {
                    "out-in" => MarginalConvention::OutIn,
                    "total" => MarginalConvention::Total,
                    _ => return Err(bad("out-in or total")),
                }
            }
            "missing-years" => {
                self.missing_years = match v {
                    "skip" => MissingYears::Skip,
                    "fixed-divisor" => MissingYears::FixedDivisor,
                    _ => return Err(bad("skip or fixed-divisor")),
                }
            }
            "gamma" => self.gamma = parse_num(&key, v)?,
            "gammas" => self.gammas = Some(parse_list(&key, v)?),
            "tau-min" => self.tau_min = parse_num(&key, v)?,
            "tau-max" => self.tau_max = parse_num(&key, v)?,
            "runs" => self.runs = parse_num(&key, v)?,
            "seed" => self.seed = parse_num(&key, v)?,
            "t0" => self.t0 = Some(parse_num(&key, v)?),
            "t1" => self.t1 = Some(parse_num(&key, v)?),
            "subset" => self.subset = v.parse()?,
            "se" => {
                self.se = match v {
                    "classical" => SeType::Classical,
                    "hc1" => SeType::Hc1,
                    _ => return Err(bad("classical or hc1")),
                }
            }
            "scale" => {
                self.scale = match v {
                    "log" => RegressorScale::Log,
                    "level" => RegressorScale::Level,
                    _ => return Err(bad("log or level")),
                }
            }
            "references" => self.references = Some(parse_list(&key, v)?),
            "allow-overlap" => self.allow_overlap = parse_bool(&key, v)?,
            "services" => self.services = parse_labels(v),
            "manufacturing" => self.manufacturing = parse_labels(v),
            "null-reps" => self.null_reps = parse_num(&key, v)?,
            "bins" => self.bins = parse_num(&key, v)?,
            "top-k" => self.top_k = parse_num(&key, v)?,
            "anchor-tau" => self.anchor_tau = parse_num(&key, v)?,
            "preset" => {
                self.preset = match v {
                    "two-level" => Preset::TwoLevel,
                    "three-level" => Preset::ThreeLevel,
                    _ => return Err(bad("two-level or three-level")),
                }
            }
            "isolated" => self.isolated = parse_num(&key, v)?,
            _ => return Err(Error::Config(format!("unknown option {key:?}"))),
        }
        Ok(())
    }

    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in pairs {
            cfg.set(k.as_ref(), v.as_ref())?;
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> Vec<u32> {
        (self.tau_min..=self.tau_max).collect()
    }

    pub fn gamma_list(&self) -> Vec<f64> {
        self.gammas.clone().unwrap_or_else(|| vec![self.gamma])
    }

    pub fn reference_list(&self) -> Vec<u32> {
        self.references.clone().unwrap_or_else(|| {
            let mut r = vec![self.tau_min, self.tau_max];
            r.dedup();
            r
        })
    }

    /// Checks everything that can be checked before reading inputs.
    pub fn validate(&self, cmd: CommandKind) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for &g in self.gammas.iter().flatten().chain([&self.gamma]) {
            if !(g >= -1.0 && g.is_finite()) {
                return bad(format!("gamma must be a finite value >= -1, got {g}"));
            }
        }
        if let Some(gs) = &self.gammas {
            if gs.is_empty() || gs.windows(2).any(|w| w[0] >= w[1]) {
                return bad("gammas must be a nonempty, strictly ascending list".into());
            }
        }
        if matches!(cmd, CommandKind::Detect | CommandKind::Scan | CommandKind::Synth) {
            if self.tau_min < 1 || self.tau_max < self.tau_min {
                return bad(format!(
                    "Markov times need 1 <= tau-min <= tau-max, got {}..{}",
                    self.tau_min, self.tau_max
                ));
            }
            if self.runs < 2 {
                return bad("runs must be at least 2".into());
            }
        }
        if matches!(cmd, CommandKind::Scan | CommandKind::Synth) {
            for r in self.reference_list() {
                if r < self.tau_min || r > self.tau_max {
                    return bad(format!("reference Markov time {r} outside the grid"));
                }
            }
        }
        if cmd == CommandKind::Detect
            && (self.anchor_tau < self.tau_min || self.anchor_tau > self.tau_max)
        {
            return bad(format!("anchor-tau {} outside the grid", self.anchor_tau));
        }
        if cmd == CommandKind::Diagnose && (self.null_reps == 0 || self.bins == 0 || self.top_k == 0) {
            return bad("null-reps, bins and top-k must be positive".into());
        }
        if cmd == CommandKind::Scan {
            let (Some(t0), Some(t1)) = (self.t0, self.t1) else {
                return bad("scan needs both --t0 and --t1".into());
            };
            if t1 <= t0 {
                return bad(format!("growth window must have t1 > t0, got {t0}..{t1}"));
            }
            let class_needed = match self.subset {
                Subset::All => None,
                Subset::Services => Some(("services", &self.services)),
                Subset::Manufacturing => Some(("manufacturing", &self.manufacturing)),
            };
            if let Some((name, labels)) = class_needed {
                if labels.is_empty() {
                    return bad(format!("subset {name} needs --{name} with its sector labels"));
                }
            }
        }
        if let Some(s) = self.services.iter().find(|s| self.manufacturing.contains(s)) {
            return bad(format!("sector {s} listed as both services and manufacturing"));
        }
        if matches!(cmd, CommandKind::Build | CommandKind::Diagnose | CommandKind::Detect | CommandKind::Scan)
            && self.transitions.is_none()
            && self.input.is_none()
            && self.network.is_none()
        {
            return bad("no input: give --input or --transitions".into());
        }
        Ok(())
    }

    fn input_path(&self, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        explicit.clone().or_else(|| {
            self.input
                .as_ref()
                .map(|d| d.join(name))
                .filter(|p| p.exists())
        })
    }

    fn transitions_path(&self) -> Result<PathBuf> {
        self.transitions
            .clone()
            .or_else(|| self.input.as_ref().map(|d| d.join("transitions.csv")))
            .ok_or_else(|| Error::Config("no transitions table given".into()))
    }
}

/// Parses a `key = value` configuration file.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k as u64 + 1,
                message: format!("expected key = value, got {line:?}"),
            });
        };
        let value = value.trim().trim_matches('"');
        pairs.push((key.trim().to_string(), value.to_string()));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub tie_breaks: Vec<&'static str>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub warnings: Vec<String>,
}

/// Collects output files and their digests.
struct Outputs {
    dir: PathBuf,
    files: Vec<FileDigest>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let s = serde_json::to_string_pretty(value)?;
        self.write(name, s.as_bytes())
    }
}

fn csv_rows(out: &mut Vec<u8>, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Computation(format!("csv write: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Computation(format!("csv write: {e}")))
}

/// Inputs read for one run, with their digests.
struct Inputs {
    transitions: Option<TransitionTable>,
    employment: Option<EmploymentTable>,
    sectors: Option<SectorMap>,
    digests: Vec<FileDigest>,
}

fn read_input(path: &Path, digests: &mut Vec<FileDigest>) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    digests.push(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    });
    Ok(bytes)
}

fn apply_classes(cfg: &RunConfig, s: &mut SectorMap) -> Result<()> {
    let known = s.sectors();
    for (labels, class) in [
        (&cfg.services, SectorClass::Services),
        (&cfg.manufacturing, SectorClass::Manufacturing),
    ] {
        for l in labels {
            if !known.contains(l) {
                return Err(Error::Config(format!("sector {l} does not appear in the sector table")));
            }
            s.set_class(l.clone(), class);
        }
    }
    Ok(())
}

fn load_inputs(cfg: &RunConfig, need_transitions: bool, need_employment: bool) -> Result<Inputs> {
    let mut digests = Vec::new();
    let transitions = if need_transitions {
        let p = cfg.transitions_path()?;
        Some(read_transitions(read_input(&p, &mut digests)?.as_slice(), &p)?)
    } else {
        None
    };
    let employment = match cfg.input_path(&cfg.employment, "employment.csv") {
        Some(p) => Some(read_employment(read_input(&p, &mut digests)?.as_slice(), &p)?),
        None if need_employment => {
            return Err(Error::Config("this command needs an employment table".into()))
        }
        None => None,
    };
    let sectors = match cfg.input_path(&cfg.sectors, "sectors.csv") {
        Some(p) => {
            let mut s = read_sectors(read_input(&p, &mut digests)?.as_slice(), &p)?;
            apply_classes(cfg, &mut s)?;
            Some(s)
        }
        None => None,
    };
    if sectors.is_none() && !(cfg.services.is_empty() && cfg.manufacturing.is_empty()) {
        return Err(Error::Config("sector classes given without a sector table".into()));
    }
    Ok(Inputs {
        transitions,
        employment,
        sectors,
        digests,
    })
}

/// Years the network is built from: explicit, else every transition year
/// up to `t0` when a growth window is set, else every transition year.
fn network_years(cfg: &RunConfig, t: &TransitionTable) -> Result<Vec<i32>> {
    let years = match &cfg.years {
        Some(y) => y.clone(),
        None => t
            .years()
            .into_iter()
            .filter(|&y| cfg.t0.is_none_or(|t0| y <= t0))
            .collect(),
    };
    if years.is_empty() {
        return Err(Error::Config("no network years selected".into()));
    }
    Ok(years)
}

fn relatedness(cfg: &RunConfig, inputs: &Inputs) -> Result<RelatednessMatrix> {
    let t = inputs
        .transitions
        .as_ref()
        .ok_or_else(|| Error::Config("no transitions table loaded".into()))?;
    let years = network_years(cfg, t)?;
    let rc = RelatednessConfig {
        marginals: cfg.marginals,
        missing_years: cfg.missing_years,
        keep_intermediates: false,
    };
    relatedness_from_tables(t, inputs.employment.as_ref(), inputs.sectors.as_ref(), &years, &rc)
}

/// The network from `--network` if given, else built from the tables.
fn network(cfg: &RunConfig, need_employment: bool) -> Result<(LabourNetwork, Inputs)> {
    if let Some(p) = &cfg.network {
        let mut inputs = load_inputs(cfg, false, need_employment)?;
        let bytes = read_input(p, &mut inputs.digests)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Config(format!("{}: not UTF-8", p.display())))?;
        return Ok((LabourNetwork::from_json(&text)?, inputs));
    }
    let inputs = load_inputs(cfg, true, need_employment)?;
    let rel = relatedness(cfg, &inputs)?;
    Ok((threshold(&rel, cfg.gamma)?, inputs))
}

fn finish(cmd: CommandKind, cfg: &RunConfig, out: Outputs, inputs: Vec<FileDigest>, warnings: Vec<String>) -> Result<Manifest> {
    let config_json = serde_json::to_string(cfg)?;
    let mut out = out;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cmd.name(),
        config: cfg.clone(),
        config_sha256: sha256_hex(config_json.as_bytes()),
        seed: cfg.seed,
        tie_breaks: vec![TIE_BREAK_RULE, MAJORITY_TIE_BREAK],
        inputs,
        outputs: out.files.clone(),
        warnings,
    };
    out.json(MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}

/// `build`: relatedness and the thresholded network.
pub fn cmd_build(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate(CommandKind::Build)?;
    let inputs = load_inputs(cfg, true, false)?;
    let rel = relatedness(cfg, &inputs)?;
    let net = threshold(&rel, cfg.gamma)?;
    let mut out = Outputs::new(&cfg.out)?;
    out.csv("relatedness.csv", |buf| {
        let n = rel.n();
        let rows = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter_map(|(i, j)| {
            rel.get(i, j).map(|v| {
                vec![
                    rel.index.name(i).to_string(),
                    rel.index.name(j).to_string(),
                    v.to_string(),
                ]
            })
        });
        csv_rows(buf, &["source", "target", "relatedness"], rows)
    })?;
    out.csv("network.csv", |buf| net.write_edge_csv(buf))?;
    out.write("network.json", net.to_json()?.as_bytes())?;
    let mut warnings = Vec::new();
    let isolated = (0..net.n()).filter(|&i| net.graph().degree(i) == 0).count();
    if isolated > 0 {
        warnings.push(format!("{isolated} industries have no edges at gamma {}", cfg.gamma));
    }
    finish(CommandKind::Build, cfg, out, inputs.digests, warnings)
}

fn histogram_rows<'a>(name: &'a str, obs: &'a Histogram, null: &'a Histogram) -> impl Iterator<Item = Vec<String>> + 'a {
    (0..obs.counts.len()).map(move |k| {
        vec![
            name.to_string(),
            obs.edges[k].to_string(),
            obs.edges[k + 1].to_string(),
            obs.counts[k].to_string(),
            null.counts[k].to_string(),
        ]
    })
}

/// `diagnose`: node statistics, null-model histograms, assortativity,
/// sector edge shares and the heaviest edges.
pub fn cmd_diagnose(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate(CommandKind::Diagnose)?;
    let (net, inputs) = network(cfg, false)?;
    let stats = node_stats(&net)?;
    let assort = assortativity(&net, &stats);
    let null = rewire_null(&net, cfg.null_reps, cfg.seed, cfg.bins)?;
    let mut warnings = Vec::new();
    if !stats.converged {
        warnings.push("eigencentrality power iteration did not converge".into());
    }
    let mut out = Outputs::new(&cfg.out)?;
    out.csv("nodes.csv", |buf| {
        let rows = (0..net.n()).map(|i| {
            vec![
                net.index.name(i).to_string(),
                stats.degree[i].to_string(),
                stats.strength[i].to_string(),
                stats.eigencentrality[i].to_string(),
                fmt_opt(assort.mean_neighbor_strength[i]),
                fmt_opt(assort.mean_neighbor_centrality[i]),
            ]
        });
        csv_rows(
            buf,
            &[
                "industry",
                "degree",
                "strength",
                "eigencentrality",
                "mean_neighbor_strength",
                "mean_neighbor_centrality",
            ],
            rows,
        )
    })?;
    out.csv("null_model.csv", |buf| {
        let rows = histogram_rows("degree", &null.degree_observed, &null.degree_null)
            .chain(histogram_rows("strength", &null.strength_observed, &null.strength_null))
            .chain(histogram_rows(
                "strength_mass",
                &null.strength_mass_observed,
                &null.strength_mass_null,
            ))
            .chain(histogram_rows(
                "eigencentrality",
                &null.centrality_observed,
                &null.centrality_null,
            ));
        csv_rows(buf, &["statistic", "bin_lo", "bin_hi", "observed", "null_mean"], rows)
    })?;
    out.csv("null_replicates.csv", |buf| {
        let rows = null
            .replicate_edges
            .iter()
            .zip(&null.replicate_weight)
            .enumerate()
            .map(|(r, (e, w))| vec![r.to_string(), e.to_string(), w.to_string()]);
        csv_rows(buf, &["replicate", "edges", "total_weight"], rows)
    })?;
    #[derive(Serialize)]
    struct AssortDoc {
        degree: Option<f64>,
        strength: Option<f64>,
        eigencentrality: Option<f64>,
        leading_eigenvalue: f64,
        centrality_converged: bool,
    }
    out.json(
        "assortativity.json",
        &AssortDoc {
            degree: assort.degree_coefficient,
            strength: assort.strength_coefficient,
            eigencentrality: assort.centrality_coefficient,
            leading_eigenvalue: stats.eigenvalue,
            centrality_converged: stats.converged,
        },
    )?;
    if let Some(s) = &inputs.sectors {
        let share = sector_edge_share(&net, s)?;
        out.csv("sector_edge_share.csv", |buf| {
            let k = share.sectors.len();
            let rows = (0..k).flat_map(|p| (0..k).map(move |q| (p, q))).map(|(p, q)| {
                vec![
                    share.sectors[p].clone(),
                    share.sectors[q].clone(),
                    share.edges[p * k + q].to_string(),
                    fmt_opt(share.get(p, q)),
                ]
            });
            csv_rows(buf, &["sector_a", "sector_b", "edges", "share"], rows)
        })?;
    }
    out.csv("top_edges.csv", |buf| {
        let rows = top_edges(&net, cfg.top_k)
            .into_iter()
            .enumerate()
            .map(|(r, e)| vec![(r + 1).to_string(), e.source, e.target, e.weight.to_string()]);
        csv_rows(buf, &["rank", "source", "target", "weight"], rows)
    })?;
    finish(CommandKind::Diagnose, cfg, out, inputs.digests, warnings)
}

fn write_sweep(out: &mut Outputs, prefix: &str, sweep: &ScaleSweep, net: &LabourNetwork) -> Result<()> {
    out.csv(&format!("{prefix}partitions.csv"), |buf| {
        sweep.write_partitions_csv(&net.index, buf)
    })?;
    out.csv(&format!("{prefix}summary.csv"), |buf| sweep.write_summary_csv(buf))
}

/// `detect`: stability sweep, dendrogram, crosstabs and trajectories.
pub fn cmd_detect(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate(CommandKind::Detect)?;
    let (net, inputs) = network(cfg, false)?;
    let walk = WalkOperators::new(net.graph())?;
    let sw = sweep(&walk, &cfg.grid(), cfg.runs, cfg.seed)?;
    let mut warnings = Vec::new();
    let mut out = Outputs::new(&cfg.out)?;
    write_sweep(&mut out, "", &sw, &net)?;
    if sw.len() >= 2 {
        let d = majority_link(&sw)?;
        out.write("dendrogram.json", d.to_json()?.as_bytes())?;
        out.write("dendrogram.nwk", format!("{}\n", d.to_newick()).as_bytes())?;
    }
    let anchor = sw
        .at(cfg.anchor_tau)
        .ok_or_else(|| Error::Config(format!("anchor-tau {} not in the grid", cfg.anchor_tau)))?;
    if let Some(s) = &inputs.sectors {
        let ct = sector_cluster_crosstab(&anchor.partition, s, &net.index)?;
        out.csv("crosstab.csv", |buf| ct.write_csv(buf))?;
        let presence = clusters_per_sector(&sw, s, &net.index)?;
        out.csv("sector_clusters.csv", |buf| presence.write_csv(buf))?;
    }
    if let Some(e) = &inputs.employment {
        let year = cfg.t0.or_else(|| net.years.iter().copied().max());
        match year.filter(|&y| e.has_year(y)) {
            Some(year) => {
                let tr = trajectory(&sw, e, year, cfg.anchor_tau, &net.index)?;
                out.csv("trajectories.csv", |buf| {
                    let rows = tr.iter().flat_map(|t| {
                        t.taus.iter().zip(&t.mean_size).map(move |(tau, m)| {
                            vec![t.anchor_cluster.to_string(), tau.to_string(), m.to_string()]
                        })
                    });
                    csv_rows(buf, &["anchor_cluster", "tau", "mean_cluster_employment"], rows)
                })?;
            }
            None => warnings.push("no employment for the trajectory year; trajectories skipped".into()),
        }
    }
    finish(CommandKind::Detect, cfg, out, inputs.digests, warnings)
}

#[derive(Serialize)]
struct GammaReport<'a> {
    gamma: f64,
    edges: usize,
    argmax_delta_r2: Vec<(String, Option<u32>)>,
    scan: &'a crate::growth::ScanResult,
}

#[derive(Serialize)]
struct ScanReport<'a> {
    gammas: Vec<f64>,
    grid: Vec<u32>,
    runs: usize,
    seed: u64,
    t0: i32,
    t1: i32,
    subset: Subset,
    se: SeType,
    scale: RegressorScale,
    references: Vec<u32>,
    results: Vec<GammaReport<'a>>,
}

fn argmax_by_reference(g: &GammaScan) -> Vec<(String, Option<u32>)> {
    let mut refs: Vec<String> = g.fixed_obs.iter().map(|d| d.reference.clone()).collect();
    refs.dedup();
    refs.into_iter()
        .map(|r| {
            let rows: Vec<_> = g.fixed_obs.iter().filter(|d| d.reference == r).cloned().collect();
            let a = argmax_delta(&rows);
            (r, a)
        })
        .collect()
}

fn gamma_dir(g: f64) -> String {
    format!("gamma_{g}/")
}

fn write_scans(out: &mut Outputs, net_index: &crate::ingest::IndustryIndex, scans: &[GammaScan], settings: &ScanSettings) -> Result<()> {
    for g in scans {
        let dir = gamma_dir(g.gamma);
        out.csv(&format!("{dir}partitions.csv"), |buf| g.sweep.write_partitions_csv(net_index, buf))?;
        out.csv(&format!("{dir}summary.csv"), |buf| g.sweep.write_summary_csv(buf))?;
        out.csv(&format!("{dir}scan.csv"), |buf| g.scan.write_csv(buf))?;
        out.csv(&format!("{dir}delta_r2.csv"), |buf| write_delta_csv(&g.fixed_obs, buf))?;
        out.csv(&format!("{dir}pairwise_delta_r2.csv"), |buf| g.pairwise.write_csv(buf))?;
        out.csv(&format!("{dir}ce_vs_re.csv"), |buf| write_ce_re_csv(&g.vs_re, buf))?;
    }
    out.csv("gamma_sensitivity.csv", |buf| {
        let rows = scans.iter().flat_map(|g| {
            argmax_by_reference(g).into_iter().map(move |(r, a)| {
                vec![
                    g.gamma.to_string(),
                    g.edges.to_string(),
                    r,
                    a.map_or_else(|| "NaN".to_string(), |t| t.to_string()),
                ]
            })
        });
        csv_rows(buf, &["gamma", "edges", "tau_ref", "argmax_tau"], rows)
    })?;
    let report = ScanReport {
        gammas: scans.iter().map(|g| g.gamma).collect(),
        grid: settings.grid.clone(),
        runs: settings.runs,
        seed: settings.seed,
        t0: settings.t0,
        t1: settings.t1,
        subset: settings.subset,
        se: settings.options.se,
        scale: settings.options.scale,
        references: settings.references.clone(),
        results: scans
            .iter()
            .map(|g| GammaReport {
                gamma: g.gamma,
                edges: g.edges,
                argmax_delta_r2: argmax_by_reference(g),
                scan: &g.scan,
            })
            .collect(),
    };
    out.json("report.json", &report)
}

fn settings(cfg: &RunConfig, t0: i32, t1: i32) -> ScanSettings {
    ScanSettings {
        grid: cfg.grid(),
        runs: cfg.runs,
        seed: cfg.seed,
        t0,
        t1,
        subset: cfg.subset,
        options: FitOptions {
            scale: cfg.scale,
            se: cfg.se,
        },
        references: cfg.reference_list(),
    }
}

/// `scan`: per-γ sweep and growth regressions with ΔR² tables.
pub fn cmd_scan(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate(CommandKind::Scan)?;
    let (t0, t1) = (cfg.t0.expect("validated"), cfg.t1.expect("validated"));
    let inputs = load_inputs(cfg, true, true)?;
    let t = inputs.transitions.as_ref().expect("loaded");
    check_out_of_sample(&network_years(cfg, t)?, t0, t1, cfg.allow_overlap)?;
    let e = inputs.employment.as_ref().expect("loaded");
    for y in [t0, t1] {
        if !e.has_year(y) {
            return Err(Error::Config(format!("employment table has no year {y}")));
        }
    }
    let rel = relatedness(cfg, &inputs)?;
    let st = settings(cfg, t0, t1);
    let scans = gamma_sensitivity(&rel, &cfg.gamma_list(), e, inputs.sectors.as_ref(), &st)?;
    let mut out = Outputs::new(&cfg.out)?;
    write_scans(&mut out, &rel.index, &scans, &st)?;
    finish(CommandKind::Scan, cfg, out, inputs.digests, Vec::new())
}

/// `synth`: generate a planted hierarchy into `data/`, run the scan on it
/// and score recovery against the ground truth.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate(CommandKind::Synth)?;
    let sc = SynthConfig {
        seed: cfg.seed,
        isolated: cfg.isolated,
        ..cfg.preset.config()
    };
    let h = generate(&sc)?;
    let mut out = Outputs::new(&cfg.out)?;
    out.csv("data/transitions.csv", |buf| h.transitions.write_csv(buf))?;
    out.csv("data/employment.csv", |buf| h.employment.write_csv(buf))?;
    out.csv("data/sectors.csv", |buf| h.sectors.write_csv(buf))?;
    out.write("data/ground_truth.json", h.ground_truth_json()?.as_bytes())?;

    let rc = RelatednessConfig {
        marginals: cfg.marginals,
        ..RelatednessConfig::default()
    };
    let rel = relatedness_from_tables(
        &h.transitions,
        Some(&h.employment),
        Some(&h.sectors),
        &sc.network_years(),
        &rc,
    )?;
    let st = settings(cfg, sc.t0(), sc.t1());
    let scans = gamma_sensitivity(&rel, &cfg.gamma_list(), &h.employment, Some(&h.sectors), &st)?;
    write_scans(&mut out, &rel.index, &scans, &st)?;
    let mut warnings = Vec::new();
    for g in &scans {
        let report = evaluate_recovery(&h, &g.sweep, &g.fixed_obs)?;
        warnings.extend(report.flags.iter().map(|f| format!("gamma {}: {f}", g.gamma)));
        out.json(&format!("{}recovery.json", gamma_dir(g.gamma)), &report)?;
    }
    finish(CommandKind::Synth, cfg, out, Vec::new(), warnings)
}

pub fn execute(cmd: CommandKind, cfg: &RunConfig) -> Result<Manifest> {
    match cmd {
        CommandKind::Build => cmd_build(cfg),
        CommandKind::Diagnose => cmd_diagnose(cfg),
        CommandKind::Detect => cmd_detect(cfg),
        CommandKind::Scan => cmd_scan(cfg),
        CommandKind::Synth => cmd_synth(cfg),
    }
}

fn is_flag(key: &str) -> bool {
    key == "allow-overlap"
}

/// The clap command tree.
pub fn command() -> Command {
    let mut root = Command::new(env!("CARGO_PKG_NAME"))
        .version(env!("CARGO_PKG_VERSION"))
        .about("Skill-relatedness labour networks, multi-scale clusters and labour-pooling scans")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for cmd in [
        CommandKind::Build,
        CommandKind::Diagnose,
        CommandKind::Detect,
        CommandKind::Scan,
        CommandKind::Synth,
    ] {
        let mut sub = Command::new(cmd.name())
            .about(cmd.about())
            .arg(Arg::new("config").long("config").value_name("FILE").help("key = value option file; flags override it"))
            .arg(Arg::new("out").long("out").short('o').value_name("DIR").help("Output directory [default: out]"))
            .arg(Arg::new("seed").long("seed").value_name("N").help("Base random seed [default: 0]"));
        for &key in cmd.keys() {
            let arg = Arg::new(key).long(key).help(help_for(key));
            sub = sub.arg(if is_flag(key) {
                arg.action(ArgAction::SetTrue)
            } else {
                arg.value_name("VALUE")
            });
        }
        root = root.subcommand(sub);
    }
    root
}

fn config_from_matches(cmd: CommandKind, m: &ArgMatches) -> Result<RunConfig> {
    let mut pairs = match m.get_one::<String>("config") {
        Some(p) => read_config_file(Path::new(p))?,
        None => Vec::new(),
    };
    let accepted = ["out", "seed"].iter().chain(cmd.keys());
    for &key in accepted {
        if m.value_source(key) != Some(ValueSource::CommandLine) {
            continue;
        }
        let value = if is_flag(key) {
            m.get_flag(key).to_string()
        } else {
            m.get_one::<String>(key).cloned().unwrap_or_default()
        };
        pairs.push((key.to_string(), value));
    }
    RunConfig::from_pairs(pairs)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let Some((name, sub)) = matches.subcommand() else {
        return 2;
    };
    let cmd = CommandKind::from_name(name).expect("registered subcommand");
    let result = config_from_matches(cmd, sub).and_then(|cfg| execute(cmd, &cfg));
    match result {
        Ok(manifest) => {
            for w in &manifest.warnings {
                log::warn!("{w}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}
