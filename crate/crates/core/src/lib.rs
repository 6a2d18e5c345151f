//! # skillbasin
//!
//! Industry "skill basins" from labour-flow data.
//!
//! The crate turns yearly inter-industry worker transition counts into a
//! skill-relatedness network, finds industry clusters at every scale with
//! the discrete-time Markov stability functional, and scans cluster-level
//! labour pools against employment growth to locate the scale at which
//! labour pooling operates.
//!
//! The pipeline, stage by stage:
//!
//! | stage | module |
//! |-------|--------|
//! | CSV tables → yearly flow tensor | [`ingest`] |
//! | flows → relatedness → thresholded network | [`relatedness`] |
//! | degrees, random-walk operators, null model, assortativity | [`graph`] |
//! | stability, Louvain search, variation of information, sweeps | [`stability`] |
//! | dendrogram, cluster employment trajectories, crosstabs | [`multiscale`] |
//! | growth, related/cluster employment, OLS, ΔR² scans | [`growth`] |
//! | planted-hierarchy generator and recovery checks | [`synth`] |
//! | subcommands with run manifests | [`cli`] |
//!
//! Runnable walkthroughs of each capability live in the crate's
//! `examples/` directory:
//!
//! ```bash
//! cargo run --release --example build_network
//! cargo run --release --example multiscale_detection
//! cargo run --release --example labour_pooling_scan
//! ```

pub mod cli;
pub mod error;
pub mod graph;
pub mod growth;
pub mod ingest;
pub mod multiscale;
pub mod relatedness;
pub mod stability;
pub mod synth;

mod util;

pub use error::{Error, Result};
pub use graph::{WalkOperators, WeightedGraph};
pub use ingest::{EmploymentTable, FlowTensor, IndustryIndex, SectorMap, TransitionTable};
pub use relatedness::{LabourNetwork, RelatednessConfig, RelatednessMatrix};
pub use stability::{Partition, ScaleSweep, StabilityResult};
