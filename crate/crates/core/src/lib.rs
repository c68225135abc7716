//! Causal ordering and graph estimation for linear non-Gaussian structural
//! equation models, driven by a higher-order moment asymmetry statistic.

pub mod aggregate;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod moments;
pub mod order_search;
pub mod rng;
pub mod sem;
pub mod subsets;

pub use data::Dataset;
pub use error::{Error, Result};
pub use graph::{Dag, Ordering, WeightedDag};
pub use moments::{MomentCache, MomentSource, PopulationMoments, SampleMoments};
pub use sem::{ErrorLaw, PopulationOracle, Sem};
pub use order_search::{estimate_graph, estimate_with_source, EstimateConfig, GraphEstimate, Stat};
