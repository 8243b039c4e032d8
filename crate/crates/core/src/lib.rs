//! Offline k-server and k-sequence partitioning solved as minimum-cost partial
//! bipartite matching on the entry/exit gate graph.
//!
//! Two exact solvers share one primal-dual state model:
//! [`nk`] (reverse Hungarian, O(nk) searches) and [`subquadratic`]
//! (hierarchical partitioning with boundary-matched entry gates).
//! [`oracle`] holds the brute-force and explicit-Hungarian ground truths.

pub mod batch;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod hierarchy;
pub mod matching_state;
pub mod nk;
pub mod oracle;
pub mod reduction;
pub mod search;
pub mod subquadratic;
pub mod weight;

pub use error::{Error, Result};
pub use geometry::{CostModel, Instance, KspInstance, KspiInstance, MatchingInstance, Point};
pub use reduction::{GateGraph, Matching, Partitioning};
pub use weight::Weight;
