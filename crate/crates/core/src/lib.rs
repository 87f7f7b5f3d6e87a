//! Wireless multi-commodity flow workbench.
//!
//! The crate covers the whole loop: instance generation ([`netgen`]), the
//! protocol interference model ([`interference`]), a dense revised simplex
//! ([`lpsolve`]) driving a column-generation teacher ([`colgen`]), a small
//! reverse-mode autodiff engine ([`autodiff`]), the topology-aware link
//! scorer ([`talf`]), the pruning pipeline ([`pipeline`]) and the experiment
//! harness ([`harness`]).

pub mod autodiff;
pub mod bitset;

pub mod colgen;
pub mod harness;
pub mod interference;
pub mod lpsolve;
pub mod netgen;
pub mod par;
pub mod pipeline;
pub mod real;
pub mod rng;
pub mod talf;


pub use interference::{build_conflict_graph, ConflictGraph, TransmissionPattern};
pub use netgen::{Demand, DirectedLink, Family, GeneratorConfig, NetworkInstance, Point2D};
pub use par::ExecMode;
pub use colgen::{run_colgen, ColgenOptions, FlowSolution};
