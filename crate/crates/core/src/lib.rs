//! Message-passing networks for learning graph algorithms.
//!
//! The crate bundles weighted graph types and generators, exact classical
//! oracles (Bellman-Ford, Dijkstra, Kruskal, truncated PageRank, knapsack),
//! Weisfeiler-Leman refinement, a small reverse-mode autodiff engine, MPNN
//! architectures with min/max/mean/sum aggregation, a training loop and
//! diagnostics for the Bellman-Ford parameterization.

pub mod analysis;
pub mod autodiff;
pub mod checks;
pub mod config;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod graph;
pub mod io;
pub mod mpnn;
pub mod oracles;
pub mod training;
pub mod wl;

pub use error::{Error, Result};
pub use graph::{disjoint_union, Adjacency, BfInstance, Edge, WeightedGraph, DEFAULT_BETA};
