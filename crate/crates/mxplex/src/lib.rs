//! Community detection in multiplex networks.
//!
//! A multiplex network observes the same `n` nodes through `L` different
//! layers (one adjacency matrix per interaction mode). This crate detects
//! community structure that is *shared* across two or more layers separately
//! from structure that is *private* to a single layer, by fitting each layer
//! as a sum of two symmetric tri-factorizations:
//!
//! ```text
//!     A_l ≈ H S_l Hᵀ + H_l G_l H_lᵀ
//! ```
//!
//! where `H` (common membership) is shared by all layers and `H_l`, `S_l`,
//! `G_l` are layer-specific. All factors are nonnegative and fitted with
//! multiplicative updates under a least-squares objective.
//!
//! The crate also provides:
//!
//! - model-order estimation (how many communities per layer, how many of
//!   them are common) from a null-calibrated spectral gap plus agglomerative
//!   clustering of per-layer embeddings ([`model_order`]),
//! - a seeded planted-partition benchmark generator with controllable
//!   mixing and inter-layer dependency ([`benchgen`]),
//! - partition quality metrics: normalized mutual information and
//!   modularity density ([`metrics`]),
//! - a small dense linear-algebra kernel with a symmetric eigensolver and
//!   reproducible random streams ([`numerics`]).
//!
//! Everything is deterministic given a master seed; restart parallelism
//! never changes results.

pub mod assign;
pub mod benchgen;
pub mod cli;
pub mod factorize;
pub mod metrics;
pub mod model_order;
pub mod multiplex;
pub mod numerics;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
