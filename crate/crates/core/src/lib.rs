//! Hierarchical graph pooling with learned global graph content and
//! cross-level attention coarsening.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense matrices and a reverse-mode tape
//! - [`graph`]: graph model, TU-format datasets, random graphs, permutations
//! - [`embed`]: GCN and GAT node/cluster embedding layers
//! - [`coarsen`]: the coarsening module (content matrix, cross-level
//!   attention, cluster formation, Gumbel soft sampling) and baseline poolers
//! - [`heads`]: classifier head, similarity scores and the three task losses
//! - [`model`]: the full alternating embed/coarsen network
//! - [`datagen`]: exact graph edit distance, pair/triplet ground truth and
//!   synthetic datasets
//! - [`train`]: Adam, training loop, evaluation and checkpoints
//! - [`bench`]: timing of the coarsening module

pub mod bench;
pub mod coarsen;
pub mod datagen;
pub mod embed;
pub mod graph;
pub mod heads;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;
