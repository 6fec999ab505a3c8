//! Zeroth-order topology of neural-network layers.
//!
//! A layer with `m` inputs and `n` outputs is a complete bipartite graph whose
//! edges carry the normalized weight magnitudes `|w| / max|w|`. Sweeping a
//! threshold from 1 down to 0 (a super-level filtration) merges the `m + n`
//! singleton components one edge at a time; the edges that merge components are
//! exactly a maximum spanning forest, and each merge at weight `w'` contributes
//! the point `(1, w')` to the zeroth persistence diagram.
//!
//! On top of that the crate provides:
//!
//! * [`persistence`]: neural persistence (the p-norm of a diagram), its
//!   normalized form and the network total.
//! * [`compression`]: the topologically critical compression ratio
//!   `|W| / |MST|` for dense, recurrent and convolutional layers.
//! * [`overlap`]: lower bounds on the expected overlap between the spanning
//!   tree and the top-`alpha` weights, random-overlap probabilities and a
//!   seeded Monte Carlo estimator.
//! * [`pruning`]: magnitude and topology-preserving (T-IMP) masks, IMP
//!   schedules and the iterative prune/retrain loop.
//! * [`trainer`]: a small dense network with SGD and mask support.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod compression;
mod error;
pub mod graph;
pub mod overlap;
pub mod persistence;
pub mod pruning;
pub mod trainer;
mod weights;

pub use error::{Error, Result};
pub use weights::LayerWeights;
