//! Decentralized optimization over gossip networks.
//!
//! The problem is `min_x Σ_i f_i(x)` where node `i` of a connected network
//! only knows `f_i` and talks to its neighbours. Lifting to one copy of `x`
//! per node, the consensus constraint becomes `W x = 0` for a gossip matrix
//! `W` (by default the graph Laplacian), and one product with `W` is one
//! communication round.
//!
//! Provided methods:
//!
//! | algorithm | gradients / iteration | rounds / iteration |
//! |-----------|-----------------------|--------------------|
//! | PAPC (baseline) | 1 | 1 |
//! | accelerated PAPC | 1 | 1 |
//! | accelerated PAPC + Chebyshev gossip | 1 | `⌊√χ⌋` |
//! | loopless accelerated method | 1 | 1 |
//!
//! Every gradient computation is counted by the [`oracle::Oracle`] and every
//! round by a [`gossip::CommCounter`], and [`diagnostics`] evaluates the
//! Lyapunov functions that certify the linear rates.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod gossip;
pub mod oracle;
pub mod solver;
pub mod spectral;
pub mod state;
pub mod topology;

pub use error::{Error, Result};
pub use state::StackedState;
