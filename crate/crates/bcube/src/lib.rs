//! Byzantine broadcast on sparse peer-to-peer overlays, tolerating adversarial
//! stake fractions beyond one half, plus the blockchain built on top of it.
//!
//! The crate has three layers:
//!
//! * [`crypto`] and [`protocol`] implement the OverlayBB broadcast instance:
//!   an object is erasure-free split into `s` Merkle-committed fragments and
//!   relayed through a round-synchronous overlay. Committee members attach
//!   weighted aggregate signatures to the Merkle root and to the last
//!   fragment; acceptance thresholds grow linearly with the round number so
//!   a root that is "promising" early stays promising everywhere.
//! * [`sim`] and [`chain`] run deterministic simulations: a single broadcast
//!   invocation against a catalog of adversary strategies, or a full BCube
//!   chain with pipelined invocations, committee rotation by random beacon,
//!   and proof-of-work beacon refresh.
//! * [`analysis`] evaluates the closed-form guarantees: chain safety
//!   probability, the per-round send bound, throughput-to-bandwidth ratios,
//!   per-node crypto budgets, and the same ratios for the classical broadcast
//!   protocols used as baselines.
//!
//! Everything is deterministic given the seeds in the experiment config;
//! node steps within a round are data-parallel and run on rayon when the
//! `parallel` feature (default on) is enabled.

pub mod analysis;
pub mod chain;
pub mod config;
pub mod crypto;
pub mod metrics;
pub mod protocol;
pub mod sim;

use serde::{Deserialize, Serialize};

/// Identity of an overlay node. Ids are dense: `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}
