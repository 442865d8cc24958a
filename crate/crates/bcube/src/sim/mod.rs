//! Deterministic round-lockstep overlay simulator.
//!
//! A run wires three things together: a [`Topology`] (who talks to whom,
//! who is honest, which link directions are down), one honest
//! `BroadcastInstance` per honest node, and a single [`AdversaryBrain`]
//! playing every malicious node at once. Rounds advance behind a barrier:
//! messages enqueued in round `t` are readable at the start of round
//! `t + 1`, bad link directions deliver nothing, and within a round the
//! honest node steps are independent (and run in parallel when the
//! `parallel` feature is active).
//!
//! Honest nodes carry no randomness at all; every random choice in a run
//! (overlay wiring, coin draws, object bits, adversary behavior, link
//! statuses) comes from streams derived from the experiment seed, so equal
//! seeds give byte-identical traces in either execution mode.

mod adversary;
mod runner;
mod topology;

pub use adversary::{
    adversary_catalog, make_strategy, AdversaryBrain, AdversaryCtx, Forge, Inboxes, Outboxes,
};
pub use runner::{
    committee_has_honest, draw_committee, run_experiment, run_invocation, ExecMode, Experiment,
    InvocationReport, InvocationSetup, TraceRecord,
};
pub(crate) use runner::EngineCore;
pub use topology::{build_topology, build_topology_with, BadEdgeMode, Topology, TopologyError};

use crate::crypto::BitChunk;
use crate::protocol::Params;
use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Crypto(#[from] crate::crypto::CryptoError),
    #[error("unknown adversary strategy `{0}`")]
    UnknownStrategy(String),
    #[error("invalid run setup: {0}")]
    Setup(String),
    #[error("protocol violation at node {node}: {source}")]
    Violation {
        node: crate::NodeId,
        source: crate::protocol::Violation,
    },
}

/// Uniformly random object of the instance's configured length.
pub fn mint_object(params: &Params, rng: &mut impl RngCore) -> BitChunk {
    let mut bytes = vec![0u8; (params.object_bits as usize).div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    BitChunk::from_bits(bytes, params.object_bits)
}
