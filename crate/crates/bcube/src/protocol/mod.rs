//! The broadcast instance: round-synchronous state machine one node runs for
//! one object.
//!
//! An instance lives for exactly `2dm + s` rounds (`d` = overlay diameter
//! bound, `m` = committee coins, `s` = fragments). Each round a node ingests
//! neighbor messages, then runs two forwarding passes:
//!
//! * the root pass relays the (at most two) heaviest-signed Merkle roots it
//!   knows and decides root acceptance against a threshold that grows one
//!   unit per round: committee holders accept at `2d * weight >= t`,
//!   everyone else at `2d * weight >= t + d`, so an accepted root always has
//!   enough signature momentum to convince the whole overlay before the
//!   instance ends;
//! * the fragment pass serves the most promising "push" (a root plus the
//!   score its signature had when it was last relayed): data fragments are
//!   re-sent at most once each per root, and only after all of them have
//!   been relayed does the node take up the signed last fragment, whose
//!   acceptance check is back-dated by `s - 1` rounds to compensate for the
//!   relay delay the forerunner rule introduces.
//!
//! Verification is lazy: signatures and Merkle proofs are checked when an
//! item is about to be used or forwarded, a failed check blacklists the
//! sender, and everything that only that sender ever delivered is dropped.
//! Honest nodes therefore never relay unverified garbage, which is what
//! makes receiver-side blacklisting safe.

mod instance;
mod messages;

pub use instance::{BroadcastInstance, InstanceStats, Outcome, Violation};
pub use messages::{FragSend, RoundMessages, TaggedFragment};

use crate::crypto::{ceil_log2, data_fragment_bits};
use crate::NodeId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Static parameters of one broadcast instance. Sizes are in bits; the
/// signature and hash lengths only matter for byte accounting (the simulated
/// scheme does not pad its structures to them).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params {
    /// Diameter bound of the honest subgraph.
    pub d: u32,
    /// Committee coins drawn per instance.
    pub m: u32,
    /// Fragments per object, nonce included.
    pub s: u32,
    /// Object length `l` in bits.
    pub object_bits: u64,
    /// Wire size of a digest.
    pub hash_bits: u32,
    /// Wire size of one aggregate signature, bitmap excluded.
    pub sig_bits: u32,
    /// Payload size of the nonce fragment.
    pub nonce_bits: u32,
}

impl Params {
    pub fn new(d: u32, m: u32, s: u32, object_bits: u64) -> Self {
        Params { d, m, s, object_bits, hash_bits: 256, sig_bits: 768, nonce_bits: 256 }
    }

    /// Rounds an instance runs: `2dm + s`, numbered `0..rounds`.
    pub fn rounds(&self) -> u32 {
        2 * self.d * self.m + self.s
    }

    /// Bits carried by each data fragment.
    pub fn data_bits(&self) -> u64 {
        data_fragment_bits(self.object_bits, self.s)
    }

    /// Sibling count of every inclusion proof.
    pub fn proof_depth(&self) -> u32 {
        ceil_log2(self.s)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.d == 0 || self.m == 0 {
            return Err(ParamError::Zero("d and m must be positive"));
        }
        if self.s < 2 {
            return Err(ParamError::Zero("s must be at least 2"));
        }
        if self.object_bits == 0 {
            return Err(ParamError::Zero("object_bits must be positive"));
        }
        if self.nonce_bits < crate::crypto::NONCE_LEN_FIELD_BITS + 8 {
            return Err(ParamError::NonceTooShort(self.nonce_bits));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("{0}")]
    Zero(&'static str),
    #[error("nonce_bits {0} cannot carry the length field")]
    NonceTooShort(u32),
}

/// Result of the public coin draw for one instance: `m` coins drawn with
/// replacement, the holder of the first coin broadcasts. A node's signing
/// weight is the number of drawn coins it holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    pub broadcaster: NodeId,
    /// member -> coins held among the `m` drawn
    pub weights: BTreeMap<NodeId, u32>,
}

impl Committee {
    pub fn from_draws(draws: &[NodeId]) -> Self {
        assert!(!draws.is_empty(), "committee draw cannot be empty");
        let mut weights = BTreeMap::new();
        for n in draws {
            *weights.entry(*n).or_insert(0) += 1;
        }
        Committee { broadcaster: draws[0], weights }
    }

    pub fn weight_of(&self, node: NodeId) -> Option<u32> {
        self.weights.get(&node).copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.weights.contains_key(&node)
    }

    pub fn total_weight(&self) -> u64 {
        self.weights.values().map(|w| *w as u64).sum()
    }
}
