//! The BCube chain: slots, blocks, committee rotation, and the proof-of-work
//! random beacon.
//!
//! Every `slot_period` rounds a new broadcast invocation starts; `gamma =
//! ceil((2dm+s) / slot_period)` of them overlap at any time. The committee of
//! slot `k` is drawn by hashing `k` with the beacon of `k`'s epoch, so
//! committees are unpredictable until the previous epoch finishes. During
//! each epoch the nodes refresh the beacon: the nonces of the epoch's first
//! `tau` confirmed blocks form a fresh PoW challenge, miners solve it inside
//! a bounded window, the first solution each node sees is flooded, the
//! broadcasters of the epoch's last `tau` in-epoch slots embed their copy
//! into their blocks, and the first non-null embedded solution is folded with
//! the challenge into the next beacon. If no slot carries a solution the
//! previous beacon is reused.

mod pow;
mod run;
mod schedule;

pub use pow::{adversary_mean, simulate_pow, PowEvent};
pub use run::{run_chain, ChainConfig, ChainReport, EpochReport, SlotReport};
pub use schedule::EpochSchedule;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash_committee_seed, BitChunk, Digest};
use crate::protocol::Committee;
use crate::sim::SimError;
use crate::NodeId;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("schedule infeasible: {0}")]
    Schedule(String),
    #[error("challenge slots are not all confirmed yet")]
    NotReady,
    #[error("object size {0} is below the {BLOCK_HEADER_BITS}-bit block header")]
    ObjectTooSmall(u64),
    #[error("adversary mining power multiplier {0} exceeds the supported 100")]
    MultiplierTooLarge(f64),
    #[error("coin distribution is empty")]
    NoCoins,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Who owns each stake coin. Coin ids are dense `0..len`; committee draws
/// pick coin ids uniformly, so a node's selection probability is its share
/// of coins. The snapshot is fixed for a whole run (transfers are out of
/// scope), which keeps the malicious-coin fraction equal to the malicious
/// node fraction under [`CoinDistribution::uniform`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinDistribution {
    owners: Vec<NodeId>,
}

impl CoinDistribution {
    /// One coin per node.
    pub fn uniform(n: u32) -> Self {
        CoinDistribution { owners: (0..n).map(NodeId).collect() }
    }

    pub fn new(owners: Vec<NodeId>) -> Result<Self, ChainError> {
        if owners.is_empty() {
            return Err(ChainError::NoCoins);
        }
        Ok(CoinDistribution { owners })
    }

    pub fn coins(&self) -> u32 {
        self.owners.len() as u32
    }

    pub fn owner(&self, coin: u32) -> NodeId {
        self.owners[coin as usize]
    }
}

/// A slot's committee together with the raw coin draws that produced it.
/// The first draw's owner is the slot broadcaster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitteeSpec {
    pub slot: u64,
    pub coins: Vec<u32>,
    pub committee: Committee,
}

/// Draws the `m`-coin committee of `slot` from the epoch `beacon`. Pure:
/// the draw stream is seeded by `H(slot, beacon)` alone, so every node that
/// agrees on the beacon derives the same committee.
pub fn select_committee(
    beacon: &Digest,
    slot: u64,
    dist: &CoinDistribution,
    m: u32,
) -> CommitteeSpec {
    assert!(m > 0, "committee size must be positive");
    let mut rng = ChaCha12Rng::from_seed(*hash_committee_seed(slot, beacon).as_bytes());
    let coins: Vec<u32> = (0..m).map(|_| rng.random_range(0..dist.coins())).collect();
    let draws: Vec<NodeId> = coins.iter().map(|&c| dist.owner(c)).collect();
    CommitteeSpec { slot, coins, committee: Committee::from_draws(&draws) }
}

/// Bits of the fixed block header: slot id, nonce, candidate flag + value.
pub const BLOCK_HEADER_BITS: u64 = 64 + BLOCK_NONCE_BITS + 8 + 256;
/// Bits of the per-block nonce that feeds the PoW challenge. Distinct from
/// the broadcast-level nonce fragment, which never leaves the transport.
pub const BLOCK_NONCE_BITS: u64 = 256;

/// Decoded view of a broadcast object. Any bit string of object length
/// decodes to *some* block (byzantine broadcasters can send arbitrary bits),
/// so decoding is total: a candidate flag other than 1 reads as "no
/// candidate" and junk candidates are later rejected by solution validation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Block {
    pub slot: u64,
    pub nonce: [u8; 32],
    pub candidate: Option<Digest>,
}

/// Lays a block out as a broadcast object: header fields followed by
/// `object_bits - BLOCK_HEADER_BITS` payload bits drawn from `payload`.
pub fn encode_block(
    block: &Block,
    object_bits: u64,
    payload: &mut impl Rng,
) -> Result<BitChunk, ChainError> {
    if object_bits < BLOCK_HEADER_BITS {
        return Err(ChainError::ObjectTooSmall(object_bits));
    }
    let slot = BitChunk::of_u64(block.slot, 64);
    let nonce = BitChunk::from_bits(block.nonce.to_vec(), BLOCK_NONCE_BITS);
    let flag = BitChunk::of_u64(u64::from(block.candidate.is_some()), 8);
    let cand = BitChunk::from_bits(
        block.candidate.map_or([0u8; 32], |d| *d.as_bytes()).to_vec(),
        256,
    );
    let body_bits = object_bits - BLOCK_HEADER_BITS;
    let mut body = vec![0u8; body_bits.div_ceil(8) as usize];
    payload.fill_bytes(&mut body);
    let body = BitChunk::from_bits(body, body_bits);
    Ok(BitChunk::concat(&[&slot, &nonce, &flag, &cand, &body]))
}

pub fn decode_block(object: &BitChunk) -> Result<Block, ChainError> {
    if object.bits() < BLOCK_HEADER_BITS {
        return Err(ChainError::ObjectTooSmall(object.bits()));
    }
    let slot = object.read_u64(0, 64);
    let mut nonce = [0u8; 32];
    nonce.copy_from_slice(object.slice(64, BLOCK_NONCE_BITS).as_bytes());
    let flag = object.read_u64(64 + BLOCK_NONCE_BITS, 8);
    let candidate = (flag == 1).then(|| {
        let mut c = [0u8; 32];
        c.copy_from_slice(object.slice(64 + BLOCK_NONCE_BITS + 8, 256).as_bytes());
        Digest(c)
    });
    Ok(Block { slot, nonce, candidate })
}

/// One slot of a node's chain. `Bot` is a confirmed empty slot (the
/// invocation finished without agreement on an object); it still occupies
/// the slot and feeds a canonical marker into challenges built over it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum SlotEntry {
    Pending,
    Bot,
    Confirmed { object_hash: Digest, bits: u64, block: Block },
}

impl SlotEntry {
    pub fn is_resolved(&self) -> bool {
        !matches!(self, SlotEntry::Pending)
    }
}

/// Concatenates the nonces of epoch `epoch`'s first `tau` slots, in slot
/// order, from this node's own chain. Presence bytes keep a real all-zero
/// nonce distinct from the empty-slot marker, and ordering matters: the
/// challenge is a plain concatenation, not a commutative fold.
pub fn assemble_challenge(
    chain: &[SlotEntry],
    epoch: u32,
    tau: u32,
    rho: u32,
) -> Result<Vec<u8>, ChainError> {
    let first = (epoch as u64 - 1) * rho as u64 + 1;
    let mut out = Vec::with_capacity(tau as usize * 33);
    for slot in first..first + tau as u64 {
        match chain.get(slot as usize - 1) {
            None | Some(SlotEntry::Pending) => return Err(ChainError::NotReady),
            Some(SlotEntry::Bot) => {
                out.push(0u8);
                out.extend_from_slice(&[0u8; 32]);
            }
            Some(SlotEntry::Confirmed { block, .. }) => {
                out.push(1u8);
                out.extend_from_slice(&block.nonce);
            }
        }
    }
    Ok(out)
}

/// Scans the candidate-holding slots in order and returns the first embedded
/// candidate that is a verified solution of this epoch. `valid` stands in
/// for PoW verification: junk bits a byzantine broadcaster planted in the
/// candidate field are not in the set and fall through.
pub fn pick_candidate(
    chain: &[SlotEntry],
    candidate_slots: std::ops::RangeInclusive<u64>,
    valid: &std::collections::BTreeSet<Digest>,
) -> Option<Digest> {
    for slot in candidate_slots {
        if let Some(SlotEntry::Confirmed { block, .. }) = chain.get(slot as usize - 1) {
            if let Some(c) = block.candidate {
                if valid.contains(&c) {
                    return Some(c);
                }
            }
        }
    }
    None
}
