use super::{sha256_parts, tag, BitChunk, CryptoError, Digest};
use serde::{Deserialize, Serialize};

/// Inclusion proof for leaf `index` (1-based). Sibling digests run from the
/// leaf level upward; the left/right sides are implied by the bits of
/// `index - 1`, so the index and the path directions share the same
/// `ceil(log2 s)` bits on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub index: u32,
    pub siblings: Vec<Digest>,
}

impl MerkleProof {
    pub fn depth(&self) -> u32 {
        self.siblings.len() as u32
    }
}

/// Commitment over `count` payload leaves, padded with empty leaves to the
/// next power of two so every proof has exactly `ceil(log2 count)` siblings.
#[derive(Debug, Clone)]
pub struct MerkleTree {
    count: u32,
    /// levels[0] = padded leaf digests, last level = [root]
    levels: Vec<Vec<Digest>>,
}

pub(crate) fn leaf_digest(index: u32, payload: &BitChunk) -> Digest {
    sha256_parts(&[
        &[tag::LEAF],
        &index.to_be_bytes(),
        &payload.bits().to_be_bytes(),
        payload.as_bytes(),
    ])
}

fn interior_digest(left: &Digest, right: &Digest) -> Digest {
    sha256_parts(&[&[tag::INTERIOR], left.as_bytes(), right.as_bytes()])
}

pub fn ceil_log2(n: u32) -> u32 {
    debug_assert!(n >= 1);
    32 - (n - 1).leading_zeros()
}

/// Builds the commitment over the payloads in index order (leaf 1 first).
pub fn build_merkle(payloads: &[BitChunk]) -> Result<MerkleTree, CryptoError> {
    let count = payloads.len() as u32;
    if count < 2 {
        return Err(CryptoError::TooFewFragments(count));
    }
    let width = 1usize << ceil_log2(count);
    let mut level: Vec<Digest> = (0..width)
        .map(|i| {
            let idx = i as u32 + 1;
            match payloads.get(i) {
                Some(p) => leaf_digest(idx, p),
                None => leaf_digest(idx, &BitChunk::empty()),
            }
        })
        .collect();
    let mut levels = vec![level.clone()];
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| interior_digest(&pair[0], &pair[1]))
            .collect();
        levels.push(level.clone());
    }
    Ok(MerkleTree { count, levels })
}

impl MerkleTree {
    pub fn root(&self) -> Digest {
        self.levels.last().unwrap()[0]
    }

    pub fn depth(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    /// Proof for the 1-based leaf `index`.
    pub fn prove(&self, index: u32) -> Result<MerkleProof, CryptoError> {
        if index == 0 || index > self.count {
            return Err(CryptoError::LeafIndexOutOfRange { index, count: self.count });
        }
        let mut pos = (index - 1) as usize;
        let mut siblings = Vec::with_capacity(self.depth() as usize);
        for level in &self.levels[..self.levels.len() - 1] {
            siblings.push(level[pos ^ 1]);
            pos >>= 1;
        }
        Ok(MerkleProof { index, siblings })
    }
}

/// Recomputes the root from `(index, payload, proof)` and compares. Returns
/// false on any mismatch, including an index outside `1..=count_hint` when a
/// hint is known to the caller (the caller checks sizes; this checks binding).
pub fn verify_proof(payload: &BitChunk, proof: &MerkleProof, root: &Digest) -> bool {
    if proof.index == 0 {
        return false;
    }
    let mut acc = leaf_digest(proof.index, payload);
    let mut pos = (proof.index - 1) as usize;
    if pos >> proof.siblings.len() != 0 {
        return false; // index does not fit in the tree the proof describes
    }
    for sib in &proof.siblings {
        acc = if pos & 1 == 0 {
            interior_digest(&acc, sib)
        } else {
            interior_digest(sib, &acc)
        };
        pos >>= 1;
    }
    acc == *root
}
