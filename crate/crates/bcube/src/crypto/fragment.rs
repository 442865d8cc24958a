use super::merkle::{build_merkle, leaf_digest, MerkleProof, MerkleTree};
use super::{BitChunk, CryptoError, Digest};
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Leading bits of the nonce fragment that carry the object's exact bit
/// length. The data fragments split the object into `s - 1` equal chunks
/// with the last chunk zero-padded; the receiver needs the true length to
/// strip that padding, and the nonce fragment is the one message with slack
/// for it, so the "nonce" payload is `length || random fill`. The whole
/// nonce payload is committed by its leaf, so the length cannot be altered
/// in flight.
pub const NONCE_LEN_FIELD_BITS: u32 = 64;

/// One of the `s` pieces of a broadcast object: `index` runs 1-based, with
/// index `s` being the nonce fragment. The proof binds `(index, payload)`
/// to the object's Merkle root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub index: u32,
    pub payload: BitChunk,
    pub proof: MerkleProof,
}

impl Fragment {
    /// Digest that aggregate signatures on this fragment bind to.
    pub fn sig_item(&self) -> Digest {
        leaf_digest(self.index, &self.payload)
    }
}

/// Output of [`fragment_object`]: the fragments in index order plus the
/// commitment they all verify against.
#[derive(Debug, Clone)]
pub struct FragmentSet {
    pub root: Digest,
    pub fragments: Vec<Fragment>,
    pub tree: MerkleTree,
}

/// Bits per data fragment for an `l`-bit object split `s` ways.
pub fn data_fragment_bits(object_bits: u64, s: u32) -> u64 {
    object_bits.div_ceil((s - 1) as u64)
}

/// Splits an object into `s - 1` equal data fragments (last zero-padded)
/// plus one nonce fragment, Merkle-commits all `s` payloads, and attaches
/// an inclusion proof to each fragment.
pub fn fragment_object<R: RngCore>(
    object: &BitChunk,
    s: u32,
    nonce_bits: u32,
    rng: &mut R,
) -> Result<FragmentSet, CryptoError> {
    if s < 2 {
        return Err(CryptoError::TooFewFragments(s));
    }
    if object.is_empty() {
        return Err(CryptoError::EmptyObject);
    }
    if nonce_bits < NONCE_LEN_FIELD_BITS + 8 {
        return Err(CryptoError::NonceTooShort(nonce_bits));
    }
    let chunk_bits = data_fragment_bits(object.bits(), s);
    let mut payloads: Vec<BitChunk> = (0..s as u64 - 1)
        .map(|i| object.slice(i * chunk_bits, chunk_bits))
        .collect();

    let mut fill = vec![0u8; ((nonce_bits - NONCE_LEN_FIELD_BITS) as usize).div_ceil(8)];
    rng.fill_bytes(&mut fill);
    let nonce = BitChunk::concat(&[
        &BitChunk::of_u64(object.bits(), NONCE_LEN_FIELD_BITS),
        &BitChunk::from_bits(fill, (nonce_bits - NONCE_LEN_FIELD_BITS) as u64),
    ]);
    payloads.push(nonce);

    let tree = build_merkle(&payloads)?;
    let fragments = payloads
        .into_iter()
        .enumerate()
        .map(|(i, payload)| {
            let index = i as u32 + 1;
            Ok(Fragment { index, payload, proof: tree.prove(index)? })
        })
        .collect::<Result<Vec<_>, CryptoError>>()?;
    Ok(FragmentSet { root: tree.root(), fragments, tree })
}

/// Inverse of [`fragment_object`]: expects all `s` fragments in index order.
/// The declared length from the nonce fragment is clamped to the carried
/// capacity so reconstruction is total and deterministic even for objects a
/// hostile broadcaster assembled by hand; honest fragmentations round-trip
/// exactly.
pub fn reconstruct_object(fragments: &[Fragment], s: u32) -> Result<BitChunk, CryptoError> {
    if s < 2 || fragments.len() != s as usize {
        return Err(CryptoError::BadFragmentSet("wrong fragment count"));
    }
    for (i, f) in fragments.iter().enumerate() {
        if f.index != i as u32 + 1 {
            return Err(CryptoError::BadFragmentSet("fragments not in index order"));
        }
    }
    let nonce = &fragments[s as usize - 1].payload;
    if nonce.bits() < NONCE_LEN_FIELD_BITS as u64 {
        return Err(CryptoError::BadFragmentSet("nonce fragment too short"));
    }
    let chunk_bits = fragments[0].payload.bits();
    if fragments[..s as usize - 1].iter().any(|f| f.payload.bits() != chunk_bits) {
        return Err(CryptoError::BadFragmentSet("data fragments of unequal size"));
    }
    let declared = nonce.read_u64(0, NONCE_LEN_FIELD_BITS);
    let capacity = chunk_bits * (s as u64 - 1);
    let len = declared.min(capacity);
    let data: Vec<&BitChunk> = fragments[..s as usize - 1].iter().map(|f| &f.payload).collect();
    Ok(BitChunk::concat(&data).truncated(len))
}
