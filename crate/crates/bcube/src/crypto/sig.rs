use super::Digest;
use crate::NodeId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Weighted multi-signature on one item (a Merkle root or a last-fragment
/// leaf). `signers` maps a node to the number of committee coins it holds;
/// the signature's weight is the sum. With the coin draw public, the signer
/// set is representable as an `m`-bit vector (one bit per drawn coin), which
/// is what the byte accounting charges for it.
///
/// Signatures are simulated: the scheme seam is [`AggregateSignature::verify`],
/// and validity is decided by construction rather than by algebra. Honest
/// code only ever extends signatures it received or produced ([`add_my_sig`]),
/// which a real aggregate scheme can do; the adversary gets the same powers
/// plus [`AggregateSignature::forged`], whose output fails verification the
/// way an invalid signature would. Swapping in a real scheme means replacing
/// this type's internals and `verify`.
///
/// Two signatures on the same item are never merged by honest nodes; pools
/// keep them side by side and [`sigma_select`] picks one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AggregateSignature {
    item: Digest,
    signers: BTreeMap<NodeId, u32>,
    forged: bool,
}

impl AggregateSignature {
    pub fn empty(item: Digest) -> Self {
        AggregateSignature { item, signers: BTreeMap::new(), forged: false }
    }

    /// Assembles a signature from parts the caller can legitimately produce.
    /// Simulation-internal: strategies must only pass signer sets they could
    /// assemble from observed signatures plus nodes they control.
    pub fn assemble<I: IntoIterator<Item = (NodeId, u32)>>(item: Digest, signers: I) -> Self {
        AggregateSignature { item, signers: signers.into_iter().collect(), forged: false }
    }

    /// A signature that claims signers the adversary does not control. It
    /// carries the claimed weight for selection purposes but fails
    /// verification, exactly like a corrupted signature under a real scheme.
    pub fn forged<I: IntoIterator<Item = (NodeId, u32)>>(item: Digest, claimed: I) -> Self {
        AggregateSignature { item, signers: claimed.into_iter().collect(), forged: true }
    }

    pub fn item(&self) -> Digest {
        self.item
    }

    pub fn weight(&self) -> u64 {
        self.signers.values().map(|w| *w as u64).sum()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.signers.contains_key(&node)
    }

    pub fn signers(&self) -> impl Iterator<Item = (NodeId, u32)> + '_ {
        self.signers.iter().map(|(n, w)| (*n, *w))
    }

    pub fn is_empty(&self) -> bool {
        self.signers.is_empty()
    }

    /// Scheme verification, simulated. A signature passes iff it was built
    /// through the legitimate constructors and every signer's weight matches
    /// the public coin draw in `committee`.
    pub fn verify(&self, committee: &BTreeMap<NodeId, u32>) -> bool {
        !self.forged
            && self
                .signers
                .iter()
                .all(|(n, w)| committee.get(n) == Some(w))
    }

    /// Selection key: heavier first, then the lexicographically smallest
    /// signer vector. `BTreeMap` ordering gives a canonical encoding of the
    /// signer set, so the pick is independent of arrival order.
    pub(crate) fn rank_key(&self) -> (std::cmp::Reverse<u64>, &BTreeMap<NodeId, u32>) {
        (std::cmp::Reverse(self.weight()), &self.signers)
    }
}

/// Adds `node` with `weight` to a copy of `sig`. Idempotent: re-signing an
/// item the node already signed returns the signature unchanged.
pub fn add_my_sig(sig: &AggregateSignature, node: NodeId, weight: u32) -> AggregateSignature {
    if sig.contains(node) {
        return sig.clone();
    }
    let mut out = sig.clone();
    out.signers.insert(node, weight);
    out
}

/// Picks the signature a node treats as "the" aggregate signature for an
/// item: maximum weight, ties broken toward the smaller signer vector.
/// Returns `None` for an empty pool (a missing signature has weight zero).
pub fn sigma_select<'a, I>(pool: I) -> Option<&'a AggregateSignature>
where
    I: IntoIterator<Item = &'a AggregateSignature>,
{
    pool.into_iter().min_by(|a, b| a.rank_key().cmp(&b.rank_key()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item() -> Digest {
        Digest([9; 32])
    }

    #[test]
    fn broadcaster_coin_weight_counts() {
        // a node holding two of the drawn coins signs with weight 2
        let sig = add_my_sig(&AggregateSignature::empty(item()), NodeId(3), 2);
        assert_eq!(sig.weight(), 2);
        let committee = BTreeMap::from([(NodeId(3), 2), (NodeId(5), 1)]);
        assert!(sig.verify(&committee));
    }

    #[test]
    fn add_is_idempotent() {
        let once = add_my_sig(&AggregateSignature::empty(item()), NodeId(1), 1);
        let twice = add_my_sig(&once, NodeId(1), 1);
        assert_eq!(once, twice);
        assert_eq!(twice.weight(), 1);
    }

    #[test]
    fn selection_prefers_weight_then_smaller_signer_vector() {
        let heavy = AggregateSignature::assemble(item(), [(NodeId(9), 3)]);
        let light = AggregateSignature::assemble(item(), [(NodeId(1), 1)]);
        assert_eq!(sigma_select([&light, &heavy]), Some(&heavy));

        // equal weight 4, distinct signer sets: {1:3, 7:1} < {2:3, 5:1}
        let a = AggregateSignature::assemble(item(), [(NodeId(1), 3), (NodeId(7), 1)]);
        let b = AggregateSignature::assemble(item(), [(NodeId(2), 3), (NodeId(5), 1)]);
        // the pick must not depend on pool order
        assert_eq!(sigma_select([&a, &b]), Some(&a));
        assert_eq!(sigma_select([&b, &a]), Some(&a));
    }

    #[test]
    fn empty_pool_selects_nothing() {
        assert_eq!(sigma_select::<std::iter::Empty<_>>(std::iter::empty()), None);
    }

    #[test]
    fn forged_signatures_fail_verification() {
        let committee = BTreeMap::from([(NodeId(0), 1), (NodeId(1), 1)]);
        let forged = AggregateSignature::forged(item(), [(NodeId(0), 1)]);
        assert!(!forged.verify(&committee));
        // inflated weight also fails even without the forged marker
        let inflated = AggregateSignature::assemble(item(), [(NodeId(0), 5)]);
        assert!(!inflated.verify(&committee));
        // non-member signer fails
        let stranger = AggregateSignature::assemble(item(), [(NodeId(4), 1)]);
        assert!(!stranger.verify(&committee));
    }
}
