use super::Params;
use crate::crypto::{AggregateSignature, Digest, Fragment};
use serde::{Deserialize, Serialize};

/// A fragment in flight, tagged with the root it claims to belong to (the
/// proof is only checkable against that root).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedFragment {
    pub root: Digest,
    pub fragment: Fragment,
}

/// What the fragment pass of one round emits, if anything.
#[derive(Debug, Clone)]
pub enum FragSend {
    Data(TaggedFragment),
    Last(TaggedFragment, AggregateSignature),
}

/// Everything one node sends over one link in one round. Honest senders fill
/// at most two `roots` entries and one fragment entry per round; adversaries
/// may stuff arbitrarily many.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundMessages {
    pub roots: Vec<(Digest, AggregateSignature)>,
    pub data_frags: Vec<TaggedFragment>,
    pub last_frags: Vec<(TaggedFragment, AggregateSignature)>,
}

impl RoundMessages {
    pub fn is_empty(&self) -> bool {
        self.roots.is_empty() && self.data_frags.is_empty() && self.last_frags.is_empty()
    }

    pub fn push_frag(&mut self, send: FragSend) {
        match send {
            FragSend::Data(tf) => self.data_frags.push(tf),
            FragSend::Last(tf, sig) => self.last_frags.push((tf, sig)),
        }
    }

    /// Canonical wire size in bits, per link.
    ///
    /// The accounting model charges deployment field widths, not simulator
    /// struct sizes: a root message is `l_hash + l_sig + m` (digest,
    /// aggregate signature, signer bitmap over the m drawn coins); a fragment
    /// message is its payload plus `(l_hash + 1) * proof_depth`, one sibling
    /// digest and one direction bit per level, the direction bits doubling as
    /// the leaf index; a last-fragment message adds the signature and bitmap.
    /// Transport framing is out of scope, as is byte alignment.
    pub fn wire_bits(&self, p: &Params) -> u64 {
        let root_bits = (p.hash_bits + p.sig_bits + p.m) as u64;
        let per_level = (p.hash_bits + 1) as u64;
        let mut total = self.roots.len() as u64 * root_bits;
        for tf in &self.data_frags {
            total += tf.fragment.payload.bits() + per_level * tf.fragment.proof.depth() as u64;
        }
        for (tf, _sig) in &self.last_frags {
            total += tf.fragment.payload.bits()
                + per_level * tf.fragment.proof.depth() as u64
                + (p.sig_bits + p.m) as u64;
        }
        total
    }
}
