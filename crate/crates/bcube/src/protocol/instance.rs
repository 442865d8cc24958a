use super::messages::{FragSend, RoundMessages, TaggedFragment};
use super::{Committee, Params};
use crate::crypto::{
    add_my_sig, reconstruct_object, sigma_select, verify_proof, AggregateSignature, BitChunk,
    Digest, Fragment, FragmentSet,
};
use crate::NodeId;
use serde::Serialize;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

/// What an instance returns after its last round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Object(BitChunk),
    Bot,
}

impl Outcome {
    pub fn object(&self) -> Option<&BitChunk> {
        match self {
            Outcome::Object(o) => Some(o),
            Outcome::Bot => None,
        }
    }
}

/// The finalize predicate held but the fragments did not reconstruct. The
/// protocol guarantees this cannot happen; reaching it is a bug in the
/// implementation or a broken model assumption, so simulations treat it as
/// a hard failure rather than an outcome.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("accepted root {root} is missing fragment {index} at finalize")]
    MissingFragment { root: Digest, index: u32 },
    #[error("accepted root {root} did not reconstruct: {reason}")]
    BadReconstruct { root: Digest, reason: String },
}

/// Counters a run exposes for budget checks and diagnostics. Verification
/// counters only move on actual checks; cache hits are free, matching how a
/// lazy-verification deployment would behave.
#[derive(Debug, Clone, Default, Serialize)]
pub struct InstanceStats {
    pub sig_verify_pass: u32,
    pub sig_verify_fail: u32,
    pub proof_verify_pass: u32,
    pub proof_verify_fail: u32,
    pub sign_adds: u32,
    pub malformed_dropped: u32,
    pub conflicting_dropped: u32,
    pub no_broadcaster_dropped: u32,
    pub blacklisted_dropped: u32,
    pub frag_accept_round: Option<u32>,
    pub root_accept_rounds: BTreeMap<Digest, u32>,
}

#[derive(Debug, Clone)]
struct SigCand {
    sig: AggregateSignature,
    senders: BTreeSet<NodeId>,
    local: bool,
    verified: bool,
}

#[derive(Debug, Clone)]
struct FragCand {
    fragment: Fragment,
    senders: BTreeSet<NodeId>,
    local: bool,
    verified: bool,
}

enum FragResolve {
    Found(Fragment),
    Absent,
    Swept,
}

/// Per-node state of one broadcast instance.
pub struct BroadcastInstance {
    me: NodeId,
    params: Params,
    committee: Committee,
    my_weight: Option<u32>,

    all_root: BTreeSet<Digest>,
    root_senders: BTreeMap<Digest, BTreeSet<NodeId>>,
    /// roots this node minted itself (the broadcaster's own)
    root_local: BTreeSet<Digest>,
    /// roots for which a valid broadcaster-carrying signature has been seen.
    /// Admission at ingest only reads the claimed signer bitmap; before a
    /// root is first processed the claim has to verify, otherwise the root
    /// and its source go away. Once established, legitimacy is a fact about
    /// the root itself and survives any later blacklisting.
    root_legit: BTreeSet<Digest>,

    frags: BTreeMap<(Digest, u32), Vec<FragCand>>,
    sigs: BTreeMap<Digest, Vec<SigCand>>,
    /// root -> best score among pushes recorded for it
    pushes: BTreeMap<Digest, i64>,
    forwarded: BTreeSet<(Digest, u32)>,

    root_accepted: BTreeSet<Digest>,
    frag_accepted: bool,
    t_root: Option<u32>,

    blacklist: BTreeSet<NodeId>,
    /// bumped on every discard; forwarding passes re-rank when it moves
    sweep_epoch: u64,

    pub stats: InstanceStats,
}

impl BroadcastInstance {
    pub fn new(me: NodeId, params: Params, committee: Committee) -> Self {
        let my_weight = committee.weight_of(me);
        BroadcastInstance {
            me,
            params,
            committee,
            my_weight,
            all_root: BTreeSet::new(),
            root_senders: BTreeMap::new(),
            root_local: BTreeSet::new(),
            root_legit: BTreeSet::new(),
            frags: BTreeMap::new(),
            sigs: BTreeMap::new(),
            pushes: BTreeMap::new(),
            forwarded: BTreeSet::new(),
            root_accepted: BTreeSet::new(),
            frag_accepted: false,
            t_root: None,
            blacklist: BTreeSet::new(),
            sweep_epoch: 0,
            stats: InstanceStats::default(),
        }
    }

    /// Broadcaster setup: fragment the object, commit, hold everything
    /// locally and sign the root. The first coin draw is the broadcaster,
    /// so `me` always has committee weight here.
    pub fn init_broadcaster(
        me: NodeId,
        params: Params,
        committee: Committee,
        set: &FragmentSet,
    ) -> Self {
        assert_eq!(committee.broadcaster, me, "init_broadcaster on a non-broadcaster");
        let mut inst = Self::new(me, params, committee);
        inst.install_local_object(set);
        inst
    }

    /// Installs an object this node minted (used by the broadcaster and by
    /// strategies that replay honest behavior for adversary-held nodes).
    pub fn install_local_object(&mut self, set: &FragmentSet) {
        let root = set.root;
        self.all_root.insert(root);
        self.root_local.insert(root);
        self.root_legit.insert(root);
        for f in &set.fragments {
            self.frags.entry((root, f.index)).or_default().push(FragCand {
                fragment: f.clone(),
                senders: BTreeSet::new(),
                local: true,
                verified: true,
            });
        }
        let w = self.my_weight.expect("object minter must hold committee weight");
        let sig = add_my_sig(&AggregateSignature::empty(root), self.me, w);
        self.insert_local_sig(sig);
    }

    pub fn me(&self) -> NodeId {
        self.me
    }

    pub fn is_committee(&self) -> bool {
        self.my_weight.is_some()
    }

    pub fn root_accepted(&self) -> &BTreeSet<Digest> {
        &self.root_accepted
    }

    pub fn frag_accepted(&self) -> bool {
        self.frag_accepted
    }

    pub fn t_root(&self) -> Option<u32> {
        self.t_root
    }

    pub fn blacklist(&self) -> &BTreeSet<NodeId> {
        &self.blacklist
    }

    pub fn forwarded_count(&self) -> usize {
        self.forwarded.len()
    }

    pub fn has_forwarded(&self, root: Digest, index: u32) -> bool {
        self.forwarded.contains(&(root, index))
    }

    /// Current weight of the signature the node would select for `item`,
    /// claimed values included (selection happens before verification).
    pub fn claimed_weight(&self, item: Digest) -> u64 {
        self.best_sig(item).map_or(0, |s| s.weight())
    }

    /// One full round: ingest everything delivered at the round boundary,
    /// then run the two forwarding passes. The returned messages go to every
    /// neighbor.
    pub fn step(&mut self, t: u32, inbox: &[(NodeId, RoundMessages)]) -> RoundMessages {
        for (from, msg) in inbox {
            self.ingest(*from, msg);
        }
        let mut out = RoundMessages::default();
        out.roots = self.forward_merkle_root(t);
        if let Some(send) = self.forward_fragment(t) {
            out.push_frag(send);
        }
        out
    }

    /// Merges one neighbor message into the pools. Messages from blacklisted
    /// senders are dropped whole; roots are only admitted when their
    /// signature at least claims the broadcaster, and fragments must match
    /// the fixed sizes of the instance (every conforming message has exactly
    /// one shape, so size checks are free and keep hostile payloads from
    /// inflating anyone's send budget).
    pub fn ingest(&mut self, from: NodeId, msg: &RoundMessages) {
        if self.blacklist.contains(&from) {
            self.stats.blacklisted_dropped += 1;
            return;
        }
        for (root, sig) in &msg.roots {
            if sig.item() != *root {
                self.stats.malformed_dropped += 1;
                continue;
            }
            let admitted = self.all_root.contains(root);
            if admitted || sig.contains(self.committee.broadcaster) {
                self.all_root.insert(*root);
                self.root_senders.entry(*root).or_default().insert(from);
                self.insert_sig(sig.clone(), from);
            } else {
                self.stats.no_broadcaster_dropped += 1;
            }
        }
        for tf in &msg.data_frags {
            self.ingest_frag(tf, from, false);
        }
        for (tf, sig) in &msg.last_frags {
            if sig.item() != tf.fragment.sig_item() {
                self.stats.malformed_dropped += 1;
                continue;
            }
            if self.ingest_frag(tf, from, true) {
                self.insert_sig(sig.clone(), from);
            }
        }
    }

    fn ingest_frag(&mut self, tf: &TaggedFragment, from: NodeId, is_last: bool) -> bool {
        let f = &tf.fragment;
        let p = &self.params;
        let shape_ok = if is_last {
            f.index == p.s && f.payload.bits() == p.nonce_bits as u64
        } else {
            f.index >= 1 && f.index < p.s && f.payload.bits() == p.data_bits()
        };
        if !shape_ok || f.proof.depth() != p.proof_depth() {
            self.stats.malformed_dropped += 1;
            return false;
        }
        let cands = self.frags.entry((tf.root, f.index)).or_default();
        if let Some(c) = cands.iter_mut().find(|c| c.fragment == *f) {
            c.senders.insert(from);
            return true;
        }
        // one candidate per sender and slot: a sender re-offering different
        // content for the same leaf is equivocating about a committed value
        if cands.iter().any(|c| c.senders.contains(&from)) {
            self.stats.conflicting_dropped += 1;
            return true;
        }
        cands.push(FragCand {
            fragment: f.clone(),
            senders: BTreeSet::from([from]),
            local: false,
            verified: false,
        });
        true
    }

    fn insert_sig(&mut self, sig: AggregateSignature, from: NodeId) {
        let cands = self.sigs.entry(sig.item()).or_default();
        if let Some(c) = cands.iter_mut().find(|c| c.sig == sig) {
            c.senders.insert(from);
        } else {
            cands.push(SigCand { sig, senders: BTreeSet::from([from]), local: false, verified: false });
        }
    }

    fn insert_local_sig(&mut self, sig: AggregateSignature) {
        let cands = self.sigs.entry(sig.item()).or_default();
        if let Some(c) = cands.iter_mut().find(|c| c.sig == sig) {
            c.local = true;
            c.verified = true;
        } else {
            cands.push(SigCand { sig, senders: BTreeSet::new(), local: true, verified: true });
        }
    }

    fn best_sig(&self, item: Digest) -> Option<&AggregateSignature> {
        sigma_select(self.sigs.get(&item).into_iter().flatten().map(|c| &c.sig))
    }

    /// Index of the selection-winning candidate for `item`.
    fn best_sig_idx(&self, item: Digest) -> Option<usize> {
        let cands = self.sigs.get(&item)?;
        let best = sigma_select(cands.iter().map(|c| &c.sig))?;
        cands.iter().position(|c| &c.sig == best)
    }

    /// The signature the node will actually use for `item`: keeps verifying
    /// and discarding selection winners until one passes or none are left.
    fn verified_best_sig(&mut self, item: Digest) -> Option<AggregateSignature> {
        loop {
            let idx = self.best_sig_idx(item)?;
            let cand = &mut self.sigs.get_mut(&item).unwrap()[idx];
            if cand.verified {
                return Some(cand.sig.clone());
            }
            if cand.sig.verify(&self.committee.weights) {
                cand.verified = true;
                self.stats.sig_verify_pass += 1;
                return Some(cand.sig.clone());
            }
            self.stats.sig_verify_fail += 1;
            let senders = cand.senders.clone();
            self.sigs.get_mut(&item).unwrap().remove(idx);
            self.blacklist_and_sweep(&senders);
        }
    }

    /// A root may only be processed once some valid signature carrying the
    /// broadcaster has been seen; admission merely trusted the bitmap.
    fn establish_legit(&mut self, root: Digest) -> bool {
        if self.root_legit.contains(&root) {
            return true;
        }
        loop {
            let cand_idx = self.sigs.get(&root).and_then(|cands| {
                let best = sigma_select(
                    cands
                        .iter()
                        .filter(|c| c.sig.contains(self.committee.broadcaster))
                        .map(|c| &c.sig),
                )?;
                cands.iter().position(|c| &c.sig == best)
            });
            let Some(idx) = cand_idx else {
                self.remove_root(root);
                return false;
            };
            let cand = &mut self.sigs.get_mut(&root).unwrap()[idx];
            if cand.verified {
                self.root_legit.insert(root);
                return true;
            }
            if cand.sig.verify(&self.committee.weights) {
                cand.verified = true;
                self.stats.sig_verify_pass += 1;
                self.root_legit.insert(root);
                return true;
            }
            self.stats.sig_verify_fail += 1;
            let senders = cand.senders.clone();
            self.sigs.get_mut(&root).unwrap().remove(idx);
            self.blacklist_and_sweep(&senders);
            if !self.all_root.contains(&root) {
                return false; // the sweep took the root with it
            }
        }
    }

    fn remove_root(&mut self, root: Digest) {
        self.all_root.remove(&root);
        self.root_senders.remove(&root);
        self.pushes.remove(&root);
        self.sweep_epoch += 1;
    }

    /// Blacklists `senders` and drops every unverified item only they
    /// vouched for. Verified items stay: validity is a property of the
    /// bytes, not of who delivered them.
    fn blacklist_and_sweep(&mut self, senders: &BTreeSet<NodeId>) {
        for s in senders {
            self.blacklist.insert(*s);
        }
        self.sweep_epoch += 1;
        let bl = &self.blacklist;
        let alive = |sends: &BTreeSet<NodeId>| sends.iter().any(|s| !bl.contains(s));
        for cands in self.sigs.values_mut() {
            cands.retain(|c| c.local || c.verified || alive(&c.senders));
        }
        self.sigs.retain(|_, v| !v.is_empty());
        for cands in self.frags.values_mut() {
            cands.retain(|c| c.local || c.verified || alive(&c.senders));
        }
        self.frags.retain(|_, v| !v.is_empty());
        let doomed: Vec<Digest> = self
            .all_root
            .iter()
            .filter(|r| {
                !self.root_local.contains(r)
                    && !self.root_legit.contains(r)
                    && !self.root_senders.get(r).is_some_and(|s| alive(s))
            })
            .copied()
            .collect();
        for r in doomed {
            self.remove_root(r);
        }
    }

    /// Root pass: select up to two heaviest roots, make sure their
    /// signatures (and broadcaster claims) verify, run the acceptance rule,
    /// attach the node's own signature where it accepts as a committee
    /// holder, and emit the selection for all neighbors. Each emitted root
    /// also records a push carrying the score of the signature as sent.
    pub fn forward_merkle_root(&mut self, t: u32) -> Vec<(Digest, AggregateSignature)> {
        let tops = 'select: loop {
            let mut ranked: Vec<(Reverse<u64>, Digest)> = self
                .all_root
                .iter()
                .map(|r| (Reverse(self.claimed_weight(*r)), *r))
                .collect();
            ranked.sort();
            let take = if ranked.len() <= 1 { 1 } else { 2 };
            let epoch = self.sweep_epoch;
            let mut sel = Vec::with_capacity(take);
            for (_, r) in ranked {
                if sel.len() == take {
                    break;
                }
                if !self.establish_legit(r) {
                    continue 'select;
                }
                self.verified_best_sig(r);
                if self.sweep_epoch != epoch {
                    continue 'select;
                }
                sel.push(r);
            }
            break sel;
        };

        let d = self.params.d as u64;
        let mut out = Vec::with_capacity(tops.len());
        for r in tops {
            let sig = self.verified_best_sig(r).unwrap_or_else(|| AggregateSignature::empty(r));
            let w = sig.weight();
            let accepts = match self.my_weight {
                Some(_) => 2 * d * w >= t as u64,
                None => 2 * d * w >= (t + self.params.d) as u64,
            };
            if accepts {
                if let Some(mw) = self.my_weight {
                    let signed = add_my_sig(&sig, self.me, mw);
                    if signed != sig {
                        self.stats.sign_adds += 1;
                        self.insert_local_sig(signed);
                    }
                }
                if self.root_accepted.insert(r) {
                    self.stats.root_accept_rounds.insert(r, t);
                }
                self.t_root = Some(self.t_root.map_or(t, |x| x.min(t)));
            }
            let sent = self.verified_best_sig(r).unwrap_or_else(|| AggregateSignature::empty(r));
            let score = 2 * self.params.d as i64 * sent.weight() as i64 - t as i64;
            let e = self.pushes.entry(r).or_insert(i64::MIN);
            *e = (*e).max(score);
            out.push((r, sent));
        }
        out
    }

    /// Fragment pass: serve the most promising push. Either relay the
    /// lowest-indexed data fragment not sent yet for that root, or, once
    /// all of them went out and the full set is held, process the last
    /// fragment with the back-dated acceptance rule and send it with its
    /// signature.
    pub fn forward_fragment(&mut self, t: u32) -> Option<FragSend> {
        let s = self.params.s;
        let d = self.params.d as u64;
        'outer: loop {
            let root = *self
                .pushes
                .iter()
                .max_by_key(|(r, sc)| (**sc, Reverse(**r)))
                .map(|(r, _)| r)?;

            for i in 1..s {
                if self.forwarded.contains(&(root, i)) {
                    continue;
                }
                match self.resolve_frag(root, i) {
                    FragResolve::Found(f) => {
                        self.forwarded.insert((root, i));
                        return Some(FragSend::Data(TaggedFragment { root, fragment: f }));
                    }
                    FragResolve::Absent => continue,
                    FragResolve::Swept => continue 'outer,
                }
            }

            if !(1..=s).all(|i| self.frags.get(&(root, i)).is_some_and(|v| !v.is_empty())) {
                return None;
            }
            let xs = match self.resolve_frag(root, s) {
                FragResolve::Found(f) => f,
                FragResolve::Absent => return None,
                FragResolve::Swept => continue 'outer,
            };
            let item = xs.sig_item();
            let epoch = self.sweep_epoch;
            let sig = self.verified_best_sig(item).unwrap_or_else(|| AggregateSignature::empty(item));
            if self.sweep_epoch != epoch {
                continue 'outer;
            }
            if let Some(tr) = self.t_root {
                // as if the last fragment were sent when its data fragments
                // started flowing: back-date by the forerunner delay
                let t_frag = t.max(tr + s - 1);
                let thr = t_frag.saturating_sub(s - 1) as u64;
                let w = sig.weight();
                match self.my_weight {
                    Some(mw) if 2 * d * w >= thr => {
                        let signed = add_my_sig(&sig, self.me, mw);
                        if signed != sig {
                            self.stats.sign_adds += 1;
                            self.insert_local_sig(signed);
                        }
                        self.mark_frag_accepted(t);
                    }
                    None if 2 * d * w >= thr + self.params.d as u64 => {
                        self.mark_frag_accepted(t);
                    }
                    _ => {}
                }
            }
            let sent = self.verified_best_sig(item).unwrap_or_else(|| AggregateSignature::empty(item));
            self.forwarded.insert((root, s));
            return Some(FragSend::Last(TaggedFragment { root, fragment: xs }, sent));
        }
    }

    fn mark_frag_accepted(&mut self, t: u32) {
        if !self.frag_accepted {
            self.frag_accepted = true;
            self.stats.frag_accept_round = Some(t);
        }
    }

    fn resolve_frag(&mut self, root: Digest, index: u32) -> FragResolve {
        loop {
            let Some(cands) = self.frags.get(&(root, index)) else {
                return FragResolve::Absent;
            };
            if cands.is_empty() {
                return FragResolve::Absent;
            }
            if let Some(c) = cands.iter().find(|c| c.verified) {
                return FragResolve::Found(c.fragment.clone());
            }
            // deterministic probe order: the candidate vouched for by the
            // smallest sender id
            let idx = (0..cands.len())
                .min_by_key(|i| cands[*i].senders.iter().next().copied())
                .unwrap();
            let cand = &mut self.frags.get_mut(&(root, index)).unwrap()[idx];
            if verify_proof(&cand.fragment.payload, &cand.fragment.proof, &root)
                && cand.fragment.index == index
            {
                cand.verified = true;
                self.stats.proof_verify_pass += 1;
                return FragResolve::Found(cand.fragment.clone());
            }
            self.stats.proof_verify_fail += 1;
            let senders = cand.senders.clone();
            self.frags.get_mut(&(root, index)).unwrap().remove(idx);
            self.blacklist_and_sweep(&senders);
            return FragResolve::Swept;
        }
    }

    /// End-of-instance output: a non-bot object exactly when a single root
    /// was accepted and the last fragment was accepted.
    pub fn finalize(&mut self) -> Result<Outcome, Violation> {
        if self.root_accepted.len() != 1 || !self.frag_accepted {
            return Ok(Outcome::Bot);
        }
        let root = *self.root_accepted.iter().next().unwrap();
        let s = self.params.s;
        let mut set = Vec::with_capacity(s as usize);
        for i in 1..=s {
            match self.resolve_frag(root, i) {
                FragResolve::Found(f) => set.push(f),
                _ => return Err(Violation::MissingFragment { root, index: i }),
            }
        }
        reconstruct_object(&set, s)
            .map(Outcome::Object)
            .map_err(|e| Violation::BadReconstruct { root, reason: e.to_string() })
    }
}
