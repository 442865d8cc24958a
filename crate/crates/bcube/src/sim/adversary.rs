use super::topology::Topology;
use crate::crypto::{fragment_object, AggregateSignature, Digest, FragmentSet};
use crate::protocol::{BroadcastInstance, Committee, Params, RoundMessages, TaggedFragment};
use crate::NodeId;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Everything a strategy sees beyond its own inboxes. Malicious nodes share
/// one brain: the strongest reading of arbitrary collusion.
pub struct AdversaryCtx<'a> {
    pub topology: &'a Topology,
    pub params: &'a Params,
    pub committee: &'a Committee,
    pub round: u32,
}

/// inbox per malicious node: (sender, message) pairs delivered this round
pub type Inboxes = BTreeMap<NodeId, Vec<(NodeId, RoundMessages)>>;
/// per malicious node, one message per chosen neighbor
pub type Outboxes = BTreeMap<NodeId, BTreeMap<NodeId, RoundMessages>>;

/// One byzantine strategy driving every malicious node at once. Strategies
/// may emit anything through [`Forge`] except signatures they cannot
/// produce; the runner independently checks that restriction.
pub trait AdversaryBrain: Send {
    fn name(&self) -> &'static str;
    fn act(&mut self, ctx: &AdversaryCtx<'_>, inboxes: &Inboxes) -> Outboxes;
}

/// Signing power of the adversary: signatures observed on the wire can be
/// reused and merged, controlled committee members can sign anything, and
/// everything else must go through [`Forge::forged`], which produces
/// signatures that fail verification. Strategies that stick to this helper
/// cannot violate simulated unforgeability.
pub struct Forge {
    weights: BTreeMap<NodeId, u32>,
    malicious: BTreeSet<NodeId>,
    observed: BTreeMap<Digest, BTreeSet<NodeId>>,
}

impl Forge {
    pub fn new(committee: &Committee, malicious: impl IntoIterator<Item = NodeId>) -> Self {
        Forge {
            weights: committee.weights.clone(),
            malicious: malicious.into_iter().collect(),
            observed: BTreeMap::new(),
        }
    }

    /// Harvests every valid signature in a delivered message.
    pub fn observe(&mut self, msg: &RoundMessages) {
        for (_, sig) in &msg.roots {
            self.observe_sig(sig);
        }
        for (_, sig) in &msg.last_frags {
            self.observe_sig(sig);
        }
    }

    fn observe_sig(&mut self, sig: &AggregateSignature) {
        if sig.verify(&self.weights) {
            let set = self.observed.entry(sig.item()).or_default();
            for (n, _) in sig.signers() {
                set.insert(n);
            }
        }
    }

    /// The heaviest signature the adversary can legitimately produce for
    /// `item`: all controlled committee coins plus every signer observed.
    pub fn strongest(&self, item: Digest) -> AggregateSignature {
        let mut signers = BTreeMap::new();
        for n in self.observed.get(&item).into_iter().flatten() {
            signers.insert(*n, self.weights[n]);
        }
        for (n, w) in &self.weights {
            if self.malicious.contains(n) {
                signers.insert(*n, *w);
            }
        }
        AggregateSignature::assemble(item, signers)
    }

    /// Signature by exactly the given controlled committee members.
    pub fn sign(&self, item: Digest, signers: &[NodeId]) -> AggregateSignature {
        let entries: Vec<(NodeId, u32)> = signers
            .iter()
            .map(|n| {
                assert!(self.malicious.contains(n), "cannot sign for honest {n}");
                (*n, *self.weights.get(n).expect("signer holds no committee coin"))
            })
            .collect();
        AggregateSignature::assemble(item, entries)
    }

    /// A dishonest claim; carries weight for selection, fails verification.
    pub fn forged(&self, item: Digest, claimed: &[(NodeId, u32)]) -> AggregateSignature {
        AggregateSignature::forged(item, claimed.iter().copied())
    }
}

/// Names the runner accepts, in catalog order.
pub fn adversary_catalog() -> &'static [&'static str] {
    &["honest-compliant", "silent", "equivocator", "flooder", "busy-aligner", "signature-withholder"]
}

/// Builds a strategy by name. Unknown names are a configuration error.
pub fn make_strategy(name: &str, seed: u64) -> Result<Box<dyn AdversaryBrain>, super::SimError> {
    let rng = ChaCha12Rng::from_seed(crate::crypto::derive_seed(seed, "adversary", &[]));
    match name {
        "honest-compliant" => Ok(Box::new(HonestCompliant { core: None, rng })),
        "silent" => Ok(Box::new(Silent)),
        "equivocator" => Ok(Box::new(Equivocator { state: None, rng })),
        "flooder" => Ok(Box::new(Flooder { state: None, per_round: 8, rng })),
        "busy-aligner" => Ok(Box::new(BusyAligner { state: None, rng })),
        "signature-withholder" => Ok(Box::new(SignatureWithholder { core: None, rng })),
        other => Err(super::SimError::UnknownStrategy(other.to_string())),
    }
}

fn mint_set(params: &Params, rng: &mut impl RngCore) -> FragmentSet {
    let obj = super::mint_object(params, rng);
    fragment_object(&obj, params.s, params.nonce_bits, rng).expect("valid params")
}

fn to_all_neighbors(topo: &Topology, u: NodeId, msg: &RoundMessages) -> BTreeMap<NodeId, RoundMessages> {
    topo.neighbors(u).iter().map(|v| (NodeId(*v), msg.clone())).collect()
}

/// Malicious nodes that run the protocol faithfully, a malicious
/// broadcaster included (it broadcasts a well-formed object of its own).
/// The baseline strategy: every honest-side property must hold verbatim.
struct HonestCompliant {
    core: Option<HonestCore>,
    rng: ChaCha12Rng,
}

impl AdversaryBrain for HonestCompliant {
    fn name(&self) -> &'static str {
        "honest-compliant"
    }

    fn act(&mut self, ctx: &AdversaryCtx<'_>, inboxes: &Inboxes) -> Outboxes {
        if self.core.is_none() {
            self.core = Some(HonestCore::new(ctx, true, &mut self.rng));
        }
        self.core.as_mut().unwrap().step(ctx, inboxes)
    }
}

struct Silent;

impl AdversaryBrain for Silent {
    fn name(&self) -> &'static str {
        "silent"
    }

    fn act(&mut self, _ctx: &AdversaryCtx<'_>, _inboxes: &Inboxes) -> Outboxes {
        Outboxes::new()
    }
}

/// Faithful instances for every malicious node; used directly by the
/// compliant strategy and as the non-broadcaster fallback of the targeted
/// ones (a broadcaster attack degenerates when the broadcaster is honest).
struct HonestCore {
    insts: BTreeMap<NodeId, BroadcastInstance>,
}

impl HonestCore {
    /// `serve_object`: whether a malicious broadcaster mints and serves an
    /// object of its own (honest-compliant does, attack fallbacks do not).
    fn new(ctx: &AdversaryCtx<'_>, serve_object: bool, rng: &mut ChaCha12Rng) -> Self {
        let mut insts = BTreeMap::new();
        for id in ctx.topology.malicious_ids() {
            let mut inst = BroadcastInstance::new(id, *ctx.params, ctx.committee.clone());
            if serve_object && id == ctx.committee.broadcaster {
                let set = mint_set(ctx.params, rng);
                inst.install_local_object(&set);
            }
            insts.insert(id, inst);
        }
        HonestCore { insts }
    }

    fn step(&mut self, ctx: &AdversaryCtx<'_>, inboxes: &Inboxes) -> Outboxes {
        let empty = Vec::new();
        let mut out = Outboxes::new();
        for (id, inst) in &mut self.insts {
            let inbox = inboxes.get(id).unwrap_or(&empty);
            let msg = inst.step(ctx.round, inbox);
            if !msg.is_empty() {
                out.insert(*id, to_all_neighbors(ctx.topology, *id, &msg));
            }
        }
        out
    }
}

struct EquivocatorState {
    sets: [FragmentSet; 2],
    forge: Forge,
    fallback: Option<HonestCore>,
}

/// A malicious broadcaster commits to two objects and steers each half of
/// its neighborhood toward a different one. Signatures on both roots are
/// held back to the bare broadcaster coin for the first half of the run and
/// released at full controlled weight afterwards, making late promises as
/// convincing as possible. With an honest broadcaster this degrades to
/// compliant relaying.
struct Equivocator {
    state: Option<EquivocatorState>,
    rng: ChaCha12Rng,
}

impl AdversaryBrain for Equivocator {
    fn name(&self) -> &'static str {
        "equivocator"
    }

    fn act(&mut self, ctx: &AdversaryCtx<'_>, inboxes: &Inboxes) -> Outboxes {
        if self.state.is_none() {
            let ours = !ctx.topology.is_honest(ctx.committee.broadcaster);
            self.state = Some(EquivocatorState {
                sets: [mint_set(ctx.params, &mut self.rng), mint_set(ctx.params, &mut self.rng)],
                forge: Forge::new(ctx.committee, ctx.topology.malicious_ids()),
                fallback: (!ours).then(|| HonestCore::new(ctx, false, &mut self.rng)),
            });
        }
        let state = self.state.as_mut().unwrap();
        for msgs in inboxes.values() {
            for (_, msg) in msgs {
                state.forge.observe(msg);
            }
        }
        if let Some(core) = &mut state.fallback {
            return core.step(ctx, inboxes);
        }

        let b = ctx.committee.broadcaster;
        let release = ctx.round >= ctx.params.rounds() / 2;
        let mut per_neighbor = BTreeMap::new();
        for v in ctx.topology.neighbors(b) {
            let set = &state.sets[(*v % 2) as usize];
            let sig = if release {
                state.forge.strongest(set.root)
            } else {
                state.forge.sign(set.root, &[b])
            };
            let mut msg = RoundMessages::default();
            msg.roots.push((set.root, sig));
            // unlimited budget: serve the whole fragment set every round
            for f in &set.fragments {
                let tf = TaggedFragment { root: set.root, fragment: f.clone() };
                if f.index == ctx.params.s {
                    let mut xsig = state.forge.strongest(f.sig_item());
                    if xsig.is_empty() {
                        xsig = state.forge.sign(f.sig_item(), &[b]);
                    }
                    msg.last_frags.push((tf, xsig));
                } else {
                    msg.data_frags.push(tf);
                }
            }
            per_neighbor.insert(NodeId(*v), msg);
        }
        let mut out = Outboxes::new();
        out.insert(b, per_neighbor);
        // other malicious nodes echo both roots to everyone
        for id in ctx.topology.malicious_ids().filter(|id| *id != b) {
            let mut msg = RoundMessages::default();
            for set in &state.sets {
                let sig = if release {
                    state.forge.strongest(set.root)
                } else {
                    state.forge.sign(set.root, &[b])
                };
                msg.roots.push((set.root, sig));
            }
            out.insert(id, to_all_neighbors(ctx.topology, id, &msg));
        }
        out
    }
}

struct FlooderState {
    forge: Forge,
    fallback: Option<HonestCore>,
}

/// A malicious broadcaster mints fresh objects every round and showers
/// every neighbor with all their broadcaster-signed roots. Honest relaying
/// must stay within its per-round budget regardless.
struct Flooder {
    state: Option<FlooderState>,
    per_round: u32,
    rng: ChaCha12Rng,
}

impl AdversaryBrain for Flooder {
    fn name(&self) -> &'static str {
        "flooder"
    }

    fn act(&mut self, ctx: &AdversaryCtx<'_>, inboxes: &Inboxes) -> Outboxes {
        if self.state.is_none() {
            let ours = !ctx.topology.is_honest(ctx.committee.broadcaster);
            self.state = Some(FlooderState {
                forge: Forge::new(ctx.committee, ctx.topology.malicious_ids()),
                fallback: (!ours).then(|| HonestCore::new(ctx, false, &mut self.rng)),
            });
        }
        let state = self.state.as_mut().unwrap();
        if let Some(core) = &mut state.fallback {
            return core.step(ctx, inboxes);
        }
        let b = ctx.committee.broadcaster;
        let mut msg = RoundMessages::default();
        for _ in 0..self.per_round {
            // a root is a commitment; minting one per object is the cheap part
            let set = mint_set(ctx.params, &mut self.rng);
            msg.roots.push((set.root, state.forge.sign(set.root, &[b])));
        }
        let mut out = Outboxes::new();
        out.insert(b, to_all_neighbors(ctx.topology, b, &msg));
        out
    }
}

struct BusyAlignerState {
    set: FragmentSet,
    forge: Forge,
    fallback: Option<HonestCore>,
    next_index: u32,
}

/// A malicious broadcaster announces its root on schedule but holds all
/// fragments back for `s - 1` rounds, the largest stall the back-dated
/// acceptance rule tolerates, shifting every busy round as late as possible
/// (the alignment attack on naive parallel composition).
struct BusyAligner {
    state: Option<BusyAlignerState>,
    rng: ChaCha12Rng,
}

impl AdversaryBrain for BusyAligner {
    fn name(&self) -> &'static str {
        "busy-aligner"
    }

    fn act(&mut self, ctx: &AdversaryCtx<'_>, inboxes: &Inboxes) -> Outboxes {
        if self.state.is_none() {
            let ours = !ctx.topology.is_honest(ctx.committee.broadcaster);
            self.state = Some(BusyAlignerState {
                set: mint_set(ctx.params, &mut self.rng),
                forge: Forge::new(ctx.committee, ctx.topology.malicious_ids()),
                fallback: (!ours).then(|| HonestCore::new(ctx, false, &mut self.rng)),
                next_index: 1,
            });
        }
        let state = self.state.as_mut().unwrap();
        for msgs in inboxes.values() {
            for (_, msg) in msgs {
                state.forge.observe(msg);
            }
        }
        if let Some(core) = &mut state.fallback {
            return core.step(ctx, inboxes);
        }

        let b = ctx.committee.broadcaster;
        let s = ctx.params.s;
        let mut msg = RoundMessages::default();
        let mut root_sig = state.forge.strongest(state.set.root);
        if root_sig.is_empty() {
            root_sig = state.forge.sign(state.set.root, &[b]);
        }
        msg.roots.push((state.set.root, root_sig));
        let stall = s - 1;
        if ctx.round >= stall && state.next_index <= s {
            let f = &state.set.fragments[(state.next_index - 1) as usize];
            let tf = TaggedFragment { root: state.set.root, fragment: f.clone() };
            if state.next_index == s {
                let mut xsig = state.forge.strongest(f.sig_item());
                if xsig.is_empty() {
                    xsig = state.forge.sign(f.sig_item(), &[b]);
                }
                msg.last_frags.push((tf, xsig));
            } else {
                msg.data_frags.push(tf);
            }
            state.next_index += 1;
        }
        let mut out = Outboxes::new();
        out.insert(b, to_all_neighbors(ctx.topology, b, &msg));
        out
    }
}

/// Malicious committee members follow the protocol internally, so their
/// acceptances and signatures exist, but the only thing they put on the
/// wire is the root section: signature weight circulates, fragments never
/// do. A malicious broadcaster under this strategy starves everyone.
struct SignatureWithholder {
    core: Option<HonestCore>,
    rng: ChaCha12Rng,
}

impl AdversaryBrain for SignatureWithholder {
    fn name(&self) -> &'static str {
        "signature-withholder"
    }

    fn act(&mut self, ctx: &AdversaryCtx<'_>, inboxes: &Inboxes) -> Outboxes {
        if self.core.is_none() {
            self.core = Some(HonestCore::new(ctx, true, &mut self.rng));
        }
        let mut out = self.core.as_mut().unwrap().step(ctx, inboxes);
        for per_neighbor in out.values_mut() {
            for msg in per_neighbor.values_mut() {
                msg.data_frags.clear();
                msg.last_frags.clear();
            }
        }
        out.retain(|_, per| {
            per.retain(|_, msg| !msg.is_empty());
            !per.is_empty()
        });
        out
    }
}
