use super::adversary::{make_strategy, AdversaryBrain, AdversaryCtx, Inboxes};
use super::topology::{build_topology_with, BadEdgeMode, Topology};
use super::SimError;
use crate::crypto::{derive_seed, fragment_object, BitChunk, Digest};
use crate::protocol::{
    BroadcastInstance, Committee, InstanceStats, Outcome, Params, RoundMessages,
};
use crate::NodeId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// How the per-round node steps are driven. `Parallel` without the
/// `parallel` feature compiled in silently runs sequentially; results are
/// identical either way, only wall-clock time differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    Sequential,
    Parallel,
}

/// Inputs for one broadcast instance run over an existing overlay.
pub struct InvocationSetup<'a> {
    pub topology: &'a Topology,
    pub params: Params,
    pub committee: Committee,
    /// the honest broadcaster's object; `None` when the broadcaster is
    /// malicious (the strategy mints its own objects)
    pub object: Option<BitChunk>,
    pub seed: u64,
    pub exec: ExecMode,
    /// per-node per-round send cap in bits; exceeding it is recorded, not
    /// enforced
    pub budget_bound_bits: Option<u64>,
    /// tag recorded on trace rows (chain runs use the slot number)
    pub instance_tag: u64,
    pub collect_trace: bool,
}

/// One per honest node per round when traces are collected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub round: u32,
    pub node: u32,
    pub instance: u64,
    pub bits_sent: u64,
    pub roots_accepted: Vec<String>,
    pub frag_accepted: bool,
    pub blacklisted: Vec<u32>,
}

#[derive(Debug)]
pub struct InvocationReport {
    /// per honest node
    pub outcomes: BTreeMap<NodeId, Outcome>,
    pub stats: BTreeMap<NodeId, InstanceStats>,
    /// per honest node, bits put on the wire each round (message size times
    /// neighbor count; the node cannot tell which directions are down)
    pub bits_sent: BTreeMap<NodeId, Vec<u64>>,
    pub peak_round_bits: u64,
    pub budget_violations: u32,
    /// adversary messages dropped for claiming signatures they cannot hold
    pub forgery_violations: u32,
    pub rounds_run: u32,
    /// root committed by an honest broadcaster, if any
    pub broadcast_root: Option<Digest>,
    pub trace: Vec<TraceRecord>,
}

impl InvocationReport {
    /// Agreement predicate: every honest node finalized the same outcome.
    pub fn outcomes_agree(&self) -> bool {
        let mut iter = self.outcomes.values();
        let Some(first) = iter.next() else { return true };
        iter.all(|o| o == first)
    }

    pub fn agreed_outcome(&self) -> Option<&Outcome> {
        self.outcomes_agree().then(|| self.outcomes.values().next()).flatten()
    }

    /// Validity predicate for an honest broadcaster's run.
    pub fn all_output(&self, obj: &BitChunk) -> bool {
        !self.outcomes.is_empty()
            && self.outcomes.values().all(|o| o.object() == Some(obj))
    }
}

/// Uniform public coin draw over all nodes: `m` coins with replacement,
/// first coin broadcasts. The chain layer derives its committees from block
/// hashes instead; this is the standalone-experiment draw.
pub fn draw_committee(n: u32, m: u32, seed: u64) -> Committee {
    let mut rng = ChaCha12Rng::from_seed(derive_seed(seed, "committee", &[]));
    let draws: Vec<NodeId> = (0..m).map(|_| NodeId(rng.random_range(0..n))).collect();
    Committee::from_draws(&draws)
}

pub fn committee_has_honest(topo: &Topology, committee: &Committee) -> bool {
    committee.weights.keys().any(|n| topo.is_honest(*n))
}

struct StepOut {
    msg: RoundMessages,
    new_roots: Vec<Digest>,
    frag_now: bool,
    new_blacklist: Vec<u32>,
}

fn step_one(inst: &mut BroadcastInstance, t: u32, inbox: &[(NodeId, RoundMessages)]) -> StepOut {
    let bl_before = inst.blacklist().clone();
    let msg = inst.step(t, inbox);
    let new_roots = inst
        .stats
        .root_accept_rounds
        .iter()
        .filter(|(_, r)| **r == t)
        .map(|(dg, _)| *dg)
        .collect();
    let frag_now = inst.stats.frag_accept_round == Some(t);
    let new_blacklist =
        inst.blacklist().difference(&bl_before).map(|n| n.0).collect();
    StepOut { msg, new_roots, frag_now, new_blacklist }
}

/// Round barrier: advances every honest instance one round. The instances
/// are independent given their inboxes, which is what makes the parallel
/// path a pure drop-in.
fn step_all(
    insts: &mut [Option<BroadcastInstance>],
    inboxes: &[Vec<(NodeId, RoundMessages)>],
    t: u32,
    exec: ExecMode,
) -> Vec<Option<StepOut>> {
    #[cfg(feature = "parallel")]
    if exec == ExecMode::Parallel {
        return insts
            .par_iter_mut()
            .zip_eq(inboxes.par_iter())
            .map(|(inst, inbox)| inst.as_mut().map(|i| step_one(i, t, inbox)))
            .collect();
    }
    let _ = exec;
    insts
        .iter_mut()
        .zip(inboxes.iter())
        .map(|(inst, inbox)| inst.as_mut().map(|i| step_one(i, t, inbox)))
        .collect()
}

/// One broadcast instance advanced round by round. The chain layer keeps
/// several of these alive at once (pipelined slots) and shares one global
/// round clock across them; [`run_invocation`] is the standalone wrapper.
pub(crate) struct EngineCore<'a> {
    topo: &'a Topology,
    params: Params,
    committee: Committee,
    exec: ExecMode,
    budget_bound_bits: Option<u64>,
    instance_tag: u64,
    collect_trace: bool,
    insts: Vec<Option<BroadcastInstance>>,
    mail: Vec<Vec<(NodeId, RoundMessages)>>,
    // ground truth for the forgery audit: (item, honest signer) pairs seen
    // in honest outbound messages; honest sigs reach the wire the round
    // they are made, so the registry is always ahead of the adversary
    honest_signed: BTreeMap<Digest, BTreeSet<NodeId>>,
    bits_sent: BTreeMap<NodeId, Vec<u64>>,
    peak_round_bits: u64,
    budget_violations: u32,
    forgery_violations: u32,
    trace: Vec<TraceRecord>,
    broadcast_root: Option<Digest>,
    t: u32,
}

impl<'a> EngineCore<'a> {
    pub(crate) fn new(setup: InvocationSetup<'a>) -> Result<Self, SimError> {
        let topo = setup.topology;
        let params = setup.params;
        params.validate().map_err(|e| SimError::Setup(e.to_string()))?;
        if params.d < topo.d() {
            return Err(SimError::Setup(format!(
                "params.d = {} below topology diameter {}",
                params.d,
                topo.d()
            )));
        }
        if params.m as u64 != setup.committee.total_weight() {
            return Err(SimError::Setup(format!(
                "committee holds {} coins, params.m = {}",
                setup.committee.total_weight(),
                params.m
            )));
        }
        let n = topo.n() as usize;
        let broadcaster = setup.committee.broadcaster;
        if broadcaster.index() >= n {
            return Err(SimError::Setup(format!("broadcaster {broadcaster} outside topology")));
        }

        let mut insts: Vec<Option<BroadcastInstance>> = (0..n)
            .map(|i| {
                let id = NodeId(i as u32);
                topo.is_honest(id)
                    .then(|| BroadcastInstance::new(id, params, setup.committee.clone()))
            })
            .collect();

        let mut broadcast_root = None;
        if topo.is_honest(broadcaster) {
            let Some(obj) = &setup.object else {
                return Err(SimError::Setup("honest broadcaster needs an object".into()));
            };
            if obj.bits() != params.object_bits {
                return Err(SimError::Setup(format!(
                    "object is {} bits, params say {}",
                    obj.bits(),
                    params.object_bits
                )));
            }
            let mut rng =
                ChaCha12Rng::from_seed(derive_seed(setup.seed, "nonce", &[setup.instance_tag]));
            let set = fragment_object(obj, params.s, params.nonce_bits, &mut rng)?;
            broadcast_root = Some(set.root);
            insts[broadcaster.index()].as_mut().unwrap().install_local_object(&set);
        }

        let bits_sent =
            topo.honest_ids().map(|id| (id, Vec::with_capacity(params.rounds() as usize))).collect();
        Ok(EngineCore {
            topo,
            params,
            committee: setup.committee,
            exec: setup.exec,
            budget_bound_bits: setup.budget_bound_bits,
            instance_tag: setup.instance_tag,
            collect_trace: setup.collect_trace,
            insts,
            mail: vec![Vec::new(); n],
            honest_signed: BTreeMap::new(),
            bits_sent,
            peak_round_bits: 0,
            budget_violations: 0,
            forgery_violations: 0,
            trace: Vec::new(),
            broadcast_root,
            t: 0,
        })
    }

    pub(crate) fn topology(&self) -> &'a Topology {
        self.topo
    }

    pub(crate) fn done(&self) -> bool {
        self.t >= self.params.rounds()
    }

    /// Advances every node one round: deliver, step honest instances (in
    /// parallel when enabled), let the adversary act, audit its signatures,
    /// account honest bytes, enqueue next round's mail. `bad` is the set of
    /// link directions down for the global round this tick lands on.
    pub(crate) fn tick(&mut self, brain: &mut dyn AdversaryBrain, bad: &BTreeSet<(u32, u32)>) {
        debug_assert!(!self.done(), "tick past the last round");
        let topo = self.topo;
        let n = topo.n() as usize;
        let t = self.t;
        let mut inboxes = std::mem::replace(&mut self.mail, vec![Vec::new(); n]);
        let mut mal_inboxes = Inboxes::new();
        for id in topo.malicious_ids() {
            mal_inboxes.insert(id, std::mem::take(&mut inboxes[id.index()]));
        }

        let outs = step_all(&mut self.insts, &inboxes, t, self.exec);

        let ctx = AdversaryCtx {
            topology: topo,
            params: &self.params,
            committee: &self.committee,
            round: t,
        };
        let adv_out = brain.act(&ctx, &mal_inboxes);

        for (i, out) in outs.iter().enumerate() {
            let Some(step) = out else { continue };
            let u = NodeId(i as u32);
            let bits = step.msg.wire_bits(&self.params) * topo.degree(u) as u64;
            self.bits_sent.get_mut(&u).unwrap().push(bits);
            self.peak_round_bits = self.peak_round_bits.max(bits);
            if self.budget_bound_bits.is_some_and(|y| bits > y) {
                self.budget_violations += 1;
            }
            for (root, sig) in &step.msg.roots {
                if sig.contains(u) {
                    self.honest_signed.entry(*root).or_default().insert(u);
                }
            }
            for (_, sig) in &step.msg.last_frags {
                if sig.contains(u) {
                    self.honest_signed.entry(sig.item()).or_default().insert(u);
                }
            }
            if self.collect_trace {
                self.trace.push(TraceRecord {
                    round: t,
                    node: u.0,
                    instance: self.instance_tag,
                    bits_sent: bits,
                    roots_accepted: step.new_roots.iter().map(|d| d.short_hex()).collect(),
                    frag_accepted: step.frag_now,
                    blacklisted: step.new_blacklist.clone(),
                });
            }
            if !step.msg.is_empty() {
                for v in topo.neighbors(u) {
                    if !bad.contains(&(u.0, *v)) {
                        self.mail[*v as usize].push((u, step.msg.clone()));
                    }
                }
            }
        }

        for (u, per_neighbor) in adv_out {
            debug_assert!(!topo.is_honest(u), "brain emitted for honest node {u}");
            if topo.is_honest(u) {
                continue;
            }
            for (v, msg) in per_neighbor {
                if topo.neighbors(u).binary_search(&v.0).is_err() {
                    continue; // not a link; nothing to deliver on
                }
                let legal = msg
                    .roots
                    .iter()
                    .map(|(_, s)| s)
                    .chain(msg.last_frags.iter().map(|(_, s)| s))
                    .all(|sig| {
                        !sig.verify(&self.committee.weights)
                            || sig.signers().all(|(signer, _)| {
                                !topo.is_honest(signer)
                                    || self
                                        .honest_signed
                                        .get(&sig.item())
                                        .is_some_and(|set| set.contains(&signer))
                            })
                    });
                if !legal {
                    self.forgery_violations += 1;
                    continue;
                }
                if !bad.contains(&(u.0, v.0)) {
                    self.mail[v.index()].push((u, msg));
                }
            }
        }
        self.t += 1;
    }

    pub(crate) fn finish(mut self) -> Result<InvocationReport, SimError> {
        debug_assert!(self.done(), "finish before the last round");
        let mut outcomes = BTreeMap::new();
        let mut stats = BTreeMap::new();
        for (i, slot) in self.insts.iter_mut().enumerate() {
            let Some(inst) = slot else { continue };
            let id = NodeId(i as u32);
            match inst.finalize() {
                Ok(o) => {
                    outcomes.insert(id, o);
                }
                Err(v) => return Err(SimError::Violation { node: id, source: v }),
            }
            stats.insert(id, inst.stats.clone());
        }
        Ok(InvocationReport {
            outcomes,
            stats,
            bits_sent: self.bits_sent,
            peak_round_bits: self.peak_round_bits,
            budget_violations: self.budget_violations,
            forgery_violations: self.forgery_violations,
            rounds_run: self.t,
            broadcast_root: self.broadcast_root,
            trace: self.trace,
        })
    }
}

/// Runs one broadcast instance for its full `2dm + s` rounds and returns
/// every honest node's outcome plus accounting. The adversary sees exactly
/// the messages addressed to malicious nodes; any verifying signature it
/// emits is audited against what honest nodes actually signed, so simulated
/// unforgeability cannot be bypassed by a buggy strategy.
pub fn run_invocation(
    setup: InvocationSetup<'_>,
    brain: &mut dyn AdversaryBrain,
) -> Result<InvocationReport, SimError> {
    let mut core = EngineCore::new(setup)?;
    while !core.done() {
        let bad = core.topology().bad_edges_for_round(core.t as u64);
        core.tick(brain, &bad);
    }
    core.finish()
}

/// Everything one standalone invocation experiment needs, in plain data so
/// configs and sweeps can carry it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Experiment {
    pub n: u32,
    pub target_degree: u32,
    pub max_degree: u32,
    /// malicious stake fraction
    pub f: f64,
    pub m: u32,
    pub s: u32,
    pub object_bits: u64,
    pub strategy: String,
    pub seed: u64,
    pub bad_edges: BadEdgeMode,
    pub exec: ExecMode,
    pub budget_bound_bits: Option<u64>,
    pub collect_trace: bool,
}

impl Experiment {
    /// Desk-scale defaults; callers override what they study.
    pub fn new(n: u32, f: f64, strategy: &str, seed: u64) -> Self {
        Experiment {
            n,
            target_degree: 4,
            max_degree: 9,
            f,
            m: 4,
            s: 5,
            object_bits: 4096,
            strategy: strategy.to_string(),
            seed,
            bad_edges: BadEdgeMode::None,
            exec: ExecMode::Sequential,
            budget_bound_bits: None,
            collect_trace: false,
        }
    }
}

/// Builds the overlay, draws the committee, mints the object when the
/// broadcaster lands honest, and runs the named strategy once.
pub fn run_experiment(
    exp: &Experiment,
) -> Result<(Topology, Committee, InvocationReport), SimError> {
    let topo = build_topology_with(
        exp.n,
        exp.target_degree,
        exp.max_degree,
        exp.f,
        exp.seed,
        exp.bad_edges,
    )?;
    let committee = draw_committee(exp.n, exp.m, exp.seed);
    let params = Params::new(topo.d(), exp.m, exp.s, exp.object_bits);
    let object = topo.is_honest(committee.broadcaster).then(|| {
        let mut rng = ChaCha12Rng::from_seed(derive_seed(exp.seed, "object", &[]));
        super::mint_object(&params, &mut rng)
    });
    let mut brain = make_strategy(&exp.strategy, exp.seed)?;
    let report = run_invocation(
        InvocationSetup {
            topology: &topo,
            params,
            committee: committee.clone(),
            object,
            seed: exp.seed,
            exec: exp.exec,
            budget_bound_bits: exp.budget_bound_bits,
            instance_tag: 0,
            collect_trace: exp.collect_trace,
        },
        brain.as_mut(),
    )?;
    Ok((topo, committee, report))
}
