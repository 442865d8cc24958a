//! Randomized and exhaustive checks that cut across module boundaries:
//! commitment binding, fragmentation identity, signature monotonicity, the
//! root acceptance threshold, the fragment send order, honest send budgets
//! against the analytic bound, and agreement/validity/termination sweeps
//! over the full adversary catalog.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use bcube::analysis::{per_round_send_bound, BandwidthParams};
use bcube::crypto::{
    add_my_sig, build_merkle, derive_seed, fragment_object, reconstruct_object, verify_proof,
    AggregateSignature, BitChunk, Digest,
};
use bcube::protocol::{BroadcastInstance, Committee, Outcome, Params, RoundMessages};
use bcube::sim::{
    adversary_catalog, build_topology, committee_has_honest, mint_object, run_experiment,
    ExecMode, Experiment, Topology,
};
use bcube::NodeId;

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn random_chunk(bits: u64, rng: &mut ChaCha12Rng) -> BitChunk {
    let mut bytes = vec![0u8; (bits as usize).div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    BitChunk::from_bits(bytes, bits)
}

// ---------------------------------------------------------------------
// Commitment binding

/// Every single-bit mutation of a payload, proof index, or sibling digest
/// must break verification. Ten thousand trials over a 13-leaf tree (odd
/// leaf count, so the padded positions are in play too).
#[test]
fn merkle_proofs_reject_single_bit_mutations() {
    const LEAVES: u32 = 13;
    const PAYLOAD_BITS: u64 = 96;
    let mut r = rng(0x6d6b6c);
    let payloads: Vec<BitChunk> =
        (0..LEAVES).map(|_| random_chunk(PAYLOAD_BITS, &mut r)).collect();
    let tree = build_merkle(&payloads).unwrap();
    let root = tree.root();
    let depth = tree.depth();
    assert_eq!(depth, 4);

    let mut trials = 0u32;
    while trials < 10_500 {
        let leaf = r.random_range(1..=LEAVES);
        let payload = &payloads[(leaf - 1) as usize];
        let proof = tree.prove(leaf).unwrap();
        assert!(verify_proof(payload, &proof, &root), "unmutated proof must pass");

        match trials % 3 {
            0 => {
                // flip one payload bit
                let mut bytes = payload.as_bytes().to_vec();
                let bit = r.random_range(0..PAYLOAD_BITS);
                bytes[(bit / 8) as usize] ^= 0x80 >> (bit % 8);
                let mutated = BitChunk::from_bits(bytes, PAYLOAD_BITS);
                assert!(
                    !verify_proof(&mutated, &proof, &root),
                    "payload bit {bit} of leaf {leaf} slipped through"
                );
            }
            1 => {
                // flip one bit of the (1-based) index; stays in 1..=16
                let bit = r.random_range(0..depth);
                let mutated = MerkleProofMut { proof: proof.clone() }
                    .with_index(((proof.index - 1) ^ (1 << bit)) + 1);
                assert_ne!(mutated.index, proof.index);
                assert!(
                    !verify_proof(payload, &mutated, &root),
                    "index mutation {} -> {} slipped through",
                    proof.index,
                    mutated.index
                );
            }
            _ => {
                // flip one bit of one sibling digest
                let level = r.random_range(0..depth) as usize;
                let bit = r.random_range(0..256u32);
                let mut mutated = proof.clone();
                mutated.siblings[level].0[(bit / 8) as usize] ^= 0x80 >> (bit % 8);
                assert!(
                    !verify_proof(payload, &mutated, &root),
                    "sibling bit {bit} at level {level} slipped through"
                );
            }
        }
        trials += 1;
    }
}

/// Tiny helper so the index mutation reads as one expression.
struct MerkleProofMut {
    proof: bcube::crypto::MerkleProof,
}

impl MerkleProofMut {
    fn with_index(mut self, index: u32) -> bcube::crypto::MerkleProof {
        self.proof.index = index;
        self.proof
    }
}

// ---------------------------------------------------------------------
// Fragmentation identity

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    /// fragment -> reconstruct is the identity for arbitrary sizes and
    /// split counts, and every produced fragment carries a valid proof.
    #[test]
    fn fragmentation_round_trips(bits in 1u64..=20_000, s in 2u32..=64, seed in any::<u64>()) {
        let mut r = rng(seed);
        let object = random_chunk(bits, &mut r);
        let set = fragment_object(&object, s, 256, &mut r).unwrap();
        prop_assert_eq!(set.fragments.len(), s as usize);
        for frag in &set.fragments {
            prop_assert!(verify_proof(&frag.payload, &frag.proof, &set.root));
            prop_assert_eq!(frag.proof.index, frag.index);
        }
        let back = reconstruct_object(&set.fragments, s).unwrap();
        prop_assert_eq!(back, object);
    }

    /// Adding signatures never lowers the aggregate weight, and re-adding
    /// a signer is a no-op.
    #[test]
    fn signature_weight_is_monotone(adds in prop::collection::vec(0u32..6, 1..24)) {
        let item = Digest([3; 32]);
        let mut sig = AggregateSignature::empty(item);
        let mut last = 0u64;
        for node in adds {
            let weight = node % 3 + 1;
            sig = add_my_sig(&sig, NodeId(node), weight);
            prop_assert!(sig.weight() >= last, "weight dropped");
            let again = add_my_sig(&sig, NodeId(node), weight);
            prop_assert_eq!(again.weight(), sig.weight(), "re-add changed weight");
            last = sig.weight();
        }
    }
}

/// The headline object size: 2^24 bits split 800 ways survives the trip.
#[test]
fn fragmentation_round_trips_at_sixteen_megabit_scale() {
    let mut r = rng(11);
    let object = random_chunk(1 << 24, &mut r);
    let set = fragment_object(&object, 800, 256, &mut r).unwrap();
    assert_eq!(reconstruct_object(&set.fragments, 800).unwrap(), object);
}

// ---------------------------------------------------------------------
// Root acceptance threshold

/// Exhaustive grid over rounds and signature weights on a fixed committee:
/// a committee holder accepts a root exactly when `2d * weight >= t`, a
/// plain node exactly when `2d * weight >= t + d`. Acceptance is therefore
/// monotone in weight and antitone in arrival round.
#[test]
fn root_acceptance_matches_the_score_threshold() {
    // four single-coin holders; node 0 broadcasts. Verification demands
    // each signer's weight equal its draw, so the weight ladder is built
    // from growing subsets of holders.
    let committee =
        Committee::from_draws(&[NodeId(0), NodeId(1), NodeId(2), NodeId(3)]);
    let d = 2u32;
    let params = Params::new(d, 4, 3, 512);
    let root = Digest([0x7e; 32]);

    let sig_of_weight = |y: u32| -> AggregateSignature {
        AggregateSignature::assemble(root, (0..y).map(|i| (NodeId(i), 1)))
    };

    for t in 0..=14u32 {
        for y in 1..=4u32 {
            for (me, on_committee) in [(NodeId(5), false), (NodeId(1), true)] {
                let mut inst = BroadcastInstance::new(me, params.clone(), committee.clone());
                for tt in 0..t {
                    inst.step(tt, &[]);
                }
                let inbox = [(
                    NodeId(7),
                    RoundMessages { roots: vec![(root, sig_of_weight(y))], ..Default::default() },
                )];
                inst.step(t, &inbox);
                let accepted = inst.root_accepted().contains(&root);
                let threshold = if on_committee { t } else { t + d };
                assert_eq!(
                    accepted,
                    2 * d * y >= threshold,
                    "t={t} y={y} committee={on_committee}: got {accepted}"
                );
            }
        }
    }
}

// ---------------------------------------------------------------------
// Fragment send order on a hand-built line

/// On a four-node line every node sends the nonce fragment only after it
/// has sent all the data fragments of the same root, each round emits at
/// most two roots and one fragment, and everyone finalizes the object.
#[test]
fn nonce_fragment_is_sent_last_on_a_line() {
    let n = 4u32;
    let topo = Topology::from_edges(n, &[(0, 1), (1, 2), (2, 3)], &[true; 4]).unwrap();
    assert_eq!(topo.d(), 3);
    let committee = Committee::from_draws(&[NodeId(0), NodeId(0), NodeId(1)]);
    let s = 4u32;
    let params = Params::new(topo.d(), 3, s, 2048);

    let mut r = rng(21);
    let object = random_chunk(2048, &mut r);
    let set = fragment_object(&object, s, params.nonce_bits, &mut r).unwrap();

    let mut insts: Vec<BroadcastInstance> = (0..n)
        .map(|i| {
            if i == 0 {
                BroadcastInstance::init_broadcaster(
                    NodeId(0),
                    params.clone(),
                    committee.clone(),
                    &set,
                )
            } else {
                BroadcastInstance::new(NodeId(i), params.clone(), committee.clone())
            }
        })
        .collect();

    let mut sent: BTreeMap<(u32, Digest), BTreeSet<u32>> = BTreeMap::new();
    let mut prev: Vec<RoundMessages> = vec![RoundMessages::default(); n as usize];
    let mut nonce_sends = 0u32;

    for t in 0..params.rounds() {
        let mut next: Vec<RoundMessages> = Vec::with_capacity(n as usize);
        for i in 0..n {
            let inbox: Vec<(NodeId, RoundMessages)> = topo
                .neighbors(NodeId(i))
                .iter()
                .map(|&j| (NodeId(j), prev[j as usize].clone()))
                .collect();
            let out = insts[i as usize].step(t, &inbox);

            assert!(out.roots.len() <= 2, "node {i} round {t}: >2 roots");
            assert!(
                out.data_frags.len() + out.last_frags.len() <= 1,
                "node {i} round {t}: more than one fragment"
            );
            for tf in &out.data_frags {
                assert!(tf.fragment.index < s);
                sent.entry((i, tf.root)).or_default().insert(tf.fragment.index);
            }
            for (tf, _) in &out.last_frags {
                assert_eq!(tf.fragment.index, s);
                let before = sent.entry((i, tf.root)).or_default();
                assert_eq!(
                    before.len() as u32,
                    s - 1,
                    "node {i} round {t}: nonce sent before data fragments {before:?}"
                );
                nonce_sends += 1;
            }
            next.push(out);
        }
        prev = next;
    }
    assert!(nonce_sends >= n, "every node should have relayed the nonce fragment");

    for (i, inst) in insts.iter_mut().enumerate() {
        let outcome = inst.finalize().unwrap();
        assert_eq!(outcome, Outcome::Object(object.clone()), "node {i} disagreed");
    }
}

// ---------------------------------------------------------------------
// Sweeps over the adversary catalog

/// Re-mints the object [`run_experiment`] gives an honest broadcaster.
fn expected_object(params: &Params, seed: u64) -> BitChunk {
    let mut r = ChaCha12Rng::from_seed(derive_seed(seed, "object", &[]));
    mint_object(params, &mut r)
}

/// Analytic per-round send cap for a finished run's realized topology.
fn analytic_cap(topo: &Topology, params: &Params) -> u64 {
    per_round_send_bound(&BandwidthParams {
        w: topo.w(),
        l: params.object_bits,
        s: params.s,
        m: params.m,
        d: topo.d(),
        delta: 1.0,
        gamma: 1,
        l_hash: params.hash_bits,
        l_sig: params.sig_bits,
        l_nonce: params.nonce_bits,
        bandwidth: 1.0,
    })
    .unwrap()
    .exact_bits
}

/// Agreement whenever the committee has an honest holder, validity whenever
/// the broadcaster is honest, termination after exactly `2dm + s` rounds,
/// no forged signatures admitted, and honest per-round emission below the
/// analytic bound, for every cataloged strategy.
#[test]
fn catalog_sweeps_hold_agreement_validity_and_termination() {
    let mut runs = 0u32;
    let mut honest_committees = 0u32;
    let mut honest_broadcasters = 0u32;
    for strategy in adversary_catalog() {
        for (n, f) in [(10u32, 0.5f64), (20, 0.5), (20, 0.7)] {
            for seed in 0..6u64 {
                let mut exp = Experiment::new(n, f, strategy, seed);
                exp.m = 3;
                exp.s = 5;
                exp.object_bits = 2048;
                let (topo, committee, report) = run_experiment(&exp).unwrap();
                let params = Params::new(topo.d(), exp.m, exp.s, exp.object_bits);
                let tag = format!("{strategy} n={n} f={f} seed={seed}");

                assert_eq!(report.rounds_run, params.rounds(), "{tag}: termination");
                assert_eq!(report.forgery_violations, 0, "{tag}: forgery admitted");
                assert_eq!(report.budget_violations, 0, "{tag}: no budget was set");
                assert!(
                    report.peak_round_bits <= analytic_cap(&topo, &params),
                    "{tag}: honest node exceeded the analytic send bound"
                );

                if committee_has_honest(&topo, &committee) {
                    honest_committees += 1;
                    assert!(report.outcomes_agree(), "{tag}: agreement broke");
                }
                if topo.is_honest(committee.broadcaster) {
                    honest_broadcasters += 1;
                    let object = expected_object(&params, seed);
                    assert!(report.all_output(&object), "{tag}: validity broke");
                }
                runs += 1;
            }
        }
    }
    assert_eq!(runs as usize, adversary_catalog().len() * 3 * 6);
    assert!(honest_committees > runs / 2, "sweep barely exercised honest committees");
    assert!(honest_broadcasters > 10, "sweep barely exercised honest broadcasters");
}

/// A malicious committee holder that delays its signature can stall
/// fragment acceptance by at most `s - 1` rounds relative to the fully
/// honest run on the same topology, and never breaks agreement.
#[test]
fn withheld_signatures_stall_acceptance_by_less_than_s() {
    let s = 6u32;
    let mut compared = 0u32;
    for seed in 0..10u64 {
        let mut base = Experiment::new(16, 0.4, "honest-compliant", seed);
        base.m = 3;
        base.s = s;
        base.object_bits = 2048;
        let mut aligned = base.clone();
        aligned.strategy = "busy-aligner".into();

        let (topo, committee, honest) = run_experiment(&base).unwrap();
        let (_, _, stalled) = run_experiment(&aligned).unwrap();
        if !topo.is_honest(committee.broadcaster) {
            continue;
        }
        assert!(stalled.outcomes_agree(), "seed {seed}: agreement broke under stalling");
        for (node, base_stats) in &honest.stats {
            let (Some(fast), Some(slow)) = (
                base_stats.frag_accept_round,
                stalled.stats[node].frag_accept_round,
            ) else {
                panic!("seed {seed} node {node:?}: fragment acceptance missing");
            };
            assert!(
                slow <= fast + (s - 1),
                "seed {seed} node {node:?}: stalled {slow} vs honest {fast}"
            );
            compared += 1;
        }
    }
    assert!(compared > 30, "too few honest-broadcaster seeds to compare");
}

// ---------------------------------------------------------------------
// Topology diameter against an independent oracle

/// Breadth-first diameter of the honest subgraph, written without looking
/// at the topology module's own search.
fn bfs_honest_diameter(topo: &Topology) -> u32 {
    let honest: Vec<NodeId> = topo.honest_ids().collect();
    let mut worst = 0u32;
    for &start in &honest {
        let mut dist: BTreeMap<u32, u32> = BTreeMap::new();
        dist.insert(start.0, 0);
        let mut queue = VecDeque::from([start.0]);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            for &v in topo.neighbors(NodeId(u)) {
                if topo.is_honest(NodeId(v)) && !dist.contains_key(&v) {
                    dist.insert(v, du + 1);
                    queue.push_back(v);
                }
            }
        }
        assert_eq!(dist.len(), honest.len(), "honest subgraph disconnected");
        worst = worst.max(*dist.values().max().unwrap());
    }
    worst
}

#[test]
fn advertised_diameter_matches_a_bfs_oracle() {
    for seed in 0..5u64 {
        let topo = build_topology(40, 5, 9, 0.5, seed).unwrap();
        assert_eq!(topo.d(), bfs_honest_diameter(&topo), "seed {seed}");
        for i in 0..topo.n() {
            assert!(topo.degree(NodeId(i)) <= 9, "seed {seed}: degree cap broken");
        }
    }
}

/// A two-thousand-node overlay builds quickly, respects the degree cap,
/// and keeps the honest diameter small.
#[test]
fn large_overlay_builds_with_small_diameter() {
    let topo = build_topology(2000, 20, 42, 0.5, 1).unwrap();
    assert_eq!(topo.n(), 2000);
    assert!(topo.w() <= 42);
    assert_eq!(topo.honest_ids().count(), 1000);
    assert_eq!(topo.d(), bfs_honest_diameter(&topo));
    assert!(topo.d() <= 8, "diameter {} is implausibly large", topo.d());
}

// ---------------------------------------------------------------------
// Execution-mode determinism at the experiment level

/// Sequential and parallel execution of the same experiment produce the
/// same outcomes, stats, and traffic, message for message.
#[test]
fn execution_modes_agree_bit_for_bit() {
    for strategy in ["honest-compliant", "equivocator", "flooder"] {
        let mut exp = Experiment::new(14, 0.5, strategy, 9);
        exp.m = 3;
        exp.collect_trace = true;
        let (_, _, seq) = run_experiment(&exp).unwrap();
        exp.exec = ExecMode::Parallel;
        let (_, _, par) = run_experiment(&exp).unwrap();
        assert_eq!(seq.outcomes, par.outcomes, "{strategy}");
        assert_eq!(seq.bits_sent, par.bits_sent, "{strategy}");
        assert_eq!(seq.trace, par.trace, "{strategy}");
        assert_eq!(seq.peak_round_bits, par.peak_round_bits, "{strategy}");
    }
}
