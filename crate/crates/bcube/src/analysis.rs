//! Closed-form guarantees: the chain safety bound and minimal committee
//! size, the worst-case per-round send bound, throughput and
//! throughput-to-bandwidth (TTB) estimates, per-node crypto operation
//! budgets, and TTB bounds of the classical broadcast protocols used as
//! baselines.
//!
//! Everything here is a pure, reentrant computation. The simulator is
//! cross-checked against these numbers: measured per-round honest traffic
//! must stay under [`per_round_send_bound`] for every adversary strategy,
//! and measured chain throughput must land near [`throughput_estimate`].

use serde::Serialize;
use thiserror::Error;

use crate::crypto::ceil_log2;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("f^tau = {f_tau:.6} leaves no positive margin below {margin}; raise tau")]
    ChallengeMarginExhausted { f_tau: f64, margin: f64 },
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error(
        "no committee size reaches the target: the bound without the \
         committee term is already {limit:.12}; raise tau or lambda"
    )]
    InfeasibleCommittee { limit: f64 },
    #[error("round budget too small: {0}")]
    BudgetTooSmall(String),
    #[error("unknown baseline protocol {0:?}")]
    UnknownProtocol(String),
}

/// Upper tail `P[X > lambda]` for `X ~ Poisson(mean)`.
///
/// Terms are generated by the multiplicative recurrence
/// `p(k+1) = p(k) * mean / (k+1)` in a scaled linear space (the anchor term
/// is computed once in log space), summed with Kahan compensation, and cut
/// off once a term falls below `1e-30` of the running sum. Whichever side
/// of `lambda` has less mass is the one summed, so the result stays
/// accurate both deep in the tail and near the bulk.
pub fn poisson_tail_above(mean: f64, lambda: u64) -> f64 {
    assert!(mean >= 0.0 && mean.is_finite(), "mean must be finite and non-negative");
    if mean == 0.0 {
        return 0.0;
    }
    const CUTOFF: f64 = 1e-30;
    let ln_mean = mean.ln();
    // ln p(k) built by recurrence; f64 keeps ~1e-13 relative error here
    let ln_term = |k: u64| -> f64 {
        let mut ln = -mean;
        for i in 1..=k {
            ln += ln_mean - (i as f64).ln();
        }
        ln
    };
    let mut sum = 1.0f64; // the anchor term, scaled to 1
    let mut comp = 0.0f64;
    let add = |sum: &mut f64, comp: &mut f64, x: f64| {
        let y = x - *comp;
        let t = *sum + y;
        *comp = (t - *sum) - y;
        *sum = t;
    };
    if lambda as f64 >= mean {
        // tail side: terms decrease strictly beyond the mean
        let anchor = ln_term(lambda + 1);
        let mut term = 1.0f64;
        let mut k = lambda + 1;
        loop {
            k += 1;
            term *= mean / k as f64;
            add(&mut sum, &mut comp, term);
            if term < sum * CUTOFF {
                break;
            }
        }
        anchor.exp() * sum
    } else {
        // bulk side: P[X <= lambda], terms decrease going down from lambda
        let anchor = ln_term(lambda);
        let mut term = 1.0f64;
        let mut k = lambda;
        while k > 0 {
            term *= k as f64 / mean;
            add(&mut sum, &mut comp, term);
            if term < sum * CUTOFF {
                break;
            }
            k -= 1;
        }
        1.0 - anchor.exp() * sum
    }
}

/// Inputs of the per-epoch chain safety bound.
///
/// `challenge_margin` and `pow_mean` default to 0.86 and 807; they are the
/// two constants tied to the epoch schedule shape and the PoW difficulty
/// (the schedule is sized so honest miners expect two solutions per
/// window), and move only if those are changed.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SafetyParams {
    /// Adversarial stake fraction, at most 0.99.
    pub f: f64,
    /// Committee size (coins per slot).
    pub m: u32,
    /// Challenge and candidate slot count per epoch.
    pub tau: u32,
    /// Cap on PoW solutions seen per epoch.
    pub lambda: u64,
    /// Target failure probability: the bound should reach `1 - epsilon`.
    pub epsilon: f64,
    pub challenge_margin: f64,
    pub pow_mean: f64,
}

impl SafetyParams {
    pub fn new(f: f64, m: u32, tau: u32, lambda: u64, epsilon: f64) -> Self {
        SafetyParams { f, m, tau, lambda, epsilon, challenge_margin: 0.86, pow_mean: 807.0 }
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        if !(0.0..=0.99).contains(&self.f) {
            return Err(AnalysisError::BadParams(format!("f = {} outside [0, 0.99]", self.f)));
        }
        if self.m < 1 || self.tau < 1 || self.lambda < 1 {
            return Err(AnalysisError::BadParams("m, tau, lambda must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(AnalysisError::BadParams(format!("epsilon = {}", self.epsilon)));
        }
        Ok(())
    }
}

/// The three-term safety bound and its pieces. The bound is the probability
/// that one more epoch stays safe (honest committees everywhere, fresh
/// challenge, solution count under `lambda`), conditioned on the previous
/// epochs being safe; that conditioning carries a `Pr > 0.9` requirement
/// which is the caller's to uphold.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SafetyReport {
    pub params: SafetyParams,
    /// `lambda * f^m / (0.9 * (margin - f^tau))`: some committee of the
    /// epoch is all-malicious.
    pub term_committee: f64,
    /// `lambda * f^tau / (0.9 * (margin - f^tau))`: the challenge slots'
    /// broadcasters are all malicious, so the challenge is predictable.
    pub term_challenge: f64,
    /// `P[X > lambda]` for `X ~ Poisson(pow_mean)`: more solutions than the
    /// cap.
    pub term_pow: f64,
    pub bound: f64,
    /// `bound >= 1 - epsilon`.
    pub meets_target: bool,
}

impl SafetyReport {
    /// Residual risk if the adversary can corrupt a node `x` epochs after
    /// learning it is on a committee (mildly adaptive corruption):
    /// `lambda * (f^tau + 0.14)^(x-2) / (0.9 * (margin - f^tau))`, roughly
    /// `lambda * 0.14^(x-2)` for small `f^tau`. Not part of `bound`.
    pub fn corruption_escalation(&self, x: u32) -> f64 {
        assert!(x >= 2, "escalation is defined from two epochs of delay");
        let p = &self.params;
        let f_tau = p.f.powi(p.tau as i32);
        let den = 0.9 * (p.challenge_margin - f_tau);
        p.lambda as f64 * (f_tau + 0.14).powi(x as i32 - 2) / den
    }
}

/// Evaluates the safety bound
/// `1 - term_committee - term_challenge - term_pow`.
pub fn safety_bound(p: &SafetyParams) -> Result<SafetyReport, AnalysisError> {
    p.validate()?;
    let f_tau = p.f.powi(p.tau as i32);
    if f_tau >= p.challenge_margin {
        return Err(AnalysisError::ChallengeMarginExhausted {
            f_tau,
            margin: p.challenge_margin,
        });
    }
    let den = 0.9 * (p.challenge_margin - f_tau);
    let term_committee = p.lambda as f64 * p.f.powi(p.m as i32) / den;
    let term_challenge = p.lambda as f64 * f_tau / den;
    let term_pow = poisson_tail_above(p.pow_mean, p.lambda);
    let bound = 1.0 - term_committee - term_challenge - term_pow;
    Ok(SafetyReport {
        params: *p,
        term_committee,
        term_challenge,
        term_pow,
        bound,
        meets_target: bound >= 1.0 - p.epsilon,
    })
}

/// Smallest committee size `m` whose safety bound reaches `1 - epsilon`
/// under the default constants. The bound is monotone in `m` (only the
/// committee term depends on it), so this is a pure threshold search.
pub fn min_committee(f: f64, tau: u32, lambda: u64, epsilon: f64) -> Result<u32, AnalysisError> {
    let probe = |m: u32| -> Result<bool, AnalysisError> {
        Ok(safety_bound(&SafetyParams::new(f, m, tau, lambda, epsilon))?.meets_target)
    };
    // feasibility: even with the committee term gone the other two terms
    // must leave room; f^m never reaches zero, so cap the search
    const CAP: u32 = 1 << 24;
    if !probe(CAP)? {
        let r = safety_bound(&SafetyParams::new(f, CAP, tau, lambda, epsilon))?;
        return Err(AnalysisError::InfeasibleCommittee { limit: r.bound });
    }
    let (mut lo, mut hi) = (0u32, CAP); // invariant: lo fails (or is 0), hi passes
    if probe(1)? {
        return Ok(1);
    }
    lo = lo.max(1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Inputs of the bandwidth and throughput calculators. Sizes are in bits,
/// `delta` in seconds, `bandwidth` in bits per second.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BandwidthParams {
    /// Maximum node degree.
    pub w: u32,
    /// Object size.
    pub l: u64,
    /// Fragments per object.
    pub s: u32,
    /// Committee size (the signer bitmap rides every signature).
    pub m: u32,
    /// Overlay diameter bound.
    pub d: u32,
    /// Round duration, seconds.
    pub delta: f64,
    /// Pipelined invocations per node.
    pub gamma: u32,
    pub l_hash: u32,
    pub l_sig: u32,
    pub l_nonce: u32,
    /// Available per-node bandwidth, bits per second.
    pub bandwidth: f64,
}

impl BandwidthParams {
    /// The f = 0.7 deployment point used throughout the docs: 20 Mbps
    /// nodes, 12 s rounds, diameter 6, committee 80, 800 fragments, 2 MB
    /// objects, 217 pipelined invocations.
    pub fn reference_f07() -> Self {
        BandwidthParams {
            w: 40,
            l: 1 << 24,
            s: 800,
            m: 80,
            d: 6,
            delta: 12.0,
            gamma: 217,
            l_hash: 256,
            l_sig: 768,
            l_nonce: 256,
            bandwidth: 20e6,
        }
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        if self.s < 2 {
            return Err(AnalysisError::BadParams(format!("s = {} below 2", self.s)));
        }
        if self.w == 0
            || self.l == 0
            || self.m == 0
            || self.d == 0
            || self.gamma == 0
            || self.l_hash == 0
            || self.l_sig == 0
            || self.l_nonce == 0
            || !(self.delta > 0.0)
            || !(self.bandwidth > 0.0)
        {
            return Err(AnalysisError::BadParams("all parameters must be positive".into()));
        }
        Ok(())
    }

    /// Fixed per-round signature overhead: two root messages' worth.
    fn root_overhead(&self) -> u64 {
        2 * (self.l_hash + self.l_sig + self.m) as u64
    }

    /// Merkle proof bits: one sibling digest plus one direction bit per
    /// level, the direction bits doubling as the leaf index.
    fn proof_bits(&self, s: u32) -> u64 {
        (self.l_hash + 1) as u64 * ceil_log2(s) as u64
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SendBound {
    /// Exact worst-case bits an honest node sends per round per invocation.
    pub exact_bits: u64,
    /// The headline approximation `w * l / s`.
    pub approx_bits: f64,
    /// `exact / approx`; near 1 when the data-fragment payload dominates.
    pub ratio: f64,
}

/// Worst-case per-round send bound
/// `Y = w * (2*(l_hash + l_sig + m) + max(data fragment, last fragment))`.
///
/// Honest senders emit at most two root messages and one fragment per
/// round, each to at most `w` neighbors, no matter what the adversary does;
/// the bound is the sum of those field widths.
pub fn per_round_send_bound(p: &BandwidthParams) -> Result<SendBound, AnalysisError> {
    p.validate()?;
    let data_branch = p.l.div_ceil(p.s as u64 - 1) + p.proof_bits(p.s);
    let last_branch = p.l_nonce as u64 + p.proof_bits(p.s) + (p.l_sig + p.m) as u64;
    let exact_bits = p.w as u64 * (p.root_overhead() + data_branch.max(last_branch));
    let approx_bits = p.w as f64 * p.l as f64 / p.s as f64;
    Ok(SendBound { exact_bits, approx_bits, ratio: exact_bits as f64 / approx_bits })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThroughputEstimate {
    /// Largest object size such that `gamma` concurrent invocations fill
    /// the round budget exactly: `Y(l0) * gamma = bandwidth * delta`.
    pub l0_bits: f64,
    /// `gamma * l0 / ((2dm + s) * delta)`, bits per second.
    pub throughput: f64,
    /// Throughput-to-bandwidth ratio `T / B`.
    pub ttb_ratio: f64,
}

/// Solves the round-budget equation for the object size, then converts to
/// throughput. `Y` is affine in `l` on the data-fragment branch, so `l0`
/// has the closed form `(s-1) * (B*delta/(w*gamma) - overhead)`; `p.l` is
/// ignored. Errors if the budget is too small for the data branch to
/// dominate (the protocol would be carrying signatures, not payload).
pub fn throughput_estimate(p: &BandwidthParams) -> Result<ThroughputEstimate, AnalysisError> {
    p.validate()?;
    let per_round = p.bandwidth * p.delta / p.gamma as f64 / p.w as f64;
    let overhead = (p.root_overhead() + p.proof_bits(p.s)) as f64;
    let l0 = (p.s as f64 - 1.0) * (per_round - overhead);
    let last_branch = (p.l_nonce as u64 + p.proof_bits(p.s) + (p.l_sig + p.m) as u64) as f64;
    if l0 <= 0.0 || l0 / (p.s as f64 - 1.0) + (p.proof_bits(p.s) as f64) < last_branch {
        return Err(AnalysisError::BudgetTooSmall(format!(
            "per-round per-invocation budget {per_round:.0} bits cannot fit \
             a dominating data fragment at s = {}",
            p.s
        )));
    }
    let rounds = 2 * p.d as u64 * p.m as u64 + p.s as u64;
    let throughput = p.gamma as f64 * l0 / (rounds as f64 * p.delta);
    Ok(ThroughputEstimate { l0_bits: l0, throughput, ttb_ratio: throughput / p.bandwidth })
}

/// Worst-case per-second crypto operation budget of one node, valid for
/// any adversary behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CryptoOpBounds {
    /// Adding a signer to an aggregate signature: at most 3 per round per
    /// invocation.
    pub sign_adds: u64,
    /// Signature verifications that pass: at most 3 per round per
    /// invocation (two roots and one last fragment actually used).
    pub sig_verify_pass: u64,
    /// Signature verifications that fail: each failure blacklists the
    /// sending neighbor forever, so at most one per neighbor.
    pub sig_verify_fail: u64,
    /// Merkle verifications that pass: at most 1 per round per invocation.
    pub merkle_verify_pass: u64,
    /// Merkle verifications that fail: one per neighbor, as above.
    pub merkle_verify_fail: u64,
    /// Signature operations: adds plus both verification kinds.
    pub sig_ops_total: u64,
    /// Secure hashes: every Merkle verification costs `proof_depth` hashes.
    pub hash_total: u64,
}

/// Per-second operation bounds for `gamma_active` concurrent invocations,
/// round length `delta` seconds, degree cap `w_max`, and Merkle proofs
/// `proof_depth` levels deep.
pub fn crypto_op_bounds(
    gamma_active: u32,
    delta: f64,
    w_max: u32,
    proof_depth: u32,
) -> CryptoOpBounds {
    assert!(delta > 0.0, "round duration must be positive");
    let per_sec = |per_round: u64| (per_round as f64 * gamma_active as f64 / delta).ceil() as u64;
    let sign_adds = per_sec(3);
    let sig_verify_pass = per_sec(3);
    let merkle_verify_pass = per_sec(1);
    let (sig_verify_fail, merkle_verify_fail) = (w_max as u64, w_max as u64);
    CryptoOpBounds {
        sign_adds,
        sig_verify_pass,
        sig_verify_fail,
        merkle_verify_pass,
        merkle_verify_fail,
        sig_ops_total: sign_adds + sig_verify_pass + sig_verify_fail,
        hash_total: (merkle_verify_pass + merkle_verify_fail) * proof_depth as u64,
    }
}

/// Baseline broadcast protocols compared against, by their TTB upper
/// bounds. All of them flood whole objects (or all-to-all fragments)
/// somewhere in their schedule, which is what caps their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Baseline {
    /// Signature-chain broadcast over `fn + d` flooding rounds.
    DolevStrong,
    /// Committee-relay variant, `2dm` flooding rounds.
    Chan,
    /// Per-fragment sub-broadcasts, `n^2` rounds on a clique.
    HirtRaykov,
    /// Fragment propagation in about `n` rounds on a clique.
    GaneshPatra,
    /// Erasure-coded fragments, `fn + 1` rounds on a clique.
    Nayak,
    /// Constant-round broadcast, `d` object-flooding rounds.
    Wan,
}

pub const BASELINES: [Baseline; 6] = [
    Baseline::DolevStrong,
    Baseline::Chan,
    Baseline::HirtRaykov,
    Baseline::GaneshPatra,
    Baseline::Nayak,
    Baseline::Wan,
];

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::DolevStrong => "dolev-strong",
            Baseline::Chan => "chan",
            Baseline::HirtRaykov => "hirt-raykov",
            Baseline::GaneshPatra => "ganesh-patra",
            Baseline::Nayak => "nayak",
            Baseline::Wan => "wan",
        }
    }

    pub fn from_name(name: &str) -> Result<Baseline, AnalysisError> {
        BASELINES
            .iter()
            .find(|b| b.name() == name)
            .copied()
            .ok_or_else(|| AnalysisError::UnknownProtocol(name.to_string()))
    }
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BaselineParams {
    pub n: u32,
    pub f: f64,
    pub w: u32,
    pub d: u32,
    pub m: u32,
}

/// Closed-form TTB upper bound of a baseline protocol.
pub fn baseline_ttb(protocol: Baseline, p: &BaselineParams) -> Result<f64, AnalysisError> {
    if p.n == 0 || p.w == 0 || p.d == 0 || p.m == 0 || !(0.0..=1.0).contains(&p.f) {
        return Err(AnalysisError::BadParams("baseline parameters must be positive".into()));
    }
    let (n, f, w, d, m) = (p.n as f64, p.f, p.w as f64, p.d as f64, p.m as f64);
    if matches!(protocol, Baseline::DolevStrong | Baseline::Nayak) && f == 0.0 {
        return Err(AnalysisError::BadParams("this baseline's bound needs f > 0".into()));
    }
    Ok(match protocol {
        Baseline::DolevStrong => 1.0 / (w * f * n),
        Baseline::Chan => 1.0 / (2.0 * d * m * w),
        Baseline::HirtRaykov => 1.0 / n,
        Baseline::GaneshPatra => 1.0 / n,
        Baseline::Nayak => 1.0 / (f * n),
        Baseline::Wan => 1.0 / (d * w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS30: f64 = 1.0 / (1u64 << 30) as f64;

    /// High-precision reference for `P[X > 1000]`, `X ~ Poisson(807)`,
    /// frozen from an arbitrary-precision summation.
    const POIS_807_1000: f64 = 2.53219161131624e-11;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn poisson_tail_matches_frozen_reference() {
        let tail = poisson_tail_above(807.0, 1000);
        assert!(rel_err(tail, POIS_807_1000) < 1e-9, "tail = {tail:e}");
        // far tail stays finite and positive: 30 sigma out
        let lam = (807.0 + 30.0 * 807.0f64.sqrt()) as u64;
        let far = poisson_tail_above(807.0, lam);
        assert!(far > 0.0 && far < 1e-6, "far tail = {far:e}");
        // bulk side: about half the mass sits above the mean
        let half = poisson_tail_above(807.0, 806);
        assert!((half - 0.5).abs() < 0.02, "median tail = {half}");
        // sanity against a tiny exact case: P[X > 2], X ~ Poisson(1)
        // = 1 - e^-1 (1 + 1 + 1/2)
        let exact = 1.0 - (-1.0f64).exp() * 2.5;
        assert!(rel_err(poisson_tail_above(1.0, 2), exact) < 1e-12);
        assert_eq!(poisson_tail_above(0.0, 3), 0.0);
    }

    #[test]
    fn poisson_tail_agrees_with_an_independent_implementation() {
        use statrs::distribution::{DiscreteCDF, Poisson};
        for &(mean, lam) in &[
            (2.0, 5u64),
            (50.0, 40),
            (50.0, 60),
            (807.0, 700),
            (807.0, 900),
            (807.0, 1000),
            (1000.0, 1200),
        ] {
            let sf = Poisson::new(mean).unwrap().sf(lam);
            let got = poisson_tail_above(mean, lam);
            // the library's survival function loses precision deep in the
            // tail (it subtracts from the CDF), so loosen there
            let tol = if sf > 1e-3 { 1e-9 } else { 1e-4 };
            assert!(rel_err(got, sf) < tol, "mean={mean} lam={lam}: {got:e} vs {sf:e}");
        }
    }

    #[test]
    fn safety_bound_reproduces_the_reference_design_point() {
        let r = safety_bound(&SafetyParams::new(0.7, 79, 91, 1000, EPS30)).unwrap();
        assert!(r.meets_target, "bound = {}", r.bound);
        assert!(r.bound >= 1.0 - EPS30);
        // one committee member fewer and the target is missed
        let r78 = safety_bound(&SafetyParams::new(0.7, 78, 91, 1000, EPS30)).unwrap();
        assert!(!r78.meets_target, "bound = {}", r78.bound);
        assert!(rel_err(r.term_pow, POIS_807_1000) < 1e-9);
    }

    #[test]
    fn safety_bound_limits_and_domain() {
        // f -> 0: both stake terms vanish, only the Poisson term remains
        let r = safety_bound(&SafetyParams::new(0.0, 5, 5, 1000, EPS30)).unwrap();
        assert_eq!(r.term_committee, 0.0);
        assert_eq!(r.term_challenge, 0.0);
        assert!(rel_err(r.bound, 1.0 - POIS_807_1000) < 1e-12);
        // f^tau at the margin is a domain error
        assert!(matches!(
            safety_bound(&SafetyParams::new(0.99, 10, 1, 1000, EPS30)),
            Err(AnalysisError::ChallengeMarginExhausted { .. })
        ));
        assert!(matches!(
            safety_bound(&SafetyParams::new(1.5, 10, 10, 1000, EPS30)),
            Err(AnalysisError::BadParams(_))
        ));
    }

    #[test]
    fn safety_bound_is_monotone_in_m_and_tau() {
        for &f in &[0.5, 0.7] {
            let mut prev = f64::NEG_INFINITY;
            for m in [10, 20, 40, 80, 160] {
                let b = safety_bound(&SafetyParams::new(f, m, 91, 1000, EPS30)).unwrap().bound;
                assert!(b >= prev, "f={f} m={m}");
                prev = b;
            }
            let mut prev = f64::NEG_INFINITY;
            for tau in [40, 60, 91, 120, 200] {
                let b = safety_bound(&SafetyParams::new(f, 80, tau, 1000, EPS30)).unwrap().bound;
                assert!(b >= prev, "f={f} tau={tau}");
                prev = b;
            }
        }
    }

    #[test]
    fn corruption_escalation_drops_exponentially() {
        let r = safety_bound(&SafetyParams::new(0.7, 79, 91, 1000, EPS30)).unwrap();
        let e2 = r.corruption_escalation(2);
        let e3 = r.corruption_escalation(3);
        let e6 = r.corruption_escalation(6);
        // x = 2 leaves the bare lambda / denominator factor
        assert!(rel_err(e2, 1000.0 / (0.9 * (0.86 - 0.7f64.powi(91)))) < 1e-12);
        // each extra epoch multiplies by roughly 0.14
        assert!(rel_err(e3 / e2, 0.14 + 0.7f64.powi(91)) < 1e-9);
        assert!(e6 < e2 * 0.15f64.powi(4) * 1.01);
    }

    #[test]
    fn min_committee_reproduces_the_reference_points() {
        // frozen from the same arbitrary-precision oracle: 79 passes, 78
        // does not, at f = 0.7, tau = 91, lambda = 1000, epsilon = 2^-30
        let m = min_committee(0.7, 91, 1000, EPS30).unwrap();
        assert_eq!(m, 79);
        assert!((79..=80).contains(&m));
        // f = 0.4 with the same tau and lambda needs far fewer coins; the
        // published figure of ~35 pairs with an unstated tau and lambda,
        // so only the order of magnitude is checked here
        let m04 = min_committee(0.4, 91, 1000, EPS30).unwrap();
        assert_eq!(m04, 31);
        assert!((25..=35).contains(&m04));
        // epsilon = 1 accepts any committee once the params are benign
        assert_eq!(min_committee(1e-4, 10, 1000, 1.0).unwrap(), 1);
        // tau too small for the target: infeasible no matter the committee
        assert!(matches!(
            min_committee(0.7, 3, 1000, EPS30),
            Err(AnalysisError::InfeasibleCommittee { .. })
        ));
    }

    #[test]
    fn send_bound_matches_frozen_reference_and_branches() {
        // frozen by independent evaluation: data branch
        // ceil(2^24 / 799) + 257 * 10 = 23568, roots 2 * 1104,
        // Y = 40 * 25776
        let r = per_round_send_bound(&BandwidthParams::reference_f07()).unwrap();
        assert_eq!(r.exact_bits, 1_031_040);
        assert!((r.approx_bits - 838_860.8).abs() < 1e-6);
        assert!((r.ratio - 1.229_095_458_984_375).abs() < 1e-12);
        // the headline "Y ~ wl/s" approximation is ~23% low at this
        // design point; it only tightens for larger payloads per fragment
        assert!(r.ratio > 1.15 && r.ratio < 1.25);

        // tiny object at s = 2: the last-fragment branch dominates
        let mut p = BandwidthParams::reference_f07();
        p.s = 2;
        p.l = 8;
        let r = per_round_send_bound(&p).unwrap();
        let last = 256 + 257 + 768 + 80; // nonce + proof + sig + bitmap
        assert_eq!(r.exact_bits, 40 * (2 * 1104 + last));

        // linear in w
        let mut p2 = BandwidthParams::reference_f07();
        p2.w *= 2;
        assert_eq!(
            per_round_send_bound(&p2).unwrap().exact_bits,
            2 * per_round_send_bound(&BandwidthParams::reference_f07()).unwrap().exact_bits
        );
        p2.s = 1;
        assert!(per_round_send_bound(&p2).is_err());
    }

    #[test]
    fn throughput_matches_the_reference_deployment() {
        // frozen closed form: l0 = 799 * (20e6*12/(40*217) - 4778)
        // = 18_274_543.898..., T = 187_764.016... bits/s
        let t = throughput_estimate(&BandwidthParams::reference_f07()).unwrap();
        assert!(rel_err(t.l0_bits, 18_274_543.898_617_51) < 1e-12);
        assert!(rel_err(t.throughput, 187_764.016_382_575_73) < 1e-12);
        // the published end-to-end figure is ~163 Kbps with a 90% budget;
        // the full-budget closed form lands within 25% of it
        assert!((t.throughput - 163e3).abs() / 163e3 < 0.25);
        assert!(rel_err(t.ttb_ratio, t.throughput / 20e6) < 1e-15);
    }

    #[test]
    fn ttb_ratio_approaches_half_w_in_the_balanced_regime() {
        // s = 2dm puts equal rounds in both phases; the ratio then sits
        // within a fraction of a percent of 1/(2w)
        let mut p = BandwidthParams::reference_f07();
        p.s = 2 * p.d * p.m;
        p.gamma = 1;
        let t = throughput_estimate(&p).unwrap();
        let ideal = 1.0 / (2.0 * p.w as f64);
        assert!((t.ttb_ratio - ideal).abs() / ideal < 0.01, "ratio = {}", t.ttb_ratio);
    }

    #[test]
    fn throughput_is_nearly_gamma_free_and_scales_inverse_w() {
        let mut p = BandwidthParams::reference_f07();
        p.s = 2 * p.d * p.m;
        let mut ts = Vec::new();
        for gamma in [1, 2, 10] {
            p.gamma = gamma;
            ts.push(throughput_estimate(&p).unwrap().throughput);
        }
        let spread = (ts.iter().cloned().fold(f64::MIN, f64::max)
            - ts.iter().cloned().fold(f64::MAX, f64::min))
            / ts.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.01, "gamma spread = {spread}");

        // R ~ 1/w: doubling w halves the ratio, to within the overhead slack
        p.gamma = 1;
        let mut ratios = Vec::new();
        for w in [10, 20, 40] {
            p.w = w;
            ratios.push(throughput_estimate(&p).unwrap().ttb_ratio);
        }
        assert!((ratios[0] / ratios[1] - 2.0).abs() < 0.02);
        assert!((ratios[1] / ratios[2] - 2.0).abs() < 0.02);

        // ratio is independent of B
        p.w = 40;
        let r1 = throughput_estimate(&p).unwrap().ttb_ratio;
        p.bandwidth *= 8.0;
        let r8 = throughput_estimate(&p).unwrap().ttb_ratio;
        assert!(rel_err(r8, r1) < 0.01);

        // starving the budget errors out instead of reporting nonsense
        p.bandwidth = 1e3;
        assert!(matches!(
            throughput_estimate(&p),
            Err(AnalysisError::BudgetTooSmall(_))
        ));
    }

    #[test]
    fn crypto_op_bounds_reproduce_the_reference_budget() {
        let b = crypto_op_bounds(217, 12.0, 42, 10);
        assert_eq!(
            b,
            CryptoOpBounds {
                sign_adds: 55,
                sig_verify_pass: 55,
                sig_verify_fail: 42,
                merkle_verify_pass: 19,
                merkle_verify_fail: 42,
                sig_ops_total: 152,
                hash_total: 610,
            }
        );
        // no invocations: only the per-neighbor failure budgets remain
        let idle = crypto_op_bounds(0, 12.0, 42, 10);
        assert_eq!(idle.sign_adds, 0);
        assert_eq!(idle.sig_ops_total, 42);
        assert_eq!(idle.hash_total, 420);
        // rate terms are linear in 1/delta (exact at divisible points)
        let fast = crypto_op_bounds(8, 2.0, 42, 10);
        let slow = crypto_op_bounds(8, 4.0, 42, 10);
        assert_eq!(fast.sign_adds, 2 * slow.sign_adds);
        assert_eq!(fast.merkle_verify_pass, 2 * slow.merkle_verify_pass);
    }

    #[test]
    fn baseline_ttb_bounds_match_their_closed_forms() {
        let p = BaselineParams { n: 10_000, f: 0.7, w: 40, d: 6, m: 80 };
        let ds = baseline_ttb(Baseline::DolevStrong, &p).unwrap();
        assert!(rel_err(ds, 3.571_428_571_428_571_4e-6) < 1e-12);
        assert!(ds < 3.6e-6);
        assert_eq!(baseline_ttb(Baseline::HirtRaykov, &p).unwrap(), 1e-4);
        assert_eq!(baseline_ttb(Baseline::GaneshPatra, &p).unwrap(), 1e-4);
        assert!(rel_err(baseline_ttb(Baseline::Nayak, &p).unwrap(), 1.0 / 7000.0) < 1e-12);
        assert_eq!(baseline_ttb(Baseline::Wan, &p).unwrap(), 1.0 / 240.0);
        assert_eq!(baseline_ttb(Baseline::Chan, &p).unwrap(), 1.0 / (2.0 * 6.0 * 80.0 * 40.0));
        assert_eq!(Baseline::from_name("wan").unwrap(), Baseline::Wan);
        assert!(matches!(
            Baseline::from_name("pbft"),
            Err(AnalysisError::UnknownProtocol(_))
        ));
        for b in BASELINES {
            assert_eq!(Baseline::from_name(b.name()).unwrap(), b);
        }
    }
}
