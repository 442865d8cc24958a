//! Simulated proof-of-work mining.
//!
//! Real miners hash `(challenge, x)` until the digest clears a difficulty
//! target tuned so the honest network expects `honest_mean` solutions inside
//! its solving window. The simulation keeps exactly that statistics and
//! nothing else: solution counts are Poisson, arrival times are uniform over
//! the solver's window, and each solution is an opaque token derived from
//! the challenge. "Verifying" a solution means checking membership in the
//! epoch's token set, which models the fact that junk bits cannot pass the
//! difficulty check.
//!
//! Honest miners only work the sanctioned window `[t2, t3)`. The adversary
//! mines the whole epoch `[t1, t5)` at `multiplier` times the honest hash
//! rate, so its expected count is `multiplier * honest_mean * (t5 - t1) /
//! (t3 - t2)`. If it additionally predicted the challenge (it controlled
//! every nonce feeding it), it gets one extra solving run pre-dated to `t1`,
//! modelling work done before the epoch started.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};

use crate::crypto::{derive_seed, sha256_parts, tag, Digest};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowEvent {
    /// Round the solution exists from.
    pub round: u64,
    /// `None` for adversary solutions; otherwise the honest node that found it.
    pub finder: Option<NodeId>,
    pub token: Digest,
}

impl PowEvent {
    pub fn is_honest(&self) -> bool {
        self.finder.is_some()
    }
}

/// Expected adversary solution count for the whole epoch window.
pub fn adversary_mean(honest_mean: f64, multiplier: f64, solve: (u64, u64), epoch: (u64, u64)) -> f64 {
    multiplier * honest_mean * (epoch.1 - epoch.0) as f64 / (solve.1 - solve.0) as f64
}

fn poisson_count(rng: &mut ChaCha12Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

fn token(challenge: &[u8], epoch: u64, kind: u8, ctr: u64) -> Digest {
    sha256_parts(&[
        &[tag::SOLUTION, kind],
        &epoch.to_be_bytes(),
        challenge,
        &ctr.to_be_bytes(),
    ])
}

/// Draws every solution of one epoch. `solve` is the honest window
/// `[t2, t3)`, `epoch_window` the adversary's `[t1, t5)`; both are
/// half-open in rounds. Deterministic in `(seed, epoch)`; the returned
/// events are sorted by round with the token as tie-break.
#[allow(clippy::too_many_arguments)]
pub fn simulate_pow(
    challenge: &[u8],
    solve: (u64, u64),
    epoch_window: (u64, u64),
    honest_mean: f64,
    adversary_multiplier: f64,
    predictable: bool,
    honest_pool: &[NodeId],
    seed: u64,
    epoch: u64,
) -> Vec<PowEvent> {
    assert!(solve.0 < solve.1, "empty solving window");
    assert!(epoch_window.0 < epoch_window.1, "empty epoch window");
    assert!(honest_mean >= 0.0 && adversary_multiplier >= 0.0);
    let mut rng = ChaCha12Rng::from_seed(derive_seed(seed, "pow", &[epoch]));
    let mut out = Vec::new();

    let honest_count = if honest_pool.is_empty() { 0 } else { poisson_count(&mut rng, honest_mean) };
    for i in 0..honest_count {
        out.push(PowEvent {
            round: rng.random_range(solve.0..solve.1),
            finder: Some(honest_pool[rng.random_range(0..honest_pool.len())]),
            token: token(challenge, epoch, 0, i),
        });
    }

    let adv_mean = adversary_mean(honest_mean, adversary_multiplier, solve, epoch_window);
    for i in 0..poisson_count(&mut rng, adv_mean) {
        out.push(PowEvent {
            round: rng.random_range(epoch_window.0..epoch_window.1),
            finder: None,
            token: token(challenge, epoch, 1, i),
        });
    }
    if predictable {
        // challenge known before t1: one extra solving run's worth of
        // solutions, available from the first round of the epoch
        for i in 0..poisson_count(&mut rng, adversary_multiplier * honest_mean) {
            out.push(PowEvent {
                round: epoch_window.0,
                finder: None,
                token: token(challenge, epoch, 2, i),
            });
        }
    }

    out.sort_by_key(|e| (e.round, e.token));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const POOL: [NodeId; 3] = [NodeId(0), NodeId(2), NodeId(5)];

    #[test]
    fn deterministic_and_challenge_separated() {
        let a = simulate_pow(b"ch", (10, 30), (0, 80), 2.0, 8.0, false, &POOL, 7, 3);
        let b = simulate_pow(b"ch", (10, 30), (0, 80), 2.0, 8.0, false, &POOL, 7, 3);
        assert_eq!(a, b);
        let c = simulate_pow(b"other", (10, 30), (0, 80), 2.0, 8.0, false, &POOL, 7, 3);
        assert!(a.iter().all(|e| c.iter().all(|f| f.token != e.token)));
        assert!(a.windows(2).all(|w| (w[0].round, w[0].token) <= (w[1].round, w[1].token)));
        for e in &a {
            match e.finder {
                Some(f) => {
                    assert!(POOL.contains(&f));
                    assert!((10..30).contains(&e.round));
                }
                None => assert!((0..80).contains(&e.round)),
            }
        }
    }

    #[test]
    fn zero_multiplier_means_honest_only_and_zero_mean_means_silence() {
        let a = simulate_pow(b"x", (10, 30), (0, 80), 2.0, 0.0, false, &POOL, 1, 1);
        assert!(a.iter().all(|e| e.is_honest()));
        let b = simulate_pow(b"x", (10, 30), (0, 80), 0.0, 0.0, true, &POOL, 1, 1);
        assert!(b.is_empty());
        let c = simulate_pow(b"x", (10, 30), (0, 80), 2.0, 0.0, false, &[], 1, 1);
        assert!(c.is_empty(), "no honest pool, no honest finds");
    }

    #[test]
    fn adversary_mean_hits_the_805_bound_at_full_power() {
        // the supported worst case: 100x hash power and an epoch window
        // 4.025 times the solving window gives 2 * 100 * 4.025 = 805
        // expected adversary solutions
        let mean = adversary_mean(2.0, 100.0, (200, 400), (0, 805));
        assert_eq!(mean, 805.0);
        // sampled counts agree: 200 epochs, sd of the mean ~ 2.0
        let mut total = 0u64;
        for e in 0..200 {
            total += simulate_pow(b"cap", (200, 400), (0, 805), 2.0, 100.0, false, &POOL, 99, e)
                .iter()
                .filter(|ev| !ev.is_honest())
                .count() as u64;
        }
        let avg = total as f64 / 200.0;
        assert!((avg - 805.0).abs() < 6.0, "sampled adversary mean {avg}");
    }

    #[test]
    fn predictable_challenge_adds_predated_solutions() {
        let mut extra = 0usize;
        let mut predated = 0usize;
        for e in 0..50 {
            let base = simulate_pow(b"p", (10, 30), (0, 80), 2.0, 4.0, false, &POOL, 5, e);
            let pre = simulate_pow(b"p", (10, 30), (0, 80), 2.0, 4.0, true, &POOL, 5, e);
            assert!(pre.len() >= base.len());
            extra += pre.len() - base.len();
            predated += pre.iter().filter(|ev| !ev.is_honest() && ev.round == 0).count();
        }
        assert!(extra > 0, "prediction must add solutions somewhere in 50 epochs");
        assert!(predated >= extra, "added solutions are stamped at epoch start");
    }
}
