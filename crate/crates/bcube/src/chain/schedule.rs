//! Slot and epoch timing, all in whole rounds.
//!
//! Slot `k` (1-based) starts its broadcast invocation at round `(k-1) * P`
//! and confirms exactly `R = 2dm + s` rounds later. Epoch `e` owns slots
//! `(e-1)*rho + 1 ..= e*rho`. Within each epoch the beacon refresh walks
//! five markers:
//!
//! * `t1`: epoch start, `(e-1) * rho * P`.
//! * `t2`: the round by which the epoch's first `tau` slots have all
//!   confirmed; their nonces form the PoW challenge.
//! * `t3`: solving stops and the first solution each node holds is flooded.
//! * `t4 = t3 + d`: flooding has reached everyone; from here the
//!   candidate-holding slots start and their broadcasters embed the
//!   solution they hold.
//! * `t5`: epoch end, `e * rho * P`; the new beacon is folded.
//!
//! Candidate-holding slots are the last `tau` slots of the epoch whose
//! invocations still confirm by `t5`; slots after those spill their
//! confirmation into the next epoch and cannot carry the candidate.

use serde::{Deserialize, Serialize};

use super::ChainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSchedule {
    /// Rounds between consecutive slot starts (`P`).
    pub slot_period: u32,
    /// Slots per epoch (`rho`).
    pub rho: u32,
    /// Challenge and candidate width (`tau`).
    pub tau: u32,
    /// Epochs in the run.
    pub epochs: u32,
    /// Rounds one invocation takes (`2dm + s`).
    pub inv_rounds: u32,
    /// Overlay diameter bound; also the flood time budget.
    pub d: u32,
}

impl EpochSchedule {
    pub fn new(
        slot_period: u32,
        rho: u32,
        tau: u32,
        epochs: u32,
        inv_rounds: u32,
        d: u32,
    ) -> Result<Self, ChainError> {
        let s = EpochSchedule { slot_period, rho, tau, epochs, inv_rounds, d };
        if slot_period == 0 || rho == 0 || tau == 0 || epochs == 0 {
            return Err(ChainError::Schedule("all schedule parameters must be positive".into()));
        }
        if tau > rho {
            return Err(ChainError::Schedule(format!("tau = {tau} exceeds rho = {rho}")));
        }
        // slot indices below are u64; validate in i64 so a pipeline deeper
        // than an epoch reports an error instead of wrapping
        let last_rel = rho as i64 - s.gamma() as i64 + 1;
        if last_rel < 1 {
            return Err(ChainError::Schedule(format!(
                "pipeline depth {} exceeds the {} slots of an epoch",
                s.gamma(),
                rho
            )));
        }
        let cand_first_rel = last_rel - tau as i64 + 1;
        if cand_first_rel <= tau as i64 {
            return Err(ChainError::Schedule(format!(
                "candidate slots would start at in-epoch slot {cand_first_rel}, \
                 overlapping the {tau} challenge slots; raise rho"
            )));
        }
        // epoch timing is shift-invariant, so checking epoch 1 checks all
        if s.t3(1) <= s.t2(1) {
            return Err(ChainError::Schedule(format!(
                "solving window is empty: challenge ready at round {} but \
                 flooding must start at round {}; raise rho or slot_period",
                s.t2(1),
                s.t3(1)
            )));
        }
        Ok(s)
    }

    /// Concurrent invocations while the pipeline is full.
    pub fn gamma(&self) -> u32 {
        self.inv_rounds.div_ceil(self.slot_period)
    }

    pub fn slots(&self) -> u64 {
        self.epochs as u64 * self.rho as u64
    }

    /// Rounds until the last slot's invocation confirms.
    pub fn total_rounds(&self) -> u64 {
        self.slot_start(self.slots()) + self.inv_rounds as u64
    }

    pub fn slot_start(&self, slot: u64) -> u64 {
        (slot - 1) * self.slot_period as u64
    }

    pub fn slot_confirm(&self, slot: u64) -> u64 {
        self.slot_start(slot) + self.inv_rounds as u64
    }

    pub fn epoch_of_slot(&self, slot: u64) -> u32 {
        ((slot - 1) / self.rho as u64 + 1) as u32
    }

    pub fn challenge_slots(&self, epoch: u32) -> std::ops::RangeInclusive<u64> {
        let first = (epoch as u64 - 1) * self.rho as u64 + 1;
        first..=first + self.tau as u64 - 1
    }

    /// Last slot of `epoch` whose invocation confirms inside the epoch.
    fn last_confirmable_slot(&self, epoch: u32) -> u64 {
        epoch as u64 * self.rho as u64 - self.gamma() as u64 + 1
    }

    pub fn candidate_slots(&self, epoch: u32) -> std::ops::RangeInclusive<u64> {
        let last = self.last_confirmable_slot(epoch);
        last - self.tau as u64 + 1..=last
    }

    pub fn t1(&self, epoch: u32) -> u64 {
        (epoch as u64 - 1) * self.rho as u64 * self.slot_period as u64
    }

    pub fn t2(&self, epoch: u32) -> u64 {
        self.slot_confirm(*self.challenge_slots(epoch).end())
    }

    pub fn t3(&self, epoch: u32) -> u64 {
        self.t4(epoch) - self.d as u64
    }

    pub fn t4(&self, epoch: u32) -> u64 {
        self.slot_start(*self.candidate_slots(epoch).start())
    }

    pub fn t5(&self, epoch: u32) -> u64 {
        epoch as u64 * self.rho as u64 * self.slot_period as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers_are_ordered_and_shift_invariant() {
        // d = 2, m = 4, s = 5: R = 21 rounds, P = 8 so gamma = 3
        let s = EpochSchedule::new(8, 10, 2, 4, 21, 2).unwrap();
        assert_eq!(s.gamma(), 3);
        assert_eq!(s.slots(), 40);
        assert_eq!(s.total_rounds(), 39 * 8 + 21);
        for e in 1..=4 {
            let (t1, t2, t3, t4, t5) = (s.t1(e), s.t2(e), s.t3(e), s.t4(e), s.t5(e));
            assert!(t1 < t2 && t2 < t3 && t3 < t4 && t4 < t5, "epoch {e}: {t1} {t2} {t3} {t4} {t5}");
            assert_eq!(t4 - t3, 2, "flood window is exactly d rounds");
            let shift = (e as u64 - 1) * 80;
            assert_eq!(t1, shift);
            assert_eq!(t2, s.t2(1) + shift);
            assert_eq!(t5, 80 + shift);
        }
        // epoch 1 numbers by hand: challenge slots 1..=2 confirm at
        // 8 + 21 = 29; last confirmable slot = 10 - 3 + 1 = 8, candidates
        // {7, 8} start at 48, t3 = 46
        assert_eq!(s.challenge_slots(1), 1..=2);
        assert_eq!(s.t2(1), 29);
        assert_eq!(s.candidate_slots(1), 7..=8);
        assert_eq!(s.t4(1), 48);
        assert_eq!(s.t3(1), 46);
        // candidate invocations confirm inside the epoch, later ones spill
        assert!(s.slot_confirm(8) <= s.t5(1));
        assert!(s.slot_confirm(9) > s.t5(1));
        assert_eq!(s.epoch_of_slot(10), 1);
        assert_eq!(s.epoch_of_slot(11), 2);
    }

    #[test]
    fn infeasible_schedules_are_rejected() {
        // tau above rho
        assert!(matches!(EpochSchedule::new(8, 3, 4, 1, 21, 2), Err(ChainError::Schedule(_))));
        // candidate slots would collide with challenge slots
        assert!(matches!(EpochSchedule::new(8, 7, 3, 1, 21, 2), Err(ChainError::Schedule(_))));
        // empty solving window: challenge confirms after flooding must start
        assert!(matches!(EpochSchedule::new(2, 14, 2, 1, 21, 2), Err(ChainError::Schedule(_))));
        // pipeline deeper than the epoch: gamma = 11 against rho = 5
        assert!(matches!(EpochSchedule::new(2, 5, 1, 1, 21, 2), Err(ChainError::Schedule(_))));
        assert!(matches!(EpochSchedule::new(0, 10, 2, 1, 21, 2), Err(ChainError::Schedule(_))));
    }
}
