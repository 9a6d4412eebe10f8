use std::collections::{BTreeSet, HashMap};

use super::TrialId;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AshaError {
    #[error("trial {0} is not registered with the scheduler")]
    UnknownTrial(TrialId),
    #[error("trial {0} already reported a result")]
    AlreadyReported(TrialId),
    #[error("rung {rung} outside 0..{max_rungs}")]
    BadRung { rung: u32, max_rungs: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AshaDecision {
    /// Run `trial_id`'s configuration again at `rung` with `resource`.
    Promote {
        trial_id: TrialId,
        rung: u32,
        resource: u64,
    },
    SampleNew,
    /// The trial finished the top rung.
    Finalize,
}

/// Asynchronous successive-halving bookkeeping.
#[derive(Debug, Clone)]
pub struct AshaState {
    pub eta: u32,
    pub r0: u64,
    pub max_rungs: u32,
    /// Completed `(trial_id, score)` per rung, in completion order.
    pub rungs: Vec<Vec<(TrialId, f64)>>,
    /// Ids promoted out of each rung.
    pub promoted: Vec<BTreeSet<TrialId>>,
    registry: HashMap<TrialId, u32>,
    reported: BTreeSet<TrialId>,
}

impl AshaState {
    pub fn new(eta: u32, r0: u64, max_rungs: u32) -> AshaState {
        assert!(eta >= 2 && r0 >= 1 && max_rungs >= 1);
        AshaState {
            eta,
            r0,
            max_rungs,
            rungs: vec![Vec::new(); max_rungs as usize],
            promoted: vec![BTreeSet::new(); max_rungs as usize],
            registry: HashMap::new(),
            reported: BTreeSet::new(),
        }
    }

    pub fn resource(&self, rung: u32) -> u64 {
        self.r0 * u64::from(self.eta).pow(rung)
    }

    pub fn register(&mut self, trial_id: TrialId, rung: u32) -> Result<(), AshaError> {
        if rung >= self.max_rungs {
            return Err(AshaError::BadRung {
                rung,
                max_rungs: self.max_rungs,
            });
        }
        self.registry.insert(trial_id, rung);
        Ok(())
    }

    pub fn rung_of(&self, trial_id: TrialId) -> Option<u32> {
        self.registry.get(&trial_id).copied()
    }

    /// Rung entries ranked best first; ties go to the earlier trial.
    pub fn ranked(&self, rung: u32) -> Vec<(TrialId, f64)> {
        let mut v = self.rungs[rung as usize].clone();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// Size of the promotable top set of `rung`.
    pub fn top_k(&self, rung: u32) -> usize {
        self.rungs[rung as usize].len() / self.eta as usize
    }

    fn promotable(&self, rung: u32) -> Option<TrialId> {
        if rung + 1 >= self.max_rungs {
            return None;
        }
        let k = self.top_k(rung);
        self.ranked(rung)
            .into_iter()
            .take(k)
            .find(|(id, s)| s.is_finite() && !self.promoted[rung as usize].contains(id))
            .map(|(id, _)| id)
    }

    fn promote(&mut self, trial_id: TrialId, rung: u32) -> AshaDecision {
        self.promoted[rung as usize].insert(trial_id);
        AshaDecision::Promote {
            trial_id,
            rung: rung + 1,
            resource: self.resource(rung + 1),
        }
    }
}

/// Records a completion and decides what to do with the freed worker.
///
/// Only the just-completed trial is considered for promotion: it is
/// promoted when it ranks within the top `⌊n/η⌋` of its rung.
pub fn asha_on_result(
    state: &mut AshaState,
    trial_id: TrialId,
    score: f64,
) -> Result<AshaDecision, AshaError> {
    let rung = state
        .rung_of(trial_id)
        .ok_or(AshaError::UnknownTrial(trial_id))?;
    if !state.reported.insert(trial_id) {
        return Err(AshaError::AlreadyReported(trial_id));
    }
    state.rungs[rung as usize].push((trial_id, score));
    if rung + 1 >= state.max_rungs {
        return Ok(AshaDecision::Finalize);
    }
    let k = state.top_k(rung);
    let in_top = state
        .ranked(rung)
        .iter()
        .take(k)
        .any(|(id, _)| *id == trial_id);
    if in_top && score.is_finite() && !state.promoted[rung as usize].contains(&trial_id) {
        Ok(state.promote(trial_id, rung))
    } else {
        Ok(AshaDecision::SampleNew)
    }
}

/// Scans rungs from the top down for any trial that has become promotable
/// since it completed, and promotes the first one found.
pub fn next_promotion(state: &mut AshaState) -> Option<AshaDecision> {
    (0..state.max_rungs)
        .rev()
        .find_map(|r| state.promotable(r).map(|id| (id, r)))
        .map(|(id, r)| state.promote(id, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn promote_into_single_slot() {
        let mut s = AshaState::new(3, 1, 4);
        for (id, score) in [(0, 0.9), (1, 0.5), (2, 0.7), (3, 0.95)] {
            s.register(id, 0).unwrap();
            let d = asha_on_result(&mut s, id, score).unwrap();
            if id == 3 {
                assert_eq!(
                    d,
                    AshaDecision::Promote {
                        trial_id: 3,
                        rung: 1,
                        resource: 3
                    }
                );
            } else if id == 2 {
                // 0.9 holds the only slot once three results exist.
                assert_eq!(d, AshaDecision::SampleNew);
            }
        }
        assert_eq!(next_promotion(&mut s), None);
    }

    #[test]
    fn first_completion_samples_new() {
        let mut s = AshaState::new(3, 1, 4);
        s.register(7, 0).unwrap();
        assert_eq!(
            asha_on_result(&mut s, 7, 1.0).unwrap(),
            AshaDecision::SampleNew
        );
    }

    #[test]
    fn top_rung_finalizes() {
        let mut s = AshaState::new(3, 1, 4);
        s.register(1, 3).unwrap();
        assert_eq!(
            asha_on_result(&mut s, 1, 1.0).unwrap(),
            AshaDecision::Finalize
        );
        assert_eq!(
            s.register(2, 4),
            Err(AshaError::BadRung {
                rung: 4,
                max_rungs: 4
            })
        );
    }

    #[test]
    fn errors() {
        let mut s = AshaState::new(2, 1, 2);
        assert_eq!(
            asha_on_result(&mut s, 5, 1.0),
            Err(AshaError::UnknownTrial(5))
        );
        s.register(5, 0).unwrap();
        asha_on_result(&mut s, 5, 1.0).unwrap();
        assert_eq!(
            asha_on_result(&mut s, 5, 1.0),
            Err(AshaError::AlreadyReported(5))
        );
    }

    #[test]
    fn failed_trials_never_promote() {
        let mut s = AshaState::new(2, 1, 3);
        for id in 0..4 {
            s.register(id, 0).unwrap();
            let d = asha_on_result(&mut s, id, f64::NEG_INFINITY).unwrap();
            assert_eq!(d, AshaDecision::SampleNew);
        }
        assert_eq!(next_promotion(&mut s), None);
    }

    #[test]
    fn quiescence_scan_finds_passed_over_trials() {
        let mut s = AshaState::new(2, 1, 3);
        s.register(0, 1).unwrap();
        s.register(1, 1).unwrap();
        s.register(2, 0).unwrap();
        s.register(3, 0).unwrap();
        asha_on_result(&mut s, 2, 0.1).unwrap();
        asha_on_result(&mut s, 3, 0.0).unwrap();
        asha_on_result(&mut s, 0, 0.0).unwrap();
        asha_on_result(&mut s, 1, 0.5).unwrap();
        assert!(s.promoted[1].contains(&1));
        assert_eq!(
            next_promotion(&mut s),
            Some(AshaDecision::Promote {
                trial_id: 2,
                rung: 1,
                resource: 2
            })
        );
        assert_eq!(next_promotion(&mut s), None);
    }

    /// Brute-force rank of `id` in `entries` (best first, earlier id wins ties).
    fn rank(entries: &[(TrialId, f64)], id: TrialId) -> usize {
        let me = entries.iter().find(|e| e.0 == id).unwrap();
        entries
            .iter()
            .filter(|e| e.1 > me.1 || (e.1 == me.1 && e.0 < me.0))
            .count()
    }

    proptest! {
        #[test]
        fn promotions_are_top_ranked(scores in prop::collection::vec(0u8..20, 1..120), eta in 2u32..5) {
            let mut s = AshaState::new(eta, 1, 4);
            let mut next_id = 0;
            let mut pending: Vec<(TrialId, u32)> = Vec::new();
            for (i, sc) in scores.iter().enumerate() {
                let (id, rung) = if i % 3 == 2 && !pending.is_empty() {
                    pending.remove(0)
                } else {
                    next_id += 1;
                    (next_id, 0)
                };
                s.register(id, rung).unwrap();
                let score = f64::from(*sc);
                if let AshaDecision::Promote { trial_id, rung: to, .. } = asha_on_result(&mut s, id, score).unwrap() {
                    let from = to - 1;
                    let entries = &s.rungs[from as usize];
                    prop_assert!(rank(entries, trial_id) < entries.len() / eta as usize);
                    next_id += 1;
                    pending.push((next_id, to));
                }
                let counts: Vec<usize> = s.promoted.iter().map(BTreeSet::len).collect();
                for (r, c) in counts.iter().enumerate() {
                    prop_assert!(*c <= s.rungs[r].len());
                }
            }
        }
    }
}
