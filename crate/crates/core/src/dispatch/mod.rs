//! Master/worker trial dispatch.
//!
//! [`TaskQueue`] is the master's bookkeeping: every submitted trial is in
//! exactly one of `pending`, `in_flight` or `done`. Timestamps are plain
//! milliseconds supplied by the caller, so the queue itself is a pure state
//! machine.

pub mod evaluator;
mod master;
pub mod wire;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::search::{Status, Trial, TrialId, TrialResult};

pub use evaluator::{
    evaluate, AnalyticConfig, AnalyticFn, EvalRequest, Evaluator, SubprocessConfig, TabularTable,
};
pub use master::{run_master, Budget, FaultPlan, HistoryRecord, MasterConfig, ModelFn, RunOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkerState {
    Idle,
    Busy(TrialId),
    Dead,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerSlot {
    pub worker_id: String,
    pub capacity: u32,
    pub state: WorkerState,
    pub last_heartbeat: u64,
}

impl WorkerSlot {
    pub fn new(worker_id: &str, capacity: u32, now: u64) -> WorkerSlot {
        WorkerSlot {
            worker_id: worker_id.to_string(),
            capacity,
            state: WorkerState::Idle,
            last_heartbeat: now,
        }
    }

    pub fn is_live(&self) -> bool {
        self.state != WorkerState::Dead
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InFlight {
    pub trial: Trial,
    pub worker_id: String,
    pub deadline: u64,
    pub attempt: u32,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DispatchError {
    #[error("trial {0} was already submitted")]
    Duplicate(TrialId),
    #[error("every worker is dead")]
    NoLiveWorkers,
    #[error("search: {0}")]
    Search(String),
}

/// What a `complete` call did.
#[derive(Debug, Clone, PartialEq)]
pub enum Completion {
    /// First result for the trial; deliver it to the search algorithm.
    Accepted(TrialResult),
    /// A failed attempt was requeued.
    Retried { trial_id: TrialId, attempt: u32 },
    /// The trial is already done; nothing changed.
    Duplicate,
    /// Never submitted.
    Unknown,
}

#[derive(Debug, Clone)]
pub struct TaskQueue {
    pub pending: VecDeque<(Trial, u32)>,
    pub in_flight: BTreeMap<TrialId, InFlight>,
    pub done: BTreeMap<TrialId, TrialResult>,
    pub max_retries: u32,
    pub timeout_ms: u64,
    pub heartbeat_timeout_ms: u64,
}

impl TaskQueue {
    pub fn new(max_retries: u32, timeout_ms: u64, heartbeat_timeout_ms: u64) -> TaskQueue {
        TaskQueue {
            pending: VecDeque::new(),
            in_flight: BTreeMap::new(),
            done: BTreeMap::new(),
            max_retries,
            timeout_ms,
            heartbeat_timeout_ms,
        }
    }

    pub fn contains(&self, id: TrialId) -> bool {
        self.done.contains_key(&id)
            || self.in_flight.contains_key(&id)
            || self.pending.iter().any(|(t, _)| t.trial_id == id)
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty() && self.in_flight.is_empty()
    }

    pub fn submit(&mut self, trial: Trial) -> Result<(), DispatchError> {
        if self.contains(trial.trial_id) {
            return Err(DispatchError::Duplicate(trial.trial_id));
        }
        self.pending.push_back((trial, 0));
        Ok(())
    }

    /// Pairs pending trials, oldest first, with idle slots in worker-id order.
    pub fn assign(&mut self, slots: &mut [WorkerSlot], now: u64) -> Vec<(String, Trial, u32)> {
        let mut idle: Vec<usize> = (0..slots.len())
            .filter(|&i| slots[i].state == WorkerState::Idle)
            .collect();
        idle.sort_by(|&a, &b| slots[a].worker_id.cmp(&slots[b].worker_id));
        let mut out = Vec::new();
        for i in idle {
            let Some((trial, attempt)) = self.pending.pop_front() else {
                break;
            };
            let slot = &mut slots[i];
            slot.state = WorkerState::Busy(trial.trial_id);
            self.in_flight.insert(
                trial.trial_id,
                InFlight {
                    trial: trial.clone(),
                    worker_id: slot.worker_id.clone(),
                    deadline: now + self.timeout_ms,
                    attempt,
                },
            );
            out.push((slot.worker_id.clone(), trial, attempt));
        }
        out
    }

    /// Returns an assigned trial to the front of the queue, e.g. when its
    /// worker could not be reached.
    pub fn unassign(&mut self, trial_id: TrialId, slots: &mut [WorkerSlot]) {
        if let Some(f) = self.in_flight.remove(&trial_id) {
            free_slot(slots, &f.worker_id, trial_id);
            self.pending.push_front((f.trial, f.attempt));
        }
    }

    /// Records a worker's result. The first result per trial wins, including
    /// a late one from an attempt that was already given up on.
    pub fn complete(
        &mut self,
        slots: &mut [WorkerSlot],
        worker_id: &str,
        result: TrialResult,
        now: u64,
    ) -> Completion {
        let id = result.trial_id;
        if let Some(s) = slots.iter_mut().find(|s| s.worker_id == worker_id) {
            s.last_heartbeat = now;
        }
        free_slot(slots, worker_id, id);
        if self.done.contains_key(&id) {
            log::info!(
                "dropping duplicate result for trial {id} (attempt {}) from {worker_id}",
                result.attempt
            );
            return Completion::Duplicate;
        }
        let (trial, current_attempt) = if let Some(f) = self.in_flight.remove(&id) {
            (f.trial, f.attempt)
        } else if let Some(pos) = self.pending.iter().position(|(t, _)| t.trial_id == id) {
            self.pending.remove(pos).expect("position is valid")
        } else {
            log::warn!("ignoring result for unknown trial {id} from {worker_id}");
            return Completion::Unknown;
        };
        if result.status == Status::Failed && current_attempt < self.max_retries {
            self.pending.push_back((trial, current_attempt + 1));
            return Completion::Retried {
                trial_id: id,
                attempt: current_attempt + 1,
            };
        }
        self.done.insert(id, result.clone());
        Completion::Accepted(result)
    }

    /// Requeues or times out every in-flight trial past its deadline. Returns
    /// the results of trials that ran out of attempts.
    pub fn reap_timeouts(&mut self, slots: &mut [WorkerSlot], now: u64) -> Vec<TrialResult> {
        let expired: Vec<TrialId> = self
            .in_flight
            .iter()
            .filter(|(_, f)| f.deadline < now)
            .map(|(id, _)| *id)
            .collect();
        let mut finished = Vec::new();
        for id in expired {
            let f = self.in_flight.remove(&id).expect("listed above");
            if let Some(s) = slots.iter_mut().find(|s| s.worker_id == f.worker_id) {
                if now.saturating_sub(s.last_heartbeat) > self.heartbeat_timeout_ms {
                    log::warn!("worker {} missed its heartbeats; marking dead", s.worker_id);
                    s.state = WorkerState::Dead;
                } else if s.state == WorkerState::Busy(id) {
                    s.state = WorkerState::Idle;
                }
            }
            if f.attempt < self.max_retries {
                self.pending.push_back((f.trial, f.attempt + 1));
            } else {
                let r = TrialResult::failed(id, f.attempt, Status::Timeout);
                self.done.insert(id, r.clone());
                finished.push(r);
            }
        }
        finished
    }
}

fn free_slot(slots: &mut [WorkerSlot], worker_id: &str, trial_id: TrialId) {
    if let Some(s) = slots.iter_mut().find(|s| s.worker_id == worker_id) {
        if s.state == WorkerState::Busy(trial_id) {
            s.state = WorkerState::Idle;
        }
    }
}

pub fn heartbeat(slots: &mut [WorkerSlot], worker_id: &str, now: u64) {
    if let Some(s) = slots.iter_mut().find(|s| s.worker_id == worker_id) {
        s.last_heartbeat = now;
    }
}
