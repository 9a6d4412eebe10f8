use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::evaluator::{evaluate, EvalRequest, Evaluator};
use super::wire::Message;
use super::{heartbeat, Completion, DispatchError, TaskQueue, WorkerSlot, WorkerState};
use crate::netdesc::ModelDescription;
use crate::sampler::ConfigSample;
use crate::search::{
    mix_seed, Objective, ParetoArchive, SearchAlgorithm, Status, Trial, TrialId, TrialResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_trials: u64,
    pub max_resource: Option<u64>,
}

/// Worker `worker` silently dies when handed its task number
/// `after_tasks` (counting from zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultPlan {
    pub worker: usize,
    pub after_tasks: usize,
}

#[derive(Debug, Clone)]
pub struct MasterConfig {
    pub workers: usize,
    pub capacity: u32,
    pub max_retries: u32,
    pub trial_timeout_ms: u64,
    pub heartbeat_ms: u64,
    pub budget: Budget,
    pub seed: u64,
    pub objectives: Vec<Objective>,
    pub fault: Option<FaultPlan>,
}

impl MasterConfig {
    pub fn heartbeat_timeout_ms(&self) -> u64 {
        (3 * self.heartbeat_ms).max(self.trial_timeout_ms)
    }
}

/// One line of the run history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub trial_id: TrialId,
    pub attempt: u32,
    pub rung: u32,
    pub bracket: u32,
    pub resource: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_trial: Option<TrialId>,
    pub sample: ConfigSample,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objectives: Vec<f64>,
    pub status: Status,
    pub wall_time: f64,
}

#[derive(Debug, Default)]
pub struct RunOutcome {
    pub history: Vec<HistoryRecord>,
    pub trials: BTreeMap<TrialId, Trial>,
    pub model_descs: BTreeMap<TrialId, ModelDescription>,
    pub submitted: BTreeSet<TrialId>,
    pub duplicates_dropped: usize,
    pub archive: Option<ParetoArchive>,
}

/// Maps a trial to the description sent along with its task.
pub type ModelFn<'a> = dyn Fn(&Trial) -> Result<Option<ModelDescription>, String> + 'a;

fn worker_loop(
    id: String,
    evaluator: Arc<Evaluator>,
    tasks: mpsc::Receiver<Message>,
    events: mpsc::Sender<(String, Message)>,
    heartbeat_every: Duration,
    die_at: Option<usize>,
) {
    let mut served = 0;
    loop {
        match tasks.recv_timeout(heartbeat_every) {
            Ok(Message::Task {
                trial_id,
                attempt,
                sample,
                model_desc,
                resource,
                seed,
            }) => {
                if die_at == Some(served) {
                    log::warn!("worker {id} dies holding trial {trial_id}");
                    return;
                }
                served += 1;
                let r = evaluate(
                    &evaluator,
                    &EvalRequest {
                        trial_id,
                        attempt,
                        sample: &sample,
                        model_desc: model_desc.as_ref(),
                        resource,
                        seed,
                    },
                );
                let msg = Message::Result {
                    trial_id,
                    attempt,
                    status: r.status,
                    metrics: r.metrics,
                    wall_time: r.wall_time,
                };
                if events.send((id.clone(), msg)).is_err() {
                    return;
                }
            }
            Ok(Message::Shutdown {}) | Err(RecvTimeoutError::Disconnected) => return,
            Ok(_) => {}
            Err(RecvTimeoutError::Timeout) => {
                let hb = Message::Heartbeat {
                    worker_id: id.clone(),
                };
                if events.send((id.clone(), hb)).is_err() {
                    return;
                }
            }
        }
    }
}

struct Run<'a> {
    cfg: &'a MasterConfig,
    alg: &'a mut dyn SearchAlgorithm,
    out: RunOutcome,
    delivered: BTreeSet<TrialId>,
}

impl Run<'_> {
    fn deliver(&mut self, mut r: TrialResult) -> Result<(), DispatchError> {
        if !self.delivered.insert(r.trial_id) {
            self.out.duplicates_dropped += 1;
            return Ok(());
        }
        let trial = self.out.trials[&r.trial_id].clone();
        if r.status == Status::Ok {
            let objs: Option<Vec<f64>> = self
                .cfg
                .objectives
                .iter()
                .map(|o| r.metrics.get(&o.metric).copied())
                .collect();
            r.objectives = objs.unwrap_or_default();
        }
        self.alg
            .tell(&trial, &r)
            .map_err(|e| DispatchError::Search(e.to_string()))?;
        self.out.history.push(HistoryRecord {
            trial_id: r.trial_id,
            attempt: r.attempt,
            rung: trial.rung,
            bracket: trial.bracket,
            resource: trial.resource,
            parent_trial: trial.parent_trial,
            sample: trial.sample,
            metrics: r.metrics,
            objectives: r.objectives,
            status: r.status,
            wall_time: r.wall_time,
        });
        Ok(())
    }
}

/// Runs a search to completion on `cfg.workers` in-process worker threads.
///
/// Workers speak the wire message grammar over channels. The loop ends when
/// the budget is spent or the algorithm stops proposing, and nothing is in
/// flight.
pub fn run_master(
    cfg: &MasterConfig,
    alg: &mut dyn SearchAlgorithm,
    evaluator: Arc<Evaluator>,
    model_for: &ModelFn,
) -> Result<RunOutcome, DispatchError> {
    let start = Instant::now();
    let now = || start.elapsed().as_millis() as u64;
    let mut queue = TaskQueue::new(
        cfg.max_retries,
        cfg.trial_timeout_ms,
        cfg.heartbeat_timeout_ms(),
    );
    let (event_tx, event_rx) = mpsc::channel::<(String, Message)>();
    let mut slots = Vec::new();
    let mut senders = BTreeMap::new();
    let mut handles = Vec::new();
    for i in 0..cfg.workers.max(1) {
        let id = format!("worker-{i:03}");
        let (tx, rx) = mpsc::channel();
        let die_at = cfg.fault.filter(|f| f.worker == i).map(|f| f.after_tasks);
        let (ev, evaluator, wid) = (event_tx.clone(), evaluator.clone(), id.clone());
        let hb = Duration::from_millis(cfg.heartbeat_ms.max(1));
        handles.push(thread::spawn(move || {
            worker_loop(wid, evaluator, rx, ev, hb, die_at)
        }));
        slots.push(WorkerSlot::new(&id, cfg.capacity, 0));
        senders.insert(id, tx);
    }
    drop(event_tx);

    let mut run = Run {
        cfg,
        alg,
        out: RunOutcome::default(),
        delivered: BTreeSet::new(),
    };
    let mut resource_used = 0u64;
    let mut proposals_over = false;
    let poll = Duration::from_millis(cfg.heartbeat_ms.clamp(1, 20));
    let mut ask_err = None;
    let result = loop {
        let idle = slots
            .iter()
            .filter(|s| s.state == WorkerState::Idle)
            .count();
        while !proposals_over && queue.pending.len() < idle {
            let within = (run.out.submitted.len() as u64) < cfg.budget.max_trials
                && cfg.budget.max_resource.is_none_or(|m| resource_used < m);
            if !within {
                proposals_over = true;
                break;
            }
            let trial = match run.alg.ask() {
                Ok(Some(t)) => t,
                Ok(None) => break,
                Err(e) => {
                    ask_err = Some(DispatchError::Search(e.to_string()));
                    break;
                }
            };
            resource_used += trial.resource;
            run.out.submitted.insert(trial.trial_id);
            run.out.trials.insert(trial.trial_id, trial.clone());
            let id = trial.trial_id;
            let desc = model_for(&trial);
            queue.submit(trial)?;
            match desc {
                Ok(Some(d)) => {
                    run.out.model_descs.insert(id, d);
                }
                Ok(None) => {}
                Err(e) => {
                    log::warn!("trial {id}: no model description: {e}");
                    queue.pending.retain(|(t, _)| t.trial_id != id);
                    let r = TrialResult::failed(id, 0, Status::Failed);
                    queue.done.insert(id, r.clone());
                    run.deliver(r)?;
                }
            }
        }
        if let Some(e) = ask_err.take() {
            break Err(e);
        }
        if queue.is_idle() {
            let asked_none = !proposals_over && queue.pending.is_empty();
            if proposals_over || asked_none || run.alg.exhausted() {
                break Ok(());
            }
        }
        if !slots.iter().any(WorkerSlot::is_live) {
            break Err(DispatchError::NoLiveWorkers);
        }
        for (worker, trial, attempt) in queue.assign(&mut slots, now()) {
            let msg = Message::Task {
                trial_id: trial.trial_id,
                attempt,
                sample: trial.sample.clone(),
                model_desc: run.out.model_descs.get(&trial.trial_id).cloned(),
                resource: trial.resource,
                seed: mix_seed(cfg.seed, trial.trial_id),
            };
            if senders[&worker].send(msg).is_err() {
                log::warn!("worker {worker} is unreachable; marking dead");
                queue.unassign(trial.trial_id, &mut slots);
                if let Some(s) = slots.iter_mut().find(|s| s.worker_id == worker) {
                    s.state = WorkerState::Dead;
                }
            }
        }
        match event_rx.recv_timeout(poll) {
            Ok((
                worker,
                Message::Result {
                    trial_id,
                    attempt,
                    status,
                    metrics,
                    wall_time,
                },
            )) => {
                let r = TrialResult {
                    trial_id,
                    attempt,
                    metrics,
                    objectives: Vec::new(),
                    status,
                    wall_time,
                };
                match queue.complete(&mut slots, &worker, r, now()) {
                    Completion::Accepted(r) => run.deliver(r)?,
                    Completion::Duplicate => run.out.duplicates_dropped += 1,
                    Completion::Retried { .. } | Completion::Unknown => {}
                }
            }
            Ok((worker, Message::Heartbeat { .. })) => heartbeat(&mut slots, &worker, now()),
            Ok(_) | Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break Err(DispatchError::NoLiveWorkers),
        }
        for r in queue.reap_timeouts(&mut slots, now()) {
            run.deliver(r)?;
        }
    };
    for tx in senders.values() {
        let _ = tx.send(Message::Shutdown {});
    }
    drop(senders);
    for h in handles {
        let _ = h.join();
    }
    result?;
    run.out.archive = run.alg.archive().cloned();
    Ok(run.out)
}
