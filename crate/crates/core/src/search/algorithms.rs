use std::collections::{HashMap, VecDeque};

use super::bohb::proposal_seed;
use super::{
    asha_on_result, bohb_propose, ea_step, mix_seed, next_promotion, ArchiveEntry, AshaDecision,
    AshaState, BohbConfig, BracketState, EaConfig, Objective, Observation, ParetoArchive,
    SearchAlgorithm, SearchError, Status, Trial, TrialId, TrialResult,
};
use crate::sampler::{self, ConfigSample, EncodedSample};
use crate::space::SearchSpace;

/// Where fresh configurations come from.
#[derive(Debug, Clone)]
pub enum SampleSource {
    /// Seeded uniform draws; draw `i` uses `mix_seed(seed, i)`.
    Random { seed: u64, drawn: u64 },
    /// A fixed list consumed in order.
    Fixed(VecDeque<(EncodedSample, ConfigSample)>),
}

impl SampleSource {
    pub fn random(seed: u64) -> SampleSource {
        SampleSource::Random { seed, drawn: 0 }
    }

    pub fn fixed(samples: Vec<(EncodedSample, ConfigSample)>) -> SampleSource {
        SampleSource::Fixed(samples.into())
    }

    fn next(
        &mut self,
        space: &SearchSpace,
    ) -> Result<Option<(EncodedSample, ConfigSample)>, SearchError> {
        match self {
            SampleSource::Random { seed, drawn } => {
                let s = mix_seed(*seed, *drawn);
                *drawn += 1;
                Ok(Some(sampler::sample(space, s)?))
            }
            SampleSource::Fixed(q) => Ok(q.pop_front()),
        }
    }

    fn is_empty(&self) -> bool {
        matches!(self, SampleSource::Fixed(q) if q.is_empty())
    }
}

/// Independent uniform trials at a fixed resource.
pub struct RandomSearch {
    space: SearchSpace,
    source: SampleSource,
    resource: u64,
    next_id: TrialId,
}

impl RandomSearch {
    pub fn new(space: SearchSpace, source: SampleSource, resource: u64) -> RandomSearch {
        RandomSearch {
            space,
            source,
            resource,
            next_id: 0,
        }
    }
}

impl SearchAlgorithm for RandomSearch {
    fn ask(&mut self) -> Result<Option<Trial>, SearchError> {
        let Some((encoded, sample)) = self.source.next(&self.space)? else {
            return Ok(None);
        };
        let trial_id = self.next_id;
        self.next_id += 1;
        Ok(Some(Trial {
            trial_id,
            sample,
            encoded,
            resource: self.resource,
            rung: 0,
            bracket: 0,
            parent_trial: None,
        }))
    }

    fn tell(&mut self, _: &Trial, _: &TrialResult) -> Result<(), SearchError> {
        Ok(())
    }

    fn exhausted(&self) -> bool {
        self.source.is_empty()
    }
}

type Config = (EncodedSample, ConfigSample);

fn promoted_trial(
    configs: &HashMap<TrialId, Config>,
    id: TrialId,
    src: TrialId,
    rung: u32,
    resource: u64,
    bracket: u32,
) -> Trial {
    let (encoded, sample) = configs[&src].clone();
    Trial {
        trial_id: id,
        sample,
        encoded,
        resource,
        rung,
        bracket,
        parent_trial: Some(src),
    }
}

/// Asynchronous successive halving over a sample source.
///
/// Freed workers first take a promotion (the just-completed trial, then
/// any older trial that has since entered its rung's top set, highest rung
/// first) and otherwise start a fresh configuration at rung 0.
pub struct AshaSearch {
    space: SearchSpace,
    source: SampleSource,
    objective: Objective,
    pub state: AshaState,
    configs: HashMap<TrialId, Config>,
    promotions: VecDeque<AshaDecision>,
    next_id: TrialId,
}

impl AshaSearch {
    pub fn new(
        space: SearchSpace,
        source: SampleSource,
        objective: Objective,
        state: AshaState,
    ) -> AshaSearch {
        AshaSearch {
            space,
            source,
            objective,
            state,
            configs: HashMap::new(),
            promotions: VecDeque::new(),
            next_id: 0,
        }
    }

    /// Best completed trial at the highest populated rung.
    pub fn incumbent(&self) -> Option<(TrialId, f64)> {
        (0..self.state.max_rungs)
            .rev()
            .find_map(|r| self.state.ranked(r).into_iter().next())
    }

    pub fn config(&self, id: TrialId) -> Option<&Config> {
        self.configs.get(&id)
    }
}

impl SearchAlgorithm for AshaSearch {
    fn ask(&mut self) -> Result<Option<Trial>, SearchError> {
        let id = self.next_id;
        let promotion = self
            .promotions
            .pop_front()
            .or_else(|| next_promotion(&mut self.state));
        let trial = if let Some(AshaDecision::Promote {
            trial_id: src,
            rung,
            resource,
        }) = promotion
        {
            promoted_trial(&self.configs, id, src, rung, resource, 0)
        } else if let Some((encoded, sample)) = self.source.next(&self.space)? {
            Trial {
                trial_id: id,
                sample,
                encoded,
                resource: self.state.resource(0),
                rung: 0,
                bracket: 0,
                parent_trial: None,
            }
        } else {
            return Ok(None);
        };
        self.next_id += 1;
        self.state.register(id, trial.rung)?;
        self.configs
            .insert(id, (trial.encoded.clone(), trial.sample.clone()));
        Ok(Some(trial))
    }

    fn tell(&mut self, trial: &Trial, result: &TrialResult) -> Result<(), SearchError> {
        let decision = asha_on_result(
            &mut self.state,
            trial.trial_id,
            self.objective.score(result),
        )?;
        if let AshaDecision::Promote { .. } = decision {
            self.promotions.push_back(decision);
        }
        Ok(())
    }

    fn exhausted(&self) -> bool {
        self.source.is_empty() && self.promotions.is_empty() && {
            let mut probe = self.state.clone();
            next_promotion(&mut probe).is_none()
        }
    }
}

/// Model-based proposals inside round-robin Hyperband brackets.
///
/// Bracket `b` starts configurations at rung `b` and promotes them by the
/// asynchronous halving rule. A `random_fraction` share of new
/// configurations ignores the model.
pub struct BohbSearch {
    space: SearchSpace,
    objective: Objective,
    cfg: BohbConfig,
    seed: u64,
    brackets: Vec<AshaState>,
    history: Vec<Observation>,
    configs: HashMap<TrialId, Config>,
    bracket_of: HashMap<TrialId, usize>,
    promotions: VecDeque<(usize, AshaDecision)>,
    next_id: TrialId,
    started: u64,
}

impl BohbSearch {
    pub fn new(
        space: SearchSpace,
        objective: Objective,
        cfg: BohbConfig,
        eta: u32,
        r0: u64,
        max_rungs: u32,
        seed: u64,
    ) -> BohbSearch {
        BohbSearch {
            space,
            objective,
            cfg,
            seed,
            brackets: (0..max_rungs)
                .map(|_| AshaState::new(eta, r0, max_rungs))
                .collect(),
            history: Vec::new(),
            configs: HashMap::new(),
            bracket_of: HashMap::new(),
            promotions: VecDeque::new(),
            next_id: 0,
            started: 0,
        }
    }
}

impl SearchAlgorithm for BohbSearch {
    fn ask(&mut self) -> Result<Option<Trial>, SearchError> {
        let id = self.next_id;
        let promotion = self.promotions.pop_front().or_else(|| {
            self.brackets
                .iter_mut()
                .enumerate()
                .find_map(|(b, s)| next_promotion(s).map(|d| (b, d)))
        });
        let (b, trial) = match promotion {
            Some((
                b,
                AshaDecision::Promote {
                    trial_id: src,
                    rung,
                    resource,
                },
            )) => (
                b,
                promoted_trial(&self.configs, id, src, rung, resource, b as u32),
            ),
            _ => {
                let b = (self.started % self.brackets.len() as u64) as usize;
                self.started += 1;
                let rung = b as u32;
                let bracket = BracketState {
                    bracket: rung,
                    rung,
                    resource: self.brackets[b].resource(rung),
                };
                let seed = proposal_seed(self.seed, id);
                let draw = (mix_seed(seed, u64::MAX) >> 11) as f64 / (1u64 << 53) as f64;
                let history = if draw < self.cfg.random_fraction {
                    &[][..]
                } else {
                    &self.history[..]
                };
                (
                    b,
                    bohb_propose(history, &self.space, bracket, &self.cfg, seed, id)?,
                )
            }
        };
        self.next_id += 1;
        self.brackets[b].register(id, trial.rung)?;
        self.bracket_of.insert(id, b);
        self.configs
            .insert(id, (trial.encoded.clone(), trial.sample.clone()));
        Ok(Some(trial))
    }

    fn tell(&mut self, trial: &Trial, result: &TrialResult) -> Result<(), SearchError> {
        let score = self.objective.score(result);
        self.history.push(Observation {
            encoded: trial.encoded.flat(),
            score,
            resource: trial.resource,
        });
        let b = *self
            .bracket_of
            .get(&trial.trial_id)
            .ok_or(super::AshaError::UnknownTrial(trial.trial_id))?;
        let decision = asha_on_result(&mut self.brackets[b], trial.trial_id, score)?;
        if let AshaDecision::Promote { .. } = decision {
            self.promotions.push_back((b, decision));
        }
        Ok(())
    }
}

/// Archive-as-population evolutionary search over one or more objectives.
pub struct EvolutionSearch {
    space: SearchSpace,
    source: SampleSource,
    objectives: Vec<Objective>,
    cfg: EaConfig,
    seed: u64,
    resource: u64,
    initial: u64,
    archive: ParetoArchive,
    next_id: TrialId,
}

impl EvolutionSearch {
    pub fn new(
        space: SearchSpace,
        objectives: Vec<Objective>,
        cfg: EaConfig,
        initial: u64,
        resource: u64,
        seed: u64,
    ) -> EvolutionSearch {
        let orientation = objectives.iter().map(|o| o.orientation).collect();
        EvolutionSearch {
            space,
            source: SampleSource::random(mix_seed(seed, u64::MAX)),
            objectives,
            cfg,
            seed,
            resource,
            initial: initial.max(1),
            archive: ParetoArchive::new(orientation),
            next_id: 0,
        }
    }

    pub fn objective_vector(&self, result: &TrialResult) -> Option<Vec<f64>> {
        if result.status != Status::Ok {
            return None;
        }
        self.objectives
            .iter()
            .map(|o| {
                result
                    .metrics
                    .get(&o.metric)
                    .copied()
                    .filter(|v| !v.is_nan())
            })
            .collect()
    }
}

impl SearchAlgorithm for EvolutionSearch {
    fn ask(&mut self) -> Result<Option<Trial>, SearchError> {
        let id = self.next_id;
        let (encoded, sample, parent_trial) = if id < self.initial || self.archive.is_empty() {
            let (e, s) = self
                .source
                .next(&self.space)?
                .expect("random source never ends");
            (e, s, None)
        } else {
            let p = ea_step(
                &self.archive,
                &self.space,
                mix_seed(self.seed, id),
                &self.cfg,
            )?;
            (p.encoded, p.sample, p.parent_trial)
        };
        self.next_id += 1;
        Ok(Some(Trial {
            trial_id: id,
            sample,
            encoded,
            resource: self.resource,
            rung: 0,
            bracket: 0,
            parent_trial,
        }))
    }

    fn tell(&mut self, trial: &Trial, result: &TrialResult) -> Result<(), SearchError> {
        if let Some(objectives) = self.objective_vector(result) {
            self.archive.insert(ArchiveEntry {
                trial_id: Some(trial.trial_id),
                sample: trial.sample.clone(),
                encoded: trial.encoded.clone(),
                objectives,
            })?;
        }
        Ok(())
    }

    fn archive(&self) -> Option<&ParetoArchive> {
        Some(&self.archive)
    }
}
