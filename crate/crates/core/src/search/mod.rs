//! Search algorithms.
//!
//! Every algorithm proposes [`Trial`]s and consumes [`TrialResult`]s through
//! the [`SearchAlgorithm`] ask/tell interface driven by the dispatch loop.

mod algorithms;
mod asha;
mod bohb;
mod ea;
mod pareto;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sampler::{self, ConfigSample, EncodedSample, Provenance, SampleError, GENERATOR};
use crate::space::SearchSpace;

pub use algorithms::{AshaSearch, BohbSearch, EvolutionSearch, RandomSearch, SampleSource};
pub use asha::{asha_on_result, next_promotion, AshaDecision, AshaError, AshaState};
pub use bohb::{bohb_propose, good_count, BohbConfig, BracketState, Kde, Observation};
pub use ea::{ea_step, EaConfig, Proposal};
pub use pareto::{dominates, nondominated_filter, ArchiveEntry, ArchiveError, ParetoArchive};

pub type TrialId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: TrialId,
    pub sample: ConfigSample,
    pub encoded: EncodedSample,
    pub resource: u64,
    pub rung: u32,
    pub bracket: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_trial: Option<TrialId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
    Timeout,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::Failed => "failed",
            Status::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: TrialId,
    #[serde(default)]
    pub attempt: u32,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub objectives: Vec<f64>,
    pub status: Status,
    #[serde(default)]
    pub wall_time: f64,
}

impl TrialResult {
    pub fn failed(trial_id: TrialId, attempt: u32, status: Status) -> TrialResult {
        TrialResult {
            trial_id,
            attempt,
            metrics: BTreeMap::new(),
            objectives: Vec::new(),
            status,
            wall_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    #[serde(alias = "maximize")]
    Max,
    #[serde(alias = "minimize")]
    Min,
}

impl Orientation {
    pub fn parse(s: &str) -> Option<Orientation> {
        match s {
            "max" | "maximize" => Some(Orientation::Max),
            "min" | "minimize" => Some(Orientation::Min),
            _ => None,
        }
    }

    /// Maps a raw value so that larger is always better.
    pub fn orient(self, v: f64) -> f64 {
        match self {
            Orientation::Max => v,
            Orientation::Min => -v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Orientation::Max => "max",
            Orientation::Min => "min",
        }
    }
}

/// A named metric with its orientation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub metric: String,
    #[serde(default)]
    pub orientation: Orientation,
}

impl Objective {
    pub fn new(metric: &str, orientation: Orientation) -> Objective {
        Objective {
            metric: metric.to_string(),
            orientation,
        }
    }

    /// Oriented score; failed runs and missing metrics score `-inf`.
    pub fn score(&self, result: &TrialResult) -> f64 {
        match (result.status, result.metrics.get(&self.metric)) {
            (Status::Ok, Some(v)) if !v.is_nan() => self.orientation.orient(*v),
            _ => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Asha(#[from] AshaError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("{0}")]
    Config(String),
}

/// The ask/tell contract between search algorithms and the dispatch loop.
pub trait SearchAlgorithm: Send {
    /// Next trial to evaluate, or `None` when nothing can be proposed until
    /// more results arrive (or ever, once [`Self::exhausted`] holds).
    fn ask(&mut self) -> Result<Option<Trial>, SearchError>;

    /// Delivers the final result of a previously asked trial.
    fn tell(&mut self, trial: &Trial, result: &TrialResult) -> Result<(), SearchError>;

    /// True when no further trial will ever be proposed.
    fn exhausted(&self) -> bool {
        false
    }

    /// Pareto archive for multi-objective algorithms.
    fn archive(&self) -> Option<&ParetoArchive> {
        None
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn uniform_provenance(seed: u64) -> Provenance {
    Provenance {
        seed,
        sampler: format!("uniform/{GENERATOR}"),
    }
}

/// `n` i.i.d. uniform trials at resource `r0`, ids `first_id..first_id + n`.
/// Trial `i` is drawn from the seed `mix_seed(rng_seed, i)`.
pub fn propose_random(
    space: &SearchSpace,
    rng_seed: u64,
    n: usize,
    r0: u64,
    first_id: TrialId,
) -> Result<Vec<Trial>, SearchError> {
    (0..n as u64)
        .map(|i| {
            let seed = mix_seed(rng_seed, i);
            let (encoded, sample) = sampler::sample(space, seed)?;
            Ok(Trial {
                trial_id: first_id + i,
                sample,
                encoded,
                resource: r0,
                rung: 0,
                bracket: 0,
                parent_trial: None,
            })
        })
        .collect()
}
