use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ParetoArchive, SearchError, TrialId};
use crate::sampler::{self, decode_sample, draw_encoded, ConfigSample, EncodedSample, Provenance};
use crate::space::SearchSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EaConfig {
    pub mutation_rate: f64,
    pub sigma: f64,
    /// Mix coordinates uniformly with a second parent before mutating.
    pub crossover: bool,
}

impl Default for EaConfig {
    fn default() -> Self {
        EaConfig {
            mutation_rate: 0.2,
            sigma: 0.1,
            crossover: false,
        }
    }
}

/// A proposed configuration with its lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub encoded: EncodedSample,
    pub sample: ConfigSample,
    pub parent_trial: Option<TrialId>,
}

/// Mutates a uniformly chosen archive member. An empty archive yields a
/// uniform random proposal.
pub fn ea_step(
    archive: &ParetoArchive,
    space: &SearchSpace,
    rng_seed: u64,
    cfg: &EaConfig,
) -> Result<Proposal, SearchError> {
    let mut rng = sampler::rng_from_seed(rng_seed);
    if archive.is_empty() {
        let encoded = draw_encoded(space, &mut rng);
        let sample = decode_sample(space, &encoded, super::uniform_provenance(rng_seed))?;
        return Ok(Proposal {
            encoded,
            sample,
            parent_trial: None,
        });
    }
    let parent = &archive.entries[rng.random_range(0..archive.len())];
    let mut flat = parent.encoded.flat();
    if cfg.crossover && archive.len() > 1 {
        let other = archive.entries[rng.random_range(0..archive.len())]
            .encoded
            .flat();
        for (x, y) in flat.iter_mut().zip(other) {
            if rng.random_bool(0.5) {
                *x = y;
            }
        }
    }
    let jitter = (cfg.sigma > 0.0).then(|| Normal::new(0.0, cfg.sigma).expect("finite sigma"));
    for x in &mut flat {
        if rng.random::<f64>() < cfg.mutation_rate {
            *x = rng.random();
        } else if let Some(n) = &jitter {
            *x = (*x + n.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    let encoded = EncodedSample::from_flat(space, &flat);
    let sample = decode_sample(
        space,
        &encoded,
        Provenance {
            seed: rng_seed,
            sampler: format!("ea/{}", sampler::GENERATOR),
        },
    )?;
    Ok(Proposal {
        encoded,
        sample,
        parent_trial: parent.trial_id,
    })
}
