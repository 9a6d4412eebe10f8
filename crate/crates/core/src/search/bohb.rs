use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{mix_seed, uniform_provenance, SearchError, Trial, TrialId};
use crate::sampler::{self, decode_sample, draw_encoded, EncodedSample, Provenance};
use crate::space::SearchSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BohbConfig {
    pub gamma: f64,
    pub n_candidates: usize,
    pub bandwidth_floor: f64,
    /// Share of new configurations drawn uniformly by the search loop.
    pub random_fraction: f64,
}

impl Default for BohbConfig {
    fn default() -> Self {
        BohbConfig {
            gamma: 0.15,
            n_candidates: 24,
            bandwidth_floor: 1e-3,
            random_fraction: 1.0 / 3.0,
        }
    }
}

/// Where a new configuration enters the Hyperband schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BracketState {
    pub bracket: u32,
    pub rung: u32,
    pub resource: u64,
}

/// One finished evaluation: encoded point, oriented score (higher is
/// better) and the resource it ran at.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub encoded: Vec<f64>,
    pub score: f64,
    pub resource: u64,
}

/// Size of the good set for `n` observations in `d` dimensions.
pub fn good_count(n: usize, d: usize, gamma: f64) -> usize {
    let by_quantile = (gamma * n as f64).ceil() as usize;
    by_quantile.max(d + 1).min(n.saturating_sub(1)).max(1)
}

/// Univariate Gaussian kernel density with Scott's bandwidth.
#[derive(Debug, Clone)]
pub struct Kde {
    points: Vec<f64>,
    bandwidth: f64,
}

impl Kde {
    pub fn fit(points: Vec<f64>, floor: f64) -> Kde {
        let n = points.len() as f64;
        let mean = points.iter().sum::<f64>() / n;
        let var = if points.len() > 1 {
            points.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let bandwidth = (var.sqrt() * n.powf(-0.2)).max(floor);
        Kde { points, bandwidth }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        self.points
            .iter()
            .map(|p| norm * (-0.5 * ((x - p) / h).powi(2)).exp())
            .sum::<f64>()
            / self.points.len() as f64
    }

    /// A draw clipped to the unit interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let center = self.points[rng.random_range(0..self.points.len())];
        let noise = Normal::new(0.0, self.bandwidth).expect("positive bandwidth");
        (center + noise.sample(rng)).clamp(0.0, 1.0)
    }
}

/// Largest resource with at least `min_points` observations.
fn model_fidelity(history: &[Observation], min_points: usize) -> Option<u64> {
    let mut resources: Vec<u64> = history.iter().map(|o| o.resource).collect();
    resources.sort_unstable();
    resources.dedup();
    resources
        .into_iter()
        .rev()
        .find(|r| history.iter().filter(|o| o.resource == *r).count() >= min_points)
}

/// Proposes a configuration for `bracket`.
///
/// A fidelity is modelled once both the good and the bad set can hold
/// `D + 1` observations; with no such fidelity the proposal is uniform.
/// Otherwise the observations at the highest such fidelity are split by
/// rank into good and bad sets, factored KDEs are fitted to each and the
/// best of `n_candidates` draws from the good model by `l(x)/g(x)` wins.
pub fn bohb_propose(
    history: &[Observation],
    space: &SearchSpace,
    bracket: BracketState,
    cfg: &BohbConfig,
    rng_seed: u64,
    trial_id: TrialId,
) -> Result<Trial, SearchError> {
    let mut rng = sampler::rng_from_seed(rng_seed);
    let d = sampler::space_dim(space);
    let modelled = model_fidelity(history, 2 * (d + 1)).filter(|_| d > 0);
    let (encoded, provenance) = match modelled {
        None => (draw_encoded(space, &mut rng), uniform_provenance(rng_seed)),
        Some(fidelity) => {
            let mut obs: Vec<&Observation> =
                history.iter().filter(|o| o.resource == fidelity).collect();
            obs.sort_by(|a, b| b.score.total_cmp(&a.score));
            let n_good = good_count(obs.len(), d, cfg.gamma);
            let (good, bad) = obs.split_at(n_good);
            let fit = |set: &[&Observation], j: usize| {
                Kde::fit(
                    set.iter().map(|o| o.encoded[j]).collect(),
                    cfg.bandwidth_floor,
                )
            };
            let l: Vec<Kde> = (0..d).map(|j| fit(good, j)).collect();
            let g: Vec<Kde> = (0..d).map(|j| fit(bad, j)).collect();
            let mut best: Option<(f64, Vec<f64>)> = None;
            for _ in 0..cfg.n_candidates.max(1) {
                let x: Vec<f64> = l.iter().map(|k| k.sample(&mut rng)).collect();
                let ratio: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| (l[j].pdf(v) + 1e-300).ln() - (g[j].pdf(v) + 1e-300).ln())
                    .sum();
                if best.as_ref().is_none_or(|(b, _)| ratio > *b) {
                    best = Some((ratio, x));
                }
            }
            let flat = best.expect("at least one candidate").1;
            (
                EncodedSample::from_flat(space, &flat),
                Provenance {
                    seed: rng_seed,
                    sampler: format!("bohb-kde@{fidelity}/{}", sampler::GENERATOR),
                },
            )
        }
    };
    let sample = decode_sample(space, &encoded, provenance)?;
    Ok(Trial {
        trial_id,
        sample,
        encoded,
        resource: bracket.resource,
        rung: bracket.rung,
        bracket: bracket.bracket,
        parent_trial: None,
    })
}

/// Seed for the proposal of `trial_id` under a base seed.
pub(crate) fn proposal_seed(base: u64, trial_id: TrialId) -> u64 {
    mix_seed(base, trial_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::parse_space;

    fn space() -> SearchSpace {
        parse_space("- key: u\n  type: FLOAT\n  range: [0, 1]\n").unwrap()
    }

    const B0: BracketState = BracketState {
        bracket: 0,
        rung: 0,
        resource: 1,
    };

    fn history(n: usize, seed: u64, f: impl Fn(f64) -> f64) -> Vec<Observation> {
        let mut rng = sampler::rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                Observation {
                    encoded: vec![u],
                    score: f(u),
                    resource: 1,
                }
            })
            .collect()
    }

    #[test]
    fn cold_start_is_uniform() {
        let t = bohb_propose(&[], &space(), B0, &BohbConfig::default(), 3, 0).unwrap();
        let (enc, _) = sampler::sample(&space(), 3).unwrap();
        assert_eq!(t.encoded, enc);
        assert!(t.sample.provenance.sampler.starts_with("uniform"));
    }

    #[test]
    fn good_set_size_rule() {
        assert_eq!(good_count(20, 1, 0.15), 3);
        assert_eq!(good_count(20, 5, 0.15), 6);
        assert_eq!(good_count(4, 5, 0.15), 3);
        assert_eq!(good_count(2, 1, 0.15), 1);
    }

    #[test]
    fn concentrates_near_optimum() {
        let mut hits = 0;
        for seed in 0..100 {
            let h = history(50, 1000 + seed, |u| -(u - 0.7).powi(2));
            let t = bohb_propose(&h, &space(), B0, &BohbConfig::default(), seed, 0).unwrap();
            if (t.encoded.flat()[0] - 0.7).abs() <= 0.15 {
                hits += 1;
            }
        }
        assert!(hits >= 90, "{hits}/100");
    }

    #[test]
    fn invariant_under_monotone_score_transform() {
        let h = history(30, 5, |u| -(u - 0.3).powi(2));
        let warped: Vec<Observation> = h
            .iter()
            .map(|o| Observation {
                score: (o.score * 7.0).exp() - 3.0,
                ..o.clone()
            })
            .collect();
        for seed in 0..10 {
            let a = bohb_propose(&h, &space(), B0, &BohbConfig::default(), seed, 0).unwrap();
            let b = bohb_propose(&warped, &space(), B0, &BohbConfig::default(), seed, 0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn models_highest_populated_fidelity() {
        let mut h = history(10, 1, |u| u);
        h.push(Observation {
            encoded: vec![0.5],
            score: 1.0,
            resource: 9,
        });
        assert_eq!(model_fidelity(&h, 2), Some(1));
        h.push(Observation {
            encoded: vec![0.6],
            score: 1.0,
            resource: 9,
        });
        assert_eq!(model_fidelity(&h, 2), Some(9));
    }
}
