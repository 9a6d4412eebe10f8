//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use vega::dispatch::{
    run_master, AnalyticConfig, AnalyticFn, Budget, Evaluator, FaultPlan, MasterConfig,
};
use vega::netdesc::dnet::{
    count_dnet_blocks, enumerate_dnet_blocks, render_dnet_block, validate_dnet_block,
    DnetBlockSpec, DnetGrammar, Merge, Skip,
};
use vega::netdesc::{resnet_like, ModelDescription};
use vega::sampler::{self, decode, encode_category, ConfigSample, EncodedSample};
use vega::search::{
    asha_on_result, next_promotion, ArchiveEntry, AshaDecision, AshaSearch, AshaState, BohbConfig,
    BohbSearch, EaConfig, EvolutionSearch, Objective, Orientation, ParetoArchive, RandomSearch,
    SampleSource, SearchAlgorithm, SearchError, Status, Trial, TrialId, TrialResult,
};
use vega::space::{
    parse_space, serialize_space, ConditionSpec, ConditionType, ParamSpec, ParamType, SearchSpace,
    Trigger,
};
use vega::value::{Scalar, Value};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn within(start: Instant, limit: Duration, outcome: Outcome) -> Outcome {
    let t = start.elapsed();
    match outcome {
        Ok(msg) if t < limit => Ok(format!("{msg}; {:.2}s", t.as_secs_f64())),
        Ok(msg) => Err(format!(
            "{msg}; took {:.2}s, limit {}s",
            t.as_secs_f64(),
            limit.as_secs()
        )),
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------- 1

fn random_space(rng: &mut ChaCha8Rng) -> SearchSpace {
    let n = rng.random_range(1..=4);
    let mut params = Vec::new();
    for i in 0..n {
        let key = format!("p{i}");
        let k = rng.random_range(1..=3);
        let spec = match rng.random_range(0..3) {
            0 => ParamSpec::categorical(
                &key,
                ParamType::Str,
                (0..k).map(|v| Scalar::Str(format!("s{v}"))).collect(),
            ),
            1 => ParamSpec::categorical(
                &key,
                ParamType::IntCat,
                (0..k).map(|v| Scalar::Int(v * 10)).collect(),
            ),
            _ => ParamSpec::categorical(
                &key,
                ParamType::Str,
                vec![Scalar::Str("yes".into()), Scalar::Str("no".into())],
            ),
        };
        params.push(spec);
    }
    let mut conditions = Vec::new();
    let mut children: Vec<usize> = (1..n).collect();
    children.shuffle(rng);
    for &child in children.iter().take(rng.random_range(0..=3)) {
        let parent = rng.random_range(0..child);
        let values = params[parent].values().to_vec();
        let ctype = *[
            ConditionType::Equal,
            ConditionType::NotEqual,
            ConditionType::In,
            ConditionType::Forbidden,
        ]
        .choose(rng)
        .unwrap();
        let range: Vec<Trigger> = match ctype {
            ConditionType::Equal | ConditionType::NotEqual => {
                vec![Trigger::Value(values.choose(rng).unwrap().clone())]
            }
            _ => {
                let m = rng.random_range(1..=values.len());
                values
                    .choose_multiple(rng, m)
                    .cloned()
                    .map(Trigger::Value)
                    .collect()
            }
        };
        conditions.push(ConditionSpec {
            key: format!("c{child}"),
            child: params[child].key.clone(),
            parent: params[parent].key.clone(),
            ctype,
            range,
        });
    }
    SearchSpace::new(params, conditions).expect("generated space is valid")
}

/// Brute-force activation: a key is active when it has no condition, or its
/// parent is active and the predicate holds on the parent's value.
fn oracle_active(space: &SearchSpace, assignment: &IndexMap<String, Value>) -> BTreeSet<String> {
    fn active(space: &SearchSpace, assignment: &IndexMap<String, Value>, key: &str) -> bool {
        let Some(c) = space.conditions.iter().find(|c| c.child == key) else {
            return true;
        };
        if !active(space, assignment, &c.parent) {
            return false;
        }
        let v = &assignment[&c.parent];
        let hits: Vec<bool> = c
            .range
            .iter()
            .map(|t| match t {
                Trigger::Value(s) => *v == s.to_value(),
                Trigger::Interval(_) => unreachable!("categorical parents only"),
            })
            .collect();
        match c.ctype {
            ConditionType::Equal => hits[0],
            ConditionType::NotEqual => !hits[0],
            ConditionType::In => hits.iter().any(|h| *h),
            ConditionType::Forbidden => !hits.iter().any(|h| *h),
        }
    }
    space
        .params
        .iter()
        .filter(|p| active(space, assignment, &p.key))
        .map(|p| p.key.clone())
        .collect()
}

fn all_assignments(space: &SearchSpace) -> Vec<IndexMap<String, Value>> {
    let mut out = vec![IndexMap::new()];
    for p in &space.params {
        let mut next = Vec::new();
        for a in &out {
            for v in p.values() {
                let mut b = a.clone();
                b.insert(p.key.clone(), v.to_value());
                next.push(b);
            }
        }
        out = next;
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checked, mut mismatches) = (0usize, 0usize);
    for _ in 0..200 {
        let space = random_space(&mut rng);
        for a in all_assignments(&space) {
            checked += 1;
            if space.active_keys(&a).ok() != Some(oracle_active(&space, &a)) {
                mismatches += 1;
            }
        }
    }
    within(
        start,
        Duration::from_secs(10),
        check(
            mismatches == 0,
            format!("200 spaces, {checked} assignments match the brute-force evaluator"),
            format!("{mismatches} of {checked} assignments disagree"),
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let n = 20_000u64;
    let space = parse_space("- key: lr\n  type: FLOAT_EXP\n  range: [0.00001, 0.1]\n").unwrap();
    let mut xs: Vec<f64> = (0..n)
        .map(|i| {
            let (_, s) = sampler::sample(&space, 0xC0FFEE ^ (i << 20)).unwrap();
            s.get("lr").and_then(Value::as_f64).unwrap()
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    let (lo, hi) = (1e-5f64.ln(), 1e-1f64.ln());
    let cdf = |x: f64| ((x.ln() - lo) / (hi - lo)).clamp(0.0, 1.0);
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n as f64)
                .abs()
                .max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    let d_crit = (-(0.01f64 / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt();

    let cats = [8i64, 16, 32, 64, 128, 256];
    let space =
        parse_space("- key: bs\n  type: INT_CAT\n  range: [8, 16, 32, 64, 128, 256]\n").unwrap();
    let mut counts = [0u64; 6];
    for i in 0..n {
        let (_, s) = sampler::sample(&space, 0xBEEF ^ (i << 20)).unwrap();
        let v = match s.get("bs") {
            Some(Value::Int(v)) => *v,
            other => return Err(format!("INT_CAT decoded to {other:?}")),
        };
        counts[cats.iter().position(|c| *c == v).unwrap()] += 1;
    }
    let expected = n as f64 / 6.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let chi_crit = ChiSquared::new(5.0).unwrap().inverse_cdf(0.99);
    within(
        start,
        Duration::from_secs(5),
        check(
            d < d_crit && chi2 < chi_crit,
            format!("KS D={d:.5} < {d_crit:.5}; chi2={chi2:.3} < {chi_crit:.3}"),
            format!("KS D={d:.5} (crit {d_crit:.5}); chi2={chi2:.3} (crit {chi_crit:.3})"),
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    for t in 0..100 {
        let k: usize = rng.random_range(1..=12);
        let spec = match t % 3 {
            0 => ParamSpec::categorical(
                "c",
                ParamType::IntCat,
                (0..k as i64).map(|i| Scalar::Int(i * 7 - 20)).collect(),
            ),
            1 => ParamSpec::categorical(
                "c",
                ParamType::FloatCat,
                (0..k)
                    .map(|i| Scalar::Float(i as f64 * 0.37 + rng.random::<f64>() * 0.1))
                    .collect(),
            ),
            _ => ParamSpec::categorical(
                "c",
                ParamType::Str,
                (0..k).map(|i| Scalar::Str(format!("v{i}"))).collect(),
            ),
        };
        for (i, v) in spec.values().iter().enumerate() {
            match decode(&spec, &[encode_category(i, k)]) {
                Ok(d) if d == v.to_value() => {}
                other => failures.push(format!("spec {t} category {i}: {other:?}")),
            }
        }
    }
    let mut descs = vec![resnet_like("resnet", 8)];
    let grammar = DnetGrammar::default();
    let (iter, _) = enumerate_dnet_blocks(7, 5, 3);
    descs.extend(
        iter.step_by(9973)
            .take(20)
            .filter_map(|s| render_dnet_block(&s, &grammar, 64, Some(28)).ok()),
    );
    for d in &descs {
        if ModelDescription::from_json_str(&d.to_json_string()).as_ref() != Ok(d) {
            failures.push(format!("description {} does not round-trip", d.name));
        }
    }
    let mut spaces: Vec<SearchSpace> = (0..50).map(|_| random_space(&mut rng)).collect();
    spaces.push(
        parse_space(
            "- key: a\n  type: FLOAT_EXP\n  range: [0.001, 1]\n- key: b\n  type: INT_ARRAY\n  range: [(0, 16), (0, 32)]\n\
             - key: c\n  type: MultiplyPositionArray\n  range: [64]\n  length: 8\n  times: 3\n  n: 2\n",
        )
        .unwrap(),
    );
    for s in &spaces {
        match parse_space(&serialize_space(s)) {
            Ok(back) if back == *s => {}
            other => failures.push(format!("space does not round-trip: {other:?}")),
        }
    }
    check(
        failures.is_empty(),
        format!(
            "100 categorical specs, {} descriptions, {} spaces round-trip",
            descs.len(),
            spaces.len()
        ),
        failures.join("; "),
    )
}

// ---------------------------------------------------------------- 4

/// Multimodal in `x`; the resource shifts every score equally, so all rungs
/// rank configurations alike.
fn stable_score(x: f64, resource: u64) -> f64 {
    -(x - 0.6).powi(2) + 0.05 * (40.0 * x).sin() - 1.0 / resource as f64
}

/// Low-fidelity noise that fades with resource, so rankings cross rungs.
fn crossing_score(x: f64, resource: u64) -> f64 {
    -(x - 0.6).powi(2) + 0.05 * (40.0 * x).sin() / resource as f64
}

fn synchronous_halving(xs: &[f64], eta: usize, rungs: u32, score: fn(f64, u64) -> f64) -> f64 {
    let mut alive: Vec<usize> = (0..xs.len()).collect();
    for r in 0..rungs {
        let resource = (eta as u64).pow(r);
        let mut scored: Vec<(usize, f64)> =
            alive.iter().map(|&i| (i, score(xs[i], resource))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let keep = if r + 1 == rungs {
            1
        } else {
            (scored.len() / eta).max(1)
        };
        alive = scored.into_iter().take(keep).map(|(i, _)| i).collect();
    }
    xs[alive[0]]
}

/// Runs single-worker ASHA to quiescence and returns (ASHA pick, oracle pick, evaluations).
fn asha_vs_oracle(seed: u64, score: fn(f64, u64) -> f64) -> (f64, f64, usize) {
    let space = parse_space("- key: x\n  type: FLOAT\n  range: [0, 1]\n").unwrap();
    let samples: Vec<(EncodedSample, ConfigSample)> = (0..81)
        .map(|i| sampler::sample(&space, seed * 1000 + i).unwrap())
        .collect();
    let xs: Vec<f64> = samples.iter().map(|(_, s)| x_of(s)).collect();
    let mut asha = AshaSearch::new(
        space,
        SampleSource::fixed(samples),
        Objective::new("score", Orientation::Max),
        AshaState::new(3, 1, 4),
    );
    let log = drive(&mut asha, 10_000, |s, r| {
        BTreeMap::from([("score".into(), score(x_of(s), r))])
    });
    let (winner, _) = asha.incumbent().expect("an incumbent");
    let picked = x_of(
        &log.iter()
            .find(|(t, _)| t.trial_id == winner)
            .unwrap()
            .0
            .sample,
    );
    (picked, synchronous_halving(&xs, 3, 4, score), log.len())
}

fn x_of(s: &ConfigSample) -> f64 {
    s.get("x").and_then(Value::as_f64).unwrap()
}

fn evaluate_locally(
    t: &Trial,
    f: impl Fn(&ConfigSample, u64) -> BTreeMap<String, f64>,
) -> TrialResult {
    TrialResult {
        trial_id: t.trial_id,
        attempt: 0,
        metrics: f(&t.sample, t.resource),
        objectives: Vec::new(),
        status: Status::Ok,
        wall_time: t.resource as f64,
    }
}

fn drive(
    alg: &mut dyn SearchAlgorithm,
    limit: usize,
    f: impl Fn(&ConfigSample, u64) -> BTreeMap<String, f64>,
) -> Vec<(Trial, TrialResult)> {
    let mut log = Vec::new();
    while log.len() < limit {
        let Some(t) = alg.ask().unwrap() else { break };
        let r = evaluate_locally(&t, &f);
        alg.tell(&t, &r).unwrap();
        log.push((t, r));
    }
    log
}

fn asha_invariant_streams(streams: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut promotions = 0;
    for s in 0..streams {
        let mut state = AshaState::new(3, 1, 4);
        let mut pending: Vec<TrialId> = Vec::new();
        let mut next = 0;
        let len = rng.random_range(1..60);
        for _ in 0..len {
            if pending.is_empty() || rng.random_bool(0.4) {
                state.register(next, 0).unwrap();
                pending.push(next);
                next += 1;
                continue;
            }
            let id = pending.swap_remove(rng.random_range(0..pending.len()));
            let score = if rng.random_bool(0.1) {
                f64::NEG_INFINITY
            } else {
                rng.random_range(0..20) as f64
            };
            let mut decisions = vec![asha_on_result(&mut state, id, score).unwrap()];
            while let Some(d) = next_promotion(&mut state) {
                decisions.push(d);
            }
            for d in decisions {
                if let AshaDecision::Promote {
                    trial_id, rung: to, ..
                } = d
                {
                    let from = to - 1;
                    let top: Vec<TrialId> = state
                        .ranked(from)
                        .into_iter()
                        .take(state.top_k(from))
                        .map(|(i, _)| i)
                        .collect();
                    if !top.contains(&trial_id) {
                        return Err(format!("stream {s}: trial {trial_id} promoted from rung {from} outside top {top:?}"));
                    }
                    let score = state.rungs[from as usize]
                        .iter()
                        .find(|e| e.0 == trial_id)
                        .unwrap()
                        .1;
                    if !score.is_finite() {
                        return Err(format!(
                            "stream {s}: trial {trial_id} promoted with score {score}"
                        ));
                    }
                    promotions += 1;
                    state.register(next, to).unwrap();
                    pending.push(next);
                    next += 1;
                }
            }
        }
    }
    Ok(promotions)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let (asha_x, oracle_x, evals) = asha_vs_oracle(1, stable_score);
    let streams = asha_invariant_streams(10_000)?;
    let timed = within(
        start,
        Duration::from_secs(5),
        check(
            asha_x == oracle_x,
            format!(
                "ASHA and synchronous halving both select x={asha_x:.6} ({evals} evaluations); \
                 10^4 streams, {streams} promotions all within top-k at promotion time"
            ),
            format!("ASHA selects x={asha_x:.6}, synchronous halving x={oracle_x:.6}"),
        ),
    )?;
    let agree = |score: fn(f64, u64) -> f64| {
        (0..200)
            .filter(|&s| {
                let (a, o, _) = asha_vs_oracle(s, score);
                a == o
            })
            .count()
    };
    println!(
        "criterion 4 diagnostic: with rankings that cross rungs, ASHA and synchronous halving agree on {}/200 sample sets",
        agree(crossing_score)
    );
    let agree_stable = agree(stable_score);
    check(
        agree_stable == 200,
        format!("{timed}; agreement on 200/200 further sample sets"),
        format!("agreement on only {agree_stable}/200 further sample sets"),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let space = parse_space("- key: x\n  type: FLOAT\n  range: [0, 1]\n").unwrap();
    let mut hits = 0;
    for seed in 0..100 {
        let mut bohb = BohbSearch::new(
            space.clone(),
            Objective::new("y", Orientation::Max),
            BohbConfig::default(),
            3,
            1,
            3,
            seed,
        );
        let log = drive(&mut bohb, 50, |s, _| {
            BTreeMap::from([("y".into(), -(x_of(s) - 0.7).powi(2))])
        });
        let best = log
            .iter()
            .max_by(|a, b| a.1.metrics["y"].total_cmp(&b.1.metrics["y"]))
            .map(|(t, _)| x_of(&t.sample))
            .unwrap();
        if (best - 0.7).abs() <= 0.1 {
            hits += 1;
        }
    }
    within(
        start,
        Duration::from_secs(30),
        check(
            hits >= 90,
            format!("{hits}/100 runs land in 0.7 ± 0.1"),
            format!("only {hits}/100 runs land in 0.7 ± 0.1"),
        ),
    )
}

// ---------------------------------------------------------------- 6

fn brute_front(points: &[Vec<f64>]) -> BTreeSet<Vec<u64>> {
    let dominated = |a: &[f64], b: &[f64]| {
        b.iter().zip(a).all(|(y, x)| y >= x) && b.iter().zip(a).any(|(y, x)| y > x)
    };
    points
        .iter()
        .filter(|p| !points.iter().any(|q| dominated(p, q)))
        .map(|p| p.iter().map(|v| v.to_bits()).collect())
        .collect()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let points: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random(), rng.random()]).collect();
        let mut archive = ParetoArchive::new(vec![Orientation::Max; 2]);
        for (i, p) in points.iter().enumerate() {
            archive
                .insert(ArchiveEntry {
                    trial_id: Some(i as u64),
                    sample: ConfigSample::default(),
                    encoded: EncodedSample::default(),
                    objectives: p.clone(),
                })
                .map_err(|e| e.to_string())?;
        }
        let got: BTreeSet<Vec<u64>> = archive
            .objectives()
            .iter()
            .map(|p| p.iter().map(|v| v.to_bits()).collect())
            .collect();
        if got != brute_front(&points) || got.len() != archive.len() {
            return Err(format!(
                "seed {seed}: archive differs from the exhaustive filter"
            ));
        }
    }
    let space = parse_space("- key: i\n  type: INT\n  range: [0, 20]\n").unwrap();
    let truth: BTreeSet<i64> = (0..=20).collect();
    let mut recovered = 0;
    for seed in 0..100 {
        let mut ea = EvolutionSearch::new(
            space.clone(),
            vec![
                Objective::new("f1", Orientation::Max),
                Objective::new("f2", Orientation::Max),
            ],
            EaConfig::default(),
            10,
            1,
            seed,
        );
        let f = |s: &ConfigSample, _| {
            let u = s.get("i").and_then(Value::as_f64).unwrap() / 20.0;
            BTreeMap::from([("f1".into(), u), ("f2".into(), 1.0 - u * u)])
        };
        for _ in 0..500 {
            let t = ea.ask().unwrap().unwrap();
            let mut r = evaluate_locally(&t, f);
            r.objectives = vec![r.metrics["f1"], r.metrics["f2"]];
            ea.tell(&t, &r).unwrap();
            let front: BTreeSet<i64> = ea
                .archive()
                .unwrap()
                .entries
                .iter()
                .map(|e| match e.sample.get("i") {
                    Some(Value::Int(i)) => *i,
                    _ => -1,
                })
                .collect();
            if front == truth {
                recovered += 1;
                break;
            }
        }
    }
    within(
        start,
        Duration::from_secs(60),
        check(
            recovered >= 95,
            format!("archive equals exhaustive filter for 100 seeds; EA recovers all 21 Pareto points in {recovered}/100 seeds"),
            format!("EA recovers the full front in only {recovered}/100 seeds"),
        ),
    )
}

// ---------------------------------------------------------------- 7

fn generate_and_filter(vocab: usize, ratios: usize, max_stem: usize) -> BTreeSet<String> {
    let grammar = DnetGrammar::sized(vocab, ratios, max_stem);
    let mut out = BTreeSet::new();
    for k in 1..=max_stem {
        let nodes = k + 2;
        let pairs: Vec<(usize, usize)> = (0..nodes)
            .flat_map(|a| (a + 1..nodes).map(move |b| (a, b)))
            .collect();
        let mut stems = vec![vec![]];
        for _ in 0..k {
            stems = stems
                .into_iter()
                .flat_map(|s: Vec<usize>| (0..vocab).map(move |o| [s.clone(), vec![o]].concat()))
                .collect();
        }
        for stem in &stems {
            for ratio in 0..ratios {
                // Every subset of pairs, each with either merge letter.
                let choices = 3usize.pow(pairs.len() as u32);
                for mut code in 0..choices {
                    let mut skips = Vec::new();
                    for &(from, to) in &pairs {
                        match code % 3 {
                            1 => skips.push(Skip {
                                from,
                                to,
                                merge: Merge::Add,
                            }),
                            2 => skips.push(Skip {
                                from,
                                to,
                                merge: Merge::Concat,
                            }),
                            _ => {}
                        }
                        code /= 3;
                    }
                    let spec = DnetBlockSpec {
                        stem_ops: stem.clone(),
                        ratio,
                        skips,
                    };
                    if validate_dnet_block(&spec, &grammar).is_empty() {
                        out.insert(spec.code());
                    }
                }
            }
        }
    }
    out
}

fn random_spec(rng: &mut ChaCha8Rng, grammar: &DnetGrammar) -> DnetBlockSpec {
    loop {
        let k = rng.random_range(1..=grammar.max_stem);
        let mut skips = Vec::new();
        for from in 0..k + 2 {
            for to in from + 2..k + 2 {
                if rng.random_bool(0.3) {
                    let merge = if rng.random_bool(0.5) {
                        Merge::Add
                    } else {
                        Merge::Concat
                    };
                    skips.push(Skip { from, to, merge });
                }
            }
        }
        let spec = DnetBlockSpec {
            stem_ops: (0..k)
                .map(|_| rng.random_range(0..grammar.ops.len()))
                .collect(),
            ratio: rng.random_range(0..grammar.ratios.len()),
            skips,
        };
        if validate_dnet_block(&spec, grammar).is_empty() {
            return spec;
        }
    }
}

fn attr_u64(d: &ModelDescription, key: &str) -> u64 {
    d.attrs
        .get(key)
        .and_then(|v| v.as_u64())
        .unwrap_or(u64::MAX)
}

fn op_of(d: &ModelDescription) -> &str {
    d.attrs.get("op").and_then(|v| v.as_str()).unwrap_or("")
}

fn inputs_of(d: &ModelDescription) -> Vec<String> {
    d.attrs
        .get("inputs")
        .and_then(|v| v.as_array())
        .map(|a| {
            a.iter()
                .filter_map(|s| s.as_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default()
}

/// Checks the four structural rules on a rendered block.
fn structural_rules(spec: &DnetBlockSpec, c: u64, block: &ModelDescription) -> Result<(), String> {
    let nodes = &block.children;
    let consumers = |name: &str| -> Vec<&ModelDescription> {
        nodes
            .iter()
            .filter(|n| inputs_of(n).iter().any(|i| i == name))
            .collect()
    };
    let is_stem = |n: &ModelDescription| {
        n.name
            .strip_prefix("op")
            .is_some_and(|r| !r.is_empty() && r.chars().all(|ch| ch.is_ascii_digit()))
    };
    for (i, n) in nodes.iter().enumerate() {
        if is_stem(n) {
            let next = nodes.get(i + 1).ok_or("stem op at end")?;
            if op_of(next) != "batchnorm" || inputs_of(next) != [n.name.clone()] {
                return Err(format!("{} not followed by BatchNorm", n.name));
            }
        }
        if matches!(op_of(n), "add" | "concat") {
            let next = nodes.get(i + 1).ok_or("merge at end")?;
            if op_of(next) != "relu" || inputs_of(next) != [n.name.clone()] {
                return Err(format!("{} not followed by ReLU", n.name));
            }
            let widths: BTreeSet<u64> = inputs_of(n)
                .iter()
                .map(|src| {
                    nodes
                        .iter()
                        .find(|m| &m.name == src)
                        .map_or(0, |m| attr_u64(m, "outchannels"))
                })
                .collect();
            if op_of(n) == "add" && widths.len() != 1 {
                return Err(format!("{} adds streams of widths {widths:?}", n.name));
            }
        }
        if op_of(n) == "batchnorm" {
            let cs = consumers(&n.name);
            let relu = cs.iter().any(|m| op_of(m) == "relu");
            let merge = cs
                .iter()
                .any(|m| matches!(op_of(m), "add" | "concat") || m.name.starts_with("adapter"));
            if relu && merge {
                return Err(format!("{} feeds both ReLU and a merge", n.name));
            }
            if !relu && !merge {
                return Err(format!("{} feeds neither ReLU nor a merge", n.name));
            }
        }
    }
    // Adapters: one per Add stream whose width differs from the main stream.
    let k = spec.k();
    let mid = nodes
        .iter()
        .find(|n| n.name == "op1")
        .map_or(c, |n| attr_u64(n, "outchannels"));
    let width = |i: usize| if i == 0 || i >= k { c } else { mid };
    let joins = spec.joins();
    let mut expected = 0;
    for (&j, &m) in &joins {
        if m != Merge::Add {
            continue;
        }
        let mut srcs: Vec<usize> = spec
            .skips
            .iter()
            .filter(|s| s.to == j)
            .map(|s| s.from)
            .collect();
        if j == k + 1 {
            srcs.push(0);
        }
        expected += srcs.iter().filter(|&&f| width(f) != width(j - 1)).count();
    }
    let adapters: Vec<&ModelDescription> = nodes
        .iter()
        .filter(|n| n.name.starts_with("adapter"))
        .collect();
    if adapters.len() != expected {
        return Err(format!("{} adapters, expected {expected}", adapters.len()));
    }
    if adapters
        .iter()
        .any(|a| op_of(a) != "conv1x1" || attr_u64(a, "inchannels") == attr_u64(a, "outchannels"))
    {
        return Err("adapter is not a channel-changing conv1x1".into());
    }
    let input = nodes.first().ok_or("empty block")?;
    let output = nodes.last().ok_or("empty block")?;
    if output.name != "output"
        || attr_u64(output, "outchannels") != c
        || attr_u64(input, "outchannels") != c
        || attr_u64(block, "outchannels") != c
    {
        return Err("output channels differ from input channels".into());
    }
    Ok(())
}

fn criterion_7() -> Outcome {
    let (iter, count) = enumerate_dnet_blocks(2, 1, 2);
    let codes: Vec<String> = iter.map(|s| s.code()).collect();
    let unique: BTreeSet<String> = codes.iter().cloned().collect();
    let oracle = generate_and_filter(2, 1, 2);
    if unique != oracle || codes.len() != unique.len() || count as usize != codes.len() {
        return Err(format!(
            "enumerator yields {} ({} unique, count {count}), oracle {}",
            codes.len(),
            unique.len(),
            oracle.len()
        ));
    }
    let grammar = DnetGrammar::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rendered = 0;
    let mut attempts = 0;
    while rendered < 100 {
        attempts += 1;
        let spec = random_spec(&mut rng, &grammar);
        let c = *[32u64, 64, 128].choose(&mut rng).unwrap();
        let block = render_dnet_block(&spec, &grammar, c, Some(28))
            .map_err(|e| format!("{}: {e}", spec.code()))?;
        structural_rules(&spec, c, &block).map_err(|e| format!("{}: {e}", spec.code()))?;
        rendered += 1;
    }
    let default = count_dnet_blocks(7, 5, 3);
    println!("criterion 7 diagnostic: default grammar (7 ops, 5 ratios, stem <= 3) admits {default} blocks against the 800k reference figure (non-binding)");
    Ok(format!(
        "(2,1,2) enumeration = oracle ({} blocks); {rendered}/{attempts} fuzzed specs satisfy the four rules; default count {default} vs 800k reference (non-binding)",
        oracle.len()
    ))
}

// ---------------------------------------------------------------- 8

/// Counts deliveries per trial id.
struct Counting {
    inner: RandomSearch,
    told: HashMap<TrialId, usize>,
}

impl SearchAlgorithm for Counting {
    fn ask(&mut self) -> Result<Option<Trial>, SearchError> {
        self.inner.ask()
    }

    fn tell(&mut self, t: &Trial, r: &TrialResult) -> Result<(), SearchError> {
        *self.told.entry(t.trial_id).or_default() += 1;
        self.inner.tell(t, r)
    }
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let space = parse_space("- key: x\n  type: FLOAT\n  range: [-1, 1]\n").unwrap();
    let mut alg = Counting {
        inner: RandomSearch::new(space, SampleSource::random(8), 1),
        told: HashMap::new(),
    };
    let cfg = MasterConfig {
        workers: 4,
        capacity: 1,
        max_retries: 2,
        trial_timeout_ms: 500,
        heartbeat_ms: 20,
        budget: Budget {
            max_trials: 100,
            max_resource: None,
        },
        seed: 8,
        objectives: vec![Objective::new("objective", Orientation::Min)],
        fault: Some(FaultPlan {
            worker: 2,
            after_tasks: 10,
        }),
    };
    let ev = Arc::new(Evaluator::Analytic(AnalyticConfig::new(AnalyticFn::Sphere)));
    let out = run_master(&cfg, &mut alg, ev, &|_| Ok(None)).map_err(|e| e.to_string())?;
    let ids: BTreeSet<TrialId> = out.history.iter().map(|h| h.trial_id).collect();
    let once = alg.told.values().all(|&n| n == 1);
    let retried = out.history.iter().filter(|h| h.attempt > 0).count();
    within(
        start,
        Duration::from_secs(20),
        check(
            ids == (0..100).collect() && out.history.len() == 100 && once && alg.told.len() == 100,
            format!(
                "all 100 trials done, each delivered once; {retried} retried after the worker died"
            ),
            format!(
                "{} distinct ids, {} records, exactly-once {once}",
                ids.len(),
                out.history.len()
            ),
        ),
    )
}

// ---------------------------------------------------------------- 9, 10

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn vega_run(config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_vega"))
        .arg("run")
        .arg(config)
        .env("VEGA_OUTPUT_DIR", out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!(
            "vega run failed: {}",
            String::from_utf8_lossy(&status.stderr)
        ))
    }
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = repo_root().join("configs/hpo_asha.yml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    vega_run(&config, &a)?;
    vega_run(&config, &b)?;
    let files = [
        "hpo/history.jsonl",
        "hpo/best.json",
        "hpo/step_output.json",
        "report.json",
        "report.txt",
    ];
    let mut differ = Vec::new();
    for f in files {
        let x = std::fs::read(a.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.join(f)).map_err(|e| format!("{f}: {e}"))?;
        if x != y {
            differ.push(f);
        }
    }
    let lines = std::fs::read_to_string(a.join("hpo/history.jsonl"))
        .unwrap_or_default()
        .lines()
        .count();
    within(
        start,
        Duration::from_secs(60),
        check(
            differ.is_empty() && lines > 0,
            format!(
                "two runs byte-identical over {} files ({lines} history records)",
                files.len()
            ),
            format!("files differ: {differ:?}"),
        ),
    )
}

fn criterion_10() -> Outcome {
    #[derive(serde::Deserialize)]
    struct Out {
        model_descs: Vec<vega::pipeline::DescFile>,
        #[serde(default)]
        consumed: Vec<vega::pipeline::DescFile>,
        pareto: Option<Vec<vega::pipeline::BestEntry>>,
        objectives: Vec<Objective>,
    }
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("run");
    vega_run(&repo_root().join("configs/nas_dnet.yml"), &out)?;
    let read = |step: &str| -> Result<Out, String> {
        let text = std::fs::read_to_string(out.join(step).join("step_output.json"))
            .map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    let (nas, ft) = (read("nas")?, read("fullytrain")?);
    let front = nas.pareto.ok_or("no Pareto archive")?;
    let oriented: Vec<Vec<f64>> = front
        .iter()
        .map(|e| {
            e.objectives
                .iter()
                .zip(&nas.objectives)
                .map(|(v, o)| o.orientation.orient(*v))
                .collect()
        })
        .collect();
    let nondominated = brute_front(&oriented).len() == oriented.len();
    let mut hashes_ok = true;
    for f in &ft.consumed {
        let bytes = std::fs::read(out.join(&f.path)).map_err(|e| e.to_string())?;
        hashes_ok &= vega::pipeline::sha256_hex(&bytes) == f.sha256;
    }
    let same = ft.consumed == nas.model_descs;
    within(
        start,
        Duration::from_secs(120),
        check(
            nondominated && same && hashes_ok && !front.is_empty() && front.len() == nas.model_descs.len(),
            format!("front of {} nondominated; fully-train consumed exactly the {} emitted files (sha256 verified)", front.len(), ft.consumed.len()),
            format!(
                "nondominated {nondominated}, same files {same}, hashes {hashes_ok}, front {} / descs {}",
                front.len(),
                nas.model_descs.len()
            ),
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "space/condition oracle", criterion_1),
        (2, "sampler distribution", criterion_2),
        (3, "round-trips", criterion_3),
        (4, "ASHA oracle", criterion_4),
        (5, "BOHB-lite convergence", criterion_5),
        (6, "Pareto oracle", criterion_6),
        (7, "DNet grammar", criterion_7),
        (8, "dispatch fault tolerance", criterion_8),
        (9, "end-to-end determinism", criterion_9),
        (10, "NAS to fully-train", criterion_10),
    ];
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        match f() {
            Ok(msg) => println!("criterion {n} ({name}): PASS - {msg}"),
            Err(msg) => {
                println!("criterion {n} ({name}): FAIL - {msg}");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
