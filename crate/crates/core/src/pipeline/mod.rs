//! Pipe-step orchestration.
//!
//! A pipeline runs its steps in order under one output directory:
//!
//! ```text
//! <output_dir>/config.json
//! <output_dir>/<step>/history.jsonl
//! <output_dir>/<step>/best.json | pareto.json
//! <output_dir>/<step>/model_descs/desc_NNN.json
//! <output_dir>/<step>/step_output.json
//! <output_dir>/report.json
//! <output_dir>/report.txt
//! ```
//!
//! Steps hand model descriptions over through the files under
//! `model_descs/`; a consuming step re-reads and re-hashes them.

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    load_pipeline, parse_pipeline, rungs_within, AlgorithmConfig, AlgorithmKind, EvaluatorConfig,
    General, ModelSource, PipeStep, PipelineConfig, StepConfig, StepKind, TrainerConfig,
    WorkerConfig, OUTPUT_DIR_ENV,
};
pub use report::{read_step_outputs, render_report, rerender_report, Report, StepSummary};

use crate::dispatch::{
    run_master, Budget, Evaluator, HistoryRecord, MasterConfig, RunOutcome, TabularTable,
};
use crate::netdesc::dnet::{nth_dnet_block, DnetGrammar};
use crate::netdesc::{apply_sample, resnet_like, ModelDescription};
use crate::sampler::{ConfigSample, EncodedSample};
use crate::search::{
    ArchiveEntry, AshaSearch, AshaState, BohbSearch, EvolutionSearch, Objective, ParetoArchive,
    RandomSearch, SampleSource, SearchAlgorithm, SearchError, Status, Trial, TrialId, TrialResult,
};
use crate::value::Value;
use crate::yaml::SyntaxError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("syntax error: {0}")]
    Syntax(#[from] SyntaxError),
    #[error("{context}: {msg}")]
    Config { context: String, msg: String },
    #[error("empty pipeline")]
    EmptyPipeline,
    #[error("step `{step}`: unknown step type `{name}`")]
    UnknownStepType { step: String, name: String },
    #[error("step `{step}`: unknown search algorithm `{name}`")]
    UnknownAlgorithm { step: String, name: String },
    #[error("step `{step}`: search space: {source}")]
    Space {
        step: String,
        source: crate::space::SpaceError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("step `{step}` failed: {msg}")]
    Step { step: String, msg: String },
}

impl PipelineError {
    pub(crate) fn config(context: &str, msg: impl Into<String>) -> PipelineError {
        PipelineError::Config {
            context: context.to_string(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> PipelineError {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn step(step: &str, msg: impl ToString) -> PipelineError {
        PipelineError::Step {
            step: step.to_string(),
            msg: msg.to_string(),
        }
    }
}

/// A file written by one step, identified by content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescFile {
    /// Path relative to the output directory, with `/` separators.
    pub path: String,
    pub sha256: String,
}

/// One best configuration of a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEntry {
    pub trial_id: TrialId,
    pub sample: ConfigSample,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub step_name: String,
    pub step_type: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub objectives: Vec<Objective>,
    pub trials: usize,
    pub failed_trials: usize,
    /// Best entry for one objective, or the archive in insertion order.
    pub best_samples: Vec<BestEntry>,
    /// Descriptions emitted for `best_samples`, index for index.
    pub model_descs: Vec<DescFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub consumed: Vec<DescFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pareto: Option<Vec<BestEntry>>,
    pub history_path: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Per-step seed from the global seed and the step name.
pub fn step_seed(seed: u64, step: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(step.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

impl EvaluatorConfig {
    /// Instantiates the evaluator; table paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Evaluator, String> {
        Ok(match self {
            EvaluatorConfig::Analytic(a) => Evaluator::Analytic(a.clone()),
            EvaluatorConfig::Tabular { path } => {
                let p = base.join(path);
                Evaluator::Tabular(
                    TabularTable::load(&p).map_err(|e| format!("{}: {e}", p.display()))?,
                )
            }
            EvaluatorConfig::Subprocess(s) => Evaluator::Subprocess(s.clone()),
        })
    }
}

fn build_algorithm(step: &StepConfig, seed: u64) -> Box<dyn SearchAlgorithm> {
    let a = &step.search_algorithm;
    let space = step.space.clone();
    let rungs = a.max_rungs.unwrap_or(1);
    let primary = a.objectives[0].clone();
    match a.kind {
        AlgorithmKind::RandomSearch => Box::new(RandomSearch::new(
            space,
            SampleSource::random(seed),
            step.trainer.epochs,
        )),
        AlgorithmKind::AshaHpo => Box::new(AshaSearch::new(
            space,
            SampleSource::random(seed),
            primary,
            AshaState::new(a.eta, a.r0, rungs),
        )),
        AlgorithmKind::BohbHpo => Box::new(BohbSearch::new(
            space,
            primary,
            a.bohb.clone(),
            a.eta,
            a.r0,
            rungs,
            seed,
        )),
        AlgorithmKind::EvolutionSearch => Box::new(EvolutionSearch::new(
            space,
            a.objectives.clone(),
            a.ea.clone(),
            a.initial,
            step.trainer.epochs,
            seed,
        )),
    }
}

/// Fixed (sample, description) pairs evaluated once each.
struct FixedTrials {
    items: Vec<ConfigSample>,
    resource: u64,
    next: usize,
}

impl SearchAlgorithm for FixedTrials {
    fn ask(&mut self) -> Result<Option<Trial>, SearchError> {
        let Some(sample) = self.items.get(self.next) else {
            return Ok(None);
        };
        let t = Trial {
            trial_id: self.next as TrialId,
            sample: sample.clone(),
            encoded: EncodedSample::default(),
            resource: self.resource,
            rung: 0,
            bracket: 0,
            parent_trial: None,
        };
        self.next += 1;
        Ok(Some(t))
    }

    fn tell(&mut self, _: &Trial, _: &TrialResult) -> Result<(), SearchError> {
        Ok(())
    }

    fn exhausted(&self) -> bool {
        self.next >= self.items.len()
    }
}

fn master_config(
    cfg: &PipelineConfig,
    step: &StepConfig,
    seed: u64,
    max_trials: u64,
) -> MasterConfig {
    let w = &cfg.general.worker;
    MasterConfig {
        workers: w.workers,
        capacity: w.devices_per_job,
        max_retries: w.max_retries,
        trial_timeout_ms: w.timeout_ms,
        heartbeat_ms: w.heartbeat_ms,
        budget: Budget {
            max_trials,
            max_resource: step.search_algorithm.max_resource,
        },
        seed,
        objectives: step.search_algorithm.objectives.clone(),
        fault: None,
    }
}

/// Keeps the sample values addressed to `desc`.
fn addressed(desc: &ModelDescription, sample: &ConfigSample, skip: &str) -> ConfigSample {
    let prefix = format!("{}.", desc.name);
    let values = sample
        .values
        .iter()
        .filter(|(k, _)| k.starts_with(&prefix) && k.as_str() != skip)
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    ConfigSample {
        values,
        provenance: sample.provenance.clone(),
    }
}

fn read_desc(output_dir: &Path, f: &DescFile) -> Result<ModelDescription, String> {
    let path = output_dir.join(&f.path);
    let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let hash = sha256_hex(&bytes);
    if hash != f.sha256 {
        return Err(format!(
            "{}: hash {hash} does not match recorded {}",
            f.path, f.sha256
        ));
    }
    let text = String::from_utf8(bytes).map_err(|e| format!("{}: {e}", f.path))?;
    ModelDescription::from_json_str(&text).map_err(|e| format!("{}: {e}", f.path))
}

/// Base description and sample-to-description map of a search step.
fn model_builder(
    cfg: &PipelineConfig,
    step: &StepConfig,
    inputs: Option<&StepOutput>,
) -> Result<
    Box<dyn Fn(&ConfigSample) -> Result<Option<ModelDescription>, String> + Send + Sync>,
    String,
> {
    let fixed = |base: ModelDescription| -> Box<dyn Fn(&ConfigSample) -> _ + Send + Sync> {
        Box::new(move |s: &ConfigSample| {
            apply_sample(&base, &addressed(&base, s, ""))
                .map(Some)
                .map_err(|e| e.to_string())
        })
    };
    Ok(match &step.model {
        ModelSource::None => Box::new(|_: &ConfigSample| Ok(None)),
        ModelSource::Inline { model_desc } => fixed(model_desc.clone()),
        ModelSource::File { path } => {
            let p = cfg.resolve_path(path);
            let text = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
            fixed(ModelDescription::from_json_str(&text).map_err(|e| e.to_string())?)
        }
        ModelSource::Resnet { name, cells } => fixed(resnet_like(name, *cells)),
        ModelSource::Previous { step: src } => {
            let prev = inputs.ok_or_else(|| format!("no output from `{src}`"))?;
            let first = prev
                .model_descs
                .first()
                .ok_or_else(|| format!("`{src}` emitted no model descriptions"))?;
            fixed(read_desc(&cfg.output_dir(), first)?)
        }
        ModelSource::Dnet {
            name,
            in_channels,
            resolution,
            vocab,
            ratios,
            max_stem,
        } => {
            let (name, c, res, v, r, m) = (
                name.clone(),
                *in_channels,
                *resolution,
                *vocab,
                *ratios,
                *max_stem,
            );
            let grammar = DnetGrammar::sized(v, r, m);
            let key = format!("{name}.code_index");
            Box::new(move |s: &ConfigSample| {
                let idx = match s.get(&key) {
                    Some(Value::Int(i)) if *i >= 0 => *i as u128,
                    other => return Err(format!("`{key}` is {other:?}")),
                };
                let spec = nth_dnet_block(v, r, m, idx)
                    .ok_or_else(|| format!("no block with index {idx}"))?;
                let mut block = crate::netdesc::dnet::render_dnet_block(&spec, &grammar, c, res)
                    .map_err(|e| e.to_string())?;
                block.name = name.clone();
                apply_sample(&block, &addressed(&block, s, &key))
                    .map(Some)
                    .map_err(|e| e.to_string())
            })
        }
    })
}

fn best_of(history: &[HistoryRecord], objective: &Objective) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, h) in history.iter().enumerate() {
        if h.status != Status::Ok {
            continue;
        }
        let Some(v) = h.metrics.get(&objective.metric).filter(|v| !v.is_nan()) else {
            continue;
        };
        let s = objective.orientation.orient(*v);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

fn entry(h: &HistoryRecord) -> BestEntry {
    BestEntry {
        trial_id: h.trial_id,
        sample: h.sample.clone(),
        metrics: h.metrics.clone(),
        objectives: h.objectives.clone(),
    }
}

fn history_text(history: &[HistoryRecord]) -> String {
    history
        .iter()
        .map(|h| serde_json::to_string(h).expect("records serialize") + "\n")
        .collect()
}

fn emit_descs(
    dir: &Path,
    rel: &str,
    descs: &[&ModelDescription],
) -> Result<Vec<DescFile>, PipelineError> {
    descs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let name = format!("{rel}/model_descs/desc_{i:03}.json");
            let text = d.to_json_string() + "\n";
            write(&dir.join(&name), &text)?;
            Ok(DescFile {
                path: name,
                sha256: sha256_hex(text.as_bytes()),
            })
        })
        .collect()
}

/// Runs one step and persists its outputs under `output_dir/step_name/`.
pub fn run_step(
    cfg: &PipelineConfig,
    step_name: &str,
    inputs: Option<&StepOutput>,
) -> Result<StepOutput, PipelineError> {
    let step = cfg.step(step_name)?;
    let seed = step_seed(cfg.general.seed, step_name);
    let out_dir = cfg.output_dir();
    let evaluator = Arc::new(
        step.evaluator
            .build(&cfg.base_dir)
            .map_err(|e| PipelineError::step(step_name, e))?,
    );
    let objectives = step.search_algorithm.objectives.clone();
    let mut output = StepOutput {
        step_name: step_name.to_string(),
        step_type: step.pipe_step.type_name.clone(),
        status: Status::Ok,
        error: None,
        objectives: objectives.clone(),
        trials: 0,
        failed_trials: 0,
        best_samples: Vec::new(),
        model_descs: Vec::new(),
        consumed: Vec::new(),
        pareto: None,
        history_path: format!("{step_name}/history.jsonl"),
    };

    let outcome: RunOutcome = match step.kind {
        StepKind::Search => {
            let build =
                model_builder(cfg, step, inputs).map_err(|e| PipelineError::step(step_name, e))?;
            let mut alg = build_algorithm(step, seed);
            let mcfg = master_config(cfg, step, seed, step.search_algorithm.max_trials);
            run_master(&mcfg, alg.as_mut(), evaluator, &|t: &Trial| {
                build(&t.sample)
            })
            .map_err(|e| PipelineError::step(step_name, e))?
        }
        StepKind::FullyTrain => {
            let (samples, descs) = fully_train_inputs(cfg, step, inputs, &mut output.consumed)
                .map_err(|e| PipelineError::step(step_name, e))?;
            let mut alg = FixedTrials {
                items: samples,
                resource: step.trainer.epochs,
                next: 0,
            };
            let mcfg = master_config(cfg, step, seed, descs.len() as u64);
            let descs = descs.clone();
            run_master(&mcfg, &mut alg, evaluator, &|t: &Trial| {
                Ok(Some(descs[t.trial_id as usize].clone()))
            })
            .map_err(|e| PipelineError::step(step_name, e))?
        }
    };

    let history = &outcome.history;
    write(&out_dir.join(&output.history_path), &history_text(history))?;
    output.trials = history.len();
    output.failed_trials = history.iter().filter(|h| h.status != Status::Ok).count();

    let emitted: Vec<(BestEntry, Option<&ModelDescription>)> = if step.kind == StepKind::FullyTrain
    {
        history
            .iter()
            .map(|h| (entry(h), outcome.model_descs.get(&h.trial_id)))
            .collect()
    } else if objectives.len() > 1 {
        let mut archive = ParetoArchive::new(objectives.iter().map(|o| o.orientation).collect());
        for h in history
            .iter()
            .filter(|h| h.status == Status::Ok && h.objectives.len() == objectives.len())
        {
            let encoded = outcome.trials[&h.trial_id].encoded.clone();
            archive
                .insert(ArchiveEntry {
                    trial_id: Some(h.trial_id),
                    sample: h.sample.clone(),
                    encoded,
                    objectives: h.objectives.clone(),
                })
                .map_err(|e| PipelineError::step(step_name, e))?;
        }
        let by_id: BTreeMap<TrialId, &HistoryRecord> =
            history.iter().map(|h| (h.trial_id, h)).collect();
        let front: Vec<BestEntry> = archive
            .entries
            .iter()
            .map(|e| entry(by_id[&e.trial_id.expect("archive entries carry ids")]))
            .collect();
        write(
            &out_dir.join(step_name).join("pareto.json"),
            &(serde_json::to_string_pretty(&front).expect("entries serialize") + "\n"),
        )?;
        output.pareto = Some(front.clone());
        front
            .into_iter()
            .map(|b| {
                let d = outcome.model_descs.get(&b.trial_id);
                (b, d)
            })
            .collect()
    } else {
        best_of(history, &objectives[0])
            .map(|i| {
                (
                    entry(&history[i]),
                    outcome.model_descs.get(&history[i].trial_id),
                )
            })
            .into_iter()
            .collect()
    };
    if step.kind == StepKind::Search && objectives.len() == 1 {
        let best = emitted.first().map(|(b, _)| b);
        write(
            &out_dir.join(step_name).join("best.json"),
            &(serde_json::to_string_pretty(&best).expect("entries serialize") + "\n"),
        )?;
    }
    let descs: Vec<&ModelDescription> = emitted.iter().filter_map(|(_, d)| *d).collect();
    if step.kind == StepKind::Search && !descs.is_empty() {
        output.model_descs = emit_descs(&out_dir, step_name, &descs)?;
    }
    output.best_samples = emitted.into_iter().map(|(b, _)| b).collect();

    let failure = if output.best_samples.is_empty() || output.trials == output.failed_trials {
        Some("no successful trial".to_string())
    } else if step.kind == StepKind::FullyTrain && output.failed_trials > 0 {
        Some(format!(
            "{} evaluation(s) failed beyond the retry budget",
            output.failed_trials
        ))
    } else {
        None
    };
    if let Some(msg) = &failure {
        output.status = Status::Failed;
        output.error = Some(msg.clone());
    }
    write(
        &out_dir.join(step_name).join("step_output.json"),
        &(serde_json::to_string_pretty(&output).expect("outputs serialize") + "\n"),
    )?;
    match failure {
        Some(msg) => Err(PipelineError::step(step_name, msg)),
        None => Ok(output),
    }
}

type TrainInputs = (Vec<ConfigSample>, Vec<ModelDescription>);

fn fully_train_inputs(
    cfg: &PipelineConfig,
    step: &StepConfig,
    inputs: Option<&StepOutput>,
    consumed: &mut Vec<DescFile>,
) -> Result<TrainInputs, String> {
    let single = |d: ModelDescription| Ok((vec![ConfigSample::default()], vec![d]));
    match &step.model {
        ModelSource::Previous { step: src } => {
            let prev = inputs.ok_or_else(|| format!("no output from `{src}`"))?;
            if prev.model_descs.is_empty() {
                return Err(format!("`{src}` emitted no model descriptions"));
            }
            let mut descs = Vec::new();
            for f in &prev.model_descs {
                descs.push(read_desc(&cfg.output_dir(), f)?);
                consumed.push(f.clone());
            }
            let samples = prev.best_samples.iter().map(|b| b.sample.clone()).collect();
            Ok((samples, descs))
        }
        ModelSource::Inline { model_desc } => single(model_desc.clone()),
        ModelSource::File { path } => {
            let p = cfg.resolve_path(path);
            let text = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
            single(ModelDescription::from_json_str(&text).map_err(|e| e.to_string())?)
        }
        ModelSource::Resnet { name, cells } => single(resnet_like(name, *cells)),
        ModelSource::None | ModelSource::Dnet { .. } => {
            Err("no model descriptions to train".into())
        }
    }
}

/// Everything a finished run produced.
#[derive(Debug)]
pub struct PipelineRun {
    pub outputs: Vec<StepOutput>,
    pub report: Report,
}

/// Runs all steps in order. The report is written even when a step fails.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    let dir = cfg.output_dir();
    write(&dir.join("config.json"), &(cfg.snapshot() + "\n"))?;
    let mut outputs: Vec<StepOutput> = Vec::new();
    let mut failure = None;
    for name in &cfg.pipeline {
        let step = &cfg.steps[name];
        let inputs = match &step.model {
            ModelSource::Previous { step: src } => outputs.iter().find(|o| &o.step_name == src),
            _ => None,
        };
        log::info!("step {name}: {}", step.pipe_step.type_name);
        match run_step(cfg, name, inputs) {
            Ok(o) => outputs.push(o),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let report = render_report(&read_step_outputs(&dir, &cfg.pipeline)?);
    report.write(&dir)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(PipelineRun { outputs, report }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hpo(dir: &Path, max_trials: u64) -> PipelineConfig {
        let text = format!(
            "general:
  seed: 7
  output_dir: {}
pipeline: [hpo]
hpo:
  pipe_step: {{type: HpoPipeStep}}
  evaluator: {{type: Analytic, function: log_quadratic, key: lr, target: 0.01}}
  search_algorithm: {{type: AshaHpo, max_trials: {max_trials}}}
  search_space:
    hyperparameters:
      - key: lr
        type: FLOAT_EXP
        range: [0.00001, 0.1]
  trainer: {{epochs: 9}}
",
            dir.display()
        );
        parse_pipeline(&text).unwrap()
    }

    #[test]
    fn step_seeds_differ_by_name() {
        assert_ne!(step_seed(1, "a"), step_seed(1, "b"));
        assert_eq!(step_seed(1, "a"), step_seed(1, "a"));
    }

    #[test]
    fn one_trial_budget() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_step(&hpo(dir.path(), 1), "hpo", None).unwrap();
        assert_eq!(out.trials, 1);
        let text = std::fs::read_to_string(dir.path().join("hpo/history.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn asha_finds_the_rigged_optimum() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_step(&hpo(dir.path(), 50), "hpo", None).unwrap();
        let lr = out.best_samples[0]
            .sample
            .get("lr")
            .and_then(Value::as_f64)
            .unwrap();
        assert!((3e-3..=3e-2).contains(&lr), "{lr}");
    }

    #[test]
    fn handoff_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let f = DescFile {
            path: "x.json".into(),
            sha256: "00".into(),
        };
        write(&dir.path().join("x.json"), "{}").unwrap();
        assert!(read_desc(dir.path(), &f)
            .unwrap_err()
            .contains("does not match"));
    }
}
