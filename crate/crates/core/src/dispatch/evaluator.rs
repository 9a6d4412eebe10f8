//! Evaluators stand in for model training.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};

use super::wire::{read_message, Message};
use crate::netdesc::{estimate_cost, ModelDescription};
use crate::sampler::ConfigSample;
use crate::search::{Status, TrialResult};
use crate::value::Value;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no tabular entry for {0}")]
    TabularMiss(String),
    #[error("sample lacks numeric `{0}`")]
    MissingKey(String),
    #[error("tabular file line {line}: {msg}")]
    TabularFile { line: usize, msg: String },
    #[error("worker process: {0}")]
    Process(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Closed-form objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case")]
pub enum AnalyticFn {
    /// `Σ xᵢ²` over every numeric value of the sample.
    Sphere,
    /// Branin–Hoo on the keys `x1` and `x2`; global minimum ≈ 0.397887.
    Branin {
        #[serde(default = "x1")]
        x1: String,
        #[serde(default = "x2")]
        x2: String,
    },
    /// `−(x − target)²` on one key.
    Quadratic { key: String, target: f64 },
    /// `−(log₁₀ x − log₁₀ target)²` on one positive key.
    LogQuadratic { key: String, target: f64 },
    /// Accuracy proxy for block codes: saturating in the description's
    /// FLOPs with a small code-dependent offset.
    DnetProxy,
}

fn x1() -> String {
    "x1".into()
}

fn x2() -> String {
    "x2".into()
}

pub fn branin(x1: f64, x2: f64) -> f64 {
    use std::f64::consts::PI;
    let (a, b, c, r, s, t) = (
        1.0,
        5.1 / (4.0 * PI * PI),
        5.0 / PI,
        6.0,
        10.0,
        1.0 / (8.0 * PI),
    );
    a * (x2 - b * x1 * x1 + c * x1 - r).powi(2) + s * (1.0 - t) * x1.cos() + s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticConfig {
    #[serde(flatten)]
    pub function: AnalyticFn,
    /// Standard deviation of the noise at resource 1.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_metric")]
    pub metric: String,
    /// Simulated seconds per unit of resource.
    #[serde(default = "default_time")]
    pub seconds_per_resource: f64,
}

fn default_noise() -> f64 {
    0.01
}

fn default_metric() -> String {
    "objective".into()
}

fn default_time() -> f64 {
    1.0
}

impl AnalyticConfig {
    pub fn new(function: AnalyticFn) -> AnalyticConfig {
        AnalyticConfig {
            function,
            noise: default_noise(),
            metric: default_metric(),
            seconds_per_resource: default_time(),
        }
    }
}

/// Benchmark lookup table keyed by canonical sample text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TabularTable {
    pub rows: HashMap<String, BTreeMap<String, f64>>,
}

/// Canonical text of a sample: keys sorted, compact JSON, floats in
/// shortest round-trip form.
pub fn canonical_key(sample: &serde_json::Map<String, Json>) -> String {
    let sorted: BTreeMap<&String, &Json> = sample.iter().collect();
    serde_json::to_string(&sorted).expect("json values serialize")
}

impl TabularTable {
    pub fn parse(text: &str) -> Result<TabularTable, EvalError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Row {
            sample: serde_json::Map<String, Json>,
            metrics: BTreeMap<String, f64>,
        }
        let mut rows = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(line).map_err(|e| EvalError::TabularFile {
                line: i + 1,
                msg: e.to_string(),
            })?;
            rows.insert(canonical_key(&row.sample), row.metrics);
        }
        Ok(TabularTable { rows })
    }

    pub fn load(path: &Path) -> Result<TabularTable, EvalError> {
        TabularTable::parse(&std::fs::read_to_string(path)?)
    }

    pub fn lookup(&self, sample: &ConfigSample) -> Result<&BTreeMap<String, f64>, EvalError> {
        let Json::Object(map) = sample.to_json() else {
            unreachable!("samples serialize as objects")
        };
        let key = canonical_key(&map);
        self.rows.get(&key).ok_or(EvalError::TabularMiss(key))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubprocessConfig {
    pub command: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_timeout() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evaluator {
    Analytic(AnalyticConfig),
    Tabular(TabularTable),
    Subprocess(SubprocessConfig),
}

/// Inputs of one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub trial_id: u64,
    pub attempt: u32,
    pub sample: &'a ConfigSample,
    pub model_desc: Option<&'a ModelDescription>,
    pub resource: u64,
    pub seed: u64,
}

fn numeric(sample: &ConfigSample, key: &str) -> Result<f64, EvalError> {
    sample
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| EvalError::MissingKey(key.to_string()))
}

/// Deterministic standard-normal draw for a sample and seed.
fn noise_draw(sample: &ConfigSample, seed: u64) -> f64 {
    let mut h = Sha256::new();
    h.update(
        serde_json::to_string(sample)
            .expect("samples serialize")
            .as_bytes(),
    );
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    StandardNormal.sample(&mut ChaCha8Rng::from_seed(bytes))
}

fn hash_unit(text: &str) -> f64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(b) >> 11) as f64 / (1u64 << 53) as f64
}

fn analytic(cfg: &AnalyticConfig, req: &EvalRequest) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut metrics = BTreeMap::new();
    let cost = match req.model_desc {
        Some(d) => Some(estimate_cost(d).map_err(|e| EvalError::Process(e.to_string()))?),
        None => None,
    };
    let value = match &cfg.function {
        AnalyticFn::Sphere => req
            .sample
            .values
            .values()
            .filter_map(Value::as_f64)
            .map(|x| x * x)
            .sum(),
        AnalyticFn::Branin { x1, x2 } => branin(numeric(req.sample, x1)?, numeric(req.sample, x2)?),
        AnalyticFn::Quadratic { key, target } => -(numeric(req.sample, key)? - target).powi(2),
        AnalyticFn::LogQuadratic { key, target } => {
            let x = numeric(req.sample, key)?;
            if x <= 0.0 {
                return Err(EvalError::MissingKey(key.clone()));
            }
            -(x.log10() - target.log10()).powi(2)
        }
        AnalyticFn::DnetProxy => {
            let flops = cost.map_or(0.0, |c| c.flops_billions);
            let code = req
                .model_desc
                .and_then(|d| {
                    d.attrs
                        .get("code")
                        .or_else(|| d.children.first().and_then(|b| b.attrs.get("code")))
                })
                .and_then(Json::as_str)
                .unwrap_or_default()
                .to_string();
            0.95 - 0.3 * (-flops * 40.0).exp() - 0.02 * hash_unit(&code)
        }
    };
    let noise = cfg.noise * noise_draw(req.sample, req.seed) / req.resource.max(1) as f64;
    metrics.insert(cfg.metric.clone(), value + noise);
    if let Some(c) = cost {
        metrics.insert("params_m".into(), c.params_millions);
        metrics.insert("flops_g".into(), c.flops_billions);
    }
    Ok(metrics)
}

fn subprocess(
    cfg: &SubprocessConfig,
    req: &EvalRequest,
) -> Result<(Status, BTreeMap<String, f64>, f64), EvalError> {
    let (prog, args) = cfg
        .command
        .split_first()
        .ok_or_else(|| EvalError::Process("empty command".into()))?;
    let mut child = Command::new(prog)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()?;
    let task = Message::Task {
        trial_id: req.trial_id,
        attempt: req.attempt,
        sample: req.sample.clone(),
        model_desc: req.model_desc.cloned(),
        resource: req.resource,
        seed: req.seed,
    };
    let mut stdin = child.stdin.take().expect("piped stdin");
    task.write_to(&mut stdin)
        .map_err(|e| EvalError::Process(e.to_string()))?;
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(stdout);
        loop {
            match read_message(&mut reader) {
                Ok(Some(Message::Heartbeat { .. })) => continue,
                other => {
                    let _ = tx.send(other);
                    return;
                }
            }
        }
    });
    let outcome = rx.recv_timeout(Duration::from_millis(cfg.timeout_ms));
    let _ = Message::Shutdown {}.write_to(&mut stdin);
    drop(stdin);
    let reply = match outcome {
        Ok(Ok(Some(Message::Result {
            trial_id,
            status,
            metrics,
            wall_time,
            ..
        }))) if trial_id == req.trial_id => Ok((status, metrics, wall_time)),
        Ok(Ok(other)) => Err(EvalError::Process(format!("unexpected reply {other:?}"))),
        Ok(Err(e)) => Err(EvalError::Process(e.to_string())),
        Err(_) => Err(EvalError::Process(format!(
            "no result within {} ms",
            cfg.timeout_ms
        ))),
    };
    if reply.is_err() {
        let _ = child.kill();
    }
    let _ = child.wait();
    reply
}

/// Runs one evaluation. Evaluation errors become `failed` results.
pub fn evaluate(evaluator: &Evaluator, req: &EvalRequest) -> TrialResult {
    let outcome = match evaluator {
        Evaluator::Analytic(cfg) => analytic(cfg, req).map(|m| {
            (
                Status::Ok,
                m,
                cfg.seconds_per_resource * req.resource as f64,
            )
        }),
        Evaluator::Tabular(t) => t
            .lookup(req.sample)
            .map(|m| (Status::Ok, m.clone(), req.resource as f64)),
        Evaluator::Subprocess(cfg) => subprocess(cfg, req),
    };
    match outcome {
        Ok((status, metrics, wall_time)) => TrialResult {
            trial_id: req.trial_id,
            attempt: req.attempt,
            metrics,
            objectives: Vec::new(),
            status,
            wall_time,
        },
        Err(e) => {
            log::warn!("trial {} attempt {}: {e}", req.trial_id, req.attempt);
            TrialResult::failed(req.trial_id, req.attempt, Status::Failed)
        }
    }
}

/// Serves tasks from `input` until shutdown or end of input, answering
/// each with a result line.
pub fn serve_worker(
    evaluator: &Evaluator,
    worker_id: &str,
    input: &mut impl BufRead,
    output: &mut impl Write,
) -> Result<usize, super::wire::WireError> {
    Message::Heartbeat {
        worker_id: worker_id.to_string(),
    }
    .write_to(output)?;
    let mut served = 0;
    while let Some(msg) = read_message(input)? {
        match msg {
            Message::Task {
                trial_id,
                attempt,
                sample,
                model_desc,
                resource,
                seed,
            } => {
                let r = evaluate(
                    evaluator,
                    &EvalRequest {
                        trial_id,
                        attempt,
                        sample: &sample,
                        model_desc: model_desc.as_ref(),
                        resource,
                        seed,
                    },
                );
                Message::Result {
                    trial_id,
                    attempt,
                    status: r.status,
                    metrics: r.metrics,
                    wall_time: r.wall_time,
                }
                .write_to(output)?;
                served += 1;
            }
            Message::Shutdown {} => break,
            Message::Heartbeat { .. } | Message::Result { .. } => {}
        }
    }
    Ok(served)
}
