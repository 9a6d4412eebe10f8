use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::PipelineError;
use crate::dispatch::{AnalyticConfig, AnalyticFn, SubprocessConfig};
use crate::netdesc::dnet::{count_dnet_blocks, DEFAULT_MAX_STEM, DEFAULT_OPS, DEFAULT_RATIOS};
use crate::netdesc::ModelDescription;
use crate::search::{BohbConfig, EaConfig, Objective, Orientation};
use crate::space::{ParamSpec, ParamType, SearchSpace};
use crate::yaml::{self, Node};

/// Environment variable that overrides `general.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "VEGA_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerConfig {
    pub devices_per_job: u32,
    pub workers: usize,
    pub max_retries: u32,
    pub timeout_ms: u64,
    pub heartbeat_ms: u64,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        WorkerConfig {
            devices_per_job: 1,
            workers: 1,
            max_retries: 2,
            timeout_ms: 60_000,
            heartbeat_ms: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct General {
    pub worker: WorkerConfig,
    pub output_dir: String,
    pub seed: u64,
}

impl Default for General {
    fn default() -> Self {
        General {
            worker: WorkerConfig::default(),
            output_dir: "tasks".into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    #[serde(rename = "SearchPipeStep")]
    Search,
    #[serde(rename = "FullyTrainPipeStep")]
    FullyTrain,
}

impl StepKind {
    /// Accepts the canonical names and the per-task spellings.
    pub fn from_name(name: &str) -> Option<StepKind> {
        match name {
            "SearchPipeStep" | "NasPipeStep" | "HpoPipeStep" => Some(StepKind::Search),
            "FullyTrainPipeStep" | "TrainPipeStep" => Some(StepKind::FullyTrain),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StepKind::Search => "SearchPipeStep",
            StepKind::FullyTrain => "FullyTrainPipeStep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EvaluatorConfig {
    Analytic(AnalyticConfig),
    Tabular { path: String },
    Subprocess(SubprocessConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgorithmKind {
    RandomSearch,
    AshaHpo,
    BohbHpo,
    EvolutionSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    #[serde(rename = "type")]
    pub kind: AlgorithmKind,
    #[serde(default)]
    pub objectives: Vec<Objective>,
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
    #[serde(default)]
    pub max_resource: Option<u64>,
    #[serde(default = "default_eta")]
    pub eta: u32,
    #[serde(default = "default_r0")]
    pub r0: u64,
    #[serde(default)]
    pub max_rungs: Option<u32>,
    #[serde(default)]
    pub bohb: BohbConfig,
    #[serde(default)]
    pub ea: EaConfig,
    #[serde(default = "default_initial")]
    pub initial: u64,
}

fn default_max_trials() -> u64 {
    64
}

fn default_eta() -> u32 {
    3
}

fn default_r0() -> u64 {
    1
}

fn default_initial() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    #[serde(rename = "type")]
    pub kind: String,
    pub epochs: u64,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, Json>,
}

/// Where a step's model description comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ModelSource {
    None,
    Inline {
        model_desc: ModelDescription,
    },
    File {
        path: String,
    },
    Previous {
        step: String,
    },
    Dnet {
        name: String,
        in_channels: u64,
        resolution: Option<u64>,
        vocab: usize,
        ratios: usize,
        max_stem: usize,
    },
    Resnet {
        name: String,
        cells: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeStep {
    #[serde(rename = "type")]
    pub type_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepConfig {
    pub pipe_step: PipeStep,
    #[serde(skip)]
    pub kind: StepKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<Json>,
    pub evaluator: EvaluatorConfig,
    pub search_algorithm: AlgorithmConfig,
    pub search_space: Json,
    pub trainer: TrainerConfig,
    pub model: ModelSource,
    #[serde(skip)]
    pub space: SearchSpace,
}

/// A loaded pipeline with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub general: General,
    pub pipeline: Vec<String>,
    #[serde(flatten)]
    pub steps: IndexMap<String, StepConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn step(&self, name: &str) -> Result<&StepConfig, PipelineError> {
        self.steps
            .get(name)
            .ok_or_else(|| PipelineError::config(name, "no such step"))
    }

    /// Materialized configuration as pretty JSON.
    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    /// Resolves a path written in the config against the config's directory.
    pub fn resolve_path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.general.output_dir)
    }
}

/// Reads and validates a pipeline file. `VEGA_OUTPUT_DIR` overrides the
/// configured output directory.
pub fn load_pipeline(path: &Path) -> Result<PipelineConfig, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut cfg = parse_pipeline(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            cfg.general.output_dir = dir;
        }
    }
    check_files(&cfg)?;
    Ok(cfg)
}

fn check_files(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    for name in &cfg.pipeline {
        let step = &cfg.steps[name];
        let mut paths = Vec::new();
        if let EvaluatorConfig::Tabular { path } = &step.evaluator {
            paths.push(path);
        }
        if let ModelSource::File { path } = &step.model {
            paths.push(path);
        }
        for p in paths {
            let full = cfg.resolve_path(p);
            if !full.is_file() {
                return Err(PipelineError::config(
                    name,
                    format!("file not found: {}", full.display()),
                ));
            }
        }
    }
    Ok(())
}

fn json_of(node: &Node) -> Json {
    node.to_json()
}

fn from_json<T: serde::de::DeserializeOwned>(context: &str, v: Json) -> Result<T, PipelineError> {
    serde_json::from_value(v).map_err(|e| PipelineError::config(context, e.to_string()))
}

fn as_u64(node: &Node, context: &str) -> Result<u64, PipelineError> {
    node.as_i64()
        .and_then(|v| u64::try_from(v).ok())
        .ok_or_else(|| {
            PipelineError::config(
                context,
                format!("expected a non-negative integer, found {node}"),
            )
        })
}

fn parse_general(node: Option<&Node>) -> Result<General, PipelineError> {
    let mut g = General::default();
    let Some(node) = node else { return Ok(g) };
    let entries = node
        .as_map()
        .ok_or_else(|| PipelineError::config("general", "expected a mapping"))?;
    for (k, v) in entries {
        match k.as_str() {
            "seed" => g.seed = as_u64(v, "general.seed")?,
            "output_dir" => {
                g.output_dir = v
                    .as_str()
                    .ok_or_else(|| {
                        PipelineError::config("general.output_dir", "expected a string")
                    })?
                    .to_string()
            }
            "worker" => {
                let w = &mut g.worker;
                for (wk, wv) in wv_entries(v, "general.worker")? {
                    let ctx = format!("general.worker.{wk}");
                    match wk.as_str() {
                        "devices_per_job" => w.devices_per_job = as_u64(wv, &ctx)?.max(1) as u32,
                        "workers" => w.workers = as_u64(wv, &ctx)?.max(1) as usize,
                        "max_retries" => w.max_retries = as_u64(wv, &ctx)? as u32,
                        "timeout_ms" => w.timeout_ms = as_u64(wv, &ctx)?.max(1),
                        "heartbeat_ms" => w.heartbeat_ms = as_u64(wv, &ctx)?.max(1),
                        _ => return Err(PipelineError::config(&ctx, "unknown field")),
                    }
                }
            }
            other => {
                return Err(PipelineError::config(
                    &format!("general.{other}"),
                    "unknown field",
                ))
            }
        }
    }
    Ok(g)
}

fn wv_entries<'a>(node: &'a Node, context: &str) -> Result<&'a [(String, Node)], PipelineError> {
    match node {
        Node::Null => Ok(&[]),
        _ => node
            .as_map()
            .ok_or_else(|| PipelineError::config(context, "expected a mapping")),
    }
}

/// Parses pipeline text without touching the filesystem or environment.
pub fn parse_pipeline(text: &str) -> Result<PipelineConfig, PipelineError> {
    let root = yaml::parse(text)?;
    let entries = root
        .as_map()
        .ok_or_else(|| PipelineError::config("document", "expected a mapping"))?;
    let general = parse_general(root.get("general"))?;
    let order: Vec<String> = match root.get("pipeline") {
        None => return Err(PipelineError::config("pipeline", "missing")),
        Some(Node::Seq(items)) => items
            .iter()
            .map(|n| {
                n.as_str().map(str::to_string).ok_or_else(|| {
                    PipelineError::config("pipeline", format!("expected step names, found {n}"))
                })
            })
            .collect::<Result<_, _>>()?,
        Some(other) => {
            return Err(PipelineError::config(
                "pipeline",
                format!("expected a list, found {other}"),
            ))
        }
    };
    if order.is_empty() {
        return Err(PipelineError::EmptyPipeline);
    }
    let mut blocks: IndexMap<&str, &Node> = IndexMap::new();
    for (k, v) in entries {
        if k == "general" || k == "pipeline" {
            continue;
        }
        if blocks.insert(k, v).is_some() {
            return Err(PipelineError::config(k, "duplicate step block"));
        }
    }
    let mut steps = IndexMap::new();
    for (i, name) in order.iter().enumerate() {
        if order[..i].contains(name) {
            return Err(PipelineError::config(name, "listed twice in pipeline"));
        }
        let block = blocks.get(name.as_str()).ok_or_else(|| {
            PipelineError::config(name, "listed in pipeline but has no configuration block")
        })?;
        let prev = i.checked_sub(1).map(|j| order[j].as_str());
        steps.insert(name.clone(), parse_step(name, block, prev)?);
    }
    let cfg = PipelineConfig {
        general,
        pipeline: order,
        steps,
        base_dir: PathBuf::new(),
    };
    check_references(&cfg)?;
    Ok(cfg)
}

fn parse_step(name: &str, block: &Node, prev: Option<&str>) -> Result<StepConfig, PipelineError> {
    let entries = block
        .as_map()
        .ok_or_else(|| PipelineError::config(name, "expected a mapping"))?;
    let mut pipe_step = None;
    let (mut dataset, mut evaluator, mut algorithm, mut space_node, mut trainer, mut model) =
        (None, None, None, None, None, None);
    for (k, v) in entries {
        let slot = match k.as_str() {
            "pipe_step" => &mut pipe_step,
            "dataset" => &mut dataset,
            "evaluator" => &mut evaluator,
            "search_algorithm" => &mut algorithm,
            "search_space" => &mut space_node,
            "trainer" => &mut trainer,
            "model" => &mut model,
            other => {
                return Err(PipelineError::config(
                    &format!("{name}.{other}"),
                    "unknown field",
                ))
            }
        };
        *slot = Some(v);
    }
    let type_name = pipe_step
        .and_then(|p| p.get("type"))
        .and_then(Node::as_str)
        .ok_or_else(|| PipelineError::config(&format!("{name}.pipe_step"), "missing `type`"))?
        .to_string();
    let kind = StepKind::from_name(&type_name).ok_or_else(|| PipelineError::UnknownStepType {
        step: name.to_string(),
        name: type_name.clone(),
    })?;
    let trainer = parse_trainer(name, trainer)?;
    let model = parse_model(name, model, kind, prev)?;
    let evaluator = match evaluator {
        None | Some(Node::Null) => {
            EvaluatorConfig::Analytic(AnalyticConfig::new(AnalyticFn::Sphere))
        }
        Some(n) => from_json(&format!("{name}.evaluator"), json_of(n))?,
    };
    let mut algorithm = parse_algorithm(name, algorithm)?;
    if algorithm.max_trials == 0 {
        return Err(PipelineError::config(
            &format!("{name}.search_algorithm.max_trials"),
            "budget is 0",
        ));
    }
    if algorithm.max_rungs.is_none() {
        algorithm.max_rungs = Some(rungs_within(trainer.epochs, algorithm.r0, algorithm.eta));
    }
    let mut space = match space_node {
        Some(n) => SearchSpace::from_node(n).map_err(|source| PipelineError::Space {
            step: name.to_string(),
            source,
        })?,
        None => SearchSpace::default(),
    };
    if let ModelSource::Dnet {
        name: block,
        vocab,
        ratios,
        max_stem,
        ..
    } = &model
    {
        let key = format!("{block}.code_index");
        if space.param(&key).is_none() {
            let n = count_dnet_blocks(*vocab, *ratios, *max_stem);
            if n == 0 {
                return Err(PipelineError::config(
                    &format!("{name}.model"),
                    "grammar admits no blocks",
                ));
            }
            let mut params = space.params.clone();
            params.push(ParamSpec::interval(
                &key,
                ParamType::Int,
                0.0,
                (n - 1) as f64,
            ));
            space = SearchSpace::new(params, space.conditions.clone()).map_err(|source| {
                PipelineError::Space {
                    step: name.to_string(),
                    source,
                }
            })?;
        }
    }
    if kind == StepKind::Search && space.is_empty() {
        log::warn!("step {name}: empty search space");
    }
    Ok(StepConfig {
        pipe_step: PipeStep { type_name },
        kind,
        dataset: dataset.map(json_of),
        evaluator,
        search_algorithm: algorithm,
        search_space: space.to_node().to_json(),
        trainer,
        model,
        space,
    })
}

/// Largest rung count whose top resource `r0·ηᵐ⁻¹` fits in `epochs`.
pub fn rungs_within(epochs: u64, r0: u64, eta: u32) -> u32 {
    let mut m = 1;
    let mut r = r0.max(1);
    while r.saturating_mul(eta as u64) <= epochs && eta > 1 {
        r *= eta as u64;
        m += 1;
    }
    m
}

fn parse_trainer(step: &str, node: Option<&Node>) -> Result<TrainerConfig, PipelineError> {
    let mut t = TrainerConfig {
        kind: "Trainer".into(),
        epochs: 10,
        extra: serde_json::Map::new(),
    };
    for (k, v) in node
        .map(|n| wv_entries(n, &format!("{step}.trainer")))
        .transpose()?
        .unwrap_or(&[])
    {
        match k.as_str() {
            "type" => t.kind = v.as_str().unwrap_or("Trainer").to_string(),
            "epochs" => t.epochs = as_u64(v, &format!("{step}.trainer.epochs"))?.max(1),
            _ => {
                t.extra.insert(k.clone(), json_of(v));
            }
        }
    }
    Ok(t)
}

fn parse_algorithm(step: &str, node: Option<&Node>) -> Result<AlgorithmConfig, PipelineError> {
    let ctx = format!("{step}.search_algorithm");
    let mut obj = match node.map(json_of) {
        None | Some(Json::Null) => serde_json::Map::new(),
        Some(Json::Object(m)) => m,
        Some(_) => return Err(PipelineError::config(&ctx, "expected a mapping")),
    };
    let kind = obj
        .get("type")
        .and_then(Json::as_str)
        .unwrap_or("RandomSearch")
        .to_string();
    if !["RandomSearch", "AshaHpo", "BohbHpo", "EvolutionSearch"].contains(&kind.as_str()) {
        return Err(PipelineError::UnknownAlgorithm {
            step: step.to_string(),
            name: kind,
        });
    }
    obj.insert("type".into(), Json::String(kind));
    let single = obj.remove("objective");
    let orientation = obj.remove("orientation");
    if let Some(o) = &orientation {
        if o.as_str().and_then(Orientation::parse).is_none() {
            return Err(PipelineError::config(
                &ctx,
                format!("unknown orientation {o}"),
            ));
        }
    }
    if obj.contains_key("objectives") && single.is_some() {
        return Err(PipelineError::config(
            &ctx,
            "give either `objective` or `objectives`",
        ));
    }
    let mut cfg: AlgorithmConfig = from_json(&ctx, Json::Object(obj))?;
    if cfg.objectives.is_empty() {
        let metric = match single {
            None => "objective".to_string(),
            Some(Json::String(s)) => s,
            Some(other) => {
                return Err(PipelineError::config(
                    &ctx,
                    format!("objective must be a metric name, found {other}"),
                ))
            }
        };
        let o = orientation
            .as_ref()
            .and_then(Json::as_str)
            .and_then(Orientation::parse)
            .unwrap_or_default();
        cfg.objectives.push(Objective::new(&metric, o));
    }
    if cfg.eta < 2 {
        return Err(PipelineError::config(&ctx, "eta must be at least 2"));
    }
    Ok(cfg)
}

fn parse_model(
    step: &str,
    node: Option<&Node>,
    kind: StepKind,
    prev: Option<&str>,
) -> Result<ModelSource, PipelineError> {
    let ctx = format!("{step}.model");
    let previous = || {
        prev.map(|p| ModelSource::Previous {
            step: p.to_string(),
        })
        .ok_or_else(|| PipelineError::config(&ctx, "`previous` on the first step"))
    };
    let node = match node {
        None | Some(Node::Null) if kind == StepKind::FullyTrain => return previous(),
        None | Some(Node::Null) => return Ok(ModelSource::None),
        Some(n) => n,
    };
    let s = |k: &str| node.get(k).and_then(Node::as_str);
    if let Some(d) = node.get("model_desc") {
        return match d {
            Node::Map(_) => {
                let desc: ModelDescription = from_json(&ctx, json_of(d))?;
                desc.validate()
                    .map_err(|e| PipelineError::config(&ctx, e.to_string()))?;
                Ok(ModelSource::Inline { model_desc: desc })
            }
            _ => {
                log::warn!("{ctx}: model_desc is not a mapping; ignoring it");
                Ok(ModelSource::None)
            }
        };
    }
    if let Some(p) = s("model_desc_file") {
        return Ok(ModelSource::File {
            path: p.to_string(),
        });
    }
    if let Some(src) = s("source") {
        return match src {
            "previous" => match s("step") {
                Some(p) => Ok(ModelSource::Previous {
                    step: p.to_string(),
                }),
                None => previous(),
            },
            other => Err(PipelineError::config(
                &ctx,
                format!("unknown model source `{other}`"),
            )),
        };
    }
    let size = |k: &str, default: usize| -> Result<usize, PipelineError> {
        node.get(k).map_or(Ok(default), |v| {
            as_u64(v, &format!("{ctx}.{k}")).map(|x| x as usize)
        })
    };
    match s("type") {
        Some("DnetBlock") => {
            let (vocab, ratios, max_stem) = (
                size("vocab", DEFAULT_OPS.len())?,
                size("ratios", DEFAULT_RATIOS.len())?,
                size("max_stem", DEFAULT_MAX_STEM)?,
            );
            if vocab == 0
                || vocab > DEFAULT_OPS.len()
                || ratios == 0
                || ratios > DEFAULT_RATIOS.len()
                || max_stem == 0
            {
                return Err(PipelineError::config(&ctx, "grammar size out of range"));
            }
            Ok(ModelSource::Dnet {
                name: s("name").unwrap_or("block").to_string(),
                in_channels: size("in_channels", 64)? as u64,
                resolution: node
                    .get("resolution")
                    .map(|v| as_u64(v, &ctx))
                    .transpose()?,
                vocab,
                ratios,
                max_stem,
            })
        }
        Some("ResNet") => Ok(ModelSource::Resnet {
            name: s("name").unwrap_or("resnet").to_string(),
            cells: size("cells", 8)?,
        }),
        Some(other) => Err(PipelineError::config(
            &ctx,
            format!("unknown model type `{other}`"),
        )),
        None => {
            // `modules: [resnet]` with a `resnet: {type: ResNet}` block.
            let module = node
                .get("modules")
                .and_then(Node::as_seq)
                .and_then(|m| m.first())
                .and_then(Node::as_str)
                .ok_or_else(|| {
                    PipelineError::config(
                        &ctx,
                        "no model_desc, model_desc_file, source, type or modules",
                    )
                })?;
            match node
                .get(module)
                .and_then(|m| m.get("type"))
                .and_then(Node::as_str)
            {
                Some("ResNet") => Ok(ModelSource::Resnet {
                    name: module.to_string(),
                    cells: 8,
                }),
                _ => Err(PipelineError::config(
                    &ctx,
                    format!("module `{module}` has no known type"),
                )),
            }
        }
    }
}

fn check_references(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    for (i, name) in cfg.pipeline.iter().enumerate() {
        let step = &cfg.steps[name];
        match (&step.model, step.kind) {
            (ModelSource::Previous { step: src }, _) => {
                let Some(j) = cfg.pipeline.iter().position(|p| p == src) else {
                    return Err(PipelineError::config(
                        name,
                        format!("consumes `{src}`, which is not in the pipeline"),
                    ));
                };
                if j >= i {
                    return Err(PipelineError::config(
                        name,
                        format!("consumes `{src}`, which runs later"),
                    ));
                }
                if cfg.steps[src].model == ModelSource::None {
                    return Err(PipelineError::config(
                        name,
                        format!(
                            "consumes model descriptions from `{src}`, which has no model block"
                        ),
                    ));
                }
            }
            (ModelSource::Dnet { .. }, StepKind::FullyTrain) => {
                return Err(PipelineError::config(
                    name,
                    "a fully-train step needs concrete descriptions",
                ));
            }
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = "general:
    worker:
        devices_per_job: 1
pipeline: [hpo]
hpo:
    pipe_step:
        type: NasPipeStep
    dataset:
        type: Cifar10
    search_algorithm:
        type: AshaHpo
    search_space:
        type: SearchSpace
    trainer:
        type: Trainer
        epochs: 10
    model:
        model_desc:
            ...
";

    #[test]
    fn reference_listing_loads() {
        let cfg = parse_pipeline(LISTING).unwrap();
        assert_eq!(cfg.pipeline, ["hpo"]);
        let hpo = &cfg.steps["hpo"];
        assert_eq!(hpo.kind, StepKind::Search);
        assert_eq!(hpo.search_algorithm.kind, AlgorithmKind::AshaHpo);
        assert_eq!(hpo.search_algorithm.max_rungs, Some(3));
        assert_eq!(hpo.trainer.epochs, 10);
        assert_eq!(hpo.dataset, Some(serde_json::json!({"type": "Cifar10"})));
        assert_eq!(hpo.model, ModelSource::None);
        let snap: Json = serde_json::from_str(&cfg.snapshot()).unwrap();
        assert_eq!(snap["hpo"]["search_algorithm"]["max_trials"], 64);
        assert_eq!(snap["hpo"]["search_algorithm"]["max_rungs"], 3);
    }

    #[test]
    fn empty_pipeline() {
        let e = parse_pipeline("pipeline: []\n").unwrap_err();
        assert_eq!(e.to_string(), "empty pipeline");
    }

    #[test]
    fn unknown_names() {
        let e = parse_pipeline("pipeline: [a]\na:\n  pipe_step: {type: Foo}\n").unwrap_err();
        assert!(matches!(e, PipelineError::UnknownStepType { .. }));
        let e = parse_pipeline("pipeline: [a]\na:\n  pipe_step: {type: HpoPipeStep}\n  search_algorithm: {type: Magic}\n")
            .unwrap_err();
        assert!(matches!(e, PipelineError::UnknownAlgorithm { .. }));
        let e =
            parse_pipeline("pipeline: [a, b]\na:\n  pipe_step: {type: HpoPipeStep}\n").unwrap_err();
        assert!(e.to_string().contains("no configuration block"), "{e}");
    }

    #[test]
    fn cross_step_references() {
        let two = "pipeline: [nas, fullytrain]
nas:
  pipe_step: {type: NasPipeStep}
  model: {type: DnetBlock, vocab: 2, ratios: 1, max_stem: 2}
  search_algorithm: {type: EvolutionSearch, max_trials: 8}
fullytrain:
  pipe_step: {type: FullyTrainPipeStep}
";
        let cfg = parse_pipeline(two).unwrap();
        assert_eq!(
            cfg.steps["fullytrain"].model,
            ModelSource::Previous { step: "nas".into() }
        );
        assert!(cfg.steps["nas"].space.param("block.code_index").is_some());

        let no_model = two.replace(
            "  model: {type: DnetBlock, vocab: 2, ratios: 1, max_stem: 2}\n",
            "",
        );
        let e = parse_pipeline(&no_model).unwrap_err();
        assert!(e.to_string().contains("no model block"), "{e}");

        let first = "pipeline: [t]\nt:\n  pipe_step: {type: FullyTrainPipeStep}\n";
        assert!(parse_pipeline(first).is_err());
    }

    #[test]
    fn objective_shorthand_and_budget() {
        let cfg = parse_pipeline(
            "pipeline: [s]\ns:\n  pipe_step: {type: HpoPipeStep}\n  search_algorithm: {type: RandomSearch, objective: loss, orientation: min}\n",
        )
        .unwrap();
        assert_eq!(
            cfg.steps["s"].search_algorithm.objectives,
            [Objective::new("loss", Orientation::Min)]
        );
        let e = parse_pipeline("pipeline: [s]\ns:\n  pipe_step: {type: HpoPipeStep}\n  search_algorithm: {type: RandomSearch, max_trials: 0}\n")
            .unwrap_err();
        assert!(e.to_string().contains("budget is 0"), "{e}");
    }

    #[test]
    fn evaluator_blocks() {
        let cfg = parse_pipeline(
            "pipeline: [s]\ns:\n  pipe_step: {type: HpoPipeStep}\n  evaluator: {type: Analytic, function: quadratic, key: x, target: 0.5, noise: 0}\n",
        )
        .unwrap();
        match &cfg.steps["s"].evaluator {
            EvaluatorConfig::Analytic(a) => {
                assert_eq!(
                    a.function,
                    AnalyticFn::Quadratic {
                        key: "x".into(),
                        target: 0.5
                    }
                );
                assert_eq!(a.noise, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rung_count() {
        assert_eq!(rungs_within(10, 1, 3), 3);
        assert_eq!(rungs_within(27, 1, 3), 4);
        assert_eq!(rungs_within(1, 1, 3), 1);
    }
}
