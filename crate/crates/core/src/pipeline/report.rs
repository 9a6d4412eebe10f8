use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write, BestEntry, DescFile, PipelineError, StepOutput};
use crate::search::{Objective, Status};
use crate::yaml::format_float;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: String,
    pub step_type: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub trials: usize,
    pub failed_trials: usize,
    pub objectives: Vec<Objective>,
    /// The best entry, or the whole front for several objectives.
    pub best: Vec<BestEntry>,
    pub model_descs: Vec<DescFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub consumed: Vec<DescFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub status: String,
    pub steps: Vec<StepSummary>,
}

fn summary(o: &StepOutput) -> StepSummary {
    StepSummary {
        step: o.step_name.clone(),
        step_type: o.step_type.clone(),
        status: o.status.to_string(),
        error: o.error.clone(),
        trials: o.trials,
        failed_trials: o.failed_trials,
        objectives: o.objectives.clone(),
        best: o.pareto.clone().unwrap_or_else(|| o.best_samples.clone()),
        model_descs: o.model_descs.clone(),
        consumed: o.consumed.clone(),
    }
}

/// Reads `step_output.json` of each named step that ran.
pub fn read_step_outputs(dir: &Path, steps: &[String]) -> Result<Vec<StepOutput>, PipelineError> {
    let mut out = Vec::new();
    for s in steps {
        let path = dir.join(s).join("step_output.json");
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        let o = serde_json::from_str(&text)
            .map_err(|e| PipelineError::config(&path.display().to_string(), e.to_string()))?;
        out.push(o);
    }
    Ok(out)
}

pub fn render_report(outputs: &[StepOutput]) -> Report {
    let ok = outputs.iter().all(|o| o.status == Status::Ok);
    Report {
        status: if ok { "ok" } else { "failed" }.into(),
        steps: outputs.iter().map(summary).collect(),
    }
}

/// Rebuilds the report of an existing output directory from its config
/// snapshot and step outputs.
pub fn rerender_report(dir: &Path) -> Result<Report, PipelineError> {
    let path = dir.join("config.json");
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
    let cfg: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| PipelineError::config("config.json", e.to_string()))?;
    let steps: Vec<String> = cfg["pipeline"]
        .as_array()
        .ok_or_else(|| PipelineError::config("config.json", "no pipeline list"))?
        .iter()
        .filter_map(|s| s.as_str().map(str::to_string))
        .collect();
    let report = render_report(&read_step_outputs(dir, &steps)?);
    report.write(dir)?;
    Ok(report)
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    /// Plain-text summary table.
    pub fn to_text(&self) -> String {
        let mut rows = vec![[
            "step".to_string(),
            "type".into(),
            "status".into(),
            "trials".into(),
            "failed".into(),
            "objective".into(),
            "best".into(),
        ]];
        for s in &self.steps {
            let objective = s
                .objectives
                .iter()
                .map(|o| format!("{} ({})", o.metric, o.orientation.name()))
                .collect::<Vec<_>>()
                .join(", ");
            let best = match (s.objectives.as_slice(), s.best.as_slice()) {
                (_, []) => "-".to_string(),
                ([o], [b, ..]) => b
                    .metrics
                    .get(&o.metric)
                    .map_or("-".into(), |v| format_float(*v)),
                (_, front) => format!("front of {}", front.len()),
            };
            rows.push([
                s.step.clone(),
                s.step_type.clone(),
                s.status.clone(),
                s.trials.to_string(),
                s.failed_trials.to_string(),
                objective,
                best,
            ]);
        }
        let widths: Vec<usize> = (0..7)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        let _ = writeln!(out, "status: {}", self.status);
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        write(&dir.join("report.json"), &self.to_json())?;
        write(&dir.join("report.txt"), &self.to_text())
    }
}
