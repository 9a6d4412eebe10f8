use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{ModelDescription, NetDescError, NodeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupernetWeight {
    pub count: usize,
    pub value: Vec<Vec<Vec<u8>>>,
}

/// Candidate operators plus one-hot selection matrices, one per cell node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupernetDescription {
    #[serde(default = "default_name")]
    pub name: String,
    pub genotype: Vec<String>,
    #[serde(default)]
    pub concat: Vec<usize>,
    pub weight: SupernetWeight,
}

fn default_name() -> String {
    "supernet".to_string()
}

pub const DARTS_GENOTYPE: [&str; 8] = [
    "none",
    "max_pool_3x3",
    "avg_pool_3x3",
    "skip_connect",
    "sep_conv_3x3",
    "sep_conv_5x5",
    "dil_conv_3x3",
    "dil_conv_5x5",
];

fn one_hot(row: &[u8]) -> Option<usize> {
    let mut hit = None;
    for (i, &b) in row.iter().enumerate() {
        match (b, hit) {
            (0, _) => {}
            (1, None) => hit = Some(i),
            _ => return None,
        }
    }
    hit
}

/// Keeps, for every edge of every node, the candidate whose weight is 1.
pub fn select_from_supernet(sup: &SupernetDescription) -> Result<ModelDescription, NetDescError> {
    let bad = |msg: String| NetDescError::MalformedWeights(msg);
    if sup.genotype.is_empty() {
        return Err(bad("empty genotype".into()));
    }
    if sup.weight.value.len() != sup.weight.count {
        return Err(bad(format!(
            "count {} but {} matrices",
            sup.weight.count,
            sup.weight.value.len()
        )));
    }
    let mut cell = ModelDescription::new("cell", NodeKind::Cell)
        .with_attr("concat", Json::from(sup.concat.clone()));
    let mut degenerate = true;
    let mut shape: Option<(usize, usize)> = None;
    for (m, matrix) in sup.weight.value.iter().enumerate() {
        let cols = matrix.first().map_or(0, Vec::len);
        if matrix.is_empty() || cols == 0 || matrix.iter().any(|r| r.len() != cols) {
            return Err(bad(format!("matrix {m} is not rectangular")));
        }
        if *shape.get_or_insert((matrix.len(), cols)) != (matrix.len(), cols) {
            return Err(bad(format!("matrix {m} shape differs from matrix 0")));
        }
        let mut node = ModelDescription::new(&format!("node{m}"), NodeKind::Block);
        for (e, row) in matrix.iter().enumerate() {
            let col =
                one_hot(row).ok_or_else(|| bad(format!("matrix {m} row {e} is not one-hot")))?;
            let op = sup.genotype.get(col).ok_or_else(|| {
                bad(format!(
                    "matrix {m} row {e} selects column {col} beyond genotype"
                ))
            })?;
            if op != "none" {
                degenerate = false;
            }
            node = node.with_child(
                ModelDescription::new(&format!("edge{e}"), NodeKind::Operator)
                    .with_attr("op", op.as_str())
                    .with_attr("input", e),
            );
        }
        cell = cell.with_child(node);
    }
    Ok(ModelDescription::new(&sup.name, NodeKind::Network)
        .with_attr("degenerate", degenerate)
        .with_child(cell))
}
