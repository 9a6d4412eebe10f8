use std::ops::Add;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{ModelDescription, NetDescError, NodeKind};

/// Analytic parameter and FLOP counts. One multiply-accumulate counts as
/// two FLOPs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub params_millions: f64,
    pub flops_billions: f64,
}

impl Add for CostEstimate {
    type Output = CostEstimate;

    fn add(self, o: CostEstimate) -> CostEstimate {
        CostEstimate {
            params_millions: self.params_millions + o.params_millions,
            flops_billions: self.flops_billions + o.flops_billions,
        }
    }
}

pub const FLOPS_PER_MAC: f64 = 2.0;

const FREE_OPS: [&str; 9] = [
    "input",
    "output",
    "identity",
    "skip_connect",
    "none",
    "relu",
    "add",
    "concat",
    "flatten",
];

fn int_attr(node: &ModelDescription, keys: &[&str]) -> Option<f64> {
    keys.iter()
        .find_map(|k| node.attrs.get(*k).and_then(Json::as_f64))
}

fn kernel_from_name(op: &str) -> Option<f64> {
    let i = op.find("conv")? + 4;
    let rest = &op[i..];
    let end = rest
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(rest.len());
    rest[..end].parse().ok()
}

/// Raw (params, MACs) of one operator.
fn operator_cost(
    node: &ModelDescription,
    resolution: Option<f64>,
) -> Result<(f64, f64), NetDescError> {
    let op = node
        .attrs
        .get("op")
        .and_then(Json::as_str)
        .unwrap_or("identity");
    let missing = |attr: &str| NetDescError::MissingAttr {
        node: node.name.clone(),
        attr: attr.to_string(),
    };
    if FREE_OPS.contains(&op) || op.starts_with("max_pool") || op.starts_with("avg_pool") {
        return Ok((0.0, 0.0));
    }
    let c_in =
        || int_attr(node, &["inchannels", "in_channels"]).ok_or_else(|| missing("inchannels"));
    let c_out =
        || int_attr(node, &["outchannels", "out_channels"]).ok_or_else(|| missing("outchannels"));
    let hw = || {
        int_attr(node, &["resolution"])
            .or(resolution)
            .map(|r| r * r)
            .ok_or_else(|| missing("resolution"))
    };
    if op == "batchnorm" {
        let c = c_out()?;
        return Ok((2.0 * c, c * hw()?));
    }
    if op == "linear" {
        let (i, o) = (c_in()?, c_out()?);
        return Ok((i * o + o, i * o));
    }
    if op.contains("conv") {
        let k = int_attr(node, &["kernel"])
            .or_else(|| kernel_from_name(op))
            .ok_or_else(|| missing("kernel"))?;
        let (i, o) = (c_in()?, c_out()?);
        let separable = op.starts_with("sep_conv") || op.starts_with("dil_conv");
        let pointwise = separable
            || node
                .attrs
                .get("pointwise")
                .and_then(Json::as_bool)
                .unwrap_or(false);
        let groups = int_attr(node, &["groups"]).unwrap_or(if separable { i } else { 1.0 });
        let params = if pointwise {
            k * k * i * i / groups + i * o
        } else {
            k * k * i * o / groups
        };
        return Ok((params, params * hw()?));
    }
    Err(NetDescError::UnknownOperator {
        node: node.name.clone(),
        op: op.to_string(),
    })
}

/// Sums closed-form operator costs over the tree. Spatial size is the
/// operator's own `resolution` attribute or the nearest ancestor's.
pub fn estimate_cost(desc: &ModelDescription) -> Result<CostEstimate, NetDescError> {
    fn go(
        n: &ModelDescription,
        res: Option<f64>,
        acc: &mut (f64, f64),
    ) -> Result<(), NetDescError> {
        let res = int_attr(n, &["resolution"]).or(res);
        if n.kind == NodeKind::Operator {
            let (p, m) = operator_cost(n, res)?;
            acc.0 += p;
            acc.1 += m;
        }
        for c in &n.children {
            go(c, res, acc)?;
        }
        Ok(())
    }
    let mut acc = (0.0, 0.0);
    go(desc, None, &mut acc)?;
    Ok(CostEstimate {
        params_millions: acc.0 / 1e6,
        flops_billions: acc.1 * FLOPS_PER_MAC / 1e9,
    })
}
