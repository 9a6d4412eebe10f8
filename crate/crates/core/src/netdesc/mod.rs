//! Framework-independent model descriptions.
//!
//! A description is a tree of `network ⊇ cell ⊇ block ⊇ operator` nodes.
//! Every node has a name unique among its siblings, so each attribute has a
//! dotted address such as `resnet.cell.inchannels`. Search samples are bound
//! onto descriptions through those addresses.

mod cost;
pub mod dnet;
mod supernet;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::sampler::ConfigSample;

pub use cost::{estimate_cost, CostEstimate};
pub use supernet::{select_from_supernet, SupernetDescription, SupernetWeight, DARTS_GENOTYPE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Network,
    Cell,
    Block,
    Operator,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Network => "network",
            NodeKind::Cell => "cell",
            NodeKind::Block => "block",
            NodeKind::Operator => "operator",
        }
    }

    pub fn from_name(s: &str) -> Option<NodeKind> {
        [
            NodeKind::Network,
            NodeKind::Cell,
            NodeKind::Block,
            NodeKind::Operator,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A description node; the root node is the whole description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    pub name: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub attrs: Map<String, Json>,
    #[serde(default)]
    pub children: Vec<ModelDescription>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NetDescError {
    #[error("`{path}`: unknown segment `{segment}`")]
    UnknownSegment { path: String, segment: String },
    #[error("`{path}`: attribute `{attr}` absent on node `{node}`")]
    AttrAbsent {
        path: String,
        node: String,
        attr: String,
    },
    #[error("empty path")]
    EmptyPath,
    #[error("`{key}`: expected an array of {expected} values, got {got}")]
    LengthMismatch {
        key: String,
        expected: usize,
        got: String,
    },
    #[error("invalid description: {0}")]
    Invalid(String),
    #[error("malformed weight matrix: {0}")]
    MalformedWeights(String),
    #[error("channel mismatch: {0}")]
    Channels(String),
    #[error("operator `{node}`: unknown operator kind `{op}`")]
    UnknownOperator { node: String, op: String },
    #[error("operator `{node}`: missing attribute `{attr}`")]
    MissingAttr { node: String, attr: String },
    #[error("malformed block code `{code}`: {msg}")]
    BadCode { code: String, msg: String },
    #[error(transparent)]
    Json(#[from] JsonError),
}

/// Wrapper so the error enum can derive `PartialEq`.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct JsonError(pub String);

impl PartialEq for JsonError {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

/// Address of one attribute: child indices from the root, then the attribute name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrRef {
    pub node: Vec<usize>,
    pub attr: String,
}

/// Result of resolving a dotted path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolved {
    Single(AttrRef),
    /// Produced when a pseudo-segment (`convs` or a kind name) expanded the path.
    List(Vec<AttrRef>),
}

impl Resolved {
    pub fn refs(&self) -> &[AttrRef] {
        match self {
            Resolved::Single(r) => std::slice::from_ref(r),
            Resolved::List(v) => v,
        }
    }
}

impl ModelDescription {
    pub fn new(name: &str, kind: NodeKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            attrs: Map::new(),
            children: Vec::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: impl Into<Json>) -> Self {
        self.attrs.insert(key.to_string(), value.into());
        self
    }

    pub fn with_child(mut self, child: ModelDescription) -> Self {
        self.children.push(child);
        self
    }

    pub fn from_json_str(s: &str) -> Result<Self, NetDescError> {
        let desc: ModelDescription =
            serde_json::from_str(s).map_err(|e| JsonError(e.to_string()))?;
        desc.validate()?;
        Ok(desc)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptions serialize")
    }

    /// Checks naming and nesting invariants.
    pub fn validate(&self) -> Result<(), NetDescError> {
        fn walk(node: &ModelDescription, path: &str) -> Result<(), NetDescError> {
            if node.name.is_empty() || node.name.contains('.') {
                return Err(NetDescError::Invalid(format!(
                    "bad node name `{}` under `{path}`",
                    node.name
                )));
            }
            let here = if path.is_empty() {
                node.name.clone()
            } else {
                format!("{path}.{}", node.name)
            };
            if node.kind == NodeKind::Operator && !node.children.is_empty() {
                return Err(NetDescError::Invalid(format!(
                    "operator `{here}` has children"
                )));
            }
            let mut names = HashSet::new();
            for c in &node.children {
                if c.kind <= node.kind {
                    return Err(NetDescError::Invalid(format!(
                        "`{here}`: {} node `{}` cannot nest inside a {}",
                        c.kind, c.name, node.kind
                    )));
                }
                if !names.insert(c.name.as_str()) {
                    return Err(NetDescError::Invalid(format!(
                        "`{here}`: duplicate child name `{}`",
                        c.name
                    )));
                }
                walk(c, &here)?;
            }
            Ok(())
        }
        walk(self, "")
    }

    pub fn node(&self, path: &[usize]) -> &ModelDescription {
        path.iter().fold(self, |n, &i| &n.children[i])
    }

    pub fn node_mut(&mut self, path: &[usize]) -> &mut ModelDescription {
        path.iter().fold(self, |n, &i| &mut n.children[i])
    }

    pub fn get(&self, r: &AttrRef) -> Option<&Json> {
        self.node(&r.node).attrs.get(&r.attr)
    }

    /// Dotted name of the node at `path`.
    pub fn dotted(&self, path: &[usize]) -> String {
        let mut parts = vec![self.name.as_str()];
        let mut n = self;
        for &i in path {
            n = &n.children[i];
            parts.push(&n.name);
        }
        parts.join(".")
    }

    /// Pre-order visit of every node with its index path.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&[usize], &'a ModelDescription)) {
        fn go<'a>(
            n: &'a ModelDescription,
            path: &mut Vec<usize>,
            f: &mut impl FnMut(&[usize], &'a ModelDescription),
        ) {
            f(path, n);
            for (i, c) in n.children.iter().enumerate() {
                path.push(i);
                go(c, path, f);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f)
    }

    pub fn resolve(&self, path: &str) -> Result<Resolved, NetDescError> {
        resolve(self, path)
    }

    pub fn is_conv(&self) -> bool {
        self.kind == NodeKind::Operator
            && self
                .attrs
                .get("op")
                .and_then(Json::as_str)
                .is_some_and(|op| op.to_ascii_lowercase().contains("conv"))
    }
}

fn descendants(
    root: &ModelDescription,
    at: &[usize],
    pred: impl Fn(&ModelDescription) -> bool,
) -> Vec<Vec<usize>> {
    let start = root.node(at);
    let mut out = Vec::new();
    start.walk(&mut |p, n| {
        if !p.is_empty() && pred(n) {
            let mut full = at.to_vec();
            full.extend_from_slice(p);
            out.push(full);
        }
    });
    out
}

/// Resolves a dotted path to attribute references.
///
/// The first segment names the root. Middle segments select a child by name;
/// failing that, `convs` expands to every convolution operator below the
/// current node and a kind name (`cell`, `block`, `operator`) expands to all
/// descendants of that kind. The last segment is the attribute.
pub fn resolve(desc: &ModelDescription, path: &str) -> Result<Resolved, NetDescError> {
    if path.is_empty() {
        return Err(NetDescError::EmptyPath);
    }
    let segments: Vec<&str> = path.split('.').collect();
    let unknown = |segment: &str| NetDescError::UnknownSegment {
        path: path.to_string(),
        segment: segment.to_string(),
    };
    if segments[0] != desc.name {
        return Err(unknown(segments[0]));
    }
    if segments.len() < 2 {
        return Err(NetDescError::AttrAbsent {
            path: path.to_string(),
            node: desc.name.clone(),
            attr: String::new(),
        });
    }
    let mut current: Vec<Vec<usize>> = vec![Vec::new()];
    let mut expanded = false;
    for seg in &segments[1..segments.len() - 1] {
        let mut next = Vec::new();
        for at in &current {
            let node = desc.node(at);
            if let Some(i) = node.children.iter().position(|c| c.name == *seg) {
                let mut p = at.clone();
                p.push(i);
                next.push(p);
            } else if *seg == "convs" {
                expanded = true;
                next.extend(descendants(desc, at, ModelDescription::is_conv));
            } else if let Some(kind) = NodeKind::from_name(seg).filter(|k| *k > node.kind) {
                expanded = true;
                next.extend(descendants(desc, at, |n| n.kind == kind));
            } else {
                return Err(unknown(seg));
            }
        }
        if next.is_empty() {
            return Err(unknown(seg));
        }
        current = next;
    }
    let attr = segments[segments.len() - 1];
    let mut refs = Vec::with_capacity(current.len());
    for at in current {
        let node = desc.node(&at);
        if !node.attrs.contains_key(attr) {
            return Err(NetDescError::AttrAbsent {
                path: path.to_string(),
                node: desc.dotted(&at),
                attr: attr.to_string(),
            });
        }
        refs.push(AttrRef {
            node: at,
            attr: attr.to_string(),
        });
    }
    if expanded || refs.len() != 1 {
        Ok(Resolved::List(refs))
    } else {
        Ok(Resolved::Single(refs.pop().expect("one ref")))
    }
}

/// Returns a copy of `desc` with every addressed attribute replaced.
///
/// Paths resolve against the input description. Array values are spread
/// positionally over list targets.
pub fn apply_sample(
    desc: &ModelDescription,
    sample: &ConfigSample,
) -> Result<ModelDescription, NetDescError> {
    let mut out = desc.clone();
    for (key, value) in &sample.values {
        let json = value.to_json();
        match resolve(desc, key)? {
            Resolved::Single(r) => {
                out.node_mut(&r.node).attrs.insert(r.attr, json);
            }
            Resolved::List(refs) => {
                let items = match &json {
                    Json::Array(items) if items.len() == refs.len() => items.clone(),
                    other => {
                        return Err(NetDescError::LengthMismatch {
                            key: key.clone(),
                            expected: refs.len(),
                            got: other.to_string(),
                        })
                    }
                };
                for (r, v) in refs.into_iter().zip(items) {
                    out.node_mut(&r.node).attrs.insert(r.attr, v);
                }
            }
        }
    }
    Ok(out)
}

/// A ResNet-style description with `cells` cells of two conv operators each.
pub fn resnet_like(name: &str, cells: usize) -> ModelDescription {
    let mut net = ModelDescription::new(name, NodeKind::Network)
        .with_attr("in_channels", 3)
        .with_attr("resolution", 32)
        .with_attr("num_classes", 10);
    for i in 0..cells {
        let ch = if i < cells / 2 { 64 } else { 128 };
        let mut cell = ModelDescription::new(&format!("cell{i}"), NodeKind::Cell)
            .with_attr("inchannels", ch)
            .with_attr("strides", 1)
            .with_attr("resolution", 32);
        for j in 0..2 {
            cell = cell.with_child(
                ModelDescription::new(&format!("conv{j}"), NodeKind::Operator)
                    .with_attr("op", "conv2d")
                    .with_attr("kernel", 3)
                    .with_attr("inchannels", ch)
                    .with_attr("outchannels", ch)
                    .with_attr("groups", 1),
            );
        }
        net = net.with_child(cell);
    }
    net
}
