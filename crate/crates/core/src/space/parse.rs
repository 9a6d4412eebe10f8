use super::{
    ArrayExtras, ConditionSpec, ConditionType, Interval, ParamSpec, ParamType, Range, SearchSpace,
    SpaceError, Trigger,
};
use crate::value::Scalar;
use crate::yaml::{self, Node};

/// Parses a search-space document.
///
/// The document may be a bare `search_space` block or any mapping holding a
/// `search_space` key. Parameter order follows the document.
pub fn parse_space(document: &str) -> Result<SearchSpace, SpaceError> {
    let root = yaml::parse(document)?;
    let block = root.get("search_space").unwrap_or(&root);
    SearchSpace::from_node(block)
}

/// Renders a space in the document syntax accepted by [`parse_space`].
pub fn serialize_space(space: &SearchSpace) -> String {
    yaml::emit(&Node::Map(vec![("search_space".into(), space.to_node())]))
}

impl SearchSpace {
    pub fn from_node(node: &Node) -> Result<SearchSpace, SpaceError> {
        let entries = match node {
            Node::Null => return Ok(SearchSpace::default()),
            Node::Map(entries) => entries,
            seq @ Node::Seq(_) => {
                let wrapped = Node::Map(vec![("hyperparameters".into(), seq.clone())]);
                return SearchSpace::from_node(&wrapped);
            }
            other => {
                return Err(malformed(
                    "search_space",
                    format!("expected a mapping, found {}", other.kind_name()),
                ))
            }
        };
        let mut params = Vec::new();
        let mut conditions = Vec::new();
        for (k, v) in entries {
            match k.as_str() {
                "type" => match v.as_str() {
                    Some("SearchSpace") => {}
                    _ => {
                        return Err(malformed(
                            "search_space.type",
                            format!("expected SearchSpace, found {v}"),
                        ))
                    }
                },
                "hyperparameters" => {
                    for item in records(v, "hyperparameters")? {
                        params.push(param_from_fields(&item)?);
                    }
                }
                "condition" | "conditions" => {
                    for item in records(v, k)? {
                        conditions.push(condition_from_fields(&item)?);
                    }
                }
                other => {
                    return Err(malformed(
                        "search_space",
                        format!("unknown field `{other}`"),
                    ))
                }
            }
        }
        resolve_binary_counts(&mut params);
        SearchSpace::new(params, conditions)
    }

    pub fn to_node(&self) -> Node {
        let params = self.params.iter().map(param_to_node).collect();
        let conds = self.conditions.iter().map(condition_to_node).collect();
        Node::Map(vec![
            ("type".into(), Node::Str("SearchSpace".into())),
            ("hyperparameters".into(), Node::Seq(params)),
            ("conditions".into(), Node::Seq(conds)),
        ])
    }
}

fn malformed(context: &str, msg: impl Into<String>) -> SpaceError {
    SpaceError::Malformed {
        context: context.to_string(),
        msg: msg.into(),
    }
}

type Fields = Vec<(String, Node)>;

/// Normalizes a list of records. A mapping with repeated `key` entries is
/// split into one record per `key`, so flat listings without `-` markers load.
fn records(node: &Node, ctx: &str) -> Result<Vec<Fields>, SpaceError> {
    match node {
        Node::Null => Ok(Vec::new()),
        Node::Seq(items) => items
            .iter()
            .map(|item| match item {
                Node::Map(e) => Ok(e.clone()),
                other => Err(malformed(
                    ctx,
                    format!("expected a mapping entry, found {}", other.kind_name()),
                )),
            })
            .collect(),
        Node::Map(entries) => {
            let mut out: Vec<Fields> = Vec::new();
            for (k, v) in entries {
                if k == "key" || out.is_empty() {
                    out.push(Vec::new());
                }
                out.last_mut()
                    .expect("pushed above")
                    .push((k.clone(), v.clone()));
            }
            Ok(out)
        }
        other => Err(malformed(
            ctx,
            format!("expected a list, found {}", other.kind_name()),
        )),
    }
}

fn field<'a>(fields: &'a Fields, name: &str) -> Option<&'a Node> {
    fields.iter().find(|(k, _)| k == name).map(|(_, v)| v)
}

fn str_field(fields: &Fields, name: &str, ctx: &str) -> Result<String, SpaceError> {
    match field(fields, name) {
        Some(Node::Str(s)) => Ok(s.clone()),
        Some(other) => Err(malformed(
            ctx,
            format!("`{name}` must be a string, found {other}"),
        )),
        None => Err(malformed(ctx, format!("missing `{name}`"))),
    }
}

fn param_from_fields(fields: &Fields) -> Result<ParamSpec, SpaceError> {
    let key = str_field(fields, "key", "hyperparameter")?;
    let type_name = str_field(fields, "type", &key)?;
    let ptype = ParamType::from_name(&type_name).ok_or_else(|| SpaceError::UnknownType {
        key: key.clone(),
        name: type_name.clone(),
    })?;
    let mut extras = ArrayExtras::default();
    let mut range_node = None;
    for (k, v) in fields {
        match k.as_str() {
            "key" | "type" => {}
            "range" => range_node = Some(v),
            "length" | "lenth" => extras.length = Some(uint_field(v, &key, "length")?),
            "times" => extras.times = Some(uint_field(v, &key, "times")?),
            "count" => extras.count = Some(uint_field(v, &key, "count")?),
            "n" => {
                extras.n = Some(
                    v.as_i64()
                        .ok_or_else(|| malformed(&key, "`n` must be an integer"))?,
                );
            }
            other => return Err(malformed(&key, format!("unknown field `{other}`"))),
        }
    }
    let range_node = range_node.ok_or_else(|| malformed(&key, "missing `range`"))?;
    let range = parse_range(&key, ptype, range_node)?;
    Ok(ParamSpec {
        key,
        ptype,
        range,
        extras,
    })
}

fn uint_field(v: &Node, key: &str, name: &str) -> Result<u64, SpaceError> {
    v.as_i64()
        .filter(|i| *i >= 0)
        .map(|i| i as u64)
        .ok_or_else(|| malformed(key, format!("`{name}` must be a non-negative integer")))
}

fn range_err(key: &str, msg: impl Into<String>) -> SpaceError {
    SpaceError::MalformedRange {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn as_pair(node: &Node) -> Option<(f64, f64)> {
    match node.as_seq()? {
        [a, b] => Some((a.as_f64()?, b.as_f64()?)),
        _ => None,
    }
}

fn parse_range(key: &str, ptype: ParamType, node: &Node) -> Result<Range, SpaceError> {
    let items: Vec<Node> = match node {
        Node::Seq(items) => items.clone(),
        scalar @ (Node::Int(_) | Node::Float(_) | Node::Str(_) | Node::Bool(_)) => {
            vec![scalar.clone()]
        }
        other => {
            return Err(range_err(
                key,
                format!("expected a list, found {}", other.kind_name()),
            ))
        }
    };
    if ptype.is_interval() {
        let pair = as_pair(node)
            .or_else(|| match items.as_slice() {
                [inner] => as_pair(inner),
                _ => None,
            })
            .ok_or_else(|| range_err(key, "expected [lo, hi]"))?;
        return Ok(Range::Intervals(vec![Interval::new(pair.0, pair.1)]));
    }
    match ptype {
        ParamType::IntArray => {
            if let Some((lo, hi)) =
                as_pair(node).filter(|_| items.iter().all(|i| i.as_f64().is_some()))
            {
                return Ok(Range::Intervals(vec![Interval::new(lo, hi)]));
            }
            let ivs = items
                .iter()
                .map(|i| as_pair(i).map(|(lo, hi)| Interval::new(lo, hi)))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| range_err(key, "expected (lo, hi) or a list of (lo, hi) pairs"))?;
            Ok(Range::Intervals(ivs))
        }
        _ => {
            let values = items
                .iter()
                .map(|i| {
                    let s = Scalar::from_node(i)
                        .ok_or_else(|| range_err(key, format!("non-scalar entry {i}")))?;
                    Ok(match (ptype, s) {
                        (ParamType::FloatCat, Scalar::Int(v)) => Scalar::Float(v as f64),
                        (
                            ParamType::IntCat
                            | ParamType::MultiplyPositionArray
                            | ParamType::BinaryArray,
                            Scalar::Float(f),
                        ) if f.fract() == 0.0 => Scalar::Int(f as i64),
                        (_, s) => s,
                    })
                })
                .collect::<Result<Vec<_>, SpaceError>>()?;
            Ok(Range::Values(values))
        }
    }
}

/// BINARY_ARRAY params without an explicit `count` take it from a sibling
/// `<prefix>.count` parameter (its largest value), else 1.
fn resolve_binary_counts(params: &mut [ParamSpec]) {
    let counts: Vec<Option<u64>> = params
        .iter()
        .map(|p| {
            if p.ptype != ParamType::BinaryArray || p.extras.count.is_some() {
                return None;
            }
            let prefix = p.key.rsplit_once('.').map(|(a, _)| a).unwrap_or("");
            let sibling = if prefix.is_empty() {
                "count".to_string()
            } else {
                format!("{prefix}.count")
            };
            let max = params.iter().find(|q| q.key == sibling).and_then(|q| {
                let from_values = q.values().iter().filter_map(Scalar::as_f64);
                let from_intervals = q.intervals().iter().map(|iv| iv.hi);
                from_values
                    .chain(from_intervals)
                    .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
            });
            Some(max.filter(|m| *m >= 1.0).map(|m| m as u64).unwrap_or(1))
        })
        .collect();
    for (p, c) in params.iter_mut().zip(counts) {
        if c.is_some() {
            p.extras.count = c;
        }
    }
}

fn condition_from_fields(fields: &Fields) -> Result<ConditionSpec, SpaceError> {
    let key = str_field(fields, "key", "condition")?;
    let child = str_field(fields, "child", &key)?;
    let parent = str_field(fields, "parent", &key)?;
    let type_name = str_field(fields, "type", &key)?;
    let ctype = ConditionType::from_name(&type_name)
        .ok_or_else(|| malformed(&key, format!("unknown condition type `{type_name}`")))?;
    for (k, _) in fields {
        if !matches!(k.as_str(), "key" | "child" | "parent" | "type" | "range") {
            return Err(malformed(&key, format!("unknown field `{k}`")));
        }
    }
    let range = match field(fields, "range") {
        None => return Err(malformed(&key, "missing `range`")),
        Some(Node::Seq(items)) => items
            .iter()
            .map(|i| trigger_from_node(&key, i))
            .collect::<Result<Vec<_>, _>>()?,
        Some(scalar) => vec![trigger_from_node(&key, scalar)?],
    };
    Ok(ConditionSpec {
        key,
        child,
        parent,
        ctype,
        range,
    })
}

fn trigger_from_node(key: &str, node: &Node) -> Result<Trigger, SpaceError> {
    if let Some((lo, hi)) = as_pair(node) {
        return Ok(Trigger::Interval(Interval::new(lo, hi)));
    }
    Scalar::from_node(node)
        .map(Trigger::Value)
        .ok_or_else(|| range_err(key, format!("invalid trigger {node}")))
}

fn bound(ptype: ParamType, v: f64) -> Node {
    if ptype.is_integer() || ptype == ParamType::IntArray {
        Node::Int(v as i64)
    } else {
        Node::Float(v)
    }
}

fn param_to_node(p: &ParamSpec) -> Node {
    let range = match &p.range {
        Range::Values(values) => Node::Seq(values.iter().map(Scalar::to_node).collect()),
        Range::Intervals(ivs) if p.ptype == ParamType::IntArray && ivs.len() > 1 => Node::Seq(
            ivs.iter()
                .map(|iv| Node::Seq(vec![bound(p.ptype, iv.lo), bound(p.ptype, iv.hi)]))
                .collect(),
        ),
        Range::Intervals(ivs) => match ivs.as_slice() {
            [iv] => Node::Seq(vec![bound(p.ptype, iv.lo), bound(p.ptype, iv.hi)]),
            _ => Node::Seq(
                ivs.iter()
                    .map(|iv| Node::Seq(vec![bound(p.ptype, iv.lo), bound(p.ptype, iv.hi)]))
                    .collect(),
            ),
        },
    };
    let mut entries = vec![
        ("key".to_string(), Node::Str(p.key.clone())),
        ("type".to_string(), Node::Str(p.ptype.name().to_string())),
        ("range".to_string(), range),
    ];
    let x = &p.extras;
    if let Some(v) = x.length {
        entries.push(("length".into(), Node::Int(v as i64)));
    }
    if let Some(v) = x.times {
        entries.push(("times".into(), Node::Int(v as i64)));
    }
    if let Some(v) = x.n {
        entries.push(("n".into(), Node::Int(v)));
    }
    if let Some(v) = x.count {
        entries.push(("count".into(), Node::Int(v as i64)));
    }
    Node::Map(entries)
}

fn condition_to_node(c: &ConditionSpec) -> Node {
    let range = c
        .range
        .iter()
        .map(|t| match t {
            Trigger::Value(s) => s.to_node(),
            Trigger::Interval(iv) => Node::Seq(vec![Node::Float(iv.lo), Node::Float(iv.hi)]),
        })
        .collect();
    Node::Map(vec![
        ("key".into(), Node::Str(c.key.clone())),
        ("child".into(), Node::Str(c.child.clone())),
        ("parent".into(), Node::Str(c.parent.clone())),
        ("type".into(), Node::Str(c.ctype.name().into())),
        ("range".into(), Node::Seq(range)),
    ])
}
