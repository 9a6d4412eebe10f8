use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{
    is_valid_key, ConditionType, ParamSpec, ParamType, Range, SearchSpace, SpaceError, Trigger,
};
use crate::value::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    InvalidKey,
    DuplicateKey,
    EmptyRange,
    DuplicateCategory,
    CategoryType,
    RangeShape,
    BadInterval,
    ExpBound,
    NonIntegerBound,
    ArrayExtras,
    DanglingParent,
    DanglingChild,
    SelfCondition,
    MultipleConditions,
    DuplicateConditionKey,
    ConditionCycle,
    ConditionRange,
    NonScalarParent,
}

impl Rule {
    pub fn description(self) -> &'static str {
        match self {
            Rule::InvalidKey => "invalid key",
            Rule::DuplicateKey => "duplicate key",
            Rule::EmptyRange => "empty range",
            Rule::DuplicateCategory => "duplicate category",
            Rule::CategoryType => "category type mismatch",
            Rule::RangeShape => "malformed range",
            Rule::BadInterval => "interval with lo > hi",
            Rule::ExpBound => "exponential range requires lo > 0",
            Rule::NonIntegerBound => "integer type with non-integer bound",
            Rule::ArrayExtras => "invalid array attributes",
            Rule::DanglingParent => "dangling parent reference",
            Rule::DanglingChild => "dangling child reference",
            Rule::SelfCondition => "child equals parent",
            Rule::MultipleConditions => "multiple conditions on one child",
            Rule::DuplicateConditionKey => "duplicate condition key",
            Rule::ConditionCycle => "condition cycle",
            Rule::ConditionRange => "condition range incompatible with parent",
            Rule::NonScalarParent => "condition parent must be a scalar parameter",
        }
    }
}

/// One violated invariant: the offending key and the rule it breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub key: String,
    pub rule: Rule,
    pub detail: String,
}

impl Diagnostic {
    fn new(key: &str, rule: Rule, detail: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            rule,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.rule.description())?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Returns every invariant violation; empty iff the space is valid.
pub fn validate_space(space: &SearchSpace) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for p in &space.params {
        if !is_valid_key(&p.key) {
            out.push(Diagnostic::new(&p.key, Rule::InvalidKey, ""));
        }
        if !seen.insert(p.key.as_str()) {
            out.push(Diagnostic::new(&p.key, Rule::DuplicateKey, ""));
        }
        check_param(p, &mut out);
    }

    let by_key: HashMap<&str, &ParamSpec> =
        space.params.iter().map(|p| (p.key.as_str(), p)).collect();
    let mut children = HashSet::new();
    let mut cond_keys = HashSet::new();
    for c in &space.conditions {
        if !cond_keys.insert(c.key.as_str()) {
            out.push(Diagnostic::new(&c.key, Rule::DuplicateConditionKey, ""));
        }
        if c.child == c.parent {
            out.push(Diagnostic::new(
                &c.key,
                Rule::SelfCondition,
                c.child.clone(),
            ));
        }
        if !by_key.contains_key(c.child.as_str()) {
            out.push(Diagnostic::new(
                &c.key,
                Rule::DanglingChild,
                c.child.clone(),
            ));
        }
        if !children.insert(c.child.as_str()) {
            out.push(Diagnostic::new(
                &c.child,
                Rule::MultipleConditions,
                c.key.clone(),
            ));
        }
        match by_key.get(c.parent.as_str()) {
            None => out.push(Diagnostic::new(
                &c.key,
                Rule::DanglingParent,
                c.parent.clone(),
            )),
            Some(parent) => check_triggers(c, parent, &mut out),
        }
    }

    if let Err(cycle) = space.topo_order() {
        for key in cycle {
            out.push(Diagnostic::new(&key, Rule::ConditionCycle, ""));
        }
    }
    out
}

fn check_param(p: &ParamSpec, out: &mut Vec<Diagnostic>) {
    let key = p.key.as_str();
    let x = &p.extras;
    if p.ptype.is_categorical() {
        let values = match &p.range {
            Range::Values(v) => v,
            Range::Intervals(_) => {
                out.push(Diagnostic::new(
                    key,
                    Rule::RangeShape,
                    "categorical range must be a value list",
                ));
                return;
            }
        };
        if values.is_empty() {
            out.push(Diagnostic::new(key, Rule::EmptyRange, ""));
        }
        for (i, v) in values.iter().enumerate() {
            if values[..i].iter().any(|w| w == v) {
                out.push(Diagnostic::new(key, Rule::DuplicateCategory, v.to_string()));
            }
            let ok = match p.ptype {
                ParamType::IntCat => matches!(v, Scalar::Int(_)),
                ParamType::FloatCat => v.is_numeric(),
                _ => true,
            };
            if !ok {
                out.push(Diagnostic::new(key, Rule::CategoryType, v.to_string()));
            }
        }
    } else if p.ptype.is_interval() {
        match p.intervals() {
            [iv] => check_interval(key, p.ptype, iv.lo, iv.hi, out),
            _ => out.push(Diagnostic::new(
                key,
                Rule::RangeShape,
                "expected a single [lo, hi] interval",
            )),
        }
    }

    match p.ptype {
        ParamType::IntArray => {
            let ivs = p.intervals();
            if ivs.is_empty() {
                out.push(Diagnostic::new(key, Rule::EmptyRange, ""));
            }
            for iv in ivs {
                check_interval(key, ParamType::Int, iv.lo, iv.hi, out);
            }
            match x.length {
                Some(0) => out.push(Diagnostic::new(
                    key,
                    Rule::ArrayExtras,
                    "length must be >= 1",
                )),
                Some(len) if ivs.len() > 1 && len as usize != ivs.len() => {
                    out.push(Diagnostic::new(
                        key,
                        Rule::ArrayExtras,
                        format!("length {len} but {} per-position intervals", ivs.len()),
                    ))
                }
                None if ivs.len() <= 1 => out.push(Diagnostic::new(
                    key,
                    Rule::ArrayExtras,
                    "single-interval form requires length",
                )),
                _ => {}
            }
            if x.times.is_some() || x.n.is_some() || x.count.is_some() {
                out.push(Diagnostic::new(
                    key,
                    Rule::ArrayExtras,
                    "only length applies to INT_ARRAY",
                ));
            }
        }
        ParamType::MultiplyPositionArray => {
            let values = p.values();
            if values.is_empty() {
                out.push(Diagnostic::new(key, Rule::EmptyRange, ""));
            }
            if values.iter().any(|v| !matches!(v, Scalar::Int(_))) {
                out.push(Diagnostic::new(
                    key,
                    Rule::CategoryType,
                    "initial values must be integers",
                ));
            }
            match (x.length, x.times, x.n) {
                (Some(len), Some(times), Some(_)) => {
                    if len == 0 {
                        out.push(Diagnostic::new(
                            key,
                            Rule::ArrayExtras,
                            "length must be >= 1",
                        ));
                    }
                    if times == 0 || times > len {
                        out.push(Diagnostic::new(
                            key,
                            Rule::ArrayExtras,
                            "need 1 <= times <= length",
                        ));
                    }
                }
                _ => out.push(Diagnostic::new(
                    key,
                    Rule::ArrayExtras,
                    "length, times and n are required",
                )),
            }
            if x.count.is_some() {
                out.push(Diagnostic::new(
                    key,
                    Rule::ArrayExtras,
                    "count does not apply",
                ));
            }
        }
        ParamType::BinaryArray => {
            let values = p.values();
            let dims_ok = values.len() == 2
                && values
                    .iter()
                    .all(|v| matches!(v, Scalar::Int(i) if *i >= 1));
            if !dims_ok {
                out.push(Diagnostic::new(
                    key,
                    Rule::RangeShape,
                    "expected [rows, cols] with both >= 1",
                ));
            }
            if x.count == Some(0) {
                out.push(Diagnostic::new(
                    key,
                    Rule::ArrayExtras,
                    "count must be >= 1",
                ));
            }
            if x.length.is_some() || x.times.is_some() || x.n.is_some() {
                out.push(Diagnostic::new(
                    key,
                    Rule::ArrayExtras,
                    "only count applies to BINARY_ARRAY",
                ));
            }
        }
        _ => {
            if !x.is_empty() {
                out.push(Diagnostic::new(
                    key,
                    Rule::ArrayExtras,
                    "array attributes on a scalar type",
                ));
            }
        }
    }
}

fn check_interval(key: &str, ptype: ParamType, lo: f64, hi: f64, out: &mut Vec<Diagnostic>) {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        out.push(Diagnostic::new(
            key,
            Rule::BadInterval,
            format!("[{lo}, {hi}]"),
        ));
    }
    if ptype.is_exp() && lo <= 0.0 {
        out.push(Diagnostic::new(key, Rule::ExpBound, format!("lo = {lo}")));
    }
    if ptype.is_integer() && (lo.fract() != 0.0 || hi.fract() != 0.0) {
        out.push(Diagnostic::new(
            key,
            Rule::NonIntegerBound,
            format!("[{lo}, {hi}]"),
        ));
    }
}

fn check_triggers(c: &super::ConditionSpec, parent: &ParamSpec, out: &mut Vec<Diagnostic>) {
    if parent.ptype.is_array() {
        out.push(Diagnostic::new(
            &c.key,
            Rule::NonScalarParent,
            parent.key.clone(),
        ));
        return;
    }
    if c.range.is_empty() {
        out.push(Diagnostic::new(
            &c.key,
            Rule::ConditionRange,
            "empty trigger list",
        ));
    }
    if matches!(c.ctype, ConditionType::Equal | ConditionType::NotEqual) && c.range.len() != 1 {
        out.push(Diagnostic::new(
            &c.key,
            Rule::ConditionRange,
            "EQUAL/NOT_EQUAL take exactly one value",
        ));
    }
    let numeric_parent = parent.ptype.is_interval()
        || matches!(parent.ptype, ParamType::IntCat | ParamType::FloatCat);
    for t in &c.range {
        let ok = match t {
            Trigger::Interval(iv) => {
                matches!(c.ctype, ConditionType::In | ConditionType::Forbidden)
                    && numeric_parent
                    && iv.lo <= iv.hi
            }
            Trigger::Value(s) => match parent.ptype {
                ParamType::Int | ParamType::IntExp | ParamType::IntCat => {
                    s.as_f64().is_some_and(|f| f.fract() == 0.0)
                }
                ParamType::Float | ParamType::FloatExp | ParamType::FloatCat => s.is_numeric(),
                ParamType::Str => parent.values().iter().any(|cat| {
                    std::mem::discriminant(cat) == std::mem::discriminant(s)
                        || (cat.is_numeric() && s.is_numeric())
                }),
                _ => false,
            },
        };
        if !ok {
            let shown = match t {
                Trigger::Value(s) => s.to_string(),
                Trigger::Interval(iv) => format!("({}, {})", iv.lo, iv.hi),
            };
            out.push(Diagnostic::new(&c.key, Rule::ConditionRange, shown));
        }
    }
}

/// Maps the first diagnostic to the matching construction error.
pub(crate) fn first_error(diags: Vec<Diagnostic>) -> SpaceError {
    let first = &diags[0];
    match first.rule {
        Rule::DuplicateKey => SpaceError::DuplicateKey(first.key.clone()),
        Rule::DanglingParent | Rule::DanglingChild => SpaceError::DanglingReference {
            condition: first.key.clone(),
            key: first.detail.clone(),
        },
        Rule::ConditionCycle => SpaceError::Cycle(
            diags
                .iter()
                .filter(|d| d.rule == Rule::ConditionCycle)
                .map(|d| d.key.clone())
                .collect(),
        ),
        _ => SpaceError::Invalid(diags),
    }
}
