//! Search-space description language.
//!
//! A [`SearchSpace`] is an ordered list of typed hyperparameters plus a set
//! of activation conditions. Conditions form a parent→child DAG; a child is
//! active only when its parent is active and the condition holds.

mod parse;
mod validate;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use indexmap::IndexMap;

use crate::value::{Scalar, Value};
use crate::yaml::SyntaxError;

pub use parse::{parse_space, serialize_space};
pub use validate::{validate_space, Diagnostic, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamType {
    Int,
    IntExp,
    IntCat,
    Float,
    FloatExp,
    FloatCat,
    Str,
    IntArray,
    MultiplyPositionArray,
    BinaryArray,
}

impl ParamType {
    pub const ALL: [ParamType; 10] = [
        ParamType::Int,
        ParamType::IntExp,
        ParamType::IntCat,
        ParamType::Float,
        ParamType::FloatExp,
        ParamType::FloatCat,
        ParamType::Str,
        ParamType::IntArray,
        ParamType::MultiplyPositionArray,
        ParamType::BinaryArray,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamType::Int => "INT",
            ParamType::IntExp => "INT_EXP",
            ParamType::IntCat => "INT_CAT",
            ParamType::Float => "FLOAT",
            ParamType::FloatExp => "FLOAT_EXP",
            ParamType::FloatCat => "FLOAT_CAT",
            ParamType::Str => "STRING",
            ParamType::IntArray => "INT_ARRAY",
            ParamType::MultiplyPositionArray => "MULTIPLY_POSITION_ARRAY",
            ParamType::BinaryArray => "BINARY_ARRAY",
        }
    }

    /// Accepts canonical names plus the camel-case spellings used in older
    /// configs (`IntArray`, `BinaryArray`, `MutilyPositionArray`).
    pub fn from_name(name: &str) -> Option<ParamType> {
        let canonical = match name {
            "IntArray" => "INT_ARRAY",
            "BinaryArray" => "BINARY_ARRAY",
            "MutilyPositionArray" | "MultiplyPositionArray" => "MULTIPLY_POSITION_ARRAY",
            other => other,
        };
        ParamType::ALL.into_iter().find(|t| t.name() == canonical)
    }

    pub fn is_array(self) -> bool {
        matches!(
            self,
            ParamType::IntArray | ParamType::MultiplyPositionArray | ParamType::BinaryArray
        )
    }

    pub fn is_categorical(self) -> bool {
        matches!(
            self,
            ParamType::IntCat | ParamType::FloatCat | ParamType::Str
        )
    }

    /// Scalar types whose range is a single `[lo, hi]` interval.
    pub fn is_interval(self) -> bool {
        matches!(
            self,
            ParamType::Int | ParamType::IntExp | ParamType::Float | ParamType::FloatExp
        )
    }

    pub fn is_integer(self) -> bool {
        matches!(self, ParamType::Int | ParamType::IntExp | ParamType::IntCat)
    }

    pub fn is_exp(self) -> bool {
        matches!(self, ParamType::IntExp | ParamType::FloatExp)
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Range {
    Values(Vec<Scalar>),
    Intervals(Vec<Interval>),
}

/// Integer attributes used only by the array types.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArrayExtras {
    pub length: Option<u64>,
    pub times: Option<u64>,
    pub n: Option<i64>,
    pub count: Option<u64>,
}

impl ArrayExtras {
    pub fn is_empty(&self) -> bool {
        *self == ArrayExtras::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub key: String,
    pub ptype: ParamType,
    pub range: Range,
    pub extras: ArrayExtras,
}

impl ParamSpec {
    pub fn interval(key: &str, ptype: ParamType, lo: f64, hi: f64) -> Self {
        Self {
            key: key.to_string(),
            ptype,
            range: Range::Intervals(vec![Interval::new(lo, hi)]),
            extras: ArrayExtras::default(),
        }
    }

    pub fn categorical(key: &str, ptype: ParamType, values: Vec<Scalar>) -> Self {
        Self {
            key: key.to_string(),
            ptype,
            range: Range::Values(values),
            extras: ArrayExtras::default(),
        }
    }

    pub fn values(&self) -> &[Scalar] {
        match &self.range {
            Range::Values(v) => v,
            Range::Intervals(_) => &[],
        }
    }

    pub fn intervals(&self) -> &[Interval] {
        match &self.range {
            Range::Intervals(v) => v,
            Range::Values(_) => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionType {
    Equal,
    NotEqual,
    In,
    Forbidden,
}

impl ConditionType {
    pub fn name(self) -> &'static str {
        match self {
            ConditionType::Equal => "EQUAL",
            ConditionType::NotEqual => "NOT_EQUAL",
            ConditionType::In => "IN",
            ConditionType::Forbidden => "FORBIDDEN",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            ConditionType::Equal,
            ConditionType::NotEqual,
            ConditionType::In,
            ConditionType::Forbidden,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

/// One trigger entry of a condition: an exact value or (for numeric parents) an interval.
#[derive(Debug, Clone, PartialEq)]
pub enum Trigger {
    Value(Scalar),
    Interval(Interval),
}

impl Trigger {
    pub fn matches(&self, v: &Value) -> bool {
        match self {
            Trigger::Value(s) => v.matches_scalar(s),
            Trigger::Interval(iv) => v.as_f64().is_some_and(|x| iv.contains(x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSpec {
    pub key: String,
    pub child: String,
    pub parent: String,
    pub ctype: ConditionType,
    pub range: Vec<Trigger>,
}

impl ConditionSpec {
    /// Whether the child may be active given its (active) parent's value.
    pub fn permits(&self, parent_value: &Value) -> bool {
        let hit = self.range.iter().any(|t| t.matches(parent_value));
        match self.ctype {
            ConditionType::Equal => self.range.first().is_some_and(|t| t.matches(parent_value)),
            ConditionType::NotEqual => !self.range.first().is_some_and(|t| t.matches(parent_value)),
            ConditionType::In => hit,
            ConditionType::Forbidden => !hit,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("syntax error: {0}")]
    Syntax(#[from] SyntaxError),
    #[error("{key}: unknown parameter type `{name}`")]
    UnknownType { key: String, name: String },
    #[error("{key}: malformed range: {msg}")]
    MalformedRange { key: String, msg: String },
    #[error("{context}: {msg}")]
    Malformed { context: String, msg: String },
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("condition `{condition}` references unknown parameter `{key}`")]
    DanglingReference { condition: String, key: String },
    #[error("condition cycle through {0:?}")]
    Cycle(Vec<String>),
    #[error("invalid search space: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("assignment is missing a value for active parameter `{0}`")]
    MissingValue(String),
}

/// An ordered, conditional search space.
///
/// Fields are public so that unchecked spaces can be built and passed to
/// [`validate_space`]; [`parse_space`] and [`SearchSpace::new`] only return
/// spaces with no diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
    pub conditions: Vec<ConditionSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>, conditions: Vec<ConditionSpec>) -> Result<Self, SpaceError> {
        let space = SearchSpace { params, conditions };
        let diags = validate_space(&space);
        if diags.is_empty() {
            Ok(space)
        } else {
            Err(validate::first_error(diags))
        }
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param(&self, key: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.key == key)
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.params.iter().position(|p| p.key == key)
    }

    /// The condition whose child is `key`, if any.
    pub fn condition_for(&self, key: &str) -> Option<&ConditionSpec> {
        self.conditions.iter().find(|c| c.child == key)
    }

    /// Parent → children adjacency over parameter indices.
    pub fn dag(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.params.len()];
        for cond in &self.conditions {
            if let (Some(p), Some(c)) = (self.index_of(&cond.parent), self.index_of(&cond.child)) {
                adj[p].push(c);
            }
        }
        adj
    }

    /// Topological order of parameter indices; ties keep document order.
    /// Returns the keys left on a cycle when the condition graph is cyclic.
    pub fn topo_order(&self) -> Result<Vec<usize>, Vec<String>> {
        let adj = self.dag();
        let mut indegree = vec![0usize; self.params.len()];
        for children in &adj {
            for &c in children {
                indegree[c] += 1;
            }
        }
        let mut ready: BTreeSet<usize> = (0..self.params.len())
            .filter(|&i| indegree[i] == 0)
            .collect();
        let mut order = Vec::with_capacity(self.params.len());
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &adj[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() == self.params.len() {
            Ok(order)
        } else {
            Err((0..self.params.len())
                .filter(|&i| indegree[i] > 0)
                .map(|i| self.params[i].key.clone())
                .collect())
        }
    }

    /// Keys whose whole chain of ancestor conditions is satisfied.
    ///
    /// `assignment` must hold a value for every unconditioned parameter and for
    /// every active parameter that is itself a condition parent.
    pub fn active_keys(
        &self,
        assignment: &IndexMap<String, Value>,
    ) -> Result<BTreeSet<String>, SpaceError> {
        let order = self.topo_order().map_err(SpaceError::Cycle)?;
        let by_child: HashMap<&str, &ConditionSpec> = self
            .conditions
            .iter()
            .map(|c| (c.child.as_str(), c))
            .collect();
        let mut active = vec![false; self.params.len()];
        for i in order {
            let key = self.params[i].key.as_str();
            active[i] = match by_child.get(key) {
                None => {
                    if !assignment.contains_key(key) {
                        return Err(SpaceError::MissingValue(key.to_string()));
                    }
                    true
                }
                Some(cond) => {
                    let p = self.index_of(&cond.parent).ok_or_else(|| {
                        SpaceError::DanglingReference {
                            condition: cond.key.clone(),
                            key: cond.parent.clone(),
                        }
                    })?;
                    if !active[p] {
                        false
                    } else {
                        let pv = assignment
                            .get(&cond.parent)
                            .ok_or_else(|| SpaceError::MissingValue(cond.parent.clone()))?;
                        cond.permits(pv)
                    }
                }
            };
        }
        Ok(self
            .params
            .iter()
            .zip(active)
            .filter(|(_, a)| *a)
            .map(|(p, _)| p.key.clone())
            .collect())
    }
}

/// Free-function form of [`SearchSpace::active_keys`].
pub fn active_keys(
    space: &SearchSpace,
    assignment: &IndexMap<String, Value>,
) -> Result<BTreeSet<String>, SpaceError> {
    space.active_keys(assignment)
}

/// Checks a dotted key: non-empty segments of `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|seg| {
            let mut chars = seg.chars();
            matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
                && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optim_space() -> SearchSpace {
        SearchSpace::new(
            vec![
                ParamSpec::categorical(
                    "trainer.optim.type",
                    ParamType::Str,
                    vec![Scalar::Str("Adam".into()), Scalar::Str("SGD".into())],
                ),
                ParamSpec::interval("trainer.optim.params.momentum", ParamType::Float, 0.0, 0.99),
            ],
            vec![ConditionSpec {
                key: "condition_for_sgd_momentum".into(),
                child: "trainer.optim.params.momentum".into(),
                parent: "trainer.optim.type".into(),
                ctype: ConditionType::Equal,
                range: vec![Trigger::Value(Scalar::Str("SGD".into()))],
            }],
        )
        .unwrap()
    }

    fn assign(pairs: &[(&str, Value)]) -> IndexMap<String, Value> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn equal_condition_activates_momentum_only_for_sgd() {
        let space = optim_space();
        let sgd = space
            .active_keys(&assign(&[("trainer.optim.type", Value::Str("SGD".into()))]))
            .unwrap();
        assert!(sgd.contains("trainer.optim.params.momentum"));
        let adam = space
            .active_keys(&assign(&[(
                "trainer.optim.type",
                Value::Str("Adam".into()),
            )]))
            .unwrap();
        assert!(!adam.contains("trainer.optim.params.momentum"));
        assert!(adam.contains("trainer.optim.type"));
    }

    #[test]
    fn missing_root_is_an_error() {
        let space = optim_space();
        let err = space.active_keys(&IndexMap::new()).unwrap_err();
        assert!(matches!(err, SpaceError::MissingValue(k) if k == "trainer.optim.type"));
    }

    #[test]
    fn inactive_parent_deactivates_grandchild() {
        let mut space = optim_space();
        space.params.push(ParamSpec::interval(
            "trainer.optim.params.nesterov_w",
            ParamType::Float,
            0.0,
            1.0,
        ));
        space.conditions.push(ConditionSpec {
            key: "c2".into(),
            child: "trainer.optim.params.nesterov_w".into(),
            parent: "trainer.optim.params.momentum".into(),
            ctype: ConditionType::In,
            range: vec![Trigger::Interval(Interval::new(0.5, 0.99))],
        });
        assert!(validate_space(&space).is_empty());
        let a = assign(&[
            ("trainer.optim.type", Value::Str("Adam".into())),
            ("trainer.optim.params.momentum", Value::Float(0.9)),
        ]);
        let keys = space.active_keys(&a).unwrap();
        assert_eq!(keys.len(), 1);
        let s = assign(&[
            ("trainer.optim.type", Value::Str("SGD".into())),
            ("trainer.optim.params.momentum", Value::Float(0.9)),
        ]);
        assert_eq!(space.active_keys(&s).unwrap().len(), 3);
    }

    #[test]
    fn forbidden_disables_on_hit() {
        let space = SearchSpace::new(
            vec![
                ParamSpec::categorical(
                    "p",
                    ParamType::IntCat,
                    vec![Scalar::Int(1), Scalar::Int(2), Scalar::Int(3)],
                ),
                ParamSpec::interval("c", ParamType::Float, 0.0, 1.0),
            ],
            vec![ConditionSpec {
                key: "f".into(),
                child: "c".into(),
                parent: "p".into(),
                ctype: ConditionType::Forbidden,
                range: vec![Trigger::Value(Scalar::Int(2))],
            }],
        )
        .unwrap();
        for (pv, expect) in [(1, true), (2, false), (3, true)] {
            let keys = space
                .active_keys(&assign(&[("p", Value::Int(pv))]))
                .unwrap();
            assert_eq!(keys.contains("c"), expect, "parent {pv}");
        }
    }

    #[test]
    fn key_syntax() {
        assert!(is_valid_key("trainer.optim.params.lr"));
        assert!(is_valid_key("_a.b9"));
        assert!(!is_valid_key(""));
        assert!(!is_valid_key("a..b"));
        assert!(!is_valid_key("9a"));
        assert!(!is_valid_key("a.b-c"));
    }

    #[test]
    fn type_aliases() {
        assert_eq!(
            ParamType::from_name("MutilyPositionArray"),
            Some(ParamType::MultiplyPositionArray)
        );
        assert_eq!(ParamType::from_name("IntArray"), Some(ParamType::IntArray));
        assert_eq!(ParamType::from_name("FLOAT_EXP"), Some(ParamType::FloatExp));
        assert_eq!(ParamType::from_name("DOUBLE"), None);
    }
}
