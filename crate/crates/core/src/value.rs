//! Typed values shared by search spaces, samples and evaluators.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::yaml::{self, Node};

/// A scalar as it appears in a range or condition list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Scalar {
    pub fn from_node(node: &Node) -> Option<Scalar> {
        match node {
            Node::Bool(b) => Some(Scalar::Bool(*b)),
            Node::Int(i) => Some(Scalar::Int(*i)),
            Node::Float(f) => Some(Scalar::Float(*f)),
            Node::Str(s) => Some(Scalar::Str(s.clone())),
            _ => None,
        }
    }

    pub fn to_node(&self) -> Node {
        match self {
            Scalar::Bool(b) => Node::Bool(*b),
            Scalar::Int(i) => Node::Int(*i),
            Scalar::Float(f) => Node::Float(*f),
            Scalar::Str(s) => Node::Str(s.clone()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Int(i) => Some(*i as f64),
            Scalar::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Scalar::Int(_) | Scalar::Float(_))
    }

    pub fn to_value(&self) -> Value {
        match self {
            Scalar::Bool(b) => Value::Bool(*b),
            Scalar::Int(i) => Value::Int(*i),
            Scalar::Float(f) => Value::Float(*f),
            Scalar::Str(s) => Value::Str(s.clone()),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&yaml::emit_flow(&self.to_node()))
    }
}

/// A decoded hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    IntArray(Vec<i64>),
    /// One or more binary matrices, each a list of one-hot rows.
    Matrices(Vec<Vec<Vec<u8>>>),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<Scalar> {
        match self {
            Value::Bool(b) => Some(Scalar::Bool(*b)),
            Value::Int(i) => Some(Scalar::Int(*i)),
            Value::Float(f) => Some(Scalar::Float(*f)),
            Value::Str(s) => Some(Scalar::Str(s.clone())),
            _ => None,
        }
    }

    /// Equality with numeric cross-type comparison (`8 == 8.0`).
    pub fn matches_scalar(&self, s: &Scalar) -> bool {
        match (self, s) {
            (Value::Bool(a), Scalar::Bool(b)) => a == b,
            (Value::Str(a), Scalar::Str(b)) => a == b,
            (Value::Int(_) | Value::Float(_), Scalar::Int(_) | Scalar::Float(_)) => {
                self.as_f64() == s.as_f64()
            }
            _ => false,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("values serialize to json")
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json().to_string())
    }
}
