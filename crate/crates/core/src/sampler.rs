//! Cast / encode / decode between typed parameters and the unit cube.
//!
//! Every parameter owns `encoding_dim` coordinates in `[0, 1]`. Decoding is
//! deterministic; sampling draws coordinates i.i.d. uniform from a ChaCha8
//! stream seeded with `ChaCha8Rng::seed_from_u64(seed)`, in parameter order.
//! The same seed and implementation always produce the same sample.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::space::{ParamSpec, ParamType, SearchSpace, SpaceError};
use crate::value::{Scalar, Value};

/// Name of the seeded generator behind [`rng_from_seed`].
pub const GENERATOR: &str = "chacha8";

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DecodeError {
    #[error("{key}: coordinate {value} outside [0, 1]")]
    OutOfRange { key: String, value: f64 },
    #[error("{key}: expected {expected} coordinates, got {got}")]
    Dimension {
        key: String,
        expected: usize,
        got: usize,
    },
    #[error("{key}: {msg}")]
    Spec { key: String, msg: String },
    #[error("missing coordinates for `{0}`")]
    MissingKey(String),
}

/// Encoded point: `key -> coordinates`, one vector per parameter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EncodedSample {
    pub coords: IndexMap<String, Vec<f64>>,
}

impl EncodedSample {
    /// All coordinates flattened in key order.
    pub fn flat(&self) -> Vec<f64> {
        self.coords.values().flatten().copied().collect()
    }

    /// Rebuilds an encoded sample from flat coordinates laid out per `space`.
    pub fn from_flat(space: &SearchSpace, flat: &[f64]) -> EncodedSample {
        let mut coords = IndexMap::new();
        let mut at = 0;
        for p in &space.params {
            let d = encoding_dim(p);
            coords.insert(p.key.clone(), flat[at..at + d].to_vec());
            at += d;
        }
        EncodedSample { coords }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub sampler: String,
}

/// A decoded configuration holding exactly the active keys.
///
/// Serializes as a flat JSON object; provenance travels separately.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigSample {
    pub values: IndexMap<String, Value>,
    pub provenance: Provenance,
}

impl ConfigSample {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("samples serialize")
    }
}

impl Serialize for ConfigSample {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.values.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConfigSample {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(ConfigSample {
            values: IndexMap::deserialize(d)?,
            provenance: Provenance::default(),
        })
    }
}

/// Number of unit-cube coordinates a parameter occupies.
pub fn encoding_dim(spec: &ParamSpec) -> usize {
    match spec.ptype {
        ParamType::IntArray => match spec.intervals() {
            ivs if ivs.len() > 1 => ivs.len(),
            _ => spec.extras.length.unwrap_or(1) as usize,
        },
        ParamType::MultiplyPositionArray => spec.extras.times.unwrap_or(1) as usize,
        ParamType::BinaryArray => {
            let rows = spec
                .values()
                .first()
                .and_then(Scalar::as_f64)
                .unwrap_or(1.0) as usize;
            spec.extras.count.unwrap_or(1) as usize * rows
        }
        _ => 1,
    }
}

/// Total encoded dimension of a space.
pub fn space_dim(space: &SearchSpace) -> usize {
    space.params.iter().map(encoding_dim).sum()
}

fn check_coords(spec: &ParamSpec, u: &[f64]) -> Result<(), DecodeError> {
    let expected = encoding_dim(spec);
    if u.len() != expected {
        return Err(DecodeError::Dimension {
            key: spec.key.clone(),
            expected,
            got: u.len(),
        });
    }
    if let Some(&bad) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(DecodeError::OutOfRange {
            key: spec.key.clone(),
            value: bad,
        });
    }
    Ok(())
}

fn spec_err(spec: &ParamSpec, msg: &str) -> DecodeError {
    DecodeError::Spec {
        key: spec.key.clone(),
        msg: msg.to_string(),
    }
}

/// Category index for coordinate `u` among `k` categories.
pub fn category_index(u: f64, k: usize) -> usize {
    ((u * k as f64).floor() as usize).min(k - 1)
}

/// Coordinate representing category `i` of `k` (the centre of its cell).
pub fn encode_category(i: usize, k: usize) -> f64 {
    (i as f64 + 0.5) / k as f64
}

/// Integer in `[lo, hi]` (inclusive). The affine map spans `[lo - 0.5, hi + 0.5]`
/// before rounding so both endpoints get the same mass as interior values.
pub fn decode_int(lo: i64, hi: i64, u: f64) -> i64 {
    let span = (hi - lo + 1) as f64;
    let x = (lo as f64 - 0.5 + u * span).round() as i64;
    x.clamp(lo, hi)
}

fn decode_log(lo: f64, hi: f64, u: f64) -> f64 {
    (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
}

/// Decodes one parameter from its coordinates.
pub fn decode(spec: &ParamSpec, u: &[f64]) -> Result<Value, DecodeError> {
    check_coords(spec, u)?;
    match spec.ptype {
        ParamType::IntArray => return decode_int_array(spec, u).map(Value::IntArray),
        ParamType::MultiplyPositionArray => {
            return decode_multiply_position_array(spec, u).map(Value::IntArray)
        }
        ParamType::BinaryArray => return decode_binary_array(spec, u).map(Value::Matrices),
        _ => {}
    }
    let u = u[0];
    if spec.ptype.is_categorical() {
        let values = spec.values();
        if values.is_empty() {
            return Err(spec_err(spec, "empty categorical range"));
        }
        return Ok(values[category_index(u, values.len())].to_value());
    }
    let iv = *spec
        .intervals()
        .first()
        .ok_or_else(|| spec_err(spec, "missing interval"))?;
    Ok(match spec.ptype {
        ParamType::Float => Value::Float(iv.lo + u * (iv.hi - iv.lo)),
        ParamType::FloatExp => Value::Float(decode_log(iv.lo, iv.hi, u)),
        ParamType::Int => Value::Int(decode_int(iv.lo as i64, iv.hi as i64, u)),
        ParamType::IntExp => {
            let x = decode_log(iv.lo, iv.hi, u).round() as i64;
            Value::Int(x.clamp(iv.lo as i64, iv.hi as i64))
        }
        _ => unreachable!("handled above"),
    })
}

/// INT_ARRAY: each position decoded independently with the inclusive INT rule.
pub fn decode_int_array(spec: &ParamSpec, u: &[f64]) -> Result<Vec<i64>, DecodeError> {
    if spec.ptype != ParamType::IntArray {
        return Err(spec_err(spec, "not an INT_ARRAY"));
    }
    check_coords(spec, u)?;
    let ivs = spec.intervals();
    if ivs.len() > 1 {
        if let Some(len) = spec.extras.length {
            if len as usize != ivs.len() {
                return Err(spec_err(
                    spec,
                    "per-position range length differs from `length`",
                ));
            }
        }
    }
    if ivs.is_empty() {
        return Err(spec_err(spec, "empty range"));
    }
    Ok(u.iter()
        .enumerate()
        .map(|(i, &x)| {
            let iv = if ivs.len() == 1 { ivs[0] } else { ivs[i] };
            decode_int(iv.lo as i64, iv.hi as i64, x)
        })
        .collect())
}

/// Picks `times` distinct indices of `0..length` with a partial Fisher-Yates
/// shuffle whose swap targets come from `u`.
pub fn select_positions(length: usize, u: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..length).collect();
    for (j, &x) in u.iter().enumerate().take(length) {
        let r = j + category_index(x, length - j);
        idx.swap(j, r);
    }
    idx.truncate(u.len().min(length));
    idx
}

/// Builds the initial array (range values, last one repeated to `length`)
/// and multiplies each chosen position by `n` once.
pub fn apply_multiply_positions(
    initial: &[i64],
    length: usize,
    positions: &[usize],
    n: i64,
) -> Vec<i64> {
    let mut out: Vec<i64> = (0..length)
        .map(|i| initial[i.min(initial.len() - 1)])
        .collect();
    for &p in positions {
        out[p] *= n;
    }
    out
}

pub fn decode_multiply_position_array(
    spec: &ParamSpec,
    u: &[f64],
) -> Result<Vec<i64>, DecodeError> {
    if spec.ptype != ParamType::MultiplyPositionArray {
        return Err(spec_err(spec, "not a MULTIPLY_POSITION_ARRAY"));
    }
    let (length, times, n) = match (spec.extras.length, spec.extras.times, spec.extras.n) {
        (Some(l), Some(t), Some(n)) => (l as usize, t as usize, n),
        _ => return Err(spec_err(spec, "length, times and n are required")),
    };
    if times > length {
        return Err(spec_err(spec, "times > length"));
    }
    check_coords(spec, u)?;
    let initial: Vec<i64> = spec
        .values()
        .iter()
        .map(|s| match s {
            Scalar::Int(i) => Ok(*i),
            _ => Err(spec_err(spec, "initial values must be integers")),
        })
        .collect::<Result<_, _>>()?;
    if initial.is_empty() {
        return Err(spec_err(spec, "empty range"));
    }
    let positions = select_positions(length, u);
    Ok(apply_multiply_positions(&initial, length, &positions, n))
}

/// BINARY_ARRAY: `count` matrices of `rows x cols`, each row one-hot.
pub fn decode_binary_array(spec: &ParamSpec, u: &[f64]) -> Result<Vec<Vec<Vec<u8>>>, DecodeError> {
    if spec.ptype != ParamType::BinaryArray {
        return Err(spec_err(spec, "not a BINARY_ARRAY"));
    }
    let (rows, cols) = match spec.values() {
        [Scalar::Int(r), Scalar::Int(c)] if *r >= 1 && *c >= 1 => (*r as usize, *c as usize),
        _ => return Err(spec_err(spec, "range must be [rows, cols]")),
    };
    check_coords(spec, u)?;
    Ok(u.chunks(rows)
        .map(|matrix| {
            matrix
                .iter()
                .map(|&x| {
                    let mut row = vec![0u8; cols];
                    row[category_index(x, cols)] = 1;
                    row
                })
                .collect()
        })
        .collect())
}

/// Draws an encoded point with every coordinate i.i.d. uniform.
pub fn draw_encoded<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> EncodedSample {
    let coords = space
        .params
        .iter()
        .map(|p| {
            let u = (0..encoding_dim(p)).map(|_| rng.random::<f64>()).collect();
            (p.key.clone(), u)
        })
        .collect();
    EncodedSample { coords }
}

#[derive(Debug, thiserror::Error)]
pub enum SampleError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Decodes an encoded point, keeping only active keys (in space order).
pub fn decode_sample(
    space: &SearchSpace,
    encoded: &EncodedSample,
    provenance: Provenance,
) -> Result<ConfigSample, SampleError> {
    let order = space.topo_order().map_err(SpaceError::Cycle)?;
    let mut decoded: Vec<Option<Value>> = vec![None; space.params.len()];
    for i in order {
        let p = &space.params[i];
        let u = encoded
            .coords
            .get(&p.key)
            .ok_or_else(|| DecodeError::MissingKey(p.key.clone()))?;
        decoded[i] = Some(decode(p, u)?);
    }
    let all: IndexMap<String, Value> = space
        .params
        .iter()
        .zip(decoded)
        .map(|(p, v)| (p.key.clone(), v.expect("decoded every param")))
        .collect();
    let active = space.active_keys(&all)?;
    let values = all
        .into_iter()
        .filter(|(k, _)| active.contains(k))
        .collect();
    Ok(ConfigSample { values, provenance })
}

/// Seeded draw of one point: the encoded coordinates (all params, active or
/// not) and the decoded sample (active keys only).
pub fn sample(
    space: &SearchSpace,
    rng_seed: u64,
) -> Result<(EncodedSample, ConfigSample), SampleError> {
    let mut rng = rng_from_seed(rng_seed);
    let encoded = draw_encoded(space, &mut rng);
    let config = decode_sample(
        space,
        &encoded,
        Provenance {
            seed: rng_seed,
            sampler: format!("uniform/{GENERATOR}"),
        },
    )?;
    Ok((encoded, config))
}
