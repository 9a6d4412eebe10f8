use serde::{Deserialize, Serialize};

use super::{Orientation, TrialId};
use crate::sampler::{ConfigSample, EncodedSample};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ArchiveError {
    #[error("objective vector has {got} entries, archive expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("objective {0} is NaN")]
    NaN(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_id: Option<TrialId>,
    pub sample: ConfigSample,
    #[serde(default)]
    pub encoded: EncodedSample,
    pub objectives: Vec<f64>,
}

/// True when `a` is no worse than `b` everywhere and better somewhere.
pub fn dominates(a: &[f64], b: &[f64], orientation: &[Orientation]) -> bool {
    let mut strictly = false;
    for ((x, y), o) in a.iter().zip(b).zip(orientation) {
        let (x, y) = (o.orient(*x), o.orient(*y));
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Indices of the nondominated points, keeping the first of equal vectors.
pub fn nondominated_filter(points: &[Vec<f64>], orientation: &[Orientation]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, p)| dominates(p, &points[i], orientation) || (j < i && *p == points[i]))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub orientation: Vec<Orientation>,
    pub entries: Vec<ArchiveEntry>,
}

impl ParetoArchive {
    pub fn new(orientation: Vec<Orientation>) -> ParetoArchive {
        ParetoArchive {
            orientation,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts unless dominated by, or equal in objectives to, an entry;
    /// evicts the entries the newcomer dominates. Returns whether it was kept.
    pub fn insert(&mut self, entry: ArchiveEntry) -> Result<bool, ArchiveError> {
        if entry.objectives.len() != self.orientation.len() {
            return Err(ArchiveError::LengthMismatch {
                expected: self.orientation.len(),
                got: entry.objectives.len(),
            });
        }
        if let Some(i) = entry.objectives.iter().position(|v| v.is_nan()) {
            return Err(ArchiveError::NaN(i));
        }
        let o = &self.orientation;
        if self.entries.iter().any(|e| {
            e.objectives == entry.objectives || dominates(&e.objectives, &entry.objectives, o)
        }) {
            return Ok(false);
        }
        self.entries
            .retain(|e| !dominates(&entry.objectives, &e.objectives, o));
        self.entries.push(entry);
        Ok(true)
    }

    pub fn objectives(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.objectives.clone()).collect()
    }
}
