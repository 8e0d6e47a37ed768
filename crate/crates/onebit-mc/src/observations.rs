use crate::error::{Error, Result};

/// One observed binary rating: matrix position plus a sign in {-1, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub i: usize,
    pub j: usize,
    pub y: i8,
}

/// The observed index set Omega and the binary matrix Y restricted to it.
/// Entries are stored sorted by (i, j), which fixes the summation and
/// RNG-consumption order everywhere downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSet {
    d1: usize,
    d2: usize,
    entries: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(d1: usize, d2: usize, mut entries: Vec<Observation>) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return Err(Error::dimension(format!(
                "observation set needs positive dimensions, got {d1}x{d2}"
            )));
        }
        for e in &entries {
            if e.i >= d1 || e.j >= d2 {
                return Err(Error::dimension(format!(
                    "observation index ({}, {}) outside {d1}x{d2}",
                    e.i, e.j
                )));
            }
            if e.y != 1 && e.y != -1 {
                return Err(Error::domain(format!(
                    "observation value at ({}, {}) must be +1 or -1, got {}",
                    e.i, e.j, e.y
                )));
            }
        }
        entries.sort_unstable_by_key(|e| (e.i, e.j));
        if let Some(w) = entries.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::domain(format!(
                "duplicate observation at ({}, {})",
                w[0].i, w[0].j
            )));
        }
        Ok(Self { d1, d2, entries })
    }

    /// Convenience constructor from (i, j, y) tuples.
    pub fn from_tuples(d1: usize, d2: usize, tuples: &[(usize, usize, i8)]) -> Result<Self> {
        let entries = tuples
            .iter()
            .map(|&(i, j, y)| Observation { i, j, y })
            .collect();
        Self::new(d1, d2, entries)
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    /// Number of observations n = |Omega|.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in (i, j)-sorted order.
    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    /// True when `other` observes exactly the same index set (signs may differ).
    pub fn same_support(&self, other: &ObservationSet) -> bool {
        self.d1 == other.d1
            && self.d2 == other.d2
            && self.len() == other.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.i == b.i && a.j == b.j)
    }
}
