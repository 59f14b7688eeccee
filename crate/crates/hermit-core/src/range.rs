use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed numeric interval `[lb, ub]`.
///
/// Bounds may be infinite but never NaN, and `lb <= ub` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    lb: f64,
    ub: f64,
}

impl ValueRange {
    pub fn new(lb: f64, ub: f64) -> Result<Self> {
        if lb.is_nan() || ub.is_nan() || lb > ub {
            return Err(Error::InvalidRange { lb, ub });
        }
        Ok(ValueRange { lb, ub })
    }

    pub fn point(v: f64) -> Result<Self> {
        Self::new(v, v)
    }

    /// Unbounded range covering every non-NaN value.
    pub fn all() -> Self {
        ValueRange {
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
        }
    }

    #[inline]
    pub fn lb(&self) -> f64 {
        self.lb
    }

    #[inline]
    pub fn ub(&self) -> f64 {
        self.ub
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }

    pub fn is_point(&self) -> bool {
        self.lb == self.ub
    }

    pub fn is_finite(&self) -> bool {
        self.lb.is_finite() && self.ub.is_finite()
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        self.lb <= v && v <= self.ub
    }

    #[inline]
    pub fn overlaps(&self, other: &ValueRange) -> bool {
        self.lb <= other.ub && other.lb <= self.ub
    }

    pub fn intersect(&self, other: &ValueRange) -> Option<ValueRange> {
        let lb = self.lb.max(other.lb);
        let ub = self.ub.min(other.ub);
        (lb <= ub).then_some(ValueRange { lb, ub })
    }

    /// Smallest range covering both.
    pub fn hull(&self, other: &ValueRange) -> ValueRange {
        ValueRange {
            lb: self.lb.min(other.lb),
            ub: self.ub.max(other.ub),
        }
    }
}

impl std::fmt::Display for ValueRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lb, self.ub)
    }
}

/// Merges overlapping or touching ranges into a sorted, pairwise-disjoint set
/// covering exactly the same points.
pub fn union_ranges(mut ranges: Vec<ValueRange>) -> Vec<ValueRange> {
    if ranges.len() < 2 {
        return ranges;
    }
    ranges.sort_by(|a, b| a.lb.total_cmp(&b.lb).then(a.ub.total_cmp(&b.ub)));
    let mut out: Vec<ValueRange> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match out.last_mut() {
            Some(last) if r.lb <= last.ub => last.ub = last.ub.max(r.ub),
            _ => out.push(r),
        }
    }
    out
}
