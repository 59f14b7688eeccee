use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Construction and maintenance parameters of a TRS-Tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrsParams {
    /// Children per internal node.
    pub node_fanout: usize,
    /// Maximum depth; the root sits at depth 1.
    pub max_height: usize,
    /// Largest tolerated `|outliers| / covered` before a leaf splits.
    pub outlier_ratio: f64,
    /// Expected number of host values inside the band for a point query.
    pub error_bound: f64,
    /// Estimate rejection from a random sample before the full fit.
    pub sample_precheck: bool,
    pub sample_fraction: f64,
    /// Deleted/covered ratio that schedules a merge check on the parent.
    pub delete_ratio: f64,
    /// Refits on the `1 - outlier_ratio` best-fitting pairs this many times.
    pub trim_steps: usize,
    pub seed: u64,
}

impl Default for TrsParams {
    fn default() -> Self {
        TrsParams {
            node_fanout: 8,
            max_height: 10,
            outlier_ratio: 0.1,
            error_bound: 2.0,
            sample_precheck: false,
            sample_fraction: 0.05,
            delete_ratio: 0.25,
            trim_steps: 2,
            seed: 0,
        }
    }
}

impl TrsParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParam(msg.to_string()));
        if self.node_fanout < 2 {
            return bad("node_fanout must be >= 2");
        }
        if self.node_fanout > u32::MAX as usize {
            return bad("node_fanout too large");
        }
        if self.max_height < 1 {
            return bad("max_height must be >= 1");
        }
        if !(self.outlier_ratio > 0.0 && self.outlier_ratio < 1.0) {
            return bad("outlier_ratio must lie in (0, 1)");
        }
        if !(self.error_bound >= 0.0 && self.error_bound.is_finite()) {
            return bad("error_bound must be a non-negative finite number");
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return bad("sample_fraction must lie in (0, 1]");
        }
        if !(self.delete_ratio > 0.0 && self.delete_ratio < 1.0) {
            return bad("delete_ratio must lie in (0, 1)");
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let err = || Error::InvalidParam(format!("bad value `{value}` for `{key}`"));
        match key {
            "node_fanout" | "fanout" => self.node_fanout = value.parse().map_err(|_| err())?,
            "max_height" => self.max_height = value.parse().map_err(|_| err())?,
            "outlier_ratio" => self.outlier_ratio = value.parse().map_err(|_| err())?,
            "error_bound" => self.error_bound = value.parse().map_err(|_| err())?,
            "sample_precheck" => self.sample_precheck = value.parse().map_err(|_| err())?,
            "sample_fraction" => self.sample_fraction = value.parse().map_err(|_| err())?,
            "delete_ratio" => self.delete_ratio = value.parse().map_err(|_| err())?,
            "trim_steps" => self.trim_steps = value.parse().map_err(|_| err())?,
            "seed" => self.seed = value.parse().map_err(|_| err())?,
            _ => return Err(Error::InvalidParam(format!("unknown parameter `{key}`"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let p = TrsParams::default();
        assert_eq!(
            (p.node_fanout, p.max_height, p.outlier_ratio, p.error_bound),
            (8, 10, 0.1, 2.0)
        );
        assert_eq!(p.sample_fraction, 0.05);
        assert_eq!(p.delete_ratio, 0.25);
        p.validate().unwrap();
    }

    #[test]
    fn overrides_and_validation() {
        let mut p = TrsParams::default();
        p.set("node_fanout", "4").unwrap();
        p.set("error_bound", "10").unwrap();
        assert_eq!(p.node_fanout, 4);
        assert_eq!(p.error_bound, 10.0);
        assert!(p.set("bogus", "1").is_err());
        assert!(p.set("max_height", "x").is_err());
        p.node_fanout = 1;
        assert!(p.validate().is_err());
        let p = TrsParams { outlier_ratio: 1.0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = TrsParams { max_height: 0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
