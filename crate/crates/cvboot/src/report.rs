//! Inference reports: the point estimate with its uncertainty and the fit
//! budget that produced it.

use serde::{Deserialize, Serialize};

use crate::variance::VarianceComponents;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A calibrated interval carries the critical value that replaced the
/// normal quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedInterval {
    pub lo: f64,
    pub hi: f64,
    pub crit: f64,
}

/// Accounting of model-training calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitBudget {
    /// Fits spent on the point estimate.
    pub point: u64,
    /// Fits spent on the bootstrap grid, redraws included.
    pub bootstrap: u64,
    /// Extra fits caused by redrawing degenerate folds.
    pub redrawn: u64,
    /// Grid cells left empty after exhausting redraws.
    pub cells_missing: u64,
}

impl FitBudget {
    pub fn total(&self) -> u64 {
        self.point + self.bootstrap
    }
}

/// Point estimate, standard errors and confidence intervals for the
/// expected performance of the training procedure at the given training
/// size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    /// The cross-validation estimate, computed at `train_size` with unit
    /// weights.
    pub point: f64,
    /// Bootstrap standard error (square root of the between-bootstrap
    /// variance).
    pub se: f64,
    /// Standard error after the effective-sample-size adjustment; never
    /// exceeds `se`.
    pub se_adj: f64,
    pub ci_normal: Interval,
    pub ci_adj: Interval,
    /// Present when calibration ran; uses `se_adj` with the calibrated
    /// critical value.
    pub ci_calibrated: Option<CalibratedInterval>,
    pub alpha: f64,
    pub train_size: usize,
    /// Enlarged training size used inside the bootstrap loop.
    pub train_size_adj: usize,
    pub components: VarianceComponents,
    pub n_boot: usize,
    pub n_cv: usize,
    pub fits: FitBudget,
    pub fits_used: u64,
}

impl InferenceReport {
    /// Every interval must straddle the point estimate.
    pub fn check_invariants(&self) {
        assert!(self.ci_normal.contains(self.point));
        assert!(self.ci_adj.contains(self.point));
        if let Some(c) = &self.ci_calibrated {
            assert!(c.lo <= self.point && self.point <= c.hi);
        }
        assert!(self.se_adj <= self.se + 1e-15);
        assert_eq!(self.fits_used, self.fits.total());
    }
}
