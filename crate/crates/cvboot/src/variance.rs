//! Variance-component estimation for bootstrapped cross-validation.
//!
//! The grid of performance values is modeled as
//! `value[b][k] = center + row_effect[b] + noise[b][k]`, a one-way random
//! effects layout. The between-row variance is the bootstrap variance of
//! the CV estimator; the within-row variance is Monte-Carlo noise from the
//! finite number of splits per bootstrap. A closed-form moment estimator
//! separates the two, so a handful of splits per bootstrap suffices.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Rows that lose more than this share of cells to degenerate folds are
/// dropped whole before estimation.
pub const MAX_MISSING_ROW_FRACTION: f64 = 0.2;

/// The `n_boot x n_cv` grid of bootstrapped CV performance values. Cells
/// that could not be computed (fold degenerate after all redraws) hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfMatrix {
    values: Vec<f64>, // row-major: n_boot rows of n_cv splits
    n_boot: usize,
    n_cv: usize,
}

impl PerfMatrix {
    pub fn new(n_boot: usize, n_cv: usize) -> Result<Self> {
        if n_boot < 2 || n_cv < 2 {
            return Err(Error::InsufficientReplication { n_boot, n_cv });
        }
        Ok(PerfMatrix {
            values: vec![f64::NAN; n_boot * n_cv],
            n_boot,
            n_cv,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_boot = rows.len();
        let n_cv = rows.first().map_or(0, |r| r.len());
        let mut m = PerfMatrix::new(n_boot, n_cv)?;
        for (b, row) in rows.iter().enumerate() {
            if row.len() != n_cv {
                return Err(Error::DimensionMismatch("ragged rows".into()));
            }
            for (k, &v) in row.iter().enumerate() {
                m.set(b, k, v);
            }
        }
        Ok(m)
    }

    pub fn n_boot(&self) -> usize {
        self.n_boot
    }

    pub fn n_cv(&self) -> usize {
        self.n_cv
    }

    pub fn get(&self, b: usize, k: usize) -> f64 {
        self.values[b * self.n_cv + k]
    }

    pub fn set(&mut self, b: usize, k: usize, v: f64) {
        self.values[b * self.n_cv + k] = v;
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.values[b * self.n_cv..(b + 1) * self.n_cv]
    }

    pub fn missing_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Rows retained for estimation: a row survives if it keeps at least
    /// 80% of its cells (and at least two); surviving rows keep only their
    /// finite cells.
    pub fn effective_rows(&self) -> Vec<Vec<f64>> {
        let min_cells = ((self.n_cv as f64) * (1.0 - MAX_MISSING_ROW_FRACTION)).ceil() as usize;
        let min_cells = min_cells.max(2);
        (0..self.n_boot)
            .filter_map(|b| {
                let cells: Vec<f64> = self.row(b).iter().copied().filter(|v| v.is_finite()).collect();
                (cells.len() >= min_cells).then_some(cells)
            })
            .collect()
    }
}

/// The two variance components plus the effective-sample-size factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    /// Between-bootstrap variance (clamped at zero); its square root is the
    /// standard error of the CV estimate.
    pub between_var: f64,
    /// Raw moment estimate before clamping; may be negative when the split
    /// noise dominates.
    pub between_var_raw: f64,
    /// Within-bootstrap variance: Monte-Carlo noise of a single split.
    pub within_var: f64,
    /// `(n - 0.368 m_adj) / n`, applied multiplicatively to `between_var`.
    pub adj_factor: f64,
}

impl VarianceComponents {
    pub fn se(&self) -> f64 {
        self.between_var.sqrt()
    }

    pub fn se_adj(&self) -> f64 {
        (self.between_var * self.adj_factor).sqrt()
    }
}

/// Raw (unclamped) between-row variance and companion statistics for a set
/// of possibly ragged rows.
fn raw_components(rows: &[Vec<f64>]) -> Result<(f64, f64)> {
    let b_eff = rows.len();
    if b_eff < 2 || rows.iter().any(|r| r.len() < 2) {
        return Err(Error::InsufficientReplication {
            n_boot: b_eff,
            n_cv: rows.iter().map(|r| r.len()).min().unwrap_or(0),
        });
    }
    let row_means: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / b_eff as f64;
    let between = row_means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
        / (b_eff - 1) as f64;

    // split-noise correction: the mean over rows of (within SS)/(k(k-1)),
    // an unbiased estimate of the Monte-Carlo share of `between`
    let mut correction = 0.0;
    let mut within_ss = 0.0;
    let mut within_dof = 0usize;
    for (r, mean) in rows.iter().zip(&row_means) {
        let ss: f64 = r.iter().map(|v| (v - mean) * (v - mean)).sum();
        let k = r.len();
        correction += ss / (k * (k - 1)) as f64;
        within_ss += ss;
        within_dof += k - 1;
    }
    correction /= b_eff as f64;
    let within = within_ss / within_dof as f64;
    Ok((between - correction, within))
}

/// Moment estimator of the variance components. `adj_factor` is carried
/// through untouched; missing cells must already have been handled via
/// [`PerfMatrix::effective_rows`] semantics (this function applies them).
pub fn estimate_components(matrix: &PerfMatrix, adj_factor: f64) -> Result<VarianceComponents> {
    let rows = matrix.effective_rows();
    let (raw, within) = raw_components(&rows)?;
    Ok(VarianceComponents {
        between_var: raw.max(0.0),
        between_var_raw: raw,
        within_var: within,
        adj_factor,
    })
}

/// Sampling variance of the between-bootstrap variance estimator:
/// `2 (s2 + t2/K)^2 / (B-1) + 2 (t2/K)^2 / (B (K-1))`.
pub fn variance_of_variance(vc: &VarianceComponents, n_boot: usize, n_cv: usize) -> f64 {
    let b = n_boot as f64;
    let k = n_cv as f64;
    let a = vc.between_var + vc.within_var / k;
    let c = vc.within_var / k;
    2.0 * a * a / (b - 1.0) + 2.0 * c * c / (b * (k - 1.0))
}

/// Split a fit budget into `(n_boot, n_cv)` minimizing the sampling
/// variance of the variance estimator over integer pairs with
/// `n_boot * n_cv <= total_fits` and both at least 2.
///
/// The continuous optimum puts `n_cv` near `within_var / between_var` and
/// spends the rest on bootstraps; the returned pair is the exact integer
/// minimizer (for a given `n_cv` the best `n_boot` is `total_fits / n_cv`,
/// so a scan over `n_cv` suffices).
pub fn optimal_allocation(
    vc: &VarianceComponents,
    total_fits: usize,
) -> Result<(usize, usize)> {
    if vc.between_var <= 0.0 {
        return Err(Error::ZeroBetweenVariance);
    }
    if total_fits < 4 {
        return Err(Error::InvalidConfig(
            "need a budget of at least 4 fits".into(),
        ));
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for n_cv in 2..=(total_fits / 2) {
        let n_boot = total_fits / n_cv;
        if n_boot < 2 {
            break;
        }
        let v = variance_of_variance(vc, n_boot, n_cv);
        let better = match best {
            None => true,
            Some((_, bv)) => v < bv,
        };
        if better {
            best = Some(((n_boot, n_cv), v));
        }
    }
    Ok(best.expect("budget >= 4 admits (2,2)").0)
}

/// Two-sided normal quantile `z_{1 - alpha/2}`.
pub fn normal_quantile(alpha: f64) -> f64 {
    let std_normal = Normal::standard();
    std_normal.inverse_cdf(1.0 - alpha / 2.0)
}

/// `point +- z_{1-alpha/2} * se`.
pub fn normal_ci(point: f64, se: f64, alpha: f64) -> (f64, f64) {
    let z = normal_quantile(alpha);
    (point - z * se, point + z * se)
}

/// Output of the calibration bootstrap: an empirical critical value that
/// replaces the normal quantile when the fit budget is small.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Critical value `c` such that `point +- c * se` has the nominal
    /// coverage under the resampling distribution.
    pub crit: f64,
    /// The simulated standardized ratios whose |quantile| defines `crit`.
    pub z_sample: Vec<f64>,
    /// Number of accepted replicates.
    pub n_reps: usize,
    /// Replicates rejected after exhausting redraws (nonpositive variance).
    pub n_rejected: usize,
}

/// Calibration bootstrap: rows of the grid are resampled whole (so the
/// within-row structure is preserved), the variance estimator is recomputed
/// on each resample, and the spread of `sigma / sigma*` ratios widens the
/// normal critical value. The empirical quantile uses the ceiling-index
/// order statistic so results are reproducible bit for bit under a fixed
/// seed.
pub fn calibrate<R: Rng>(
    matrix: &PerfMatrix,
    alpha: f64,
    l_reps: usize,
    rng: &mut R,
) -> Result<CalibrationResult> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
    }
    if l_reps == 0 {
        return Err(Error::InvalidConfig("need at least one replicate".into()));
    }
    let rows = matrix.effective_rows();
    let (raw, _) = raw_components(&rows)?;
    let b_eff = rows.len();
    // resampling indistinguishable rows reproduces the original estimate
    // exactly; there is no Monte-Carlo error to widen, so the ratio is one
    // and the critical value collapses to the normal quantile
    let all_identical = rows.windows(2).all(|w| w[0] == w[1]);

    let mut z_sample = Vec::with_capacity(l_reps);
    let mut rejected = 0usize;
    let mut resample: Vec<Vec<f64>> = Vec::with_capacity(b_eff);
    for _ in 0..l_reps {
        let mut ratio = if all_identical { Some(1.0) } else { None };
        if ratio.is_none() && raw > 0.0 {
            for _attempt in 0..100 {
                resample.clear();
                for _ in 0..b_eff {
                    resample.push(rows[rng.random_range(0..b_eff)].clone());
                }
                let (raw_star, _) = raw_components(&resample)?;
                if raw_star > 0.0 {
                    ratio = Some((raw / raw_star).sqrt());
                    break;
                }
            }
        }
        match ratio {
            Some(r) => {
                let z: f64 = rng.sample(StandardNormal);
                z_sample.push(z * r);
            }
            None => rejected += 1,
        }
    }
    if rejected * 2 > l_reps {
        return Err(Error::CalibrationDegenerate {
            rejected,
            total: l_reps,
        });
    }
    let mut abs: Vec<f64> = z_sample.iter().map(|z| z.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (((1.0 - alpha) * abs.len() as f64).ceil() as usize).clamp(1, abs.len());
    let crit = abs[rank - 1];
    Ok(CalibrationResult {
        crit,
        n_reps: z_sample.len(),
        n_rejected: rejected,
        z_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::rng_for;
    use rand::Rng;

    fn matrix(rows: &[&[f64]]) -> PerfMatrix {
        PerfMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn constant_grid_has_zero_components() {
        let m = matrix(&[&[3.0, 3.0], &[3.0, 3.0]]);
        let vc = estimate_components(&m, 1.0).unwrap();
        assert_eq!(vc.between_var, 0.0);
        assert_eq!(vc.within_var, 0.0);
    }

    #[test]
    fn hand_worked_two_by_two() {
        // rows (0,2) and (1,3): row means 1 and 2, between-variance 0.5,
        // within SS 4, so within 4/(2*1)=2, raw 0.5 - 4/(2*1*2) = -0.5
        let m = matrix(&[&[0.0, 2.0], &[1.0, 3.0]]);
        let vc = estimate_components(&m, 1.0).unwrap();
        assert!((vc.within_var - 2.0).abs() < 1e-12);
        assert!((vc.between_var_raw + 0.5).abs() < 1e-12);
        assert_eq!(vc.between_var, 0.0);
    }

    #[test]
    fn moment_estimator_recovers_synthetic_components() {
        // value = mu + row_effect + noise with known variances (1, 4)
        let (n_boot, n_cv) = (2000usize, 10usize);
        let mut rng = rng_for(11, &[0]);
        let mut rows = Vec::with_capacity(n_boot);
        for _ in 0..n_boot {
            let re: f64 = rng.sample::<f64, _>(StandardNormal);
            let row: Vec<f64> = (0..n_cv)
                .map(|_| 5.0 + re + 2.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push(row);
        }
        let m = PerfMatrix::from_rows(rows).unwrap();
        let vc = estimate_components(&m, 1.0).unwrap();
        assert!((vc.between_var - 1.0).abs() < 0.15, "{}", vc.between_var);
        assert!((vc.within_var - 4.0).abs() < 0.15, "{}", vc.within_var);
    }

    #[test]
    fn between_plus_split_share_equals_row_mean_variance() {
        // algebraic identity: raw + correction = sample variance of row means
        let mut rng = rng_for(12, &[0]);
        for _ in 0..200 {
            let n_boot = rng.random_range(2..12);
            let n_cv = rng.random_range(2..9);
            let rows: Vec<Vec<f64>> = (0..n_boot)
                .map(|_| (0..n_cv).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let m = PerfMatrix::from_rows(rows.clone()).unwrap();
            let vc = estimate_components(&m, 1.0).unwrap();
            let means: Vec<f64> = rows
                .iter()
                .map(|r| r.iter().sum::<f64>() / n_cv as f64)
                .collect();
            let grand = means.iter().sum::<f64>() / n_boot as f64;
            let var_means = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>()
                / (n_boot - 1) as f64;
            let direct = vc.between_var_raw + vc.within_var / n_cv as f64;
            assert!(
                (direct - var_means).abs() < 1e-10 * (1.0 + var_means.abs()),
                "{direct} vs {var_means}"
            );
        }
    }

    #[test]
    fn shift_invariant_and_scale_quadratic() {
        let mut rng = rng_for(13, &[0]);
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let base = estimate_components(&PerfMatrix::from_rows(rows.clone()).unwrap(), 1.0).unwrap();
        let shifted: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| v + 11.5).collect())
            .collect();
        let sh = estimate_components(&PerfMatrix::from_rows(shifted).unwrap(), 1.0).unwrap();
        assert!((sh.between_var_raw - base.between_var_raw).abs() < 1e-10);
        assert!((sh.within_var - base.within_var).abs() < 1e-10);
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| 3.0 * v).collect())
            .collect();
        let sc = estimate_components(&PerfMatrix::from_rows(scaled).unwrap(), 1.0).unwrap();
        assert!((sc.between_var_raw - 9.0 * base.between_var_raw).abs() < 1e-9);
        assert!((sc.within_var - 9.0 * base.within_var).abs() < 1e-9);
    }

    #[test]
    fn missing_cell_policy() {
        let mut m = PerfMatrix::new(3, 10).unwrap();
        for b in 0..3 {
            for k in 0..10 {
                m.set(b, k, (b * 10 + k) as f64);
            }
        }
        // row 0 loses 3 of 10 cells (>20%): dropped whole
        m.set(0, 0, f64::NAN);
        m.set(0, 1, f64::NAN);
        m.set(0, 2, f64::NAN);
        // row 1 loses 1 cell (<=20%): kept with 9 cells
        m.set(1, 4, f64::NAN);
        let rows = m.effective_rows();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].len(), 9);
        assert_eq!(rows[1].len(), 10);
        assert!(estimate_components(&m, 1.0).is_ok());
    }

    #[test]
    fn variance_of_variance_examples() {
        let vc = VarianceComponents {
            between_var: 1.0,
            between_var_raw: 1.0,
            within_var: 20.0,
            adj_factor: 1.0,
        };
        let v = variance_of_variance(&vc, 400, 20);
        let want = 2.0 * 4.0 / 399.0 + 2.0 / (400.0 * 19.0);
        assert!((v - want).abs() < 1e-12);
        assert!((v - 0.020313).abs() < 1e-5);

        let pure = VarianceComponents {
            between_var: 1.7,
            between_var_raw: 1.7,
            within_var: 0.0,
            adj_factor: 1.0,
        };
        assert!((variance_of_variance(&pure, 50, 5) - 2.0 * 1.7f64.powi(2) / 49.0).abs() < 1e-12);

        // strictly decreasing in the number of bootstraps
        let mut prev = f64::INFINITY;
        for n_boot in [10usize, 50, 100, 400, 1000] {
            let v = variance_of_variance(&vc, n_boot, 20);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn allocation_examples() {
        let vc = |s2: f64, t2: f64| VarianceComponents {
            between_var: s2,
            between_var_raw: s2,
            within_var: t2,
            adj_factor: 1.0,
        };
        // split-to-bootstrap variance ratio 20 with an 8000-fit budget
        assert_eq!(optimal_allocation(&vc(1.0, 20.0), 8000).unwrap(), (400, 20));
        // ratio 1 pins the splits at the minimum replication
        assert_eq!(optimal_allocation(&vc(1.0, 1.0), 100).unwrap(), (50, 2));
        // clamped-to-zero between variance leaves the allocation undefined
        assert!(matches!(
            optimal_allocation(&vc(0.0, 1.0), 100),
            Err(Error::ZeroBetweenVariance)
        ));
    }

    #[test]
    fn allocation_matches_full_grid_oracle() {
        // dumb oracle: scan every feasible (n_boot, n_cv) pair
        fn oracle(vc: &VarianceComponents, total: usize) -> (usize, usize) {
            let mut best = ((0, 0), f64::INFINITY);
            for n_boot in 2..=total / 2 {
                for n_cv in 2..=total / n_boot {
                    if n_boot * n_cv > total {
                        break;
                    }
                    let v = variance_of_variance(vc, n_boot, n_cv);
                    if v < best.1 {
                        best = ((n_boot, n_cv), v);
                    }
                }
            }
            best.0
        }
        for s2 in [0.5, 1.0, 2.0] {
            for t2 in [0.5, 1.0, 2.5, 5.0, 10.0, 20.0, 37.0] {
                for total in [20usize, 50, 100, 221, 500, 1000, 2000] {
                    let vc = VarianceComponents {
                        between_var: s2,
                        between_var_raw: s2,
                        within_var: t2,
                        adj_factor: 1.0,
                    };
                    let got = optimal_allocation(&vc, total).unwrap();
                    let want = oracle(&vc, total);
                    let v_got = variance_of_variance(&vc, got.0, got.1);
                    let v_want = variance_of_variance(&vc, want.0, want.1);
                    assert!(
                        (v_got - v_want).abs() < 1e-15,
                        "s2={s2} t2={t2} total={total}: {got:?} vs {want:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn normal_ci_examples() {
        let (lo, hi) = normal_ci(0.859, 0.037, 0.05);
        assert!((lo - 0.7865).abs() < 5e-4, "{lo}");
        assert!((hi - 0.9315).abs() < 5e-4, "{hi}");
        assert_eq!(normal_ci(1.23, 0.0, 0.05), (1.23, 1.23));
        let z = normal_quantile(0.05);
        assert!((z - 1.96).abs() < 5e-4);
    }

    #[test]
    fn calibration_identical_rows_recovers_normal_quantile() {
        let row: Vec<f64> = (0..25).map(|k| (k as f64 * 0.37).sin()).collect();
        let rows: Vec<Vec<f64>> = (0..20).map(|_| row.clone()).collect();
        let m = PerfMatrix::from_rows(rows).unwrap();
        let mut rng = rng_for(21, &[0]);
        let cal = calibrate(&m, 0.05, 100_000, &mut rng).unwrap();
        assert_eq!(cal.n_rejected, 0);
        assert!((cal.crit - 1.96).abs() < 0.05, "{}", cal.crit);
        // quantile property: |z| below crit with frequency 1 - alpha (+- 1/L)
        let below = cal
            .z_sample
            .iter()
            .filter(|z| z.abs() < cal.crit)
            .count() as f64
            / cal.n_reps as f64;
        assert!((below - 0.95).abs() <= 1.0 / cal.n_reps as f64 + 1e-9);
    }

    #[test]
    fn calibration_widens_under_row_noise() {
        // genuine row effects: crit should exceed the normal quantile
        let mut rng = rng_for(22, &[0]);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let re: f64 = rng.sample::<f64, _>(StandardNormal);
                (0..25)
                    .map(|_| re + 0.8 * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let m = PerfMatrix::from_rows(rows).unwrap();
        let cal = calibrate(&m, 0.05, 20_000, &mut rng).unwrap();
        assert!(cal.crit > 1.96 - 0.05, "{}", cal.crit);
    }

    #[test]
    fn calibration_rejects_unusable_grid() {
        // between-variance negative and rows distinct: nothing to calibrate
        let m = matrix(&[&[0.0, 2.0], &[1.0, 3.0], &[0.5, 2.5], &[1.5, 3.5]]);
        let mut rng = rng_for(23, &[0]);
        let err = calibrate(&m, 0.05, 200, &mut rng).unwrap_err();
        assert!(matches!(err, Error::CalibrationDegenerate { .. }));
    }
}
