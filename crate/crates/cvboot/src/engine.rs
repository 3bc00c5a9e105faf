//! Orchestration: point-estimate cross-validation, the weighted fast
//! bootstrap, the naive bootstrap kept as a validation oracle, budget
//! piloting, paired model comparison and K-fold pre-validated ROC curves.
//!
//! Every operation is a pure function of `(data, config, master seed)`.
//! The `(b, k)` grid is the unit of parallel work; each cell derives its
//! own random stream, so results are independent of scheduling order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learners::Learner;
use crate::metrics::{default_roc_grid, roc_from_scores, Evaluator, RocCurve};
use crate::report::{CalibratedInterval, FitBudget, InferenceReport, Interval};
use crate::resample::{
    adjustment_factor, draw_boot_weights, draw_split, solve_m_adj, weighted_fold, BootWeights,
    SplitConfig, DEFAULT_SIZE_PENALTY,
};
use crate::streams::rng_for;
use crate::variance::{
    calibrate, estimate_components, normal_ci, optimal_allocation, PerfMatrix,
};

const TAG_POINT: u64 = 1;
const TAG_WEIGHTS: u64 = 2;
const TAG_SPLIT: u64 = 3;
const TAG_CAL: u64 = 4;
const TAG_NAIVE_DATA: u64 = 5;
const TAG_NAIVE_SPLIT: u64 = 6;
const TAG_KFOLD: u64 = 7;
const TAG_KFOLD_BOOT: u64 = 8;

/// Configuration of one inference run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Training size for the point estimate.
    pub train_size: usize,
    /// Independent splits averaged into the point estimate.
    pub n_cv_point: usize,
    /// Bootstrap draws.
    pub n_boot: usize,
    /// Splits per bootstrap draw.
    pub n_cv: usize,
    /// Nominal error rate of the confidence intervals.
    pub alpha: f64,
    /// Master seed; everything derives from it.
    pub seed: u64,
    /// Run the calibration bootstrap (worthwhile for small budgets).
    pub calibrate: bool,
    /// Calibration replicates.
    pub l_reps: usize,
    /// Weight on the testing-size term when enlarging the bootstrap
    /// training size.
    pub size_penalty: f64,
    /// Stratify splits on a binary outcome.
    pub stratify: bool,
    /// Redraw budget for degenerate folds.
    pub max_redraws: u32,
    /// K for pre-validated ROC runs.
    pub kfold_k: Option<usize>,
    /// K used under bootstrap weights (a slightly larger K compensates for
    /// the reduced number of distinct training rows).
    pub kfold_k_adj: Option<usize>,
}

impl RunConfig {
    pub fn new(train_size: usize) -> Self {
        RunConfig {
            train_size,
            n_cv_point: 400,
            n_boot: 400,
            n_cv: 20,
            alpha: 0.05,
            seed: 0,
            calibrate: false,
            l_reps: 1000,
            size_penalty: DEFAULT_SIZE_PENALTY,
            stratify: false,
            max_redraws: 100,
            kfold_k: None,
            kfold_k_adj: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_budget(mut self, n_boot: usize, n_cv: usize) -> Self {
        self.n_boot = n_boot;
        self.n_cv = n_cv;
        self
    }

    pub fn with_point_splits(mut self, n_cv_point: usize) -> Self {
        self.n_cv_point = n_cv_point;
        self
    }

    pub fn with_calibration(mut self, l_reps: usize) -> Self {
        self.calibrate = true;
        self.l_reps = l_reps;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.train_size == 0 || self.train_size >= n {
            return Err(Error::InvalidConfig(format!(
                "train size {} must lie in [1, {}]",
                self.train_size,
                n - 1
            )));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
        }
        if let Some(k) = self.kfold_k {
            if k < 2 || k > n {
                return Err(Error::InvalidConfig(format!(
                    "kfold k {k} must lie in [2, {n}]"
                )));
            }
        }
        Ok(())
    }
}

/// Per-cell evaluation record.
struct CellOutcome {
    /// One value per learner; empty when the cell stayed degenerate.
    values: Vec<f64>,
    fits: u64,
    redraws: u64,
}

/// Fit and evaluate every learner on one weighted fold, redrawing the
/// split while the fold stays degenerate.
#[allow(clippy::too_many_arguments)]
fn eval_cell(
    data: &Dataset,
    learners: &[&dyn Learner],
    evaluator: &dyn Evaluator,
    weights: &BootWeights,
    train_size: usize,
    stratify: bool,
    labels: Option<&[bool]>,
    max_redraws: u32,
    seed: u64,
    tags: &[u64],
) -> Result<CellOutcome> {
    let mut split_cfg = SplitConfig::new(train_size);
    split_cfg.stratify_on_outcome = stratify;
    let mut fits = 0u64;
    let mut path: Vec<u64> = tags.to_vec();
    path.push(0);
    for attempt in 0..=max_redraws as u64 {
        *path.last_mut().unwrap() = attempt;
        let mut rng = rng_for(seed, &path);
        let split = draw_split(data.n(), &split_cfg, labels, &mut rng)?;
        let (train, test) = match weighted_fold(data, &split, weights) {
            Ok(f) => f,
            Err(e) if e.is_fold_local() => continue,
            Err(e) => return Err(e),
        };
        let mut values = Vec::with_capacity(learners.len());
        let mut degenerate = false;
        for learner in learners {
            fits += 1;
            let model = match learner.fit(&train) {
                Ok(m) => m,
                Err(e) if e.is_fold_local() => {
                    degenerate = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            match evaluator.evaluate(&test, model.as_ref()) {
                Ok(v) => values.push(v),
                Err(e) if e.is_fold_local() => {
                    degenerate = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if !degenerate {
            return Ok(CellOutcome {
                values,
                fits,
                redraws: attempt,
            });
        }
    }
    Ok(CellOutcome {
        values: Vec::new(),
        fits,
        redraws: max_redraws as u64,
    })
}

/// Point estimate: per-split evaluations at `train_size` with unit weights.
fn point_values(
    data: &Dataset,
    learners: &[&dyn Learner],
    evaluator: &dyn Evaluator,
    cfg: &RunConfig,
    tag: u64,
) -> Result<(Vec<Vec<f64>>, FitBudget)> {
    let labels = if cfg.stratify { data.binary_labels() } else { None };
    let unit = BootWeights::unit(data.n());
    let cells: Vec<Result<CellOutcome>> = (0..cfg.n_cv_point)
        .into_par_iter()
        .map(|k| {
            eval_cell(
                data,
                learners,
                evaluator,
                &unit,
                cfg.train_size,
                cfg.stratify,
                labels.as_deref(),
                cfg.max_redraws,
                cfg.seed,
                &[tag, k as u64],
            )
        })
        .collect();
    let mut budget = FitBudget::default();
    let mut values = Vec::with_capacity(cfg.n_cv_point);
    for cell in cells {
        let cell = cell?;
        budget.point += cell.fits;
        budget.redrawn += cell.fits.saturating_sub(learners.len() as u64);
        if cell.values.is_empty() {
            budget.cells_missing += 1;
        } else {
            values.push(cell.values);
        }
    }
    if values.is_empty() {
        return Err(Error::DegenerateFold(
            "every point-estimate split came out degenerate",
        ));
    }
    Ok((values, budget))
}

/// Average of the evaluator over repeated random splits at the configured
/// training size (unit weights).
pub fn cross_validate(
    data: &Dataset,
    learner: &dyn Learner,
    evaluator: &dyn Evaluator,
    cfg: &RunConfig,
) -> Result<f64> {
    cfg.validate(data.n())?;
    let (values, _) = point_values(data, &[learner], evaluator, cfg, TAG_POINT)?;
    Ok(values.iter().map(|v| v[0]).sum::<f64>() / values.len() as f64)
}

/// The bootstrapped grid of performance values for one or more learners
/// sharing weights and splits.
fn theta_grid(
    data: &Dataset,
    learners: &[&dyn Learner],
    evaluator: &dyn Evaluator,
    cfg: &RunConfig,
    train_size: usize,
) -> Result<(Vec<PerfMatrix>, FitBudget)> {
    if cfg.n_boot < 2 || cfg.n_cv < 2 {
        return Err(Error::InsufficientReplication {
            n_boot: cfg.n_boot,
            n_cv: cfg.n_cv,
        });
    }
    let labels = if cfg.stratify { data.binary_labels() } else { None };
    let rows: Vec<Result<(Vec<Vec<f64>>, u64, u64, u64)>> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut wrng = rng_for(cfg.seed, &[TAG_WEIGHTS, b as u64]);
            let weights = draw_boot_weights(data.n(), &mut wrng);
            let mut row: Vec<Vec<f64>> = vec![Vec::new(); learners.len()];
            let mut fits = 0u64;
            let mut redrawn = 0u64;
            let mut missing = 0u64;
            for k in 0..cfg.n_cv {
                let cell = eval_cell(
                    data,
                    learners,
                    evaluator,
                    &weights,
                    train_size,
                    cfg.stratify,
                    labels.as_deref(),
                    cfg.max_redraws,
                    cfg.seed,
                    &[TAG_SPLIT, b as u64, k as u64],
                )?;
                fits += cell.fits;
                if cell.values.is_empty() {
                    missing += 1;
                    redrawn += cell.fits;
                    for lane in row.iter_mut() {
                        lane.push(f64::NAN);
                    }
                } else {
                    redrawn += cell.fits - learners.len() as u64;
                    for (lane, v) in row.iter_mut().zip(&cell.values) {
                        lane.push(*v);
                    }
                }
            }
            Ok((row, fits, redrawn, missing))
        })
        .collect();

    let mut budget = FitBudget::default();
    let mut matrices: Vec<PerfMatrix> = (0..learners.len())
        .map(|_| PerfMatrix::new(cfg.n_boot, cfg.n_cv))
        .collect::<Result<_>>()?;
    for (b, row) in rows.into_iter().enumerate() {
        let (lanes, fits, redrawn, missing) = row?;
        budget.bootstrap += fits;
        budget.redrawn += redrawn;
        budget.cells_missing += missing;
        for (m, lane) in matrices.iter_mut().zip(&lanes) {
            for (k, &v) in lane.iter().enumerate() {
                m.set(b, k, v);
            }
        }
    }
    Ok((matrices, budget))
}

fn build_report(
    point: f64,
    matrix: &PerfMatrix,
    cfg: &RunConfig,
    n: usize,
    m_adj: usize,
    budget: FitBudget,
) -> Result<InferenceReport> {
    let components = estimate_components(matrix, adjustment_factor(n, m_adj))?;
    let se = components.se();
    let se_adj = components.se_adj();
    let (lo, hi) = normal_ci(point, se, cfg.alpha);
    let (alo, ahi) = normal_ci(point, se_adj, cfg.alpha);
    let ci_calibrated = if cfg.calibrate {
        let mut rng = rng_for(cfg.seed, &[TAG_CAL]);
        let cal = calibrate(matrix, cfg.alpha, cfg.l_reps, &mut rng)?;
        Some(CalibratedInterval {
            lo: point - cal.crit * se_adj,
            hi: point + cal.crit * se_adj,
            crit: cal.crit,
        })
    } else {
        None
    };
    let report = InferenceReport {
        point,
        se,
        se_adj,
        ci_normal: Interval { lo, hi },
        ci_adj: Interval { lo: alo, hi: ahi },
        ci_calibrated,
        alpha: cfg.alpha,
        train_size: cfg.train_size,
        train_size_adj: m_adj,
        components,
        n_boot: cfg.n_boot,
        n_cv: cfg.n_cv,
        fits_used: budget.total(),
        fits: budget,
    };
    report.check_invariants();
    Ok(report)
}

/// The fast bootstrap: a weighted, disjoint-fold bootstrap of the CV
/// estimate with the variance extracted from a random-effects
/// decomposition of the `(bootstrap, split)` grid.
///
/// The point estimate is computed separately at `train_size` with unit
/// weights; the grid runs at the enlarged training size.
pub fn fast_bootstrap(
    data: &Dataset,
    learner: &dyn Learner,
    evaluator: &dyn Evaluator,
    cfg: &RunConfig,
) -> Result<(PerfMatrix, InferenceReport)> {
    cfg.validate(data.n())?;
    let (pv, mut budget) = point_values(data, &[learner], evaluator, cfg, TAG_POINT)?;
    let point = pv.iter().map(|v| v[0]).sum::<f64>() / pv.len() as f64;
    let m_adj = solve_m_adj(data.n(), cfg.train_size, cfg.size_penalty)?;
    let (matrices, grid_budget) = theta_grid(data, &[learner], evaluator, cfg, m_adj)?;
    budget.bootstrap = grid_budget.bootstrap;
    budget.redrawn += grid_budget.redrawn;
    budget.cells_missing += grid_budget.cells_missing;
    let matrix = matrices.into_iter().next().unwrap();
    let report = build_report(point, &matrix, cfg, data.n(), m_adj, budget)?;
    Ok((matrix, report))
}

/// Paired comparison: both learners see identical weights and splits, and
/// inference runs on the per-cell difference (first minus second).
pub fn compare_models(
    data: &Dataset,
    learner_a: &dyn Learner,
    learner_b: &dyn Learner,
    evaluator: &dyn Evaluator,
    cfg: &RunConfig,
) -> Result<(PerfMatrix, InferenceReport)> {
    cfg.validate(data.n())?;
    let pair: [&dyn Learner; 2] = [learner_a, learner_b];
    let (pv, mut budget) = point_values(data, &pair, evaluator, cfg, TAG_POINT)?;
    let point = pv.iter().map(|v| v[0] - v[1]).sum::<f64>() / pv.len() as f64;
    let m_adj = solve_m_adj(data.n(), cfg.train_size, cfg.size_penalty)?;
    let (matrices, grid_budget) = theta_grid(data, &pair, evaluator, cfg, m_adj)?;
    budget.bootstrap = grid_budget.bootstrap;
    budget.redrawn += grid_budget.redrawn;
    budget.cells_missing += grid_budget.cells_missing;
    let mut diff = PerfMatrix::new(cfg.n_boot, cfg.n_cv)?;
    for b in 0..cfg.n_boot {
        for k in 0..cfg.n_cv {
            diff.set(b, k, matrices[0].get(b, k) - matrices[1].get(b, k));
        }
    }
    let report = build_report(point, &diff, cfg, data.n(), m_adj, budget)?;
    Ok((diff, report))
}

/// Result of the naive resampling oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NaiveBootstrap {
    /// Mean of the per-bootstrap CV estimates; biased downward because
    /// duplicates leak across the train/test boundary.
    pub mean: f64,
    /// Empirical variance of the per-bootstrap CV estimates.
    pub variance: f64,
    pub estimates: Vec<f64>,
    pub fits: FitBudget,
}

/// Algorithm kept as a validation oracle and benchmark: resample rows into
/// a concrete dataset, cross-validate it at `train_size`, and take the
/// spread of the resulting estimates. Duplicated rows land on both sides
/// of the splits by construction; the bias that induces is the point.
pub fn naive_bootstrap(
    data: &Dataset,
    learner: &dyn Learner,
    evaluator: &dyn Evaluator,
    cfg: &RunConfig,
) -> Result<NaiveBootstrap> {
    cfg.validate(data.n())?;
    if cfg.n_boot < 2 || cfg.n_cv < 1 {
        return Err(Error::InsufficientReplication {
            n_boot: cfg.n_boot,
            n_cv: cfg.n_cv,
        });
    }
    let n = data.n();
    let outcomes: Vec<Result<(f64, u64, u64)>> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(cfg.seed, &[TAG_NAIVE_DATA, b as u64]);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resampled = data.select_rows(&rows);
            let labels = if cfg.stratify {
                resampled.binary_labels()
            } else {
                None
            };
            let unit = BootWeights::unit(n);
            let mut vals = Vec::with_capacity(cfg.n_cv);
            let mut fits = 0u64;
            let mut redraws = 0u64;
            for k in 0..cfg.n_cv {
                let cell = eval_cell(
                    &resampled,
                    &[learner],
                    evaluator,
                    &unit,
                    cfg.train_size,
                    cfg.stratify,
                    labels.as_deref(),
                    cfg.max_redraws,
                    cfg.seed,
                    &[TAG_NAIVE_SPLIT, b as u64, k as u64],
                )?;
                fits += cell.fits;
                redraws += cell.redraws;
                if let Some(v) = cell.values.first() {
                    vals.push(*v);
                }
            }
            if vals.is_empty() {
                return Err(Error::DegenerateFold(
                    "a naive bootstrap replicate lost every split",
                ));
            }
            Ok((vals.iter().sum::<f64>() / vals.len() as f64, fits, redraws))
        })
        .collect();
    let mut estimates = Vec::with_capacity(cfg.n_boot);
    let mut fits = FitBudget::default();
    for o in outcomes {
        let (est, f, r) = o?;
        estimates.push(est);
        fits.bootstrap += f;
        fits.redrawn += r;
    }
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let variance = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
        / (estimates.len() - 1) as f64;
    Ok(NaiveBootstrap {
        mean,
        variance,
        estimates,
        fits,
    })
}

/// Run a small pilot grid, estimate the variance components, and return a
/// configuration whose `(n_boot, n_cv)` splits `total_fits` optimally.
pub fn pilot_allocate(
    data: &Dataset,
    learner: &dyn Learner,
    evaluator: &dyn Evaluator,
    pilot_cfg: &RunConfig,
    total_fits: usize,
) -> Result<RunConfig> {
    pilot_cfg.validate(data.n())?;
    if pilot_cfg.n_boot * pilot_cfg.n_cv > total_fits / 10 {
        return Err(Error::InvalidConfig(format!(
            "pilot budget {} exceeds a tenth of the total budget {total_fits}",
            pilot_cfg.n_boot * pilot_cfg.n_cv
        )));
    }
    let m_adj = solve_m_adj(data.n(), pilot_cfg.train_size, pilot_cfg.size_penalty)?;
    let (matrices, _) = theta_grid(data, &[learner], evaluator, pilot_cfg, m_adj)?;
    let components = estimate_components(&matrices[0], adjustment_factor(data.n(), m_adj))?;
    let (n_boot, n_cv) = optimal_allocation(&components, total_fits)?;
    let mut cfg = pilot_cfg.clone();
    cfg.n_boot = n_boot;
    cfg.n_cv = n_cv;
    Ok(cfg)
}

/// A partition of `0..n` into `k` near-equal folds.
fn kfold_partition<R: rand::Rng>(n: usize, k: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, &i) in idx.iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds
}

/// Score every row with the model trained on the complementary folds.
/// Returns `None` when a training fold is degenerate for this partition.
fn prevalidated_scores(
    data: &Dataset,
    learner: &dyn Learner,
    folds: &[Vec<usize>],
    weights: &BootWeights,
    fits: &mut u64,
) -> Result<Option<Vec<f64>>> {
    let n = data.n();
    let mut scores = vec![0.0; n];
    for j in 0..folds.len() {
        let train_rows: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != j)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let view = crate::dataset::WeightedView::new(data, &train_rows, weights.as_slice())?;
        if view.total_weight() == 0 {
            return Ok(None);
        }
        *fits += 1;
        let model = match learner.fit(&view) {
            Ok(m) => m,
            Err(e) if e.is_fold_local() => return Ok(None),
            Err(e) => return Err(e),
        };
        for &i in &folds[j] {
            scores[i] = model.score(data.row(i));
        }
    }
    Ok(Some(scores))
}

/// Pre-validated ROC: each row is scored by the model fit on the other
/// `k - 1` parts; the curve is averaged over `reps` random partitions.
pub fn kfold_prevalidate(
    data: &Dataset,
    learner: &dyn Learner,
    k: usize,
    reps: usize,
    seed: u64,
    grid: &[f64],
) -> Result<RocCurve> {
    if k < 2 || k > data.n() {
        return Err(Error::InvalidConfig(format!(
            "kfold k {k} must lie in [2, {}]",
            data.n()
        )));
    }
    if reps == 0 {
        return Err(Error::InvalidConfig("need at least one repetition".into()));
    }
    let unit = BootWeights::unit(data.n());
    let unit_f: Vec<f64> = vec![1.0; data.n()];
    let curves: Vec<Result<RocCurve>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut fits = 0u64;
            for attempt in 0..100u64 {
                let mut rng = rng_for(seed, &[TAG_KFOLD, rep as u64, attempt]);
                let folds = kfold_partition(data.n(), k, &mut rng);
                match prevalidated_scores(data, learner, &folds, &unit, &mut fits)? {
                    Some(scores) => {
                        return roc_from_scores(&scores, data.outcome(), &unit_f, grid)
                    }
                    None => continue,
                }
            }
            Err(Error::DegenerateFold(
                "no usable partition found for pre-validation",
            ))
        })
        .collect();
    let mut mean_sens = vec![0.0; grid.len()];
    let mut mean_auc = 0.0;
    let mut mean_trap = 0.0;
    let mut count = 0usize;
    for c in curves {
        let c = c?;
        for (acc, s) in mean_sens.iter_mut().zip(&c.sensitivity) {
            *acc += s;
        }
        mean_auc += c.auc;
        mean_trap += c.auc_trapezoid;
        count += 1;
    }
    for s in mean_sens.iter_mut() {
        *s /= count as f64;
    }
    Ok(RocCurve {
        grid: grid.to_vec(),
        sensitivity: mean_sens,
        auc: mean_auc / count as f64,
        auc_trapezoid: mean_trap / count as f64,
    })
}

/// A pre-validated ROC curve with pointwise bootstrap uncertainty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocBand {
    pub curve: RocCurve,
    /// Pointwise standard errors along `curve.grid`.
    pub se: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub auc_se: f64,
    pub auc_ci: Interval,
    pub kfold_k: usize,
    pub kfold_k_adj: usize,
    pub fits: FitBudget,
}

/// Pre-validated ROC with pointwise confidence intervals: the point curve
/// from unweighted k-fold pre-validation, the uncertainty from a weighted
/// bootstrap run at `kfold_k_adj` folds, with variance components
/// estimated independently per grid point.
pub fn kfold_prevalidate_ci(
    data: &Dataset,
    learner: &dyn Learner,
    cfg: &RunConfig,
    grid: Option<&[f64]>,
) -> Result<RocBand> {
    let grid: Vec<f64> = grid.map(|g| g.to_vec()).unwrap_or_else(default_roc_grid);
    let k = cfg.kfold_k.unwrap_or(10);
    let k_adj = cfg.kfold_k_adj.unwrap_or(k);
    if cfg.n_boot < 2 || cfg.n_cv < 2 {
        return Err(Error::InsufficientReplication {
            n_boot: cfg.n_boot,
            n_cv: cfg.n_cv,
        });
    }
    let curve = kfold_prevalidate(data, learner, k, cfg.n_cv_point, cfg.seed, &grid)?;

    let n = data.n();
    let rows: Vec<Result<(Vec<Vec<f64>>, Vec<f64>, u64)>> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut wrng = rng_for(cfg.seed, &[TAG_WEIGHTS, b as u64]);
            let weights = draw_boot_weights(n, &mut wrng);
            let weights_f: Vec<f64> = weights.as_slice().iter().map(|&w| w as f64).collect();
            let mut sens_rows: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.n_cv); grid.len()];
            let mut auc_row: Vec<f64> = Vec::with_capacity(cfg.n_cv);
            let mut fits = 0u64;
            for rep in 0..cfg.n_cv {
                let mut done = false;
                for attempt in 0..=cfg.max_redraws as u64 {
                    let mut rng =
                        rng_for(cfg.seed, &[TAG_KFOLD_BOOT, b as u64, rep as u64, attempt]);
                    let folds = kfold_partition(n, k_adj, &mut rng);
                    let scores =
                        match prevalidated_scores(data, learner, &folds, &weights, &mut fits)? {
                            Some(s) => s,
                            None => continue,
                        };
                    match roc_from_scores(&scores, data.outcome(), &weights_f, &grid) {
                        Ok(roc) => {
                            for (lane, s) in sens_rows.iter_mut().zip(&roc.sensitivity) {
                                lane.push(*s);
                            }
                            auc_row.push(roc.auc);
                            done = true;
                        }
                        Err(e) if e.is_fold_local() => continue,
                        Err(e) => return Err(e),
                    }
                    break;
                }
                if !done {
                    for lane in sens_rows.iter_mut() {
                        lane.push(f64::NAN);
                    }
                    auc_row.push(f64::NAN);
                }
            }
            Ok((sens_rows, auc_row, fits))
        })
        .collect();

    let mut budget = FitBudget::default();
    let mut sens_matrices: Vec<PerfMatrix> = (0..grid.len())
        .map(|_| PerfMatrix::new(cfg.n_boot, cfg.n_cv))
        .collect::<Result<_>>()?;
    let mut auc_matrix = PerfMatrix::new(cfg.n_boot, cfg.n_cv)?;
    for (b, row) in rows.into_iter().enumerate() {
        let (sens_rows, auc_row, fits) = row?;
        budget.bootstrap += fits;
        for (g, lane) in sens_rows.iter().enumerate() {
            for (rep, &v) in lane.iter().enumerate() {
                sens_matrices[g].set(b, rep, v);
            }
        }
        for (rep, &v) in auc_row.iter().enumerate() {
            auc_matrix.set(b, rep, v);
            if v.is_nan() {
                budget.cells_missing += 1;
            }
        }
    }

    let mut se = Vec::with_capacity(grid.len());
    let mut ci_lo = Vec::with_capacity(grid.len());
    let mut ci_hi = Vec::with_capacity(grid.len());
    for (g, m) in sens_matrices.iter().enumerate() {
        let vc = estimate_components(m, 1.0)?;
        let s = vc.se();
        let (lo, hi) = normal_ci(curve.sensitivity[g], s, cfg.alpha);
        se.push(s);
        ci_lo.push(lo.max(0.0));
        ci_hi.push(hi.min(1.0));
    }
    let auc_vc = estimate_components(&auc_matrix, 1.0)?;
    let auc_se = auc_vc.se();
    let (alo, ahi) = normal_ci(curve.auc, auc_se, cfg.alpha);
    Ok(RocBand {
        curve,
        se,
        ci_lo,
        ci_hi,
        auc_se,
        auc_ci: Interval {
            lo: alo.max(0.0),
            hi: ahi.min(1.0),
        },
        kfold_k: k,
        kfold_k_adj: k_adj,
        fits: budget,
    })
}
