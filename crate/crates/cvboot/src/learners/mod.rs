//! Training procedures with integer row-weight support.
//!
//! Every shipped learner consumes a [`WeightedView`] where a row of weight
//! `w` counts as `w` duplicated rows, and produces a linear scoring model.
//! External learners plug in through the [`Learner`] trait; anything whose
//! fitted model can score a feature row works with the engine.

mod itr;
mod linear;
mod logistic;

pub use itr::fit_itr;
pub use linear::{fit_lasso, fit_ols, lasso_lambda_max};
pub use logistic::{fit_lasso_logistic, fit_logistic};

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::WeightedView;
use crate::error::{Error, Result};

/// Cap on the sup-norm of logistic coefficients; beyond it the fold is
/// declared (quasi-)separated.
pub const SEPARATION_CAP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Ols,
    Lasso,
    Logistic,
    LassoLogistic,
    ItrLinear,
    ItrLasso,
}

impl LearnerKind {
    pub fn needs_treatment(&self) -> bool {
        matches!(self, LearnerKind::ItrLinear | LearnerKind::ItrLasso)
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self, LearnerKind::Logistic | LearnerKind::LassoLogistic)
    }
}

/// Configuration of a training procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// L1 penalty for lasso kinds (on the treatment-score block for
    /// `ItrLasso`).
    pub lambda: f64,
    /// L1 penalty on the prognostic block for `ItrLasso`.
    pub lambda_gamma: f64,
    /// Treatment probability; defaults to the weighted treated fraction.
    pub treat_prob: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    /// Standardize predictors internally for lasso kinds (weighted
    /// mean/SD), back-transforming coefficients. The penalty then applies
    /// on the standardized scale; disable to penalize raw-scale
    /// coefficients.
    pub standardize: bool,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        LearnerSpec {
            kind,
            lambda: 0.0,
            lambda_gamma: 0.0,
            treat_prob: None,
            max_iter: 500,
            tol: 1e-8,
            standardize: true,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_lambda_gamma(mut self, lambda_gamma: f64) -> Self {
        self.lambda_gamma = lambda_gamma;
        self
    }

    pub fn with_treat_prob(mut self, pi: f64) -> Self {
        self.treat_prob = Some(pi);
        self
    }

    pub fn with_standardize(mut self, on: bool) -> Self {
        self.standardize = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.lambda_gamma < 0.0 {
            return Err(Error::InvalidConfig("penalties must be >= 0".into()));
        }
        if let Some(pi) = self.treat_prob {
            if !(0.0 < pi && pi < 1.0) {
                return Err(Error::InvalidConfig(
                    "treatment probability must lie in (0, 1)".into(),
                ));
            }
        }
        if self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }
}

/// Iteration bookkeeping from a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitMeta {
    pub iterations: usize,
    pub converged: bool,
}

/// A fitted linear scoring rule: `score(z) = coef[0] + coef[1..] . z`.
/// For treatment-rule learners the coefficients are the treatment-contrast
/// block, so the score is the estimated individualized treatment effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kind: LearnerKind,
    pub coef: Vec<f64>,
    pub meta: FitMeta,
}

impl FittedModel {
    pub fn intercept(&self) -> f64 {
        self.coef[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coef[1..]
    }
}

/// Anything that can score a feature row.
pub trait Scorer: Send + Sync {
    fn score(&self, features: &[f64]) -> f64;
}

impl Scorer for FittedModel {
    fn score(&self, features: &[f64]) -> f64 {
        debug_assert_eq!(features.len() + 1, self.coef.len());
        self.coef[0]
            + self.coef[1..]
                .iter()
                .zip(features)
                .map(|(c, z)| c * z)
                .sum::<f64>()
    }
}

/// The plugin contract: fit a weighted training fold, produce a scorer.
pub trait Learner: Sync {
    fn fit(&self, train: &WeightedView<'_>) -> Result<Box<dyn Scorer>>;

    /// Short name used in reports.
    fn name(&self) -> String {
        "custom".into()
    }
}

impl Learner for LearnerSpec {
    fn fit(&self, train: &WeightedView<'_>) -> Result<Box<dyn Scorer>> {
        Ok(Box::new(fit_spec(train, self)?))
    }

    fn name(&self) -> String {
        format!("{:?}", self.kind).to_lowercase()
    }
}

/// Dispatch on the configured kind.
pub fn fit_spec(train: &WeightedView<'_>, spec: &LearnerSpec) -> Result<FittedModel> {
    spec.validate()?;
    match spec.kind {
        LearnerKind::Ols => fit_ols(train, spec),
        LearnerKind::Lasso => fit_lasso(train, spec),
        LearnerKind::Logistic => fit_logistic(train, spec),
        LearnerKind::LassoLogistic => fit_lasso_logistic(train, spec),
        LearnerKind::ItrLinear | LearnerKind::ItrLasso => fit_itr(train, spec),
    }
}

/// Rows with positive weight, densified for the solvers.
pub(crate) struct DenseFold {
    pub x: Vec<f64>, // row-major, n_pos x p
    pub y: Vec<f64>,
    pub g: Option<Vec<u8>>,
    pub w: Vec<f64>,
    pub n: usize,
    pub p: usize,
}

pub(crate) fn densify(view: &WeightedView<'_>) -> Result<DenseFold> {
    let p = view.n_features();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut g: Option<Vec<u8>> = view.data().treatment().map(|_| Vec::new());
    for row in view.iter() {
        if row.weight == 0 {
            continue;
        }
        x.extend_from_slice(row.features);
        y.push(row.outcome);
        w.push(row.weight as f64);
        if let (Some(gs), Some(t)) = (g.as_mut(), row.treatment) {
            gs.push(t);
        }
    }
    if y.is_empty() {
        return Err(Error::DegenerateFold("zero total weight"));
    }
    let n = y.len();
    Ok(DenseFold { x, y, g, w, n, p })
}

/// Solve the symmetric positive (semi-)definite system `gram * x = rhs`,
/// falling back to a small ridge jitter on the diagonal; rank-deficient
/// weighted folds hit exact singularity routinely.
pub(crate) fn solve_gram(gram: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let dim = gram.nrows();
    if let Some(ch) = Cholesky::new(gram.clone()) {
        return Ok(ch.solve(&rhs));
    }
    let scale = (gram.diagonal().sum() / dim as f64).max(1.0);
    let mut jittered = gram;
    for i in 0..dim {
        jittered[(i, i)] += 1e-8 * scale;
    }
    Cholesky::new(jittered)
        .map(|ch| ch.solve(&rhs))
        .ok_or(Error::SingularDesign)
}

#[inline]
pub(crate) fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Weighted penalized least squares with a free intercept:
/// `min (1/(2W)) sum_i v_i (y_i - a - X b)^2 + sum_j pen_j |b_j|`
/// solved by cyclic coordinate descent on centered columns.
pub(crate) struct PenalizedWls<'a> {
    /// Column-major design, no intercept column.
    pub cols: &'a [Vec<f64>],
    pub v: &'a [f64],
    pub y: &'a [f64],
    pub penalties: &'a [f64],
    pub tol: f64,
    pub max_sweeps: usize,
}

pub(crate) struct WlsSolution {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

pub(crate) fn solve_penalized_wls(prob: &PenalizedWls<'_>, warm: Option<&[f64]>) -> WlsSolution {
    let n = prob.y.len();
    let q = prob.cols.len();
    let total_w: f64 = prob.v.iter().sum();
    debug_assert!(total_w > 0.0);

    let col_means: Vec<f64> = prob
        .cols
        .iter()
        .map(|c| c.iter().zip(prob.v).map(|(x, w)| x * w).sum::<f64>() / total_w)
        .collect();
    let y_mean = prob.y.iter().zip(prob.v).map(|(x, w)| x * w).sum::<f64>() / total_w;

    // curvature (1/W) sum v xc^2 per centered column
    let curv: Vec<f64> = prob
        .cols
        .iter()
        .zip(&col_means)
        .map(|(c, m)| {
            c.iter()
                .zip(prob.v)
                .map(|(x, w)| {
                    let d = x - m;
                    w * d * d
                })
                .sum::<f64>()
                / total_w
        })
        .collect();

    let mut beta = vec![0.0; q];
    if let Some(w0) = warm {
        beta.copy_from_slice(w0);
    }
    // residual of the centered problem
    let mut resid: Vec<f64> = (0..n)
        .map(|i| {
            let mut r = prob.y[i] - y_mean;
            for j in 0..q {
                if beta[j] != 0.0 {
                    r -= beta[j] * (prob.cols[j][i] - col_means[j]);
                }
            }
            r
        })
        .collect();

    let objective = |resid: &[f64], beta: &[f64]| -> f64 {
        let rss: f64 = resid.iter().zip(prob.v).map(|(r, w)| w * r * r).sum();
        rss / (2.0 * total_w)
            + beta
                .iter()
                .zip(prob.penalties)
                .map(|(b, p)| p * b.abs())
                .sum::<f64>()
    };

    let mut sweeps = 0;
    let mut converged = false;
    #[cfg(debug_assertions)]
    let mut last_obj = objective(&resid, &beta);
    while sweeps < prob.max_sweeps {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for j in 0..q {
            if curv[j] <= 0.0 {
                continue;
            }
            let mj = col_means[j];
            let grad: f64 = prob.cols[j]
                .iter()
                .zip(prob.v)
                .zip(&resid)
                .map(|((x, w), r)| w * (x - mj) * r)
                .sum::<f64>()
                / total_w;
            let rho = grad + curv[j] * beta[j];
            let new = soft_threshold(rho, prob.penalties[j]) / curv[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, x) in resid.iter_mut().zip(&prob.cols[j]) {
                    *r -= delta * (x - mj);
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs() * curv[j].sqrt());
            }
        }
        #[cfg(debug_assertions)]
        {
            let obj = objective(&resid, &beta);
            debug_assert!(
                obj <= last_obj + 1e-9 * (1.0 + last_obj.abs()),
                "coordinate sweep increased the objective: {last_obj} -> {obj}"
            );
            last_obj = obj;
        }
        if max_delta < prob.tol {
            // full subgradient check before declaring victory
            let mut worst = 0.0f64;
            for j in 0..q {
                if curv[j] <= 0.0 {
                    continue;
                }
                let mj = col_means[j];
                let grad: f64 = prob.cols[j]
                    .iter()
                    .zip(prob.v)
                    .zip(&resid)
                    .map(|((x, w), r)| w * (x - mj) * r)
                    .sum::<f64>()
                    / total_w;
                let viol = if beta[j] == 0.0 {
                    (grad.abs() - prob.penalties[j]).max(0.0)
                } else {
                    (grad - prob.penalties[j] * beta[j].signum()).abs()
                };
                worst = worst.max(viol);
            }
            if worst <= prob.tol {
                converged = true;
                break;
            }
        }
    }
    let _ = objective;

    let intercept = y_mean
        - beta
            .iter()
            .zip(&col_means)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    WlsSolution {
        intercept,
        slopes: beta,
        sweeps,
        converged,
    }
}

/// KKT residual of the lasso objective at a candidate solution; exposed for
/// verification.
pub fn lasso_kkt_residual(
    cols: &[Vec<f64>],
    v: &[f64],
    y: &[f64],
    penalties: &[f64],
    intercept: f64,
    slopes: &[f64],
) -> f64 {
    let total_w: f64 = v.iter().sum();
    let n = y.len();
    let resid: Vec<f64> = (0..n)
        .map(|i| {
            let mut r = y[i] - intercept;
            for (j, col) in cols.iter().enumerate() {
                r -= slopes[j] * col[i];
            }
            r
        })
        .collect();
    let mut worst = resid.iter().zip(v).map(|(r, w)| w * r).sum::<f64>().abs() / total_w;
    for (j, col) in cols.iter().enumerate() {
        let grad: f64 = col
            .iter()
            .zip(v)
            .zip(&resid)
            .map(|((x, w), r)| w * x * r)
            .sum::<f64>()
            / total_w;
        let viol = if slopes[j] == 0.0 {
            (grad.abs() - penalties[j]).max(0.0)
        } else {
            (grad - penalties[j] * slopes[j].signum()).abs()
        };
        worst = worst.max(viol);
    }
    worst
}
