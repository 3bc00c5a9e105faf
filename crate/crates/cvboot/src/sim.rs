//! Data generators and the coverage-experiment harness.
//!
//! Three designs, each in a low- and a high-dimensional flavor: Gaussian
//! features with a sparse linear signal (continuous outcome), a sparse
//! logistic signal (binary outcome), and a two-arm design whose potential
//! outcomes differ in a sparse linear contrast (treatment rules).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::dataset::{Dataset, OutcomeKind};
use crate::engine::{fast_bootstrap, RunConfig};
use crate::error::{Error, Result};
use crate::learners::{Learner, LearnerKind, LearnerSpec};
use crate::metrics::{Evaluator, Metric};
use crate::streams::rng_for;

const TAG_GEN: u64 = 101;
const TAG_TRUTH: u64 = 102;
const TAG_SIM: u64 = 103;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    LinearLowDim,
    LinearHighDim,
    LogisticLowDim,
    LogisticHighDim,
    ItrLowDim,
    ItrHighDim,
}

impl GeneratorKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear_lowdim" => Ok(GeneratorKind::LinearLowDim),
            "linear_highdim" => Ok(GeneratorKind::LinearHighDim),
            "logistic_lowdim" => Ok(GeneratorKind::LogisticLowDim),
            "logistic_highdim" => Ok(GeneratorKind::LogisticHighDim),
            "itr_lowdim" => Ok(GeneratorKind::ItrLowDim),
            "itr_highdim" => Ok(GeneratorKind::ItrHighDim),
            other => Err(Error::InvalidConfig(format!("unknown generator {other}"))),
        }
    }
}

/// A simulation design: kind plus (overridable) sample size and dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub p: usize,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind) -> Self {
        let (n, p) = match kind {
            GeneratorKind::LinearLowDim | GeneratorKind::LogisticLowDim => (90, 10),
            GeneratorKind::LinearHighDim | GeneratorKind::LogisticHighDim => (90, 1000),
            GeneratorKind::ItrLowDim => (180, 10),
            GeneratorKind::ItrHighDim => (180, 1000),
        };
        GeneratorSpec { kind, n, p }
    }

    pub fn with_size(mut self, n: usize, p: usize) -> Self {
        self.n = n;
        self.p = p;
        self
    }

    pub fn is_binary(&self) -> bool {
        matches!(
            self.kind,
            GeneratorKind::LogisticLowDim | GeneratorKind::LogisticHighDim
        )
    }

    pub fn has_treatment(&self) -> bool {
        matches!(self.kind, GeneratorKind::ItrLowDim | GeneratorKind::ItrHighDim)
    }

    /// Slopes of the signal, intercept excluded. Four leading entries carry
    /// the signal; for treatment designs these are the two arm-specific
    /// slope vectors.
    fn signal(&self) -> (Vec<f64>, Vec<f64>) {
        let mut b1 = vec![0.0; self.p];
        let mut b0 = vec![0.0; self.p];
        match self.kind {
            GeneratorKind::LinearLowDim | GeneratorKind::LinearHighDim => {
                for v in b1.iter_mut().take(4) {
                    *v = 1.0;
                }
            }
            GeneratorKind::LogisticLowDim | GeneratorKind::LogisticHighDim => {
                for v in b1.iter_mut().take(4) {
                    *v = 1.16;
                }
            }
            GeneratorKind::ItrLowDim | GeneratorKind::ItrHighDim => {
                b1[..4].copy_from_slice(&[0.25, 0.25, 0.25, 0.25]);
                b0[..4].copy_from_slice(&[0.25, -0.25, 0.25, -0.25]);
            }
        }
        (b1, b0)
    }

    /// The population treatment-score slopes `(intercept, b1 - b0)` for
    /// treatment designs.
    pub fn true_contrast(&self) -> Vec<f64> {
        let (b1, b0) = self.signal();
        let mut c = vec![0.0];
        c.extend(b1.iter().zip(&b0).map(|(a, b)| a - b));
        c
    }

    /// The learner the design was built for.
    pub fn default_learner(&self) -> LearnerSpec {
        match self.kind {
            GeneratorKind::LinearLowDim => LearnerSpec::new(LearnerKind::Ols),
            GeneratorKind::LinearHighDim => {
                LearnerSpec::new(LearnerKind::Lasso).with_lambda(0.20)
            }
            GeneratorKind::LogisticLowDim => LearnerSpec::new(LearnerKind::Logistic),
            GeneratorKind::LogisticHighDim => {
                LearnerSpec::new(LearnerKind::LassoLogistic).with_lambda(0.10)
            }
            GeneratorKind::ItrLowDim => {
                LearnerSpec::new(LearnerKind::ItrLinear).with_treat_prob(0.5)
            }
            GeneratorKind::ItrHighDim => LearnerSpec::new(LearnerKind::ItrLasso)
                .with_lambda(0.10)
                .with_lambda_gamma(0.10)
                .with_treat_prob(0.5),
        }
    }

    pub fn default_metric(&self) -> Metric {
        match self.kind {
            GeneratorKind::LinearLowDim | GeneratorKind::LinearHighDim => Metric::Mape,
            GeneratorKind::LogisticLowDim | GeneratorKind::LogisticHighDim => Metric::c_index(),
            GeneratorKind::ItrLowDim | GeneratorKind::ItrHighDim => Metric::subgroup_ate(),
        }
    }
}

#[inline]
fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draw one dataset from the design.
pub fn generate<R: Rng>(spec: &GeneratorSpec, rng: &mut R) -> Dataset {
    let (b1, b0) = spec.signal();
    let n = spec.n;
    let p = spec.p;
    let mut features = Vec::with_capacity(n * p);
    let mut outcome = Vec::with_capacity(n);
    match spec.kind {
        GeneratorKind::LinearLowDim | GeneratorKind::LinearHighDim => {
            for _ in 0..n {
                let start = features.len();
                for _ in 0..p {
                    features.push(rng.sample::<f64, _>(StandardNormal));
                }
                let lin: f64 = b1
                    .iter()
                    .zip(&features[start..])
                    .map(|(b, z)| b * z)
                    .sum();
                outcome.push(lin + rng.sample::<f64, _>(StandardNormal));
            }
            Dataset::new(features, p, outcome, OutcomeKind::Continuous, None, None).unwrap()
        }
        GeneratorKind::LogisticLowDim | GeneratorKind::LogisticHighDim => {
            for _ in 0..n {
                let start = features.len();
                for _ in 0..p {
                    features.push(rng.sample::<f64, _>(StandardNormal));
                }
                let lin: f64 = b1
                    .iter()
                    .zip(&features[start..])
                    .map(|(b, z)| b * z)
                    .sum();
                let y = (rng.random_range(0.0..1.0) < expit(lin)) as u8 as f64;
                outcome.push(y);
            }
            Dataset::new(features, p, outcome, OutcomeKind::Binary, None, None).unwrap()
        }
        GeneratorKind::ItrLowDim | GeneratorKind::ItrHighDim => {
            // permutation-balanced arms: exactly n/2 treated
            let mut arms: Vec<u8> = (0..n).map(|i| (i < n / 2) as u8).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                arms.swap(i, j);
            }
            for &g in &arms {
                let start = features.len();
                for _ in 0..p {
                    features.push(rng.sample::<f64, _>(StandardNormal));
                }
                let slopes = if g == 1 { &b1 } else { &b0 };
                let lin: f64 = slopes
                    .iter()
                    .zip(&features[start..])
                    .map(|(b, z)| b * z)
                    .sum();
                outcome.push(lin + rng.sample::<f64, _>(StandardNormal));
            }
            Dataset::new(features, p, outcome, OutcomeKind::Continuous, Some(arms), None).unwrap()
        }
    }
}

/// Population performance of a fitted linear predictor under the linear
/// design: the mean of `|N(intercept_dev, 1 + |slope_dev|^2)|` in closed
/// form (folded normal).
pub fn linear_err_dn(coef: &[f64], true_slopes: &[f64]) -> f64 {
    let mu = coef[0];
    let mut var = 1.0;
    for (j, b) in coef[1..].iter().enumerate() {
        let truth = true_slopes.get(j).copied().unwrap_or(0.0);
        var += (b - truth) * (b - truth);
    }
    folded_normal_mean(mu, var.sqrt())
}

/// `E|X|` for `X ~ N(mu, sd^2)`.
pub fn folded_normal_mean(mu: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mu.abs();
    }
    let std_normal = Normal::standard();
    let r = mu / sd;
    sd * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * r * r).exp()
        + mu * (1.0 - 2.0 * std_normal.cdf(-r))
}

/// Density-weighted check value used by generator self-tests.
pub fn standard_normal_pdf(x: f64) -> f64 {
    Normal::standard().pdf(x)
}

/// Monte-Carlo estimate of the expected performance of the training
/// procedure at training size `m`: average, over `n_train_reps` fresh
/// training sets, of the model's performance on an independent evaluation
/// set of `n_test` rows. Evaluation rotates across a few independent test
/// sets so no single draw's sampling error biases the result.
pub fn true_err_m(
    spec: &GeneratorSpec,
    learner: &dyn Learner,
    evaluator: &dyn Evaluator,
    m: usize,
    n_train_reps: usize,
    n_test: usize,
    seed: u64,
) -> Result<f64> {
    const TEST_SETS: usize = 4;
    let test_spec = spec.with_size(n_test, spec.p);
    let train_spec = spec.with_size(m, spec.p);
    let tests: Vec<Dataset> = (0..TEST_SETS)
        .map(|s| generate(&test_spec, &mut rng_for(seed, &[TAG_TRUTH, s as u64])))
        .collect();
    let test_rows: Vec<usize> = (0..n_test).collect();
    let unit = vec![1u32; n_test];
    let vals: Vec<Result<f64>> = (0..n_train_reps)
        .into_par_iter()
        .map(|rep| {
            let test = &tests[rep % TEST_SETS];
            // a degenerate training draw is resampled like a degenerate fold
            for attempt in 0..100u64 {
                let mut rng = rng_for(seed, &[TAG_TRUTH, 10 + rep as u64, attempt]);
                let train = generate(&train_spec, &mut rng);
                let train_rows: Vec<usize> = (0..train.n()).collect();
                let train_unit = vec![1u32; train.n()];
                let view =
                    crate::dataset::WeightedView::new(&train, &train_rows, &train_unit)?;
                let model = match learner.fit(&view) {
                    Ok(mdl) => mdl,
                    Err(e) if e.is_fold_local() => continue,
                    Err(e) => return Err(e),
                };
                let tv = crate::dataset::WeightedView::new(test, &test_rows, &unit)?;
                match evaluator.evaluate(&tv, model.as_ref()) {
                    Ok(v) => return Ok(v),
                    Err(e) if e.is_fold_local() => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::DegenerateFold("could not draw a usable training set"))
        })
        .collect();
    let mut sum = 0.0;
    for v in &vals {
        sum += *v.as_ref().map_err(|e| e.clone())?;
    }
    Ok(sum / vals.len() as f64)
}

/// One row of a coverage experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageRow {
    pub train_size: usize,
    pub n_sims: usize,
    /// The target parameter (expected performance at this training size).
    pub true_err: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub empirical_sd: f64,
    /// Mean bootstrap SE, with and without the size adjustment.
    pub mean_se: f64,
    pub mean_se_adj: f64,
    pub coverage: f64,
    pub coverage_adj: f64,
    pub coverage_calibrated: Option<f64>,
    /// Monte-Carlo standard errors of the coverage rates.
    pub coverage_mc_se: f64,
    pub coverage_adj_mc_se: f64,
    /// Coverage of the per-dataset population performance (closed form,
    /// linear designs only).
    pub coverage_err_dn: Option<f64>,
    /// Simulations whose between-bootstrap variance clamped to zero.
    pub zero_variance_sims: usize,
    pub median_width_adj: f64,
    pub median_width_calibrated: Option<f64>,
}

/// A coverage experiment over a grid of training sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
}

/// Run `n_sims` independent datasets per training size, estimating and
/// covering `true_err` with the configured budget. `true_errs`, when
/// given, must align with `m_grid` and skips the Monte-Carlo truth run.
#[allow(clippy::too_many_arguments)]
pub fn coverage_experiment(
    spec: &GeneratorSpec,
    learner: &LearnerSpec,
    evaluator: &Metric,
    m_grid: &[usize],
    base_cfg: &RunConfig,
    n_sims: usize,
    true_errs: Option<&[f64]>,
    truth_budget: (usize, usize),
    seed: u64,
) -> Result<CoverageTable> {
    if let Some(t) = true_errs {
        if t.len() != m_grid.len() {
            return Err(Error::InvalidConfig(
                "true_errs must align with the training-size grid".into(),
            ));
        }
    }
    let mut rows = Vec::with_capacity(m_grid.len());
    for (mi, &m) in m_grid.iter().enumerate() {
        let true_err = match true_errs {
            Some(t) => t[mi],
            None => true_err_m(
                spec,
                learner,
                evaluator,
                m,
                truth_budget.0,
                truth_budget.1,
                crate::streams::derive_seed(seed, &[TAG_TRUTH, mi as u64]),
            )?,
        };
        let sims: Vec<Result<SimOutcome>> = (0..n_sims)
            .into_par_iter()
            .map(|s| run_one_sim(spec, learner, evaluator, m, base_cfg, seed, mi, s, true_err))
            .collect();
        let mut points = Vec::with_capacity(n_sims);
        let mut cover = 0usize;
        let mut cover_adj = 0usize;
        let mut cover_cal = 0usize;
        let mut cover_dn = 0usize;
        let mut dn_available = 0usize;
        let mut cal_available = 0usize;
        let mut zero_var = 0usize;
        let mut se_sum = 0.0;
        let mut se_adj_sum = 0.0;
        let mut widths_adj = Vec::with_capacity(n_sims);
        let mut widths_cal = Vec::new();
        for s in sims {
            let s = s?;
            points.push(s.point);
            cover += s.cover as usize;
            cover_adj += s.cover_adj as usize;
            if let Some(c) = s.cover_cal {
                cal_available += 1;
                cover_cal += c as usize;
            }
            if let Some(c) = s.cover_dn {
                dn_available += 1;
                cover_dn += c as usize;
            }
            zero_var += s.zero_variance as usize;
            se_sum += s.se;
            se_adj_sum += s.se_adj;
            widths_adj.push(s.width_adj);
            if let Some(w) = s.width_cal {
                widths_cal.push(w);
            }
        }
        let mean = points.iter().sum::<f64>() / points.len() as f64;
        let sd = (points.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
            / (points.len() - 1) as f64)
            .sqrt();
        let nf = n_sims as f64;
        let cov = cover as f64 / nf;
        let cov_adj = cover_adj as f64 / nf;
        rows.push(CoverageRow {
            train_size: m,
            n_sims,
            true_err,
            mean_estimate: mean,
            bias: mean - true_err,
            empirical_sd: sd,
            mean_se: se_sum / nf,
            mean_se_adj: se_adj_sum / nf,
            coverage: cov,
            coverage_adj: cov_adj,
            coverage_calibrated: (cal_available > 0)
                .then(|| cover_cal as f64 / cal_available as f64),
            coverage_mc_se: (cov * (1.0 - cov) / nf).sqrt(),
            coverage_adj_mc_se: (cov_adj * (1.0 - cov_adj) / nf).sqrt(),
            coverage_err_dn: (dn_available > 0).then(|| cover_dn as f64 / dn_available as f64),
            zero_variance_sims: zero_var,
            median_width_adj: median(&mut widths_adj),
            median_width_calibrated: (!widths_cal.is_empty()).then(|| median(&mut widths_cal)),
        });
    }
    Ok(CoverageTable { rows })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

struct SimOutcome {
    point: f64,
    se: f64,
    se_adj: f64,
    cover: bool,
    cover_adj: bool,
    cover_cal: Option<bool>,
    cover_dn: Option<bool>,
    zero_variance: bool,
    width_adj: f64,
    width_cal: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_one_sim(
    spec: &GeneratorSpec,
    learner: &LearnerSpec,
    evaluator: &Metric,
    m: usize,
    base_cfg: &RunConfig,
    seed: u64,
    m_index: usize,
    sim: usize,
    true_err: f64,
) -> Result<SimOutcome> {
    let sim_seed = crate::streams::derive_seed(seed, &[TAG_SIM, m_index as u64, sim as u64]);
    let mut rng = rng_for(sim_seed, &[TAG_GEN]);
    let data = generate(spec, &mut rng);
    let mut cfg = base_cfg.clone();
    cfg.train_size = m;
    cfg.seed = sim_seed;
    let (_, report) = fast_bootstrap(&data, learner, evaluator, &cfg)?;

    // per-dataset truth in closed form for the plain linear design
    let cover_dn = if matches!(
        spec.kind,
        GeneratorKind::LinearLowDim | GeneratorKind::LinearHighDim
    ) && matches!(learner.kind, LearnerKind::Ols | LearnerKind::Lasso)
        && matches!(evaluator, Metric::Mape)
    {
        let rows: Vec<usize> = (0..data.n()).collect();
        let unit = vec![1u32; data.n()];
        let view = crate::dataset::WeightedView::new(&data, &rows, &unit)?;
        let full_fit = crate::learners::fit_spec(&view, learner)?;
        let (slopes, _) = spec.signal();
        let err_dn = linear_err_dn(&full_fit.coef, &slopes);
        Some(report.ci_adj.contains(err_dn))
    } else {
        None
    };

    Ok(SimOutcome {
        point: report.point,
        se: report.se,
        se_adj: report.se_adj,
        cover: report.ci_normal.contains(true_err),
        cover_adj: report.ci_adj.contains(true_err),
        cover_cal: report
            .ci_calibrated
            .as_ref()
            .map(|c| c.lo <= true_err && true_err <= c.hi),
        cover_dn,
        zero_variance: report.components.between_var == 0.0,
        width_adj: report.ci_adj.width(),
        width_cal: report.ci_calibrated.as_ref().map(|c| c.hi - c.lo),
    })
}
